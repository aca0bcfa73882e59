#pragma once

// Second singular triplet of A = Pi_p^{1/2} P Pi_q^{-1/2}.
//
// The leading pair of A is known in closed form: singular value 1 with left vector sqrt(p)
// and right vector sqrt(q). It is removed exactly by projecting sqrt(p) out of every Krylov
// vector; the top eigenpair of the deflated normal operator A A^T is then found by a
// thick-restart Lanczos iteration with full reorthogonalization. The returned vectors are
// weighted back: x = x_hat / sqrt(p), y = y_hat / sqrt(q).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "ftcs/sparse.hpp"

namespace ftcs {

/// Matrix-free view of A over a stochastic system. The system must outlive the operator.
class WeightedOperator {
public:
    explicit WeightedOperator(const StochasticSystem& sys) : sys_(&sys) {
        sqrt_p_.resize(sys.p.size());
        sqrt_q_.resize(sys.q.size());
        for (std::size_t i = 0; i < sqrt_p_.size(); ++i) sqrt_p_[i] = std::sqrt(sys.p[i]);
        for (std::size_t j = 0; j < sqrt_q_.size(); ++j) sqrt_q_[j] = std::sqrt(sys.q[j]);
    }

    [[nodiscard]] std::size_t m() const { return sys_->P.rows; }
    [[nodiscard]] std::size_t n() const { return sys_->P.cols; }
    [[nodiscard]] const StochasticSystem& system() const { return *sys_; }
    [[nodiscard]] const std::vector<double>& sqrt_p() const { return sqrt_p_; }
    [[nodiscard]] const std::vector<double>& sqrt_q() const { return sqrt_q_; }

    /// Row vector on X to row vector on Y: (v Pi_p^{1/2}) P Pi_q^{-1/2}.
    [[nodiscard]] std::vector<double> apply(std::span<const double> v) const {
        if (v.size() != m()) throw LengthMismatch("apply_A", m(), v.size());
        std::vector<double> w(m());
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = v[i] * sqrt_p_[i];
        auto out = sys_->P.left_multiply(w);
        for (std::size_t j = 0; j < out.size(); ++j) out[j] = q_positive(j) ? out[j] / sqrt_q_[j] : 0.0;
        return out;
    }

    /// Row vector on Y to row vector on X: Pi_p^{1/2} P Pi_q^{-1/2} v^T.
    [[nodiscard]] std::vector<double> apply_transpose(std::span<const double> v) const {
        if (v.size() != n()) throw LengthMismatch("apply_A_transpose", n(), v.size());
        std::vector<double> w(n());
        for (std::size_t j = 0; j < w.size(); ++j) w[j] = q_positive(j) ? v[j] / sqrt_q_[j] : 0.0;
        auto out = sys_->P.right_multiply(w);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] *= sqrt_p_[i];
        return out;
    }

private:
    [[nodiscard]] bool q_positive(std::size_t j) const { return sqrt_q_[j] > 0.0; }

    const StochasticSystem* sys_;
    std::vector<double> sqrt_p_;
    std::vector<double> sqrt_q_;
};

struct SpectralOptions {
    double tol = 1e-10;
    int max_iter = 10000;   // operator applications (A A^T)
    int krylov_dim = 120;
    bool deflate = true;    // false: plain top singular triplet (sigma_1), for diagnostics
};

struct CoherenceVectors {
    double sigma2 = 0.0;
    std::vector<double> x; // on X boxes, <x,1>_p = 0, ||x||_p = 1
    std::vector<double> y; // on Y boxes, <y,1>_q = 0, ||y||_q = 1
    double residual = 0.0; // ||A y_hat - sigma x_hat||_2
    int iterations = 0;
    std::size_t components = 1; // connected components of the support of P P^T
    bool degenerate = false;    // sigma2 within tol of sigma3
    std::vector<std::string> warnings;
};

struct LeadingPairReport {
    double forward_residual = 0.0;   // ||apply(sqrt p) - sqrt q||_2
    double transpose_residual = 0.0; // ||apply_transpose(sqrt q) - sqrt p||_2
    bool passed = false;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline LeadingPairReport check_leading_pair(const WeightedOperator& op, double tol = 1e-10) {
    LeadingPairReport r;
    const auto f = op.apply(op.sqrt_p());
    const auto b = op.apply_transpose(op.sqrt_q());
    double ef = 0.0, eb = 0.0;
    for (std::size_t j = 0; j < f.size(); ++j) ef += (f[j] - op.sqrt_q()[j]) * (f[j] - op.sqrt_q()[j]);
    for (std::size_t i = 0; i < b.size(); ++i) eb += (b[i] - op.sqrt_p()[i]) * (b[i] - op.sqrt_p()[i]);
    r.forward_residual = std::sqrt(ef);
    r.transpose_residual = std::sqrt(eb);
    r.passed = r.forward_residual <= tol && r.transpose_residual <= tol;
    return r;
}

/// Component label per row (size m) and per column (size n) of the bipartite support graph of P.
struct SupportComponents {
    std::vector<std::size_t> row_label;
    std::vector<std::size_t> col_label;
    std::size_t count = 0;
};

inline SupportComponents support_components(const SparseMatrix& P) {
    const std::size_t m = P.rows, n = P.cols;
    std::vector<std::size_t> parent(m + n);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t a) {
        while (parent[a] != a) a = parent[a] = parent[parent[a]];
        return a;
    };
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t k = P.row_ptr[r]; k < P.row_ptr[r + 1]; ++k) {
            const std::size_t a = find(r), b = find(m + P.col[k]);
            if (a != b) parent[std::max(a, b)] = std::min(a, b);
        }
    SupportComponents c;
    std::vector<std::size_t> label(m + n, static_cast<std::size_t>(-1));
    std::vector<std::size_t> root_label(m + n, static_cast<std::size_t>(-1));
    for (std::size_t v = 0; v < m + n; ++v) {
        const std::size_t r = find(v);
        if (root_label[r] == static_cast<std::size_t>(-1)) root_label[r] = c.count++;
        label[v] = root_label[r];
    }
    c.row_label.assign(label.begin(), label.begin() + static_cast<std::ptrdiff_t>(m));
    c.col_label.assign(label.begin() + static_cast<std::ptrdiff_t>(m), label.end());
    return c;
}

namespace detail {

struct TopEigen {
    double value = 0.0;
    double second = 0.0;
    std::vector<double> vector;
    double residual = 0.0;
    int applications = 0;
    bool converged = false;
};

/// Largest eigenpair of the symmetric PSD operator `apply` restricted to the complement of
/// `deflate` (unit vector, may be empty). Thick-restart Lanczos, full reorthogonalization.
template <class Apply>
TopEigen top_eigenpair(std::size_t dim, Apply&& apply, const std::vector<double>& deflate, const SpectralOptions& opt) {
    TopEigen res;
    const std::size_t available = deflate.empty() ? dim : dim - 1;
    if (available == 0) {
        res.converged = true;
        res.vector.assign(dim, 0.0);
        return res;
    }
    const std::size_t kmax = std::max<std::size_t>(2, std::min<std::size_t>(opt.krylov_dim, available));
    const std::size_t keep = std::max<std::size_t>(1, std::min<std::size_t>(kmax / 2, 20));

    auto project = [&](std::vector<double>& v) {
        if (deflate.empty()) return;
        const double c = dot(deflate, v);
        for (std::size_t i = 0; i < dim; ++i) v[i] -= c * deflate[i];
    };

    std::vector<std::vector<double>> V;
    std::vector<double> start(dim);
    std::mt19937_64 rng(12345);
    std::normal_distribution<double> g(0.0, 1.0);
    for (auto& s : start) s = g(rng);
    project(start);
    {
        const double nrm = norm2(start);
        for (auto& s : start) s /= nrm;
    }
    V.push_back(std::move(start));

    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(kmax + 1), static_cast<Eigen::Index>(kmax + 1));
    std::vector<double> w;
    double beta = 0.0;
    double scale = 0.0;

    for (;;) {
        // Expand the basis up to kmax vectors.
        bool invariant = false;
        for (;;) {
            const std::size_t j = V.size() - 1;
            w = apply(V[j]);
            ++res.applications;
            project(w);
            const double wnorm0 = norm2(w);
            scale = std::max(scale, wnorm0);
            for (int pass = 0; pass < 2; ++pass)
                for (std::size_t i = 0; i < V.size(); ++i) {
                    const double h = dot(V[i], w);
                    if (pass == 0) H(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = h;
                    else H(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) += h;
                    for (std::size_t k = 0; k < dim; ++k) w[k] -= h * V[i][k];
                }
            project(w);
            for (std::size_t i = 0; i < j; ++i)
                H(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) =
                    H(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            beta = norm2(w);
            if (beta <= 1e-13 * std::max(scale, 1e-300) || scale == 0.0) {
                invariant = true;
                break;
            }
            if (V.size() == kmax || res.applications >= opt.max_iter) break;
            for (auto& v : w) v /= beta;
            V.push_back(w);
            H(static_cast<Eigen::Index>(j + 1), static_cast<Eigen::Index>(j)) = beta;
            H(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j + 1)) = beta;
        }

        const auto k = static_cast<Eigen::Index>(V.size());
        Eigen::MatrixXd Hk = H.topLeftCorner(k, k);
        Hk = 0.5 * (Hk + Hk.transpose());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Hk);
        const auto& theta = es.eigenvalues();   // ascending
        const auto& S = es.eigenvectors();
        const double top = theta(k - 1);
        res.value = top;
        res.second = k >= 2 ? theta(k - 2) : 0.0;
        res.residual = invariant ? 0.0 : beta * std::abs(S(k - 1, k - 1));

        const bool done = invariant || res.residual <= opt.tol * std::max(top, 1e-300) ||
                          top <= 1e-14 * std::max(scale, 1e-300);
        if (done || res.applications >= opt.max_iter) {
            res.converged = done;
            res.vector.assign(dim, 0.0);
            for (Eigen::Index c = 0; c < k; ++c) {
                const double s = S(c, k - 1);
                for (std::size_t i = 0; i < dim; ++i) res.vector[i] += s * V[static_cast<std::size_t>(c)][i];
            }
            project(res.vector);
            const double nrm = norm2(res.vector);
            if (nrm > 0.0)
                for (auto& v : res.vector) v /= nrm;
            return res;
        }

        // Thick restart: keep the top `keep` Ritz vectors and continue from the residual direction.
        const std::size_t l = std::min<std::size_t>(keep, std::max<std::size_t>(static_cast<std::size_t>(k) - 1, 1));
        std::vector<std::vector<double>> R(l, std::vector<double>(dim, 0.0));
        for (std::size_t r = 0; r < l; ++r) {
            const Eigen::Index col = k - 1 - static_cast<Eigen::Index>(r);
            for (Eigen::Index c = 0; c < k; ++c) {
                const double s = S(c, col);
                if (s == 0.0) continue;
                const auto& vc = V[static_cast<std::size_t>(c)];
                for (std::size_t i = 0; i < dim; ++i) R[r][i] += s * vc[i];
            }
        }
        H.setZero();
        for (std::size_t r = 0; r < l; ++r) {
            const Eigen::Index col = k - 1 - static_cast<Eigen::Index>(r);
            H(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(r)) = theta(col);
            const double coupling = beta * S(k - 1, col);
            H(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(l)) = coupling;
            H(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(r)) = coupling;
        }
        for (auto& v : w) v /= beta;
        V = std::move(R);
        V.push_back(w);
    }
}

} // namespace detail

/// sigma_2 and the weighted coherence vectors (x, y) of the relaxed two-set problem.
inline CoherenceVectors second_singular_triplet(const StochasticSystem& full, const SpectralOptions& opt = {}) {
    if (full.p.size() != full.P.rows) throw LengthMismatch("reference measure", full.P.rows, full.p.size());
    if (full.q.size() != full.P.cols) throw LengthMismatch("image measure", full.P.cols, full.q.size());
    CoherenceVectors cv;

    // Lemma hypothesis: P P^T irreducible, i.e. the bipartite support graph is connected.
    const auto comps = support_components(full.P);
    cv.components = comps.count;
    const StochasticSystem* sys = &full;
    StochasticSystem sub;
    std::vector<std::size_t> row_map, col_map;
    if (comps.count > 1) {
        std::vector<std::size_t> size(comps.count, 0);
        for (auto l : comps.row_label) ++size[l];
        for (auto l : comps.col_label) ++size[l];
        const std::size_t big = static_cast<std::size_t>(std::max_element(size.begin(), size.end()) - size.begin());
        cv.warnings.push_back("P P^T is reducible (" + std::to_string(comps.count) +
                              " components); solving on the largest component only");
        std::vector<std::int64_t> col_new(full.n(), -1);
        for (std::size_t j = 0; j < full.n(); ++j)
            if (comps.col_label[j] == big) {
                col_new[j] = static_cast<std::int64_t>(col_map.size());
                col_map.push_back(j);
            }
        std::vector<double> p;
        sub.P.cols = col_map.size();
        sub.P.row_ptr.assign(1, 0);
        for (std::size_t i = 0; i < full.m(); ++i) {
            if (comps.row_label[i] != big) continue;
            row_map.push_back(i);
            p.push_back(full.p[i]);
            for (std::size_t k = full.P.row_ptr[i]; k < full.P.row_ptr[i + 1]; ++k) {
                sub.P.col.push_back(static_cast<std::uint32_t>(col_new[full.P.col[k]]));
                sub.P.val.push_back(full.P.val[k]);
            }
            sub.P.row_ptr.push_back(sub.P.col.size());
        }
        sub.P.rows = row_map.size();
        const double mass = std::accumulate(p.begin(), p.end(), 0.0);
        for (auto& v : p) v /= mass;
        sub = StochasticSystem::with_image_measure(std::move(sub.P), std::move(p));
        sys = &sub;
    }

    const WeightedOperator op(*sys);
    const std::size_t m = op.m();
    const std::vector<double> u = opt.deflate ? op.sqrt_p() : std::vector<double>{};
    auto normal = [&](const std::vector<double>& v) { return op.apply_transpose(op.apply(v)); };
    auto top = detail::top_eigenpair(m, normal, u, opt);
    cv.iterations = top.applications;

    std::vector<double> xh = std::move(top.vector);
    const double sigma = std::sqrt(std::max(top.value, 0.0));
    std::vector<double> yh;
    if (sigma > 0.0 && norm2(xh) > 0.0) {
        yh = op.apply(xh);
        for (auto& v : yh) v /= sigma;
        if (opt.deflate) { // remove roundoff along sqrt(q)
            const double c = dot(yh, op.sqrt_q());
            for (std::size_t j = 0; j < yh.size(); ++j) yh[j] -= c * op.sqrt_q()[j];
        }
        const double ny = norm2(yh);
        for (auto& v : yh) v /= ny;
    } else {
        // sigma2 = 0: every admissible pair attains the optimum; pick a deterministic one.
        yh.assign(op.n(), 0.0);
        for (std::size_t j = 0; j < yh.size(); ++j) yh[j] = (j % 2 ? -1.0 : 1.0);
        if (opt.deflate) {
            const double c = dot(yh, op.sqrt_q());
            for (std::size_t j = 0; j < yh.size(); ++j) yh[j] -= c * op.sqrt_q()[j];
        }
        const double ny = norm2(yh);
        if (ny > 0.0)
            for (auto& v : yh) v /= ny;
        if (norm2(xh) == 0.0 && m > 1) {
            xh.assign(m, 0.0);
            for (std::size_t i = 0; i < m; ++i) xh[i] = (i % 2 ? -1.0 : 1.0);
            const double c = dot(xh, op.sqrt_p());
            for (std::size_t i = 0; i < m; ++i) xh[i] -= c * op.sqrt_p()[i];
            const double nx = norm2(xh);
            for (auto& v : xh) v /= nx;
        }
    }

    // Sign: largest-magnitude entry of x positive; y follows so that <xL, y>_q >= 0.
    std::size_t arg = 0;
    for (std::size_t i = 0; i < m; ++i)
        if (std::abs(xh[i] / op.sqrt_p()[i]) > std::abs(xh[arg] / op.sqrt_p()[arg])) arg = i;
    if (m > 0 && xh[arg] < 0.0) {
        for (auto& v : xh) v = -v;
        for (auto& v : yh) v = -v;
    }
    if (sigma > 0.0 && dot(op.apply(xh), yh) < 0.0)
        for (auto& v : yh) v = -v;

    {
        const auto Ay = op.apply_transpose(yh);
        double r = 0.0;
        for (std::size_t i = 0; i < m; ++i) r += (Ay[i] - sigma * xh[i]) * (Ay[i] - sigma * xh[i]);
        cv.residual = std::sqrt(r);
    }
    cv.sigma2 = sigma;
    cv.degenerate = top.value - top.second <= opt.tol * std::max(top.value, 1e-300);
    if (cv.degenerate) cv.warnings.push_back("DegenerateSpectrum: sigma2 is within tolerance of sigma3");
    if (!top.converged) throw NoConvergence(top.applications, top.residual);

    std::vector<double> x(m), y(op.n());
    for (std::size_t i = 0; i < m; ++i) x[i] = xh[i] / op.sqrt_p()[i];
    for (std::size_t j = 0; j < y.size(); ++j) y[j] = yh[j] / op.sqrt_q()[j];

    if (comps.count > 1) {
        cv.x.assign(full.m(), 0.0);
        cv.y.assign(full.n(), 0.0);
        for (std::size_t k = 0; k < row_map.size(); ++k) cv.x[row_map[k]] = x[k];
        for (std::size_t k = 0; k < col_map.size(); ++k) cv.y[col_map[k]] = y[k];
    } else {
        cv.x = std::move(x);
        cv.y = std::move(y);
    }
    return cv;
}

/// Largest singular value of A without deflation (should be 1).
inline double leading_singular_value(const StochasticSystem& sys, SpectralOptions opt = {}) {
    opt.deflate = false;
    const WeightedOperator op(sys);
    auto normal = [&](const std::vector<double>& v) { return op.apply_transpose(op.apply(v)); };
    const auto top = detail::top_eigenpair(op.m(), normal, {}, opt);
    if (!top.converged) throw NoConvergence(top.applications, top.residual);
    return std::sqrt(std::max(top.value, 0.0));
}

/// <x, 1>_p and ||x||_p style helpers.
inline double weighted_sum(std::span<const double> v, std::span<const double> w) { return dot(v, w); }

inline double weighted_norm(std::span<const double> v, std::span<const double> w) {
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += v[i] * v[i] * w[i];
    return std::sqrt(s);
}

/// (xL)_j = sum_i x_i p_i P_ij / q_j.
inline std::vector<double> apply_L(const StochasticSystem& sys, std::span<const double> x) {
    std::vector<double> w(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) w[i] = x[i] * sys.p[i];
    auto out = sys.P.left_multiply(w);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = sys.q[j] > 0.0 ? out[j] / sys.q[j] : 0.0;
    return out;
}

/// <xL, y>_q.
inline double coherence_objective(const StochasticSystem& sys, std::span<const double> x, std::span<const double> y) {
    const auto xl = apply_L(sys, x);
    double s = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j) s += xl[j] * y[j] * sys.q[j];
    return s;
}

} // namespace ftcs
