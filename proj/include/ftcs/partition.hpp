#pragma once

// Coherent pairs from the weighted singular vectors.
//
// Level sets X1(b) = {x > b}, Y1(c) = {y > c} are swept over every distinct entry of x.
// For each b the image threshold c = eta(b) matches nu(Y1(c)) to mu(X1(b)); the b with
// the best score wins. The sweep is repeated from the negative end ({x <= b}, {y <= c})
// and the better of the two passes is kept.
//
// The default score is the smaller of the two coherence ratios of the pair and its
// complement. Scoring the swept pair alone is available (PartitionScore::SweptPair) but
// degenerates on most flows: a swept set covering almost all of X has a ratio near 1.
//
// Tie rules (all comparisons of masses and scores use kTieTolerance):
//   eta:  equally close masses -> the larger image set (smaller c);
//   b*:   equal ratios -> mass of the swept set closest to 1/2, then the larger set;
//   pass: equal best ratios -> the positive end.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "ftcs/boxgrid.hpp"
#include "ftcs/flowfield.hpp"
#include "ftcs/parallel.hpp"
#include "ftcs/sparse.hpp"
#include "ftcs/spectral.hpp"

namespace ftcs {

inline constexpr double kTieTolerance = 1e-12;

/// rho~(X, Y) = sum_{i in X, j in Y} p_i P_ij / sum_{i in X} p_i, summed row by row in index order.
inline double coherence_ratio_discrete(const StochasticSystem& sys, const BoxSet& X, const BoxSet& Y) {
    if (X.universe != sys.m()) throw LengthMismatch("X set universe", sys.m(), X.universe);
    if (Y.universe != sys.n()) throw LengthMismatch("Y set universe", sys.n(), Y.universe);
    const auto inY = Y.mask();
    double num = 0.0, den = 0.0;
    for (std::size_t i : X.indices) {
        den += sys.p[i];
        for (std::size_t k = sys.P.row_ptr[i]; k < sys.P.row_ptr[i + 1]; ++k)
            if (inY[sys.P.col[k]]) num += sys.p[i] * sys.P.val[k];
    }
    if (!(den > 0.0)) throw ZeroMassSet();
    return std::clamp(num / den, 0.0, 1.0);
}

inline double set_mass(std::span<const double> w, const BoxSet& s) {
    double m = 0.0;
    for (std::size_t i : s.indices) m += w[i];
    return m;
}

struct EtaResult {
    double c = std::numeric_limits<double>::infinity(); // Y1 = {y > c}
    BoxSet Y1;
    double mass = 0.0;
};

/// eta(b) for a target mass mu(X1(b)): the upper level set of y whose q-mass is closest to it.
/// Candidates are +inf (empty set), every distinct entry of y, and -inf (all boxes).
inline EtaResult eta(double target_mass, std::span<const double> y, std::span<const double> q) {
    if (y.size() != q.size()) throw LengthMismatch("eta weights", y.size(), q.size());
    std::vector<std::size_t> order(y.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return y[a] > y[b]; });

    EtaResult best;
    double best_gap = std::abs(target_mass);
    std::size_t best_end = 0;
    double mass = 0.0;
    for (std::size_t k = 0; k < order.size();) {
        std::size_t e = k;
        while (e < order.size() && y[order[e]] == y[order[k]]) mass += q[order[e++]];
        const double gap = std::abs(target_mass - mass);
        if (gap <= best_gap + kTieTolerance) {
            best_gap = std::min(gap, best_gap);
            best_end = e;
            best.mass = mass;
            best.c = e < order.size() ? y[order[e]] : -std::numeric_limits<double>::infinity();
        }
        k = e;
    }
    std::vector<std::size_t> idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(best_end));
    best.Y1 = BoxSet(y.size(), std::move(idx));
    return best;
}

enum class SearchEnd { Positive, Negative };

struct CoherentPartition {
    BoxSet X1, X2, Y1, Y2;
    double b_star = 0.0; // X1 = {x > b_star}
    double c_star = 0.0; // Y1 = {y > c_star}
    double rho1 = 0.0;
    double rho2 = 0.0;
    double mass_X1 = 0.0;
    double mass_Y1 = 0.0;
    SearchEnd search_end = SearchEnd::Positive;
};

enum class PartitionScore {
    SweptPair,  // rho~ of the swept pair only
    WorstOfPair // min(rho~(X1,Y1), rho~(X2,Y2)) for the pair and its complement
};

struct PartitionOptions {
    PartitionScore score = PartitionScore::WorstOfPair;
    /// If set, only thresholds with mu(X1) in [1/2 - window, 1/2 + window] are admissible.
    std::optional<double> mass_window;
};

/// Score of a threshold pair under the chosen rule.
inline double partition_score(PartitionScore rule, double rho_swept, double rho_complement) {
    return rule == PartitionScore::SweptPair ? rho_swept : std::min(rho_swept, rho_complement);
}

namespace detail {

struct PassResult {
    bool found = false;
    BoxSet Xs; // swept set (X1 for the positive end, X2 for the negative end)
    BoxSet Ys;
    double rho = -1.0; // score of the winning threshold
    double b = 0.0;
    double c = 0.0;
    double mass = 0.0;
};

/// One sweep over the level sets of `xs`, `ys` (already oriented so that the swept sets are
/// upper level sets). Thresholds returned refer to the oriented vectors.
inline PassResult sweep(const StochasticSystem& sys, const SparseMatrix& PT, std::span<const double> xs,
                        std::span<const double> ys, const PartitionOptions& opt) {
    const std::size_t m = sys.m(), n = sys.n();
    std::vector<std::size_t> xo(m), yo(n);
    std::iota(xo.begin(), xo.end(), std::size_t{0});
    std::iota(yo.begin(), yo.end(), std::size_t{0});
    std::stable_sort(xo.begin(), xo.end(), [&](auto a, auto b) { return xs[a] > xs[b]; });
    std::stable_sort(yo.begin(), yo.end(), [&](auto a, auto b) { return ys[a] > ys[b]; });

    // Group boundaries of equal values.
    std::vector<std::size_t> yend; // yend[g] = number of boxes in the first g+1 groups
    for (std::size_t k = 0; k < n;) {
        std::size_t e = k;
        while (e < n && ys[yo[e]] == ys[yo[k]]) ++e;
        yend.push_back(e);
        k = e;
    }
    std::vector<double> ymass(yend.size() + 1, 0.0); // ymass[g] = mass of first g groups
    for (std::size_t g = 0, k = 0; g < yend.size(); ++g) {
        double s = ymass[g];
        for (; k < yend[g]; ++k) s += sys.q[yo[k]];
        ymass[g + 1] = s;
    }

    std::vector<char> inX(m, 0), inY(n, 0);
    double num = 0.0, massX = 0.0;
    std::size_t gy = 0, ypos = 0; // number of y groups included

    struct Candidate {
        std::size_t xcount;
        std::size_t ygroups;
        double rho;
    };
    std::vector<Candidate> cands;

    for (std::size_t k = 0; k < m;) {
        std::size_t e = k;
        while (e < m && xs[xo[e]] == xs[xo[k]]) ++e;
        if (e == m) break; // the full set is not a proper split
        for (std::size_t t = k; t < e; ++t) {
            const std::size_t i = xo[t];
            inX[i] = 1;
            massX += sys.p[i];
            for (std::size_t r = sys.P.row_ptr[i]; r < sys.P.row_ptr[i + 1]; ++r)
                if (inY[sys.P.col[r]]) num += sys.p[i] * sys.P.val[r];
        }
        // eta: advance while the next larger image set is at least as close in mass.
        while (gy < yend.size() &&
               std::abs(massX - ymass[gy + 1]) <= std::abs(massX - ymass[gy]) + kTieTolerance) {
            for (; ypos < yend[gy]; ++ypos) {
                const std::size_t j = yo[ypos];
                inY[j] = 1;
                for (std::size_t r = PT.row_ptr[j]; r < PT.row_ptr[j + 1]; ++r)
                    if (inX[PT.col[r]]) num += sys.p[PT.col[r]] * PT.val[r];
            }
            ++gy;
        }
        k = e;
        if (opt.mass_window && std::abs(massX - 0.5) > *opt.mass_window) continue;
        const double rho = massX > 0.0 ? num / massX : 0.0;
        const double rest = 1.0 - massX;
        const double rho_c = rest > 0.0 ? (1.0 - massX - ymass[gy] + num) / rest : 0.0;
        cands.push_back({e, gy, partition_score(opt.score, rho, rho_c)});
    }

    PassResult res;
    if (cands.empty()) return res;
    double approx_best = -1.0;
    for (const auto& c : cands) approx_best = std::max(approx_best, c.rho);

    // Exact recomputation for near-maximal candidates, then the documented tie rules.
    struct Exact {
        const Candidate* c;
        BoxSet X, Y;
        double rho, mass;
    };
    std::vector<Exact> near;
    for (const auto& c : cands) {
        if (c.rho < approx_best - 1e-9) continue;
        BoxSet X(m, std::vector<std::size_t>(xo.begin(), xo.begin() + static_cast<std::ptrdiff_t>(c.xcount)));
        const std::size_t ycount = c.ygroups == 0 ? 0 : yend[c.ygroups - 1];
        BoxSet Y(n, std::vector<std::size_t>(yo.begin(), yo.begin() + static_cast<std::ptrdiff_t>(ycount)));
        const double rho = coherence_ratio_discrete(sys, X, Y);
        const double rho_c = coherence_ratio_discrete(sys, X.complement(), Y.complement());
        const double mass = set_mass(sys.p, X);
        near.push_back({&c, std::move(X), std::move(Y), partition_score(opt.score, rho, rho_c), mass});
    }
    double best_rho = -1.0;
    for (const auto& e : near) best_rho = std::max(best_rho, e.rho);
    const Exact* pick = nullptr;
    for (const auto& e : near) {
        if (e.rho < best_rho - kTieTolerance) continue;
        if (!pick) {
            pick = &e;
            continue;
        }
        const double d_new = std::abs(e.mass - 0.5), d_old = std::abs(pick->mass - 0.5);
        if (d_new < d_old - kTieTolerance || (std::abs(d_new - d_old) <= kTieTolerance && e.X.size() > pick->X.size()))
            pick = &e;
    }

    res.found = true;
    res.rho = pick->rho;
    res.mass = pick->mass;
    res.Xs = pick->X;
    res.Ys = pick->Y;
    const std::size_t xc = pick->c->xcount;
    res.b = xs[xo[xc]]; // largest excluded value: Xs = {xs > b}
    const std::size_t yc = pick->Y.size();
    res.c = pick->c->ygroups == 0 ? std::numeric_limits<double>::infinity()
            : yc < n             ? ys[yo[yc]]
                                 : -std::numeric_limits<double>::infinity();
    return res;
}

} // namespace detail

/// Algorithm: positive-end and negative-end threshold sweeps; keeps the more coherent pair.
inline CoherentPartition extract_coherent_pair(const StochasticSystem& sys, const CoherenceVectors& cv,
                                               const PartitionOptions& opt = {}) {
    const std::size_t m = sys.m(), n = sys.n();
    if (cv.x.size() != m) throw LengthMismatch("x", m, cv.x.size());
    if (cv.y.size() != n) throw LengthMismatch("y", n, cv.y.size());
    if (m == 0 || std::all_of(cv.x.begin(), cv.x.end(), [&](double v) { return v == cv.x.front(); }))
        throw DegenerateVector();

    const SparseMatrix PT = sys.P.transposed();
    const auto pos = detail::sweep(sys, PT, cv.x, cv.y, opt);
    std::vector<double> nx(m), ny(n);
    for (std::size_t i = 0; i < m; ++i) nx[i] = -cv.x[i];
    for (std::size_t j = 0; j < n; ++j) ny[j] = -cv.y[j];
    const auto neg = detail::sweep(sys, PT, nx, ny, opt);
    if (!pos.found && !neg.found) throw InvalidArgument("no admissible threshold within the mass window");

    CoherentPartition out;
    const bool use_neg = neg.found && (!pos.found || neg.rho > pos.rho + kTieTolerance);
    if (!use_neg) {
        out.X1 = pos.Xs;
        out.Y1 = pos.Ys;
        out.X2 = out.X1.complement();
        out.Y2 = out.Y1.complement();
        out.b_star = pos.b;
        out.c_star = pos.c;
        out.search_end = SearchEnd::Positive;
    } else {
        // The swept sets are lower level sets; b* is the largest x inside X2, so X1 = {x > b*}.
        out.X2 = neg.Xs;
        out.Y2 = neg.Ys;
        out.X1 = out.X2.complement();
        out.Y1 = out.Y2.complement();
        double bx = -std::numeric_limits<double>::infinity();
        for (std::size_t i : out.X2.indices) bx = std::max(bx, cv.x[i]);
        out.b_star = bx;
        double cy = -std::numeric_limits<double>::infinity();
        for (std::size_t j : out.Y2.indices) cy = std::max(cy, cv.y[j]);
        out.c_star = out.Y2.empty() ? -std::numeric_limits<double>::infinity()
                     : out.Y1.empty() ? std::numeric_limits<double>::infinity()
                                      : cy;
        out.search_end = SearchEnd::Negative;
    }
    out.mass_X1 = set_mass(sys.p, out.X1);
    out.mass_Y1 = set_mass(sys.q, out.Y1);
    out.rho1 = out.X1.empty() ? 0.0 : coherence_ratio_discrete(sys, out.X1, out.Y1);
    out.rho2 = out.X2.empty() ? 0.0 : coherence_ratio_discrete(sys, out.X2, out.Y2);
    return out;
}

// ---------------------------------------------------------------------------
// Ulam-independent coherence estimate

/// Fraction of fresh samples, drawn mu-proportionally in Xset (box by weight, uniform within box),
/// whose images land in Yset. Samples leaving the domain count as not landing.
template <VelocityField F>
double coherence_ratio_pointwise(const F& field, const FlowMapSpec& spec, const BoxGrid<F::dim>& source,
                                 const BoxGrid<F::dim>& image, std::span<const double> p, const BoxSet& Xset,
                                 const BoxSet& Yset, std::size_t samples, std::uint64_t seed = 7,
                                 unsigned threads = 1) {
    constexpr int D = F::dim;
    if (Xset.empty()) throw ZeroMassSet();
    if (samples == 0) throw InvalidArgument("pointwise coherence needs at least one sample");
    std::vector<double> w;
    for (std::size_t i : Xset.indices) w.push_back(p[i]);
    std::mt19937_64 rng(seed);
    std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Point<D>> pts(samples);
    for (auto& z : pts) {
        const std::size_t box = Xset.indices[pick(rng)];
        const auto lo = source.box_lower(box);
        for (int a = 0; a < D; ++a) z[a] = lo[a] + u(rng) * source.box_size()[a];
    }
    const auto inY = Yset.mask();
    std::vector<signed char> hit(samples, 0);
    parallel_for(
        samples, threads,
        [&](std::size_t k) {
            try {
                const auto img = flow_map(field, spec, pts[k]);
                const auto j = image.locate(img);
                hit[k] = j && inY[*j] ? 1 : 0;
            } catch (const OutOfSpatialDomain&) {
                hit[k] = -1;
            }
        },
        256);
    std::size_t landed = 0, lost = 0;
    for (auto h : hit) {
        landed += h == 1;
        lost += h == -1;
    }
    if (lost == samples) throw AllMassLost();
    return static_cast<double>(landed) / static_cast<double>(samples);
}

// ---------------------------------------------------------------------------
// Exhaustive combinatorial problem (small instances only)

struct BalanceTolerance {
    double epsilon = 0.0;
};

struct BruteForceResult {
    bool found = false;
    double objective = -std::numeric_limits<double>::infinity();
    std::vector<int> x; // entries +-1, x[0] = +1 by convention
    std::vector<int> y;
    double rho1 = 0.0;
    double rho2 = 0.0;
    double mass_X1 = 0.0;
};

inline constexpr std::size_t kBruteForceLimit = 22;

/// max <xL, y>_q over x in {+-1}^m, y in {+-1}^n with |<x,1>_p| <= eps and |<y,1>_q| <= eps.
inline BruteForceResult brute_force_partition(const StochasticSystem& sys, BalanceTolerance tol = {}) {
    const std::size_t m = sys.m(), n = sys.n();
    if (m > kBruteForceLimit || n > kBruteForceLimit) throw TooLarge(m, n, kBruteForceLimit);
    if (tol.epsilon < 0.0) throw InvalidArgument("balance tolerance must be >= 0");

    auto balanced = [&](std::uint64_t bits, std::size_t len, std::span<const double> w) {
        double s = 0.0;
        for (std::size_t k = 0; k < len; ++k) s += ((bits >> k) & 1u) ? w[k] : -w[k];
        return std::abs(s) <= tol.epsilon;
    };
    std::vector<std::uint64_t> ys;
    for (std::uint64_t b = 0; b < (std::uint64_t{1} << n); ++b)
        if (balanced(b, n, sys.q)) ys.push_back(b);

    // G_ij = p_i P_ij dense, objective = sum_ij x_i y_j G_ij.
    std::vector<double> G(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t k = sys.P.row_ptr[i]; k < sys.P.row_ptr[i + 1]; ++k)
            G[i * n + sys.P.col[k]] = sys.p[i] * sys.P.val[k];

    BruteForceResult best;
    std::uint64_t best_x = 0, best_y = 0;
    std::vector<double> col(n);
    for (std::uint64_t bx = 1; bx < (std::uint64_t{1} << m); bx += 2) { // x[0] = +1
        if (!balanced(bx, m, sys.p)) continue;
        std::fill(col.begin(), col.end(), 0.0);
        for (std::size_t i = 0; i < m; ++i) {
            const double s = ((bx >> i) & 1u) ? 1.0 : -1.0;
            for (std::size_t j = 0; j < n; ++j) col[j] += s * G[i * n + j];
        }
        for (auto by : ys) {
            double obj = 0.0;
            for (std::size_t j = 0; j < n; ++j) obj += ((by >> j) & 1u) ? col[j] : -col[j];
            if (obj > best.objective) {
                best.objective = obj;
                best.found = true;
                best_x = bx;
                best_y = by;
            }
        }
    }
    if (!best.found) return best;
    best.x.resize(m);
    best.y.resize(n);
    std::vector<char> mx(m), my(n);
    for (std::size_t i = 0; i < m; ++i) best.x[i] = ((best_x >> i) & 1u) ? 1 : -1, mx[i] = best.x[i] > 0;
    for (std::size_t j = 0; j < n; ++j) best.y[j] = ((best_y >> j) & 1u) ? 1 : -1, my[j] = best.y[j] > 0;
    const auto X1 = BoxSet::from_mask(mx), Y1 = BoxSet::from_mask(my);
    best.mass_X1 = set_mass(sys.p, X1);
    best.rho1 = X1.empty() ? 0.0 : coherence_ratio_discrete(sys, X1, Y1);
    const auto X2 = X1.complement();
    best.rho2 = X2.empty() ? 0.0 : coherence_ratio_discrete(sys, X2, Y1.complement());
    return best;
}

} // namespace ftcs
