#pragma once

// Shared fixtures and independent oracles for the test suites.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "ftcs/partition.hpp"
#include "ftcs/sparse.hpp"
#include "ftcs/spectral.hpp"

namespace testing_support {

using ftcs::SparseMatrix;
using ftcs::StochasticSystem;

/// Row-stochastic m x n system with random positive p; every column gets at least one entry.
inline StochasticSystem random_system(std::size_t m, std::size_t n, std::mt19937_64& rng, double density = 0.3) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::vector<double>> dense(m, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < m; ++i) {
        dense[i][std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)] = 0.1 + u(rng);
        for (std::size_t j = 0; j < n; ++j)
            if (u(rng) < density) dense[i][j] = 0.1 + u(rng);
    }
    for (std::size_t j = 0; j < n; ++j) {
        bool any = false;
        for (std::size_t i = 0; i < m; ++i) any |= dense[i][j] > 0.0;
        if (!any) dense[std::uniform_int_distribution<std::size_t>(0, m - 1)(rng)][j] = 0.1 + u(rng);
    }
    std::vector<SparseMatrix::Triplet> trips;
    for (std::size_t i = 0; i < m; ++i) {
        const double s = std::accumulate(dense[i].begin(), dense[i].end(), 0.0);
        for (std::size_t j = 0; j < n; ++j)
            if (dense[i][j] > 0.0) trips.push_back({i, j, dense[i][j] / s});
    }
    std::vector<double> p(m);
    for (auto& v : p) v = 0.2 + u(rng);
    const double ps = std::accumulate(p.begin(), p.end(), 0.0);
    for (auto& v : p) v /= ps;
    return StochasticSystem::with_image_measure(SparseMatrix::from_triplets(m, n, std::move(trips)), std::move(p));
}

/// System whose p and P entries are dyadic rationals, so balance sums are exact in floating point.
inline StochasticSystem dyadic_system(std::size_t m, std::size_t n, std::mt19937_64& rng) {
    // p_i = a_i / 64 with sum a_i = 64; P_ij = c_ij / 16 with row sums 16.
    std::vector<int> a(m, 1);
    for (int r = static_cast<int>(m); r < 64; ++r) ++a[std::uniform_int_distribution<std::size_t>(0, m - 1)(rng)];
    std::vector<SparseMatrix::Triplet> trips;
    std::vector<std::vector<int>> c(m, std::vector<int>(n, 0));
    for (std::size_t i = 0; i < m; ++i)
        for (int r = 0; r < 16; ++r) ++c[i][std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)];
    for (std::size_t j = 0; j < n; ++j) {
        bool any = false;
        for (std::size_t i = 0; i < m; ++i) any |= c[i][j] > 0;
        if (!any) { // move one unit from the largest entry of a random row
            auto& row = c[std::uniform_int_distribution<std::size_t>(0, m - 1)(rng)];
            auto it = std::max_element(row.begin(), row.end());
            if (*it > 1) {
                --*it;
                ++row[j];
            }
        }
    }
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (c[i][j] > 0) trips.push_back({i, j, c[i][j] / 16.0});
    std::vector<double> p(m);
    for (std::size_t i = 0; i < m; ++i) p[i] = a[i] / 64.0;
    auto P = SparseMatrix::from_triplets(m, n, std::move(trips));
    // Drop empty columns rather than leave q_j = 0.
    std::vector<std::size_t> keep;
    auto q = P.left_multiply(p);
    for (std::size_t j = 0; j < n; ++j)
        if (q[j] > 0.0) keep.push_back(j);
    if (keep.size() != n) {
        std::vector<std::size_t> remap(n, 0);
        for (std::size_t k = 0; k < keep.size(); ++k) remap[keep[k]] = k;
        std::vector<SparseMatrix::Triplet> t2;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t k = P.row_ptr[i]; k < P.row_ptr[i + 1]; ++k)
                t2.push_back({i, remap[P.col[k]], P.val[k]});
        P = SparseMatrix::from_triplets(m, keep.size(), std::move(t2));
    }
    return StochasticSystem::with_image_measure(std::move(P), std::move(p));
}

inline Eigen::MatrixXd dense(const SparseMatrix& P) {
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(P.rows), static_cast<Eigen::Index>(P.cols));
    for (std::size_t i = 0; i < P.rows; ++i)
        for (std::size_t k = P.row_ptr[i]; k < P.row_ptr[i + 1]; ++k)
            D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(P.col[k])) = P.val[k];
    return D;
}

/// Dense oracle: A = diag(sqrt p) P diag(1/sqrt q).
inline Eigen::MatrixXd weighted_dense(const StochasticSystem& s) {
    Eigen::MatrixXd A = dense(s.P);
    for (Eigen::Index i = 0; i < A.rows(); ++i) A.row(i) *= std::sqrt(s.p[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < A.cols(); ++j) A.col(j) /= std::sqrt(s.q[static_cast<std::size_t>(j)]);
    return A;
}

struct DenseTriplet {
    Eigen::VectorXd sigma;
    std::vector<double> x; // weighted second left vector
    std::vector<double> y;
};

inline DenseTriplet dense_svd(const StochasticSystem& s) {
    const Eigen::MatrixXd A = weighted_dense(s);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
    DenseTriplet r;
    r.sigma = svd.singularValues();
    r.x.resize(s.m());
    r.y.resize(s.n());
    for (std::size_t i = 0; i < s.m(); ++i) r.x[i] = svd.matrixU()(static_cast<Eigen::Index>(i), 1) / std::sqrt(s.p[i]);
    for (std::size_t j = 0; j < s.n(); ++j) r.y[j] = svd.matrixV()(static_cast<Eigen::Index>(j), 1) / std::sqrt(s.q[j]);
    return r;
}

inline double mass_where(const std::vector<double>& w, const std::vector<double>& v, double thr, bool above) {
    double s = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k)
        if (above ? v[k] > thr : v[k] <= thr) s += w[k];
    return s;
}

inline double naive_rho(const StochasticSystem& s, const std::vector<char>& X, const std::vector<char>& Y) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < s.m(); ++i) {
        if (!X[i]) continue;
        den += s.p[i];
        for (std::size_t k = s.P.row_ptr[i]; k < s.P.row_ptr[i + 1]; ++k)
            if (Y[s.P.col[k]]) num += s.p[i] * s.P.val[k];
    }
    return den > 0.0 ? num / den : 0.0;
}

inline std::vector<char> upper_set(const std::vector<double>& v, double thr) {
    std::vector<char> s(v.size());
    for (std::size_t k = 0; k < v.size(); ++k) s[k] = v[k] >= thr;
    return s;
}

inline std::vector<char> flip(std::vector<char> s) {
    for (auto& c : s) c = !c;
    return s;
}

inline double mass_of(const std::vector<double>& w, const std::vector<char>& s) {
    double m = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k)
        if (s[k]) m += w[k];
    return m;
}

/// Every proper upper level set of x from both ends, each paired with the upper level set of y whose
/// mass is closest (ties to the larger set), scored by `rule`.
inline double exhaustive_best(const StochasticSystem& s, std::vector<double> x, std::vector<double> y,
                              ftcs::PartitionScore rule) {
    double best = -1.0;
    for (int end = 0; end < 2; ++end) {
        std::vector<double> xv = x, yv = y;
        std::sort(xv.begin(), xv.end());
        xv.erase(std::unique(xv.begin(), xv.end()), xv.end());
        std::sort(yv.begin(), yv.end());
        yv.erase(std::unique(yv.begin(), yv.end()), yv.end());
        for (std::size_t a = 1; a < xv.size(); ++a) {
            const auto X = upper_set(x, xv[a]);
            const double mx = mass_of(s.p, X);
            // candidate Y sets: {y >= v} for each value, plus the empty set
            std::vector<char> bestY(y.size(), 0);
            double gap = std::abs(mx);
            for (std::size_t b = yv.size(); b-- > 0;) {
                const auto Y = upper_set(y, yv[b]);
                const double my = mass_of(s.q, Y);
                if (std::abs(mx - my) <= gap + ftcs::kTieTolerance) {
                    gap = std::min(gap, std::abs(mx - my));
                    bestY = Y;
                }
            }
            const double r1 = naive_rho(s, X, bestY), r2 = naive_rho(s, flip(X), flip(bestY));
            best = std::max(best, ftcs::partition_score(rule, r1, r2));
        }
        for (auto& v : x) v = -v;
        for (auto& v : y) v = -v;
    }
    return best;
}

} // namespace testing_support
