#pragma once

// Finite-time Lyapunov exponents: Lambda(z) = ln(sigma_max(D Phi(z, t; tau))) / |tau|,
// with D Phi from central differences of the flow map.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <vector>

#include "ftcs/flowfield.hpp"
#include "ftcs/parallel.hpp"

namespace ftcs {

enum class FtleDirection { Forward, Backward };

/// Cell-centered evaluation lattice, axis 0 fastest.
template <int D>
struct EvalLattice {
    Point<D> lower{};
    Point<D> upper{};
    std::array<std::size_t, D> counts{};

    [[nodiscard]] std::size_t size() const {
        std::size_t s = 1;
        for (auto c : counts) s *= c;
        return s;
    }

    [[nodiscard]] Point<D> point(std::size_t flat) const {
        Point<D> z;
        for (int a = 0; a < D; ++a) {
            const std::size_t k = flat % counts[a];
            flat /= counts[a];
            z[a] = lower[a] + (static_cast<double>(k) + 0.5) * (upper[a] - lower[a]) / static_cast<double>(counts[a]);
        }
        return z;
    }
};

template <int D>
struct FtleField {
    EvalLattice<D> lattice;
    std::vector<double> values; // NaN where the Jacobian could not be computed
    std::vector<char> ok;
    FtleDirection direction = FtleDirection::Forward;
    double t = 0.0;
    double tau = 0.0; // signed flow time actually used

    [[nodiscard]] std::size_t failures() const {
        std::size_t f = 0;
        for (char c : ok) f += !c;
        return f;
    }
};

/// Largest singular value of a small square matrix.
template <int D>
double largest_singular_value(const Matrix<D>& J) {
    Eigen::Matrix<double, D, D> M;
    for (int r = 0; r < D; ++r)
        for (int c = 0; c < D; ++c) M(r, c) = J[r][c];
    const Eigen::Matrix<double, D, D> C = M.transpose() * M;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, D, D>> es(C, Eigen::EigenvaluesOnly);
    return std::sqrt(std::max(es.eigenvalues()(D - 1), 0.0));
}

template <VelocityField F>
double ftle_at(const F& field, const FlowMapSpec& spec, const Point<F::dim>& z, double delta) {
    const auto J = flow_jacobian(field, spec, z, delta);
    return std::log(largest_singular_value<F::dim>(J)) / std::abs(spec.tau);
}

/// FTLE over a lattice. `tau` is the flow duration magnitude; Backward integrates with -|tau|.
template <VelocityField F>
FtleField<F::dim> ftle_field(const F& field, const EvalLattice<F::dim>& lattice, double t, double tau,
                             FtleDirection direction, double delta, double step, unsigned threads = 1) {
    if (tau == 0.0) throw InvalidArgument("FTLE needs a nonzero flow time");
    FtleField<F::dim> out;
    out.lattice = lattice;
    out.direction = direction;
    out.t = t;
    out.tau = direction == FtleDirection::Forward ? std::abs(tau) : -std::abs(tau);
    const FlowMapSpec spec{t, out.tau, step};
    spec.validate();
    const std::size_t N = lattice.size();
    out.values.assign(N, std::numeric_limits<double>::quiet_NaN());
    out.ok.assign(N, 0);
    parallel_for(
        N, threads,
        [&](std::size_t k) {
            try {
                const double v = ftle_at(field, spec, lattice.point(k), delta);
                if (std::isfinite(v)) {
                    out.values[k] = v;
                    out.ok[k] = 1;
                }
            } catch (const OutOfSpatialDomain&) {
            } catch (const OutOfTemporalRange&) {
            }
        },
        32);
    return out;
}

} // namespace ftcs
