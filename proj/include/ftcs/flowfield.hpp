#pragma once

// Time-dependent velocity fields and their flow maps.
//
// A velocity field is any type F providing
//   static constexpr int dim;
//   Point<dim> operator()(const Point<dim>& z, double t) const;   // may throw OutOfSpatialDomain/OutOfTemporalRange
//   double period(int axis) const;                                // 0 for non-periodic axes
//   double period_origin(int axis) const;                         // lower end of the fundamental domain
// All fields are immutable after construction and safe to share between threads.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "ftcs/errors.hpp"

namespace ftcs {

template <class F>
concept VelocityField = requires(const F& f, const Point<F::dim>& z, double t, int axis) {
    { f(z, t) } -> std::same_as<Point<F::dim>>;
    { f.period(axis) } -> std::convertible_to<double>;
    { f.period_origin(axis) } -> std::convertible_to<double>;
};

/// Wraps the periodic coordinates of z into [origin, origin + period).
template <VelocityField F>
void wrap_periodic(const F& field, Point<F::dim>& z) {
    for (int a = 0; a < F::dim; ++a) {
        const double period = field.period(a);
        if (period > 0.0) {
            const double lo = field.period_origin(a);
            double s = std::fmod(z[a] - lo, period);
            if (s < 0.0) s += period;
            if (s >= period) s = 0.0;
            z[a] = lo + s;
        }
    }
}

// ---------------------------------------------------------------------------
// Bickley jet

/// Parameters of the quasi-periodic Bickley-jet stream function
///   Phi(x,y,t) = c3 y - U0 L tanh(y/L)
///              + U0 L sech^2(y/L) [A3 cos(k1 x) + A2 cos(k2 x - s2 t) + A1 cos(k1 x - s1 t)].
/// Lengths in Mm, time in days.
struct BickleyParams {
    double U0 = 62.66 * 86400.0 / 1.0e6; // 62.66 m/s in Mm/day
    double L = 1.770;
    double r_e = 6.371;
    double c2 = 0.205; // fractions of U0
    double c3 = 0.700;
    double c1 = 0.1446;
    double A1 = 0.075;
    double A2 = 0.4;
    double A3 = 0.2;
    double k1 = 2.0 / 6.371;
    double k2 = 4.0 / 6.371;
    double s1 = 0.0;
    double s2 = 0.0;

    /// Default configuration: Rypina et al. scales with the modified wave parameters.
    /// Frequencies from the phase speeds: s_n = k_n c_n U0.
    static BickleyParams defaults() {
        BickleyParams p;
        p.derive_frequencies();
        return p;
    }

    void derive_frequencies() {
        s1 = k1 * c1 * U0;
        s2 = k2 * c2 * U0;
    }

    /// Alternative: phase speeds measured in the frame moving with c3 U0.
    void derive_comoving_frequencies() {
        s1 = k1 * (c1 - c3) * U0;
        s2 = k2 * (c2 - c3) * U0;
    }

    [[nodiscard]] double circumference() const { return std::numbers::pi * r_e; }

    void validate() const {
        if (!(U0 > 0.0) || !(L > 0.0) || !(r_e > 0.0))
            throw InvalidArgument("BickleyParams: U0, L and r_e must be positive");
        for (double k : {k1, k2}) {
            const double turns = k * circumference() / (2.0 * std::numbers::pi);
            if (std::abs(turns - std::round(turns)) > 1e-9 * std::max(1.0, std::abs(turns)))
                throw InvalidArgument("BickleyParams: wavenumber " + std::to_string(k) +
                                      " is not periodic on the zonal circle");
        }
    }
};

class BickleyField {
public:
    static constexpr int dim = 2;

    explicit BickleyField(BickleyParams params = BickleyParams::defaults()) : p_(params) {
        p_.validate();
        const double ratio = p_.k2 / p_.k1;
        const double n = std::round(ratio);
        if (n >= 1.0 && n <= 8.0 && std::abs(ratio - n) < 1e-14 * n) k2_multiple_ = static_cast<int>(n);
    }

    [[nodiscard]] const BickleyParams& params() const { return p_; }

    [[nodiscard]] double stream(const Point<2>& z, double t) const {
        const double x = z[0], y = z[1];
        const double sech = 1.0 / std::cosh(y / p_.L);
        const double waves = p_.A3 * std::cos(p_.k1 * x) + p_.A2 * std::cos(p_.k2 * x - p_.s2 * t) +
                             p_.A1 * std::cos(p_.k1 * x - p_.s1 * t);
        return p_.c3 * p_.U0 * y - p_.U0 * p_.L * std::tanh(y / p_.L) + p_.U0 * p_.L * sech * sech * waves;
    }

    /// (u, v) = (-dPhi/dy, dPhi/dx), closed form.
    Point<2> operator()(const Point<2>& z, double t) const {
        const double x = z[0];
        const double r = std::abs(z[1]) / p_.L;
        double th = 1.0, sech2 = 0.0;
        if (r < 300.0) {
            const double e = std::exp(-2.0 * r);
            th = (1.0 - e) / (1.0 + e);
            sech2 = 4.0 * e / ((1.0 + e) * (1.0 + e));
        }
        if (z[1] < 0.0) th = -th;

        const TimeTerms& tt = time_terms(t);
        const double sk1 = std::sin(p_.k1 * x), ck1 = std::cos(p_.k1 * x);
        double sk2, ck2;
        if (k2_multiple_ > 0) { // k2 = n k1: multiple-angle recurrence
            double s = sk1, c = ck1;
            for (int k = 1; k < k2_multiple_; ++k) {
                const double sn = s * ck1 + c * sk1;
                c = c * ck1 - s * sk1;
                s = sn;
            }
            sk2 = s;
            ck2 = c;
        } else {
            sk2 = std::sin(p_.k2 * x);
            ck2 = std::cos(p_.k2 * x);
        }
        // cos(kx - st) = cos kx cos st + sin kx sin st;  sin(kx - st) = sin kx cos st - cos kx sin st
        const double ca = ck2 * tt.c2 + sk2 * tt.s2, sa = sk2 * tt.c2 - ck2 * tt.s2;
        const double cb = ck1 * tt.c1 + sk1 * tt.s1, sb = sk1 * tt.c1 - ck1 * tt.s1;
        const double waves = p_.A3 * ck1 + p_.A2 * ca + p_.A1 * cb;
        const double dwaves = -(p_.A3 * p_.k1 * sk1 + p_.A2 * p_.k2 * sa + p_.A1 * p_.k1 * sb);
        const double u = -p_.c3 * p_.U0 + p_.U0 * sech2 + 2.0 * p_.U0 * sech2 * th * waves;
        const double v = p_.U0 * p_.L * sech2 * dwaves;
        return {u, v};
    }

    [[nodiscard]] double period(int axis) const { return axis == 0 ? p_.circumference() : 0.0; }
    [[nodiscard]] double period_origin(int) const { return 0.0; }

private:
    struct TimeTerms {
        const BickleyField* owner = nullptr;
        double t = 0.0;
        double c1 = 1.0, s1 = 0.0, c2 = 1.0, s2 = 0.0;
    };

    /// sin/cos of s1 t and s2 t; RK4 reuses each time value several times, so the last one is cached per thread.
    const TimeTerms& time_terms(double t) const {
        thread_local TimeTerms cache;
        if (cache.owner != this || cache.t != t) {
            cache.owner = this;
            cache.t = t;
            cache.c1 = std::cos(p_.s1 * t);
            cache.s1 = std::sin(p_.s1 * t);
            cache.c2 = std::cos(p_.s2 * t);
            cache.s2 = std::sin(p_.s2 * t);
        }
        return cache;
    }

    BickleyParams p_;
    int k2_multiple_ = 0;
};

// ---------------------------------------------------------------------------
// Simple analytic fields (constant and linear), used for calibration and tests.

template <int D>
class ConstantField {
public:
    static constexpr int dim = D;
    explicit ConstantField(Point<D> velocity) : v_(velocity) {}
    Point<D> operator()(const Point<D>&, double) const { return v_; }
    [[nodiscard]] double period(int a) const { return periods_[a]; }
    [[nodiscard]] double period_origin(int a) const { return origins_[a]; }
    void set_periodic(int axis, double origin, double period) {
        origins_[axis] = origin;
        periods_[axis] = period;
    }

private:
    Point<D> v_;
    Point<D> periods_{};
    Point<D> origins_{};
};

/// v(z) = M z with M stored row-major.
template <int D>
class LinearField {
public:
    static constexpr int dim = D;
    explicit LinearField(std::array<double, D * D> m) : m_(m) {}

    static LinearField saddle(double lambda)
        requires(D == 2)
    {
        return LinearField({lambda, 0.0, 0.0, -lambda});
    }
    static LinearField rotation(double omega = 1.0)
        requires(D == 2)
    {
        return LinearField({0.0, -omega, omega, 0.0});
    }

    Point<D> operator()(const Point<D>& z, double) const {
        Point<D> v{};
        for (int r = 0; r < D; ++r)
            for (int c = 0; c < D; ++c) v[r] += m_[r * D + c] * z[c];
        return v;
    }
    [[nodiscard]] double period(int) const { return 0.0; }
    [[nodiscard]] double period_origin(int) const { return 0.0; }

private:
    std::array<double, D * D> m_;
};

// ---------------------------------------------------------------------------
// Gridded fields

struct GridAxis {
    std::vector<double> nodes;
    bool periodic = false;
    double period = 0.0; // only for periodic axes; defaults to n * spacing
};

/// Velocity components sampled on a rectilinear grid at a sequence of snapshot times.
/// Snapshot storage: [component][axis_{D-1}]...[axis_0], axis 0 fastest.
template <int D>
class GriddedField {
public:
    static constexpr int dim = D;

    GriddedField(std::array<GridAxis, D> axes, std::vector<double> times, std::vector<std::vector<double>> snapshots,
                 std::string time_unit = "hour", std::string length_unit = "")
        : axes_(std::move(axes)), times_(std::move(times)), snaps_(std::move(snapshots)),
          time_unit_(std::move(time_unit)), length_unit_(std::move(length_unit)) {
        node_count_ = 1;
        for (int a = 0; a < D; ++a) {
            auto& ax = axes_[a];
            if (ax.nodes.size() < 2) throw ManifestInvalid("axis " + std::to_string(a) + " needs at least 2 nodes");
            for (std::size_t k = 1; k < ax.nodes.size(); ++k)
                if (!(ax.nodes[k] > ax.nodes[k - 1])) throw NonMonotoneAxis(a);
            if (ax.periodic && ax.period <= 0.0)
                ax.period = (ax.nodes.back() - ax.nodes.front()) * static_cast<double>(ax.nodes.size()) /
                            static_cast<double>(ax.nodes.size() - 1);
            if (ax.periodic && ax.period <= ax.nodes.back() - ax.nodes.front())
                throw ManifestInvalid("axis " + std::to_string(a) + " period shorter than node span");
            stride_[a] = node_count_;
            node_count_ *= ax.nodes.size();
        }
        if (times_.empty()) throw ManifestInvalid("no snapshot times");
        for (std::size_t k = 1; k < times_.size(); ++k)
            if (!(times_[k] > times_[k - 1])) throw ManifestInvalid("snapshot times not strictly increasing");
        if (snaps_.size() != times_.size())
            throw SizeMismatch("snapshot count " + std::to_string(snaps_.size()) + " != time count " +
                               std::to_string(times_.size()));
        for (std::size_t k = 0; k < snaps_.size(); ++k)
            if (snaps_[k].size() != node_count_ * D)
                throw SizeMismatch("snapshot " + std::to_string(k) + " has " + std::to_string(snaps_[k].size()) +
                                   " values, expected " + std::to_string(node_count_ * D));
    }

    [[nodiscard]] const std::array<GridAxis, D>& axes() const { return axes_; }
    [[nodiscard]] const std::vector<double>& times() const { return times_; }
    [[nodiscard]] const std::vector<std::vector<double>>& snapshots() const { return snaps_; }
    [[nodiscard]] const std::string& time_unit() const { return time_unit_; }
    [[nodiscard]] const std::string& length_unit() const { return length_unit_; }
    [[nodiscard]] std::size_t node_count() const { return node_count_; }

    [[nodiscard]] double period(int a) const { return axes_[a].periodic ? axes_[a].period : 0.0; }
    [[nodiscard]] double period_origin(int a) const { return axes_[a].nodes.front(); }

    /// Multilinear in space, affine in time.
    Point<D> operator()(const Point<D>& z, double t) const {
        const double eps = 1e-12 * std::max(1.0, std::abs(times_.back() - times_.front()));
        if (t < times_.front() - eps || t > times_.back() + eps) throw OutOfTemporalRange(t, times_.front(), times_.back());

        std::size_t k0 = 0;
        double wt = 0.0;
        if (times_.size() > 1) {
            auto it = std::upper_bound(times_.begin(), times_.end(), t);
            k0 = it == times_.begin() ? 0 : static_cast<std::size_t>(it - times_.begin()) - 1;
            if (k0 >= times_.size() - 1) k0 = times_.size() - 2;
            wt = std::clamp((t - times_[k0]) / (times_[k0 + 1] - times_[k0]), 0.0, 1.0);
        }

        std::array<std::size_t, D> lo{}, hi{};
        std::array<double, D> w{};
        for (int a = 0; a < D; ++a) {
            const auto& ax = axes_[a];
            const auto& nd = ax.nodes;
            double c = z[a];
            if (ax.periodic) {
                c = std::fmod(c - nd.front(), ax.period);
                if (c < 0.0) c += ax.period;
                c += nd.front();
                if (c >= nd.back()) { // wrap cell between last node and first + period
                    lo[a] = nd.size() - 1;
                    hi[a] = 0;
                    w[a] = std::clamp((c - nd.back()) / (nd.front() + ax.period - nd.back()), 0.0, 1.0);
                    continue;
                }
            } else if (c < nd.front() || c > nd.back()) {
                throw OutOfSpatialDomain(std::vector<double>(z.begin(), z.end()), t);
            }
            auto it = std::upper_bound(nd.begin(), nd.end(), c);
            std::size_t i = it == nd.begin() ? 0 : static_cast<std::size_t>(it - nd.begin()) - 1;
            if (i >= nd.size() - 1) i = nd.size() - 2;
            lo[a] = i;
            hi[a] = i + 1;
            w[a] = (c - nd[i]) / (nd[i + 1] - nd[i]);
        }

        Point<D> out{};
        for (unsigned corner = 0; corner < (1u << D); ++corner) {
            double weight = 1.0;
            std::size_t offset = 0;
            for (int a = 0; a < D; ++a) {
                const bool up = (corner >> a) & 1u;
                weight *= up ? w[a] : 1.0 - w[a];
                offset += (up ? hi[a] : lo[a]) * stride_[a];
            }
            if (weight == 0.0) continue;
            for (int c = 0; c < D; ++c) {
                const std::size_t idx = c * node_count_ + offset;
                double val = snaps_[k0][idx];
                if (times_.size() > 1 && wt > 0.0) val = (1.0 - wt) * val + wt * snaps_[k0 + 1][idx];
                out[c] += weight * val;
            }
        }
        return out;
    }

private:
    std::array<GridAxis, D> axes_;
    std::vector<double> times_;
    std::vector<std::vector<double>> snaps_;
    std::string time_unit_;
    std::string length_unit_;
    std::array<std::size_t, D> stride_{};
    std::size_t node_count_ = 0;
};

/// Samples an analytic field onto grid nodes at the given times.
template <int D, VelocityField F>
    requires(F::dim == D)
GriddedField<D> sample_onto_grid(const F& field, std::array<GridAxis, D> axes, const std::vector<double>& times,
                                 double time_scale = 1.0, double velocity_scale = 1.0, std::string time_unit = "day") {
    std::size_t count = 1;
    for (const auto& ax : axes) count *= ax.nodes.size();
    std::vector<std::vector<double>> snaps;
    snaps.reserve(times.size());
    for (double t : times) {
        std::vector<double> s(count * D);
        std::array<std::size_t, D> idx{};
        for (std::size_t flat = 0; flat < count; ++flat) {
            Point<D> z{};
            for (int a = 0; a < D; ++a) z[a] = axes[a].nodes[idx[a]];
            const Point<D> v = field(z, t * time_scale);
            for (int c = 0; c < D; ++c) s[c * count + flat] = v[c] * velocity_scale;
            for (int a = 0; a < D; ++a) {
                if (++idx[a] < axes[a].nodes.size()) break;
                idx[a] = 0;
            }
        }
        snaps.push_back(std::move(s));
    }
    return GriddedField<D>(std::move(axes), times, std::move(snaps), std::move(time_unit));
}

// ---------------------------------------------------------------------------
// Flow map

struct FlowMapSpec {
    double t = 0.0;
    double tau = 0.0;
    double step = 0.01;

    void validate() const {
        if (!(step > 0.0)) throw InvalidArgument("flow map step must be positive");
        if (!std::isfinite(t) || !std::isfinite(tau)) throw InvalidArgument("flow map times must be finite");
    }
    /// Number of RK4 steps; the last one is shortened to land on t + tau.
    [[nodiscard]] long step_count() const {
        if (tau == 0.0) return 0;
        if (!(step > 0.0)) throw InvalidArgument("integration step must be positive");
        return static_cast<long>(std::ceil(std::abs(tau) / step - 1e-9));
    }
};

namespace detail {

template <int D>
inline Point<D> axpy(const Point<D>& z, double h, const Point<D>& k) {
    Point<D> r;
    for (int a = 0; a < D; ++a) r[a] = z[a] + h * k[a];
    return r;
}

} // namespace detail

/// Classical RK4 without wrapping of the result.
template <VelocityField F>
Point<F::dim> flow_map_unwrapped(const F& field, const FlowMapSpec& spec, Point<F::dim> z) {
    constexpr int D = F::dim;
    const long steps = spec.step_count();
    const double dir = spec.tau < 0.0 ? -1.0 : 1.0;
    double t = spec.t;
    for (long s = 0; s < steps; ++s) {
        double h = dir * spec.step;
        if (s == steps - 1) h = (spec.t + spec.tau) - t;
        const Point<D> k1 = field(z, t);
        const Point<D> k2 = field(detail::axpy<D>(z, 0.5 * h, k1), t + 0.5 * h);
        const Point<D> k3 = field(detail::axpy<D>(z, 0.5 * h, k2), t + 0.5 * h);
        const Point<D> k4 = field(detail::axpy<D>(z, h, k3), t + h);
        for (int a = 0; a < D; ++a) z[a] += h / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
        t = spec.t + dir * spec.step * static_cast<double>(s + 1);
    }
    return z;
}

/// Phi(z, t; tau): RK4 with fixed step, periodic axes wrapped on output.
template <VelocityField F>
Point<F::dim> flow_map(const F& field, const FlowMapSpec& spec, Point<F::dim> z) {
    z = flow_map_unwrapped(field, spec, z);
    wrap_periodic(field, z);
    return z;
}

template <int D>
using Matrix = std::array<std::array<double, D>, D>;

/// D Phi(z, t; tau) by central differences of the flow map; entry [r][c] = d Phi_r / d z_c.
template <VelocityField F>
Matrix<F::dim> flow_jacobian(const F& field, const FlowMapSpec& spec, const Point<F::dim>& z, double delta) {
    constexpr int D = F::dim;
    if (!(delta > 0.0)) throw InvalidArgument("jacobian offset must be positive");
    Matrix<D> J{};
    for (int c = 0; c < D; ++c) {
        Point<D> zp = z, zm = z;
        zp[c] += delta;
        zm[c] -= delta;
        const Point<D> fp = flow_map_unwrapped(field, spec, zp);
        const Point<D> fm = flow_map_unwrapped(field, spec, zm);
        for (int r = 0; r < D; ++r) J[r][c] = (fp[r] - fm[r]) / (2.0 * delta);
    }
    return J;
}

template <int D>
double determinant(const Matrix<D>& m) {
    if constexpr (D == 1) {
        return m[0][0];
    } else if constexpr (D == 2) {
        return m[0][0] * m[1][1] - m[0][1] * m[1][0];
    } else {
        static_assert(D == 3);
        return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
               m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    }
}

} // namespace ftcs
