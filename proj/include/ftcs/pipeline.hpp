#pragma once

// End-to-end driver: config -> field -> grid -> Ulam matrix -> singular vectors -> coherent pair.

#include <chrono>
#include <functional>
#include <optional>
#include <string>

#include "ftcs/config.hpp"
#include "ftcs/dataio.hpp"

namespace ftcs {

using Logger = std::function<void(const std::string&)>;

/// Raised by a pipeline stage; `stage` names where it happened.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& msg, bool invariant)
        : Error("[" + stage + "] " + msg), stage(std::move(stage)), invariant(invariant) {}
    std::string stage;
    bool invariant; // convergence or invariant failure rather than bad input
};

template <int D>
Point<D> to_point(const std::vector<double>& v) {
    Point<D> p{};
    for (int a = 0; a < D; ++a) p[a] = v[a];
    return p;
}

template <int D>
BoxGrid<D> make_domain_grid(const RunConfig& cfg) {
    const auto lo = to_point<D>(cfg.domain.lower), hi = to_point<D>(cfg.domain.upper);
    std::array<bool, D> periodic{};
    for (int a = 0; a < D; ++a) periodic[a] = cfg.domain.periodic[a];
    if (!cfg.domain.counts.empty()) {
        MultiIndex<D> counts{};
        for (int a = 0; a < D; ++a) counts[a] = cfg.domain.counts[a];
        return build_grid_counts<D>(lo, hi, counts, periodic);
    }
    return build_grid<D>(lo, hi, to_point<D>(cfg.domain.box_size), periodic);
}

inline void check_field_units(const RunConfig& cfg, const FieldUnits& u) {
    if (u.time != cfg.time_unit)
        throw ConfigError("field time unit '" + u.time + "' differs from units.time '" + cfg.time_unit + "'",
                          "units.time");
    if (!u.length.empty() && u.length != cfg.length_unit)
        throw ConfigError("field length unit '" + u.length + "' differs from units.length '" + cfg.length_unit + "'",
                          "units.length");
    const std::string expected = cfg.length_unit + "/" + cfg.time_unit;
    if (!u.velocity.empty() && u.velocity != expected)
        throw ConfigError("field velocity unit '" + u.velocity + "' is not " + expected, "units");
}

template <int D>
GriddedField<D> load_gridded(const RunConfig& cfg) {
    const auto& path = cfg.field.path;
    if (std::filesystem::is_directory(path)) {
        const auto manifest = read_manifest(path);
        check_field_units(cfg, manifest_units(manifest));
        return read_gridded_field<D>(path);
    }
    std::array<bool, D> periodic{};
    std::array<double, D> periods{};
    for (int a = 0; a < D; ++a) {
        periodic[a] = a < static_cast<int>(cfg.field.periodic.size()) ? cfg.field.periodic[a] : cfg.domain.periodic[a];
        if (a < static_cast<int>(cfg.field.periods.size())) periods[a] = cfg.field.periods[a];
        else if (periodic[a]) periods[a] = cfg.domain.upper[a] - cfg.domain.lower[a];
    }
    return read_gridded_csv<D>(path, periodic, periods, cfg.time_unit, cfg.length_unit);
}

/// Builds the configured field and passes it to `fn`.
template <int D, class Fn>
decltype(auto) with_field(const RunConfig& cfg, Fn&& fn) {
    switch (cfg.field.kind) {
    case FieldKind::Gridded:
        return fn(load_gridded<D>(cfg));
    case FieldKind::Constant: {
        ConstantField<D> f(to_point<D>(cfg.field.velocity));
        for (int a = 0; a < D; ++a)
            if (cfg.domain.periodic[a]) f.set_periodic(a, cfg.domain.lower[a], cfg.domain.upper[a] - cfg.domain.lower[a]);
        return fn(f);
    }
    case FieldKind::Linear: {
        std::array<double, D * D> m{};
        std::copy(cfg.field.matrix.begin(), cfg.field.matrix.end(), m.begin());
        return fn(LinearField<D>(m));
    }
    default:
        if constexpr (D == 2) {
            switch (cfg.field.kind) {
            case FieldKind::Bickley:
                return fn(BickleyField(cfg.field.bickley));
            case FieldKind::Saddle:
                return fn(LinearField<2>::saddle(cfg.field.lambda));
            default:
                return fn(LinearField<2>::rotation(cfg.field.omega));
            }
        }
        throw ConfigError("field type needs a 2-dimensional domain", "field.type");
    }
}

template <int D>
struct RunResult {
    TransitionSystem<D> ts;
    CoherenceVectors cv;
    CoherentPartition partition;
    LeadingPairReport leading;
    double sigma1 = 0.0;
    std::optional<double> rho_pointwise;
    std::optional<FtleField<D>> ftle;
    RunMetadata metadata;
};

class StageTimer {
public:
    explicit StageTimer(RunMetadata& md) : md_(md) {}
    template <class Fn>
    decltype(auto) operator()(const std::string& stage, Fn&& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        auto record = [&] {
            md_.timings.emplace_back(stage, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        };
        if constexpr (std::is_void_v<decltype(fn())>) {
            fn();
            record();
        } else {
            decltype(auto) r = fn();
            record();
            return r;
        }
    }

private:
    RunMetadata& md_;
};

template <VelocityField F>
FtleField<F::dim> compute_ftle(const F& field, const RunConfig& cfg, unsigned threads) {
    constexpr int D = F::dim;
    EvalLattice<D> lat;
    for (int a = 0; a < D; ++a) {
        lat.lower[a] = cfg.ftle.lower[a];
        lat.upper[a] = cfg.ftle.upper[a];
        lat.counts[a] = cfg.ftle.counts[a];
    }
    double delta = 0.0;
    if (cfg.ftle.delta) {
        delta = *cfg.ftle.delta;
    } else {
        const auto grid = make_domain_grid<D>(cfg);
        delta = 1e-3 * *std::min_element(grid.box_size().begin(), grid.box_size().end());
    }
    const double tau = cfg.ftle.tau.value_or(cfg.tau);
    return ftle_field(field, lat, cfg.t, tau, cfg.ftle.direction, delta, cfg.ftle.step.value_or(cfg.step), threads);
}

/// Runs flow -> ulam -> spectral -> partition (and optional FTLE / pointwise check).
template <VelocityField F>
RunResult<F::dim> run_pipeline(const F& field, const RunConfig& cfg, unsigned threads, const Logger& log = {}) {
    constexpr int D = F::dim;
    RunResult<D> r;
    auto& md = r.metadata;
    StageTimer timed(md);
    auto say = [&](const std::string& s) {
        if (log) log(s);
    };
    auto stage = [&](const char* name, auto&& fn) -> decltype(auto) {
        try {
            return timed(name, fn);
        } catch (const NoConvergence& e) {
            throw StageError(name, e.what(), true);
        } catch (const AllMassLost& e) {
            throw StageError(name, e.what(), true);
        } catch (const StageError&) {
            throw;
        } catch (const Error& e) {
            throw StageError(name, e.what(), false);
        }
    };

    const FlowMapSpec spec{cfg.t, cfg.tau, cfg.step};
    auto grid = stage("grid", [&] { return make_domain_grid<D>(cfg); });
    auto weights = stage("measure", [&] { return reference_measure(cfg.measure, grid); });
    say("grid: m=" + std::to_string(grid.size()));

    UlamOptions uo{cfg.samples_per_box, cfg.sampling, threads};
    r.ts = stage("ulam", [&] { return build_transition_system(field, spec, grid, weights, uo); });
    say("ulam: n=" + std::to_string(r.ts.n()) + " nnz=" + std::to_string(r.ts.P.val.size()) +
        " lost=" + format_double(r.ts.lost_mass));

    r.cv = stage("spectral", [&] { return second_singular_triplet(r.ts, cfg.solver); });
    stage("leading_pair", [&] {
        r.leading = check_leading_pair(WeightedOperator(r.ts));
        r.sigma1 = leading_singular_value(r.ts);
    });
    for (const auto& w : r.cv.warnings) say("warning: " + w);
    say("spectral: sigma2=" + format_double(r.cv.sigma2) + " residual=" + format_double(r.cv.residual));

    r.partition = stage("partition", [&] { return extract_coherent_pair(r.ts, r.cv, cfg.partition); });

    if (cfg.outputs.pointwise_samples > 0) {
        r.rho_pointwise = stage("pointwise", [&] {
            return coherence_ratio_pointwise(field, spec, r.ts.source, r.ts.image, r.ts.p, r.partition.X1,
                                             r.partition.Y1, cfg.outputs.pointwise_samples, 7, threads);
        });
    }
    if (cfg.outputs.ftle) r.ftle = stage("ftle", [&] { return compute_ftle(field, cfg, threads); });

    md.config = cfg.source;
    md.m = r.ts.m();
    md.n = r.ts.n();
    md.Q = r.ts.Q;
    md.lost_mass = r.ts.lost_mass;
    md.sigma1 = r.sigma1;
    md.sigma2 = r.cv.sigma2;
    md.spectral_residual = r.cv.residual;
    md.iterations = r.cv.iterations;
    md.rho1 = r.partition.rho1;
    md.rho2 = r.partition.rho2;
    md.b_star = r.partition.b_star;
    md.c_star = r.partition.c_star;
    md.mass_X1 = r.partition.mass_X1;
    md.mass_Y1 = r.partition.mass_Y1;
    md.search_end = r.partition.search_end == SearchEnd::Positive ? "positive" : "negative";
    md.source_grid = grid_to_json(r.ts.source);
    md.image_grid = grid_to_json(r.ts.image);
    md.warnings = r.cv.warnings;
    md.rho_pointwise = r.rho_pointwise;
    return r;
}

// ---------------------------------------------------------------------------
// Verification of a run directory

struct CheckResult {
    std::string name;
    bool passed = false;
    double value = 0.0;
    double tolerance = 0.0;
};

/// Re-checks the invariants of exported artifacts.
inline std::vector<CheckResult> verify_outputs(const RunArtifacts& ra, double tol = 1e-10) {
    std::vector<CheckResult> out;
    auto add = [&](std::string name, double value, double t) { out.push_back({std::move(name), value <= t, value, t}); };
    const auto& sys = ra.system;

    add("row_sums", sys.max_row_sum_error(), 1e-12);
    add("image_measure", sys.image_measure_error(), 1e-12);
    double psum = 0.0, qsum = 0.0;
    for (double v : sys.p) psum += v;
    for (double v : sys.q) qsum += v;
    add("measure_normalized", std::max(std::abs(psum - 1.0), std::abs(qsum - 1.0)), 1e-12);

    const WeightedOperator op(sys);
    const auto lead = check_leading_pair(op, tol);
    add("leading_pair", std::max(lead.forward_residual, lead.transpose_residual), tol);

    add("x_orthogonal", std::abs(weighted_sum(ra.x, sys.p)), 1e-8);
    add("y_orthogonal", std::abs(weighted_sum(ra.y, sys.q)), 1e-8);
    add("x_normalized", std::abs(weighted_norm(ra.x, sys.p) - 1.0), 1e-8);
    add("y_normalized", std::abs(weighted_norm(ra.y, sys.q) - 1.0), 1e-8);
    add("sigma2_objective", std::abs(coherence_objective(sys, ra.x, ra.y) - ra.metadata.sigma2), 1e-8);

    std::vector<char> mx(ra.labels.x.size()), my(ra.labels.y.size());
    for (std::size_t i = 0; i < mx.size(); ++i) mx[i] = ra.labels.x[i] == 1;
    for (std::size_t j = 0; j < my.size(); ++j) my[j] = ra.labels.y[j] == 1;
    const auto X1 = BoxSet::from_mask(mx), Y1 = BoxSet::from_mask(my);
    double rho1 = 0.0, rho2 = 0.0;
    try {
        rho1 = coherence_ratio_discrete(sys, X1, Y1);
        rho2 = coherence_ratio_discrete(sys, X1.complement(), Y1.complement());
    } catch (const Error&) {
        rho1 = rho2 = std::numeric_limits<double>::infinity();
    }
    add("rho1", std::abs(rho1 - ra.metadata.rho1), 1e-12);
    add("rho2", std::abs(rho2 - ra.metadata.rho2), 1e-12);
    add("mass_X1", std::abs(set_mass(sys.p, X1) - ra.metadata.mass_X1), 1e-12);
    return out;
}

// ---------------------------------------------------------------------------
// Field sampling for plotting and gridded fixtures

/// Node axes of the sample lattice: periodic axes exclude the upper end, others include it.
template <int D>
std::array<GridAxis, D> sample_axes(const RunConfig& cfg) {
    std::array<GridAxis, D> axes;
    for (int a = 0; a < D; ++a) {
        const std::size_t n = cfg.sample.counts[a];
        if (n < 2) throw ConfigError("sample lattice needs at least 2 nodes per axis", "sample.counts");
        const double lo = cfg.sample.lower[a], hi = cfg.sample.upper[a];
        const bool periodic = cfg.domain.periodic[a];
        const double h = (hi - lo) / static_cast<double>(periodic ? n : n - 1);
        axes[a].periodic = periodic;
        axes[a].period = periodic ? hi - lo : 0.0;
        axes[a].nodes.resize(n);
        for (std::size_t k = 0; k < n; ++k) axes[a].nodes[k] = lo + static_cast<double>(k) * h;
        if (!periodic) axes[a].nodes.back() = hi;
    }
    return axes;
}

/// Writes the gridded field as t,x,y[,z],u,v[,w] rows (the CSV import format).
template <int D>
void write_gridded_csv(const std::filesystem::path& path, const GriddedField<D>& g) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing", path.string());
    out << (D == 2 ? "t,x,y,u,v\n" : "t,x,y,z,u,v,w\n");
    const std::size_t count = g.node_count();
    for (std::size_t k = 0; k < g.times().size(); ++k) {
        std::array<std::size_t, D> idx{};
        for (std::size_t flat = 0; flat < count; ++flat) {
            out << format_double(g.times()[k]);
            for (int a = 0; a < D; ++a) out << ',' << format_double(g.axes()[a].nodes[idx[a]]);
            for (int c = 0; c < D; ++c) out << ',' << format_double(g.snapshots()[k][c * count + flat]);
            out << '\n';
            for (int a = 0; a < D; ++a) {
                if (++idx[a] < g.axes()[a].nodes.size()) break;
                idx[a] = 0;
            }
        }
    }
    if (!out) throw IoError("write failed", path.string());
}

template <VelocityField F>
GriddedField<F::dim> sample_field(const F& field, const RunConfig& cfg) {
    constexpr int D = F::dim;
    if (cfg.sample.counts.empty()) throw ConfigError("missing required key", "sample");
    auto g = sample_onto_grid<D>(field, sample_axes<D>(cfg), cfg.sample.times, cfg.sample.time_scale,
                                 cfg.sample.velocity_scale, cfg.sample.time_unit);
    return GriddedField<D>(g.axes(), g.times(), g.snapshots(), g.time_unit(), cfg.length_unit);
}

} // namespace ftcs
