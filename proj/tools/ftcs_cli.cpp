// ftcs: batch driver for finite-time coherent set extraction.
//
//   ftcs run          --config cfg.json --out dir [--threads n] [--quiet]
//   ftcs ftle         --config cfg.json --out dir
//   ftcs verify       dir
//   ftcs sample-field --config cfg.json --out path
//
// Exit codes: 0 ok, 1 invariant/convergence failure, 2 usage/config error.

#include <cstdio>
#include <iostream>

#include "CLI11.hpp"

#include "ftcs/pipeline.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kInvariant = 1;
constexpr int kUsage = 2;

struct Common {
    std::string config;
    std::string out;
    int threads = -1;
    bool quiet = false;
};

unsigned thread_count(const Common& c, const ftcs::RunConfig& cfg) {
    return ftcs::resolve_threads(c.threads >= 0 ? static_cast<unsigned>(c.threads) : cfg.threads);
}

ftcs::Logger logger(bool quiet) {
    if (quiet) return {};
    return [](const std::string& s) { std::cerr << s << '\n'; };
}

template <int D>
int run_dim(const Common& c, const ftcs::RunConfig& cfg) {
    return ftcs::with_field<D>(cfg, [&](const auto& field) {
        const unsigned threads = thread_count(c, cfg);
        auto r = ftcs::run_pipeline(field, cfg, threads, logger(c.quiet));
        if (!r.leading.passed) {
            std::cerr << "error: [spectral] leading singular pair check failed\n";
            return kInvariant;
        }
        ftcs::write_outputs<D>(c.out, r.ts, r.cv, r.partition, r.metadata, r.ftle ? &*r.ftle : nullptr,
                               cfg.outputs.raster);
        std::printf("m=%zu n=%zu sigma1=%.12f sigma2=%.9f rho1=%.6f rho2=%.6f mass_X1=%.6f mass_Y1=%.6f",
                    r.ts.m(), r.ts.n(), r.sigma1, r.cv.sigma2, r.partition.rho1, r.partition.rho2,
                    r.partition.mass_X1, r.partition.mass_Y1);
        if (r.rho_pointwise) std::printf(" rho_pointwise=%.6f", *r.rho_pointwise);
        std::printf("\n");
        return kOk;
    });
}

template <int D>
int ftle_dim(const Common& c, const ftcs::RunConfig& cfg) {
    if (cfg.ftle.counts.empty()) throw ftcs::ConfigError("missing required key", "ftle");
    return ftcs::with_field<D>(cfg, [&](const auto& field) {
        const auto f = ftcs::compute_ftle(field, cfg, thread_count(c, cfg));
        std::filesystem::create_directories(c.out);
        ftcs::write_ftle_csv(std::filesystem::path(c.out) / ftcs::OutputFiles::ftle_csv, f);
        if (cfg.outputs.raster) ftcs::write_ftle_pgm(std::filesystem::path(c.out) / ftcs::OutputFiles::ftle_pgm, f);
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (double v : f.values)
            if (std::isfinite(v)) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        std::printf("points=%zu failures=%zu min=%.9g max=%.9g", f.values.size(), f.failures(), lo, hi);
        if (cfg.field.kind == ftcs::FieldKind::Saddle) {
            double err = 0.0;
            for (double v : f.values) err = std::max(err, std::isfinite(v) ? std::abs(v - cfg.field.lambda) : INFINITY);
            std::printf(" max_abs_error_vs_lambda=%.3e", err);
        }
        std::printf("\n");
        return kOk;
    });
}

template <int D>
int sample_dim(const Common& c, const ftcs::RunConfig& cfg) {
    return ftcs::with_field<D>(cfg, [&](const auto& field) {
        const auto g = ftcs::sample_field(field, cfg);
        if (cfg.sample.format == "csv") {
            ftcs::write_gridded_csv<D>(c.out, g);
        } else {
            const std::string vel = cfg.length_unit + "/" + g.time_unit();
            ftcs::write_gridded_field<D>(c.out, g, vel);
        }
        if (!c.quiet) std::cerr << "wrote " << g.times().size() << " snapshots of " << g.node_count() << " nodes\n";
        return kOk;
    });
}

template <template <int> class Fn>
int dispatch(const Common& c) {
    const auto cfg = ftcs::load_config(c.config);
    return cfg.dimension() == 2 ? Fn<2>::call(c, cfg) : Fn<3>::call(c, cfg);
}

template <int D>
struct RunCmd {
    static int call(const Common& c, const ftcs::RunConfig& cfg) { return run_dim<D>(c, cfg); }
};
template <int D>
struct FtleCmd {
    static int call(const Common& c, const ftcs::RunConfig& cfg) { return ftle_dim<D>(c, cfg); }
};
template <int D>
struct SampleCmd {
    static int call(const Common& c, const ftcs::RunConfig& cfg) { return sample_dim<D>(c, cfg); }
};

int verify(const std::string& dir, bool quiet) {
    const auto ra = ftcs::read_outputs(dir);
    const auto checks = ftcs::verify_outputs(ra);
    bool ok = true;
    for (const auto& ch : checks) {
        ok &= ch.passed;
        if (!quiet || !ch.passed)
            std::printf("%-20s %s  value=%.3e  tol=%.1e\n", ch.name.c_str(), ch.passed ? "PASS" : "FAIL", ch.value,
                        ch.tolerance);
    }
    std::printf("%s\n", ok ? "verify: all checks passed" : "verify: FAILED");
    return ok ? kOk : kInvariant;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Finite-time coherent sets from velocity fields"};
    app.require_subcommand(1);
    Common c;
    auto add_common = [&](CLI::App* sub, bool out_required) {
        sub->add_option("--config", c.config, "JSON run configuration")->required()->check(CLI::ExistingFile);
        auto* o = sub->add_option("--out", c.out, "output directory (or file for CSV samples)");
        if (out_required) o->required();
        sub->add_option("--threads", c.threads, "worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
        sub->add_flag("--quiet", c.quiet, "suppress progress messages");
    };
    auto* run = app.add_subcommand("run", "grid, Ulam matrix, singular vectors and coherent pair");
    add_common(run, true);
    auto* ftle = app.add_subcommand("ftle", "finite-time Lyapunov exponent field");
    add_common(ftle, true);
    auto* sample = app.add_subcommand("sample-field", "sample the configured field on a lattice");
    add_common(sample, true);
    auto* ver = app.add_subcommand("verify", "re-check invariants of a run directory");
    std::string dir;
    ver->add_option("dir", dir, "run output directory")->required()->check(CLI::ExistingDirectory);
    ver->add_flag("--quiet", c.quiet, "only print failures");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*run) return dispatch<RunCmd>(c);
        if (*ftle) return dispatch<FtleCmd>(c);
        if (*sample) return dispatch<SampleCmd>(c);
        return verify(dir, c.quiet);
    } catch (const ftcs::StageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.invariant ? kInvariant : kUsage;
    } catch (const ftcs::NoConvergence& e) {
        std::cerr << "error: [spectral] " << e.what() << '\n';
        return kInvariant;
    } catch (const ftcs::AllMassLost& e) {
        std::cerr << "error: [ulam] " << e.what() << '\n';
        return kInvariant;
    } catch (const ftcs::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    }
}
