#pragma once

// Run configuration (JSON). Keys:
//
//   field     {"type": "bickley", "params": {...}, "frequencies": "phase" | "comoving"}
//             {"type": "gridded", "path": dir-or-csv, "periodic": [...], "periods": [...]}
//             {"type": "constant", "velocity": [...]}
//             {"type": "saddle", "lambda": 0.5} | {"type": "rotation", "omega": 1.0}
//             {"type": "linear", "matrix": [row-major D*D]}
//   units     {"time": "day", "length": "Mm"}
//   domain    {"lower": [...], "upper": [...], "periodic": [...], "box_size": [...] | "counts": [...]}
//   t, tau, step
//   samples_per_box, sampling {"mode": "lattice" | "random", "seed"}
//   measure   {"kind": "uniform" | "pressure_weighted" | "pressure_height" | "file", "area": "planar" | "spherical",
//              "pressure_axis", "path"}
//   solver    {"tol", "max_iter", "krylov_dim"}
//   partition {"score": "worst_of_pair" | "swept_pair", "mass_window"}
//   ftle      {"direction": "forward" | "backward", "counts": [...], "lower"?, "upper"?, "tau"?, "delta", "step"?}
//   sample    {"counts": [...], "lower"?, "upper"?, "times": [...], "time_scale", "velocity_scale", "time_unit",
//              "format": "grid" | "csv"}
//   outputs   {"raster": bool, "ftle": bool, "pointwise_samples": int}
//   threads
//
// Relative paths are resolved against the directory of the config file.

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ftcs/errors.hpp"
#include "ftcs/flowfield.hpp"
#include "ftcs/ftle.hpp"
#include "ftcs/partition.hpp"
#include "ftcs/spectral.hpp"
#include "ftcs/ulam.hpp"

namespace ftcs {

enum class FieldKind { Bickley, Gridded, Constant, Saddle, Rotation, Linear };

struct FieldConfig {
    FieldKind kind = FieldKind::Bickley;
    BickleyParams bickley = BickleyParams::defaults();
    std::string frequencies = "phase";
    std::filesystem::path path;
    std::vector<bool> periodic;  // CSV import only
    std::vector<double> periods; // CSV import only
    std::vector<double> velocity;
    double lambda = 0.5;
    double omega = 1.0;
    std::vector<double> matrix;
};

struct DomainConfig {
    std::vector<double> lower;
    std::vector<double> upper;
    std::vector<bool> periodic;
    std::vector<double> box_size;
    std::vector<std::int64_t> counts;
};

struct FtleConfig {
    FtleDirection direction = FtleDirection::Forward;
    std::vector<std::size_t> counts;
    std::vector<double> lower;
    std::vector<double> upper;
    std::optional<double> tau;
    std::optional<double> delta; // default: 1e-3 of the smallest box edge
    std::optional<double> step;
};

struct SampleConfig {
    std::vector<std::size_t> counts;
    std::vector<double> lower;
    std::vector<double> upper;
    std::vector<double> times;
    double time_scale = 1.0;
    double velocity_scale = 1.0;
    std::string time_unit = "day";
    std::string format = "grid";
};

struct OutputConfig {
    bool raster = true;
    bool ftle = false;
    std::size_t pointwise_samples = 0;
};

struct RunConfig {
    FieldConfig field;
    std::string time_unit = "day";
    std::string length_unit = "Mm";
    DomainConfig domain;
    double t = 0.0;
    double tau = 0.0;
    double step = 0.01;
    int samples_per_box = 100;
    SamplingOptions sampling;
    MeasureSpec measure;
    SpectralOptions solver;
    PartitionOptions partition;
    FtleConfig ftle;
    SampleConfig sample;
    OutputConfig outputs;
    unsigned threads = 0;
    nlohmann::json source = nlohmann::json::object(); // the parsed document, echoed into metadata

    [[nodiscard]] int dimension() const { return static_cast<int>(domain.lower.size()); }
};

namespace detail {

using nlohmann::json;

inline std::string join_key(const std::string& parent, const std::string& key) {
    return parent.empty() ? key : parent + "." + key;
}

template <class T>
T get_key(const json& j, const std::string& parent, const std::string& key) {
    const std::string full = join_key(parent, key);
    if (!j.is_object() || !j.contains(key)) throw ConfigError("missing required key", full);
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("wrong value type for key", full);
    }
}

template <class T>
T get_or(const json& j, const std::string& parent, const std::string& key, T fallback) {
    if (!j.is_object() || !j.contains(key)) return fallback;
    return get_key<T>(j, parent, key);
}

inline const json& section(const json& j, const std::string& key) {
    if (!j.contains(key)) throw ConfigError("missing required key", key);
    if (!j.at(key).is_object()) throw ConfigError("expected an object for key", key);
    return j.at(key);
}

inline void set_bickley_param(BickleyParams& p, const std::string& name, double v) {
    double BickleyParams::*fields[] = {&BickleyParams::U0, &BickleyParams::L,  &BickleyParams::r_e, &BickleyParams::c1,
                                       &BickleyParams::c2, &BickleyParams::c3, &BickleyParams::A1,  &BickleyParams::A2,
                                       &BickleyParams::A3, &BickleyParams::k1, &BickleyParams::k2,  &BickleyParams::s1,
                                       &BickleyParams::s2};
    const char* names[] = {"U0", "L", "r_e", "c1", "c2", "c3", "A1", "A2", "A3", "k1", "k2", "s1", "s2"};
    for (std::size_t k = 0; k < std::size(names); ++k)
        if (name == names[k]) {
            p.*fields[k] = v;
            return;
        }
    throw ConfigError("unknown Bickley parameter '" + name + "'", "field.params." + name);
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

} // namespace detail

inline BickleyParams bickley_with_convention(BickleyParams p, const std::string& frequencies) {
    if (frequencies == "phase") {
        p.derive_frequencies();
    } else if (frequencies == "comoving") {
        p.derive_comoving_frequencies();
    } else if (frequencies != "explicit") {
        throw ConfigError("field.frequencies must be 'comoving', 'phase' or 'explicit'", "field.frequencies");
    }
    return p;
}

/// Parses and validates a configuration document. `base` resolves relative paths.
inline RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base = {}) {
    using detail::get_key;
    using detail::get_or;
    if (!j.is_object()) throw ConfigError("config must be a JSON object", "");
    RunConfig c;
    c.source = j;

    // field
    const auto& f = detail::section(j, "field");
    const auto type = get_key<std::string>(f, "field", "type");
    if (type == "bickley") {
        c.field.kind = FieldKind::Bickley;
        BickleyParams p;
        c.field.frequencies = get_or<std::string>(f, "field", "frequencies", "phase");
        bool explicit_freq = false;
        if (f.contains("params")) {
            if (!f["params"].is_object()) throw ConfigError("field.params must be an object", "field.params");
            for (const auto& [k, v] : f["params"].items()) {
                if (!v.is_number()) throw ConfigError("field.params." + k + " must be a number", "field.params." + k);
                detail::set_bickley_param(p, k, v.get<double>());
                explicit_freq |= k == "s1" || k == "s2";
            }
        }
        if (explicit_freq && c.field.frequencies != "explicit")
            throw ConfigError("s1/s2 given explicitly: set field.frequencies to 'explicit'", "field.frequencies");
        c.field.bickley = bickley_with_convention(p, c.field.frequencies);
        try {
            c.field.bickley.validate();
        } catch (const InvalidArgument& e) {
            throw ConfigError(e.what(), "field.params");
        }
    } else if (type == "gridded") {
        c.field.kind = FieldKind::Gridded;
        c.field.path = std::filesystem::absolute(detail::resolve(base, get_key<std::string>(f, "field", "path")));
        c.source["field"]["path"] = c.field.path.string();
        c.field.periodic = get_or<std::vector<bool>>(f, "field", "periodic", {});
        c.field.periods = get_or<std::vector<double>>(f, "field", "periods", {});
    } else if (type == "constant") {
        c.field.kind = FieldKind::Constant;
        c.field.velocity = get_key<std::vector<double>>(f, "field", "velocity");
    } else if (type == "saddle") {
        c.field.kind = FieldKind::Saddle;
        c.field.lambda = get_key<double>(f, "field", "lambda");
    } else if (type == "rotation") {
        c.field.kind = FieldKind::Rotation;
        c.field.omega = get_key<double>(f, "field", "omega");
    } else if (type == "linear") {
        c.field.kind = FieldKind::Linear;
        c.field.matrix = get_key<std::vector<double>>(f, "field", "matrix");
    } else {
        throw ConfigError("unknown field.type '" + type + "'", "field.type");
    }

    // units
    const auto& u = detail::section(j, "units");
    c.time_unit = get_key<std::string>(u, "units", "time");
    c.length_unit = get_key<std::string>(u, "units", "length");
    if (c.field.kind == FieldKind::Bickley && (c.time_unit != "day" || c.length_unit != "Mm"))
        throw ConfigError("the Bickley field is defined in days and Mm", "units");

    // domain
    const auto& d = detail::section(j, "domain");
    c.domain.lower = get_key<std::vector<double>>(d, "domain", "lower");
    c.domain.upper = get_key<std::vector<double>>(d, "domain", "upper");
    const std::size_t D = c.domain.lower.size();
    if (D != 2 && D != 3) throw ConfigError("domain must be 2- or 3-dimensional", "domain.lower");
    if (c.domain.upper.size() != D) throw ConfigError("domain.upper has the wrong length", "domain.upper");
    c.domain.periodic = get_or<std::vector<bool>>(d, "domain", "periodic", std::vector<bool>(D, false));
    if (c.domain.periodic.size() != D) throw ConfigError("domain.periodic has the wrong length", "domain.periodic");
    if (d.contains("box_size") == d.contains("counts"))
        throw ConfigError("domain needs exactly one of 'box_size' or 'counts'", "domain.box_size");
    if (d.contains("box_size")) {
        c.domain.box_size = get_key<std::vector<double>>(d, "domain", "box_size");
        if (c.domain.box_size.size() != D) throw ConfigError("domain.box_size has the wrong length", "domain.box_size");
    } else {
        c.domain.counts = get_key<std::vector<std::int64_t>>(d, "domain", "counts");
        if (c.domain.counts.size() != D) throw ConfigError("domain.counts has the wrong length", "domain.counts");
    }
    if (c.field.kind == FieldKind::Bickley) {
        if (D != 2) throw ConfigError("the Bickley field is two-dimensional", "domain.lower");
        if (!c.domain.periodic[0]) throw ConfigError("Bickley domain must be periodic in axis 0", "domain.periodic");
        const double circ = c.field.bickley.circumference();
        if (std::abs((c.domain.upper[0] - c.domain.lower[0]) - circ) > 1e-9 * circ)
            throw ConfigError("Bickley domain axis 0 must span the circumference pi*r_e", "domain.upper");
    }
    if ((c.field.kind == FieldKind::Constant && c.field.velocity.size() != D) ||
        (c.field.kind == FieldKind::Linear && c.field.matrix.size() != D * D))
        throw ConfigError("field dimension does not match the domain", "field");
    if ((c.field.kind == FieldKind::Saddle || c.field.kind == FieldKind::Rotation) && D != 2)
        throw ConfigError("saddle and rotation fields are two-dimensional", "field.type");

    // times
    c.t = get_key<double>(j, "", "t");
    c.tau = get_key<double>(j, "", "tau");
    c.step = get_key<double>(j, "", "step");
    if (!(c.step > 0.0)) throw ConfigError("step must be positive", "step");

    c.samples_per_box = get_or<int>(j, "", "samples_per_box", 100);
    if (c.samples_per_box < 1) throw ConfigError("samples_per_box must be >= 1", "samples_per_box");
    if (j.contains("sampling")) {
        const auto& s = detail::section(j, "sampling");
        const auto mode = get_or<std::string>(s, "sampling", "mode", "lattice");
        if (mode == "lattice") c.sampling.mode = SamplingMode::Lattice;
        else if (mode == "random") c.sampling.mode = SamplingMode::Random;
        else throw ConfigError("sampling.mode must be 'lattice' or 'random'", "sampling.mode");
        c.sampling.seed = get_or<std::uint64_t>(s, "sampling", "seed", 0);
    }

    if (j.contains("measure")) {
        const auto& m = detail::section(j, "measure");
        const auto kind = get_or<std::string>(m, "measure", "kind", "uniform");
        if (kind == "uniform") c.measure.kind = MeasureKind::Uniform;
        else if (kind == "pressure_weighted") c.measure.kind = MeasureKind::PressureWeighted;
        else if (kind == "pressure_height") c.measure.kind = MeasureKind::PressureHeight;
        else if (kind == "file") c.measure.kind = MeasureKind::FromFile;
        else throw ConfigError("unknown measure.kind '" + kind + "'", "measure.kind");
        const auto area = get_or<std::string>(m, "measure", "area", "planar");
        if (area == "planar") c.measure.area = AreaModel::Planar;
        else if (area == "spherical") c.measure.area = AreaModel::Spherical;
        else throw ConfigError("measure.area must be 'planar' or 'spherical'", "measure.area");
        c.measure.pressure_axis = get_or<int>(m, "measure", "pressure_axis", 2);
        if (c.measure.kind == MeasureKind::FromFile)
        {
            c.measure.path =
                std::filesystem::absolute(detail::resolve(base, get_key<std::string>(m, "measure", "path"))).string();
            c.source["measure"]["path"] = c.measure.path;
        }
        if (c.measure.kind != MeasureKind::Uniform && c.measure.kind != MeasureKind::FromFile && D != 3)
            throw ConfigError("pressure measures need a 3-dimensional domain", "measure.kind");
    }

    if (j.contains("solver")) {
        const auto& s = detail::section(j, "solver");
        c.solver.tol = get_or<double>(s, "solver", "tol", c.solver.tol);
        c.solver.max_iter = get_or<int>(s, "solver", "max_iter", c.solver.max_iter);
        c.solver.krylov_dim = get_or<int>(s, "solver", "krylov_dim", c.solver.krylov_dim);
    }

    if (j.contains("partition")) {
        const auto& s = detail::section(j, "partition");
        const auto score = get_or<std::string>(s, "partition", "score", "worst_of_pair");
        if (score == "worst_of_pair") c.partition.score = PartitionScore::WorstOfPair;
        else if (score == "swept_pair") c.partition.score = PartitionScore::SweptPair;
        else throw ConfigError("partition.score must be 'worst_of_pair' or 'swept_pair'", "partition.score");
        if (s.contains("mass_window")) c.partition.mass_window = get_key<double>(s, "partition", "mass_window");
    }

    if (j.contains("ftle")) {
        const auto& s = detail::section(j, "ftle");
        const auto dir = get_or<std::string>(s, "ftle", "direction", "forward");
        if (dir == "forward") c.ftle.direction = FtleDirection::Forward;
        else if (dir == "backward") c.ftle.direction = FtleDirection::Backward;
        else throw ConfigError("ftle.direction must be 'forward' or 'backward'", "ftle.direction");
        c.ftle.counts = get_key<std::vector<std::size_t>>(s, "ftle", "counts");
        c.ftle.lower = get_or<std::vector<double>>(s, "ftle", "lower", c.domain.lower);
        c.ftle.upper = get_or<std::vector<double>>(s, "ftle", "upper", c.domain.upper);
        if (c.ftle.counts.size() != D || c.ftle.lower.size() != D || c.ftle.upper.size() != D)
            throw ConfigError("ftle lattice has the wrong dimension", "ftle.counts");
        if (s.contains("tau")) c.ftle.tau = get_key<double>(s, "ftle", "tau");
        if (s.contains("delta")) c.ftle.delta = get_key<double>(s, "ftle", "delta");
        if (s.contains("step")) c.ftle.step = get_key<double>(s, "ftle", "step");
    }

    if (j.contains("sample")) {
        const auto& s = detail::section(j, "sample");
        c.sample.counts = get_key<std::vector<std::size_t>>(s, "sample", "counts");
        c.sample.lower = get_or<std::vector<double>>(s, "sample", "lower", c.domain.lower);
        c.sample.upper = get_or<std::vector<double>>(s, "sample", "upper", c.domain.upper);
        c.sample.times = get_key<std::vector<double>>(s, "sample", "times");
        c.sample.time_scale = get_or<double>(s, "sample", "time_scale", 1.0);
        c.sample.velocity_scale = get_or<double>(s, "sample", "velocity_scale", 1.0);
        c.sample.time_unit = get_or<std::string>(s, "sample", "time_unit", c.time_unit);
        c.sample.format = get_or<std::string>(s, "sample", "format", "grid");
        if (c.sample.format != "grid" && c.sample.format != "csv")
            throw ConfigError("sample.format must be 'grid' or 'csv'", "sample.format");
        if (c.sample.counts.size() != D || c.sample.lower.size() != D || c.sample.upper.size() != D)
            throw ConfigError("sample lattice has the wrong dimension", "sample.counts");
    }

    if (j.contains("outputs")) {
        const auto& s = detail::section(j, "outputs");
        c.outputs.raster = get_or<bool>(s, "outputs", "raster", true);
        c.outputs.ftle = get_or<bool>(s, "outputs", "ftle", false);
        c.outputs.pointwise_samples = get_or<std::size_t>(s, "outputs", "pointwise_samples", 0);
    }
    if (c.outputs.ftle && c.ftle.counts.empty())
        throw ConfigError("outputs.ftle requires an 'ftle' section", "ftle");

    c.threads = get_or<unsigned>(j, "", "threads", 0u);
    return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string(), "");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + " is not valid JSON: " + e.what(), "");
    }
    return parse_config(j, path.parent_path());
}

} // namespace ftcs
