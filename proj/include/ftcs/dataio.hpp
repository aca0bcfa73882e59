#pragma once

// Files in and out: gridded velocity fields, transition matrices, coherence vectors,
// partitions, run metadata and FTLE rasters.
//
// Gridded field directory:
//   manifest.json   {"format_version", "dimension", "axes", "periodic", "periods"?, "times",
//                    "units": {"time", "length", "velocity"}, "components"}
//   t<k>.f64        raw little-endian doubles, [component][axis_{D-1}]...[axis_0], axis 0 fastest
//
// Run directory (all box indices 0-based):
//   transitions.txt "i j value" per nonzero of P
//   x.csv, y.csv    box_index, center coordinates, weight (p or q), value
//   partition.csv   set, box_index, label   (set X or Y, label 1 or 2)
//   metadata.json   RunMetadata
//   ftle.csv, ftle.pgm (optional)

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ftcs/boxgrid.hpp"
#include "ftcs/flowfield.hpp"
#include "ftcs/ftle.hpp"
#include "ftcs/partition.hpp"
#include "ftcs/spectral.hpp"
#include "ftcs/ulam.hpp"

namespace ftcs {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr int kFormatVersion = 1;

/// %.17g; "nan"/"inf" for non-finite values.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s, const std::string& path) {
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    double v = 0.0;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    while (b < e && *b == ' ') ++b;
    if (b < e && *b == '+') ++b;
    const auto res = std::from_chars(b, e, v);
    if (res.ec != std::errc{} || res.ptr != e) throw IoError("bad number '" + s + "'", path);
    return v;
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r' && c != ' ') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline std::ofstream open_out(const fs::path& path, bool binary = false) {
    std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
    if (!out) throw IoError("cannot open for writing", path.string());
    return out;
}

inline std::ifstream open_in(const fs::path& path, bool binary = false) {
    std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
    if (!in) throw IoError("cannot open for reading", path.string());
    return in;
}

inline void check_written(const std::ofstream& out, const fs::path& path) {
    if (!out) throw IoError("write failed", path.string());
}

inline void write_le_doubles(std::ostream& out, const std::vector<double>& v) {
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    } else {
        for (double d : v) {
            auto bits = std::bit_cast<std::uint64_t>(d);
            unsigned char b[8];
            for (int k = 0; k < 8; ++k) b[k] = static_cast<unsigned char>(bits >> (8 * k));
            out.write(reinterpret_cast<const char*>(b), 8);
        }
    }
}

inline std::vector<double> read_le_doubles(const fs::path& path) {
    std::error_code ec;
    const auto bytes = fs::file_size(path, ec);
    if (ec) throw IoError("missing snapshot file", path.string());
    if (bytes % 8 != 0) throw SizeMismatch(path.string() + ": size is not a multiple of 8 bytes");
    std::vector<double> v(bytes / 8);
    auto in = open_in(path, true);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw IoError("short read", path.string());
    if constexpr (std::endian::native != std::endian::little) {
        for (auto& d : v) {
            unsigned char b[8];
            std::memcpy(b, &d, 8);
            std::uint64_t bits = 0;
            for (int k = 7; k >= 0; --k) bits = (bits << 8) | b[k];
            d = std::bit_cast<double>(bits);
        }
    }
    return v;
}

template <class T>
T manifest_get(const json& j, const char* key) {
    if (!j.contains(key)) throw ManifestInvalid(std::string("manifest is missing '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ManifestInvalid(std::string("manifest field '") + key + "': " + e.what());
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Gridded fields

struct FieldUnits {
    std::string time = "hour";
    std::string length;
    std::string velocity;
};

template <int D>
void write_gridded_field(const fs::path& dir, const GriddedField<D>& field, const std::string& velocity_unit = "") {
    fs::create_directories(dir);
    json m;
    m["format_version"] = kFormatVersion;
    m["dimension"] = D;
    m["components"] = D;
    json axes = json::array(), periodic = json::array(), periods = json::array();
    for (const auto& ax : field.axes()) {
        axes.push_back(ax.nodes);
        periodic.push_back(ax.periodic);
        periods.push_back(ax.periodic ? ax.period : 0.0);
    }
    m["axes"] = axes;
    m["periodic"] = periodic;
    m["periods"] = periods;
    m["times"] = field.times();
    m["units"] = {{"time", field.time_unit()}, {"length", field.length_unit()}, {"velocity", velocity_unit}};
    {
        const auto path = dir / "manifest.json";
        auto out = detail::open_out(path);
        out << m.dump(2) << '\n';
        detail::check_written(out, path);
    }
    for (std::size_t k = 0; k < field.snapshots().size(); ++k) {
        const auto path = dir / ("t" + std::to_string(k) + ".f64");
        auto out = detail::open_out(path, true);
        detail::write_le_doubles(out, field.snapshots()[k]);
        detail::check_written(out, path);
    }
}

inline json read_manifest(const fs::path& dir) {
    const auto path = dir / "manifest.json";
    auto in = detail::open_in(path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ManifestInvalid(path.string() + ": " + e.what());
    }
}

inline int manifest_dimension(const json& m) {
    if (m.contains("dimension")) return detail::manifest_get<int>(m, "dimension");
    return static_cast<int>(detail::manifest_get<std::vector<json>>(m, "axes").size());
}

inline FieldUnits manifest_units(const json& m) {
    FieldUnits u;
    const auto units = detail::manifest_get<json>(m, "units");
    if (!units.is_object()) throw ManifestInvalid("manifest 'units' must be an object");
    u.time = detail::manifest_get<std::string>(units, "time");
    if (units.contains("length")) u.length = units["length"].get<std::string>();
    if (units.contains("velocity")) u.velocity = units["velocity"].get<std::string>();
    return u;
}

template <int D>
GriddedField<D> read_gridded_field(const fs::path& dir) {
    const json m = read_manifest(dir);
    if (manifest_dimension(m) != D)
        throw ManifestInvalid("manifest dimension " + std::to_string(manifest_dimension(m)) + ", expected " +
                              std::to_string(D));
    const auto axes_raw = detail::manifest_get<std::vector<std::vector<double>>>(m, "axes");
    const auto periodic = detail::manifest_get<std::vector<bool>>(m, "periodic");
    const auto times = detail::manifest_get<std::vector<double>>(m, "times");
    const int components = detail::manifest_get<int>(m, "components");
    const FieldUnits units = manifest_units(m);
    if (axes_raw.size() != static_cast<std::size_t>(D) || periodic.size() != static_cast<std::size_t>(D))
        throw ManifestInvalid("axes/periodic must have one entry per dimension");
    if (components != D) throw ManifestInvalid("components must equal the dimension");
    std::vector<double> periods(D, 0.0);
    if (m.contains("periods")) periods = detail::manifest_get<std::vector<double>>(m, "periods");
    if (periods.size() != static_cast<std::size_t>(D)) throw ManifestInvalid("periods must have one entry per axis");

    std::array<GridAxis, D> axes;
    std::size_t nodes = 1;
    for (int a = 0; a < D; ++a) {
        axes[a].nodes = axes_raw[a];
        axes[a].periodic = periodic[a];
        axes[a].period = periods[a];
        for (std::size_t k = 1; k < axes[a].nodes.size(); ++k)
            if (!(axes[a].nodes[k] > axes[a].nodes[k - 1])) throw NonMonotoneAxis(a);
        nodes *= axes[a].nodes.size();
    }
    std::vector<std::vector<double>> snaps;
    snaps.reserve(times.size());
    for (std::size_t k = 0; k < times.size(); ++k) {
        const auto path = dir / ("t" + std::to_string(k) + ".f64");
        auto v = detail::read_le_doubles(path);
        if (v.size() != nodes * D)
            throw SizeMismatch(path.string() + ": " + std::to_string(v.size()) + " values, expected " +
                               std::to_string(nodes * D));
        snaps.push_back(std::move(v));
    }
    return GriddedField<D>(std::move(axes), times, std::move(snaps), units.time, units.length);
}

/// CSV import for small fields. Header row: t,x,y,u,v (2D) or t,x,y,z,u,v,w (3D).
/// Rows may come in any order but must cover the full tensor grid at every time.
template <int D>
GriddedField<D> read_gridded_csv(const fs::path& path, std::array<bool, D> periodic, std::array<double, D> periods = {},
                                 std::string time_unit = "hour", std::string length_unit = "") {
    static const char* names2[] = {"t", "x", "y", "u", "v"};
    static const char* names3[] = {"t", "x", "y", "z", "u", "v", "w"};
    auto in = detail::open_in(path);
    std::string line;
    if (!std::getline(in, line)) throw ManifestInvalid(path.string() + ": empty CSV");
    const auto header = detail::split_csv(line);
    if (header.size() != static_cast<std::size_t>(2 * D + 1)) throw ManifestInvalid(path.string() + ": bad header");
    for (std::size_t k = 0; k < header.size(); ++k)
        if (header[k] != (D == 2 ? names2[k] : names3[k]))
            throw ManifestInvalid(path.string() + ": header column " + std::to_string(k) + " should be '" +
                                  (D == 2 ? names2[k] : names3[k]) + "'");

    std::vector<std::array<double, 2 * D + 1>> rows;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        const auto cells = detail::split_csv(line);
        if (cells.size() != header.size()) throw SizeMismatch(path.string() + ": ragged row");
        std::array<double, 2 * D + 1> r{};
        for (std::size_t k = 0; k < cells.size(); ++k) r[k] = parse_double(cells[k], path.string());
        rows.push_back(r);
    }
    std::vector<double> times;
    std::array<std::vector<double>, D> nodes;
    for (const auto& r : rows) {
        times.push_back(r[0]);
        for (int a = 0; a < D; ++a) nodes[a].push_back(r[1 + a]);
    }
    auto uniq = [](std::vector<double>& v) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
    };
    uniq(times);
    std::size_t count = 1;
    for (auto& n : nodes) {
        uniq(n);
        count *= n.size();
    }
    if (rows.size() != count * times.size())
        throw SizeMismatch(path.string() + ": " + std::to_string(rows.size()) + " rows do not form a full grid of " +
                           std::to_string(count * times.size()));
    std::vector<std::vector<double>> snaps(times.size(), std::vector<double>(count * D,
                                                                             std::numeric_limits<double>::quiet_NaN()));
    for (const auto& r : rows) {
        const auto k = static_cast<std::size_t>(std::lower_bound(times.begin(), times.end(), r[0]) - times.begin());
        std::size_t flat = 0, stride = 1;
        for (int a = 0; a < D; ++a) {
            const auto i = static_cast<std::size_t>(std::lower_bound(nodes[a].begin(), nodes[a].end(), r[1 + a]) -
                                                    nodes[a].begin());
            flat += i * stride;
            stride *= nodes[a].size();
        }
        for (int c = 0; c < D; ++c) snaps[k][c * count + flat] = r[1 + D + c];
    }
    for (const auto& s : snaps)
        for (double v : s)
            if (std::isnan(v)) throw SizeMismatch(path.string() + ": duplicate rows leave grid nodes unset");
    std::array<GridAxis, D> axes;
    for (int a = 0; a < D; ++a) axes[a] = GridAxis{nodes[a], periodic[a], periods[a]};
    return GriddedField<D>(std::move(axes), std::move(times), std::move(snaps), std::move(time_unit),
                           std::move(length_unit));
}

// ---------------------------------------------------------------------------
// Box grids and run metadata

template <int D>
json grid_to_json(const BoxGrid<D>& g) {
    return {{"origin", g.origin()},
            {"box_size", g.box_size()},
            {"counts", g.counts()},
            {"periodic", g.periodic()},
            {"full", g.is_full()},
            {"boxes", g.size()}};
}

struct RunMetadata {
    json config = json::object(); // echo of the run configuration, sufficient for replay
    std::size_t m = 0;
    std::size_t n = 0;
    int Q = 0;
    double lost_mass = 0.0;
    double sigma1 = 1.0;
    double sigma2 = 0.0;
    double spectral_residual = 0.0;
    int iterations = 0;
    double rho1 = 0.0;
    double rho2 = 0.0;
    double b_star = 0.0;
    double c_star = 0.0;
    double mass_X1 = 0.0;
    double mass_Y1 = 0.0;
    std::string search_end = "positive";
    std::optional<double> rho_pointwise; // sample-based check of rho1, when requested
    json source_grid = json::object();
    json image_grid = json::object();
    std::vector<std::pair<std::string, double>> timings; // seconds per stage
    std::vector<std::string> warnings;
};

/// Non-finite thresholds (empty or full level sets) are stored as the strings "inf" / "-inf".
inline json threshold_json(double v) { return std::isfinite(v) ? json(v) : json(format_double(v)); }

inline double threshold_from_json(const json& j, const std::string& path) {
    return j.is_string() ? parse_double(j.get<std::string>(), path) : j.get<double>();
}

inline json to_json(const RunMetadata& md) {
    json t = json::object();
    for (const auto& [k, v] : md.timings) t[k] = v;
    return {{"format_version", kFormatVersion},
            {"config", md.config},
            {"m", md.m},
            {"n", md.n},
            {"Q", md.Q},
            {"lost_mass", md.lost_mass},
            {"sigma1", md.sigma1},
            {"sigma2", md.sigma2},
            {"spectral_residual", md.spectral_residual},
            {"iterations", md.iterations},
            {"rho1", md.rho1},
            {"rho2", md.rho2},
            {"b_star", threshold_json(md.b_star)},
            {"c_star", threshold_json(md.c_star)},
            {"mass_X1", md.mass_X1},
            {"mass_Y1", md.mass_Y1},
            {"search_end", md.search_end},
            {"rho_pointwise", md.rho_pointwise ? json(*md.rho_pointwise) : json(nullptr)},
            {"source_grid", md.source_grid},
            {"image_grid", md.image_grid},
            {"timings", t},
            {"warnings", md.warnings}};
}

inline RunMetadata metadata_from_json(const json& j, const std::string& path = "metadata.json") {
    try {
        if (j.at("format_version").get<int>() != kFormatVersion)
            throw IoError("unsupported format_version " + j.at("format_version").dump(), path);
        RunMetadata md;
        md.config = j.at("config");
        md.m = j.at("m").get<std::size_t>();
        md.n = j.at("n").get<std::size_t>();
        md.Q = j.at("Q").get<int>();
        md.lost_mass = j.at("lost_mass").get<double>();
        md.sigma1 = j.at("sigma1").get<double>();
        md.sigma2 = j.at("sigma2").get<double>();
        md.spectral_residual = j.at("spectral_residual").get<double>();
        md.iterations = j.at("iterations").get<int>();
        md.rho1 = j.at("rho1").get<double>();
        md.rho2 = j.at("rho2").get<double>();
        md.b_star = threshold_from_json(j.at("b_star"), path);
        md.c_star = threshold_from_json(j.at("c_star"), path);
        md.mass_X1 = j.at("mass_X1").get<double>();
        md.mass_Y1 = j.at("mass_Y1").get<double>();
        md.search_end = j.at("search_end").get<std::string>();
        if (!j.at("rho_pointwise").is_null()) md.rho_pointwise = j.at("rho_pointwise").get<double>();
        md.source_grid = j.at("source_grid");
        md.image_grid = j.at("image_grid");
        for (const auto& [k, v] : j.at("timings").items()) md.timings.emplace_back(k, v.get<double>());
        md.warnings = j.at("warnings").get<std::vector<std::string>>();
        return md;
    } catch (const json::exception& e) {
        throw IoError(std::string("malformed metadata: ") + e.what(), path);
    }
}

inline void write_metadata(const fs::path& path, const RunMetadata& md) {
    auto out = detail::open_out(path);
    out << to_json(md).dump(2) << '\n';
    detail::check_written(out, path);
}

inline RunMetadata read_metadata(const fs::path& path) {
    auto in = detail::open_in(path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw IoError(std::string("metadata is not JSON: ") + e.what(), path.string());
    }
    return metadata_from_json(j, path.string());
}

// ---------------------------------------------------------------------------
// Matrices, vectors, partitions

inline void write_triplets(const fs::path& path, const SparseMatrix& P) {
    auto out = detail::open_out(path);
    for (std::size_t i = 0; i < P.rows; ++i)
        for (std::size_t k = P.row_ptr[i]; k < P.row_ptr[i + 1]; ++k)
            out << i << ' ' << P.col[k] << ' ' << format_double(P.val[k]) << '\n';
    detail::check_written(out, path);
}

inline SparseMatrix read_triplets(const fs::path& path, std::size_t rows, std::size_t cols) {
    auto in = detail::open_in(path);
    std::vector<SparseMatrix::Triplet> trips;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::size_t i = 0, j = 0;
        std::string val;
        if (!(ss >> i >> j >> val)) throw IoError("malformed triplet on line " + std::to_string(lineno), path.string());
        if (i >= rows || j >= cols)
            throw IoError("triplet index out of range on line " + std::to_string(lineno), path.string());
        trips.push_back({i, j, parse_double(val, path.string())});
    }
    return SparseMatrix::from_triplets(rows, cols, std::move(trips));
}

struct VectorFile {
    std::vector<std::size_t> index;
    std::vector<std::vector<double>> center;
    std::vector<double> weight;
    std::vector<double> value;
};

/// box_index, c0..c{D-1}, weight_name, value_name
template <int D>
void write_vector_csv(const fs::path& path, const BoxGrid<D>& grid, const std::vector<double>& weight,
                      const std::vector<double>& value, const std::string& weight_name,
                      const std::string& value_name) {
    if (weight.size() != grid.size()) throw LengthMismatch(weight_name, grid.size(), weight.size());
    if (value.size() != grid.size()) throw LengthMismatch(value_name, grid.size(), value.size());
    auto out = detail::open_out(path);
    out << "box_index";
    for (int a = 0; a < D; ++a) out << ",c" << a;
    out << ',' << weight_name << ',' << value_name << '\n';
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto c = grid.box_center(i);
        out << i;
        for (int a = 0; a < D; ++a) out << ',' << format_double(c[a]);
        out << ',' << format_double(weight[i]) << ',' << format_double(value[i]) << '\n';
    }
    detail::check_written(out, path);
}

inline VectorFile read_vector_csv(const fs::path& path) {
    auto in = detail::open_in(path);
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty vector file", path.string());
    const auto header = detail::split_csv(line);
    if (header.size() < 4 || header[0] != "box_index") throw IoError("bad vector header", path.string());
    const std::size_t ncoord = header.size() - 3;
    VectorFile vf;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = detail::split_csv(line);
        if (cells.size() != header.size()) throw IoError("ragged row", path.string());
        const std::size_t idx = static_cast<std::size_t>(parse_double(cells[0], path.string()));
        if (idx != vf.index.size()) throw IoError("box_index out of sequence", path.string());
        vf.index.push_back(idx);
        std::vector<double> c(ncoord);
        for (std::size_t a = 0; a < ncoord; ++a) c[a] = parse_double(cells[1 + a], path.string());
        vf.center.push_back(std::move(c));
        vf.weight.push_back(parse_double(cells[1 + ncoord], path.string()));
        vf.value.push_back(parse_double(cells[2 + ncoord], path.string()));
    }
    return vf;
}

struct PartitionLabels {
    std::vector<int> x; // 1 or 2 per X box
    std::vector<int> y; // 1 or 2 per Y box
};

inline void write_partition_csv(const fs::path& path, const CoherentPartition& part) {
    auto out = detail::open_out(path);
    out << "set,box_index,label\n";
    const auto mx = part.X1.mask();
    for (std::size_t i = 0; i < mx.size(); ++i) out << "X," << i << ',' << (mx[i] ? 1 : 2) << '\n';
    const auto my = part.Y1.mask();
    for (std::size_t j = 0; j < my.size(); ++j) out << "Y," << j << ',' << (my[j] ? 1 : 2) << '\n';
    detail::check_written(out, path);
}

inline PartitionLabels read_partition_csv(const fs::path& path) {
    auto in = detail::open_in(path);
    std::string line;
    if (!std::getline(in, line) || detail::split_csv(line) != std::vector<std::string>{"set", "box_index", "label"})
        throw IoError("bad partition header", path.string());
    PartitionLabels pl;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = detail::split_csv(line);
        if (cells.size() != 3) throw IoError("ragged row", path.string());
        auto& target = cells[0] == "X" ? pl.x : cells[0] == "Y" ? pl.y : throw IoError("set must be X or Y", path.string());
        if (std::stoul(cells[1]) != target.size()) throw IoError("box_index out of sequence", path.string());
        const int label = std::stoi(cells[2]);
        if (label != 1 && label != 2) throw IoError("label must be 1 or 2", path.string());
        target.push_back(label);
    }
    return pl;
}

struct OutputFiles {
    static constexpr const char* transitions = "transitions.txt";
    static constexpr const char* x = "x.csv";
    static constexpr const char* y = "y.csv";
    static constexpr const char* partition = "partition.csv";
    static constexpr const char* metadata = "metadata.json";
    static constexpr const char* ftle_csv = "ftle.csv";
    static constexpr const char* ftle_pgm = "ftle.pgm";
};

// ---------------------------------------------------------------------------
// FTLE

template <int D>
void write_ftle_csv(const fs::path& path, const FtleField<D>& f) {
    auto out = detail::open_out(path);
    out << "index";
    for (int a = 0; a < D; ++a) out << ",c" << a;
    out << ",ftle\n";
    for (std::size_t k = 0; k < f.values.size(); ++k) {
        const auto z = f.lattice.point(k);
        out << k;
        for (int a = 0; a < D; ++a) out << ',' << format_double(z[a]);
        out << ',' << format_double(f.values[k]) << '\n';
    }
    detail::check_written(out, path);
}

/// 8-bit binary PGM of a 2D scalar array (axis 0 fastest), linearly scaled to [0,255];
/// top image row is the largest axis-1 value. NaN maps to 0.
inline void write_pgm(const fs::path& path, const std::vector<double>& values, std::size_t nx, std::size_t ny) {
    if (values.size() < nx * ny) throw LengthMismatch("raster values", nx * ny, values.size());
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t k = 0; k < nx * ny; ++k)
        if (std::isfinite(values[k])) {
            lo = std::min(lo, values[k]);
            hi = std::max(hi, values[k]);
        }
    const double span = hi > lo ? hi - lo : 1.0;
    auto out = detail::open_out(path, true);
    out << "P5\n" << nx << ' ' << ny << "\n255\n";
    std::vector<unsigned char> row(nx);
    for (std::size_t r = 0; r < ny; ++r) {
        const std::size_t j = ny - 1 - r;
        for (std::size_t i = 0; i < nx; ++i) {
            const double v = values[j * nx + i];
            row[i] = std::isfinite(v) ? static_cast<unsigned char>(std::lround(255.0 * (v - lo) / span)) : 0;
        }
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(nx));
    }
    detail::check_written(out, path);
}

struct PgmImage {
    std::size_t width = 0, height = 0;
    std::vector<unsigned char> pixels;
};

inline PgmImage read_pgm(const fs::path& path) {
    auto in = detail::open_in(path, true);
    std::string magic;
    int maxval = 0;
    PgmImage img;
    in >> magic >> img.width >> img.height >> maxval;
    if (magic != "P5" || maxval != 255) throw IoError("not an 8-bit P5 image", path.string());
    in.get();
    img.pixels.resize(img.width * img.height);
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (!in) throw IoError("truncated image", path.string());
    return img;
}

/// Raster of the first axis-0/axis-1 slice of an FTLE field.
template <int D>
void write_ftle_pgm(const fs::path& path, const FtleField<D>& f) {
    write_pgm(path, f.values, f.lattice.counts[0], f.lattice.counts[1]);
}

// ---------------------------------------------------------------------------
// Run directory

template <int D>
void write_outputs(const fs::path& dir, const TransitionSystem<D>& ts, const CoherenceVectors& cv,
                   const CoherentPartition& part, const RunMetadata& md, const FtleField<D>* ftle = nullptr,
                   bool raster = true) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory: " + ec.message(), dir.string());
    write_triplets(dir / OutputFiles::transitions, ts.P);
    write_vector_csv(dir / OutputFiles::x, ts.source, ts.p, cv.x, "p", "x");
    write_vector_csv(dir / OutputFiles::y, ts.image, ts.q, cv.y, "q", "y");
    write_partition_csv(dir / OutputFiles::partition, part);
    write_metadata(dir / OutputFiles::metadata, md);
    if (ftle) {
        write_ftle_csv(dir / OutputFiles::ftle_csv, *ftle);
        if (raster) write_ftle_pgm(dir / OutputFiles::ftle_pgm, *ftle);
    }
}

/// Everything `verify` needs, read back from a run directory.
struct RunArtifacts {
    RunMetadata metadata;
    StochasticSystem system;
    std::vector<double> x;
    std::vector<double> y;
    PartitionLabels labels;
};

inline RunArtifacts read_outputs(const fs::path& dir) {
    RunArtifacts ra;
    ra.metadata = read_metadata(dir / OutputFiles::metadata);
    auto xf = read_vector_csv(dir / OutputFiles::x);
    auto yf = read_vector_csv(dir / OutputFiles::y);
    if (xf.value.size() != ra.metadata.m) throw SizeMismatch("x.csv rows do not match metadata m");
    if (yf.value.size() != ra.metadata.n) throw SizeMismatch("y.csv rows do not match metadata n");
    ra.system.P = read_triplets(dir / OutputFiles::transitions, ra.metadata.m, ra.metadata.n);
    ra.system.p = std::move(xf.weight);
    ra.system.q = std::move(yf.weight);
    ra.x = std::move(xf.value);
    ra.y = std::move(yf.value);
    ra.labels = read_partition_csv(dir / OutputFiles::partition);
    if (ra.labels.x.size() != ra.metadata.m || ra.labels.y.size() != ra.metadata.n)
        throw SizeMismatch("partition.csv does not match metadata sizes");
    return ra;
}

} // namespace ftcs
