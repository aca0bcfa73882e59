#pragma once

// Ulam approximation of the transfer operator between a source box grid X and the
// box covering Y of its image:
//   P_ij = #{r : Phi(z_ir) in C_j} / #{r : z_ir retained},
// with deterministic sample lattices, reference measure p and image measure q = pP.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ftcs/boxgrid.hpp"
#include "ftcs/flowfield.hpp"
#include "ftcs/parallel.hpp"
#include "ftcs/sparse.hpp"

namespace ftcs {

// ---------------------------------------------------------------------------
// Sample points

enum class SamplingMode { Lattice, Random };

struct SamplingOptions {
    SamplingMode mode = SamplingMode::Lattice;
    std::uint64_t seed = 0;
};

/// Per-axis lattice counts for Q samples in a box with the given edge lengths, or nullopt
/// when no factorization keeps the spacing ratio (max/min) within 2. Q = 1 always maps to
/// the center. Among factorizations whose spacing ratio is within 5% of the best, the one
/// with the most equal counts wins.
template <int D>
std::optional<std::array<int, D>> lattice_counts(int Q, const Point<D>& box_size) {
    if (Q < 1) throw InvalidArgument("samples per box must be >= 1");
    std::array<int, D> best{};
    double best_ratio = 0.0;
    double best_balance = 0.0;
    bool found = false;
    std::array<int, D> cur{};
    auto visit = [&](auto&& self, int axis, int remaining) -> void {
        if (axis == D - 1) {
            cur[axis] = remaining;
            double lo = 1e300, hi = 0.0;
            int cmin = remaining, cmax = remaining;
            for (int a = 0; a < D; ++a) {
                const double spacing = box_size[a] / cur[a];
                lo = std::min(lo, spacing);
                hi = std::max(hi, spacing);
                cmin = std::min(cmin, cur[a]);
                cmax = std::max(cmax, cur[a]);
            }
            const double ratio = hi / lo;
            const double balance = static_cast<double>(cmax) / cmin;
            const bool better = !found || ratio < best_ratio / 1.05 ||
                                (ratio <= best_ratio * 1.05 && balance < best_balance);
            if (better) {
                best = cur;
                best_ratio = ratio;
                best_balance = balance;
                found = true;
            }
            return;
        }
        for (int c = 1; c <= remaining; ++c)
            if (remaining % c == 0) {
                cur[axis] = c;
                self(self, axis + 1, remaining / c);
            }
    };
    visit(visit, 0, Q);
    if (Q > 1 && best_ratio > 2.0) return std::nullopt;
    return best;
}

namespace detail {

inline double radical_inverse(std::uint64_t i, std::uint64_t base) {
    double inv = 1.0 / static_cast<double>(base), f = inv, r = 0.0;
    while (i > 0) {
        r += f * static_cast<double>(i % base);
        i /= base;
        f *= inv;
    }
    return r;
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t box) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (box + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace detail

/// Q sample positions as fractions of a unit box (each coordinate in [0,1)).
/// Lattice mode: cell centers of the sub-lattice from lattice_counts, axis 0 fastest;
/// when Q does not factor well, a Halton sequence offset by `box` * Q.
template <int D>
std::vector<Point<D>> unit_samples(int Q, const Point<D>& box_size, std::size_t box = 0,
                                   const SamplingOptions& opt = {}) {
    std::vector<Point<D>> pts;
    pts.reserve(static_cast<std::size_t>(Q));
    if (opt.mode == SamplingMode::Random) {
        std::mt19937_64 rng(detail::mix_seed(opt.seed, box));
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int r = 0; r < Q; ++r) {
            Point<D> z;
            for (int a = 0; a < D; ++a) z[a] = u(rng);
            pts.push_back(z);
        }
        return pts;
    }
    if (auto counts = lattice_counts<D>(Q, box_size)) {
        std::array<int, D> idx{};
        for (int r = 0; r < Q; ++r) {
            Point<D> z;
            for (int a = 0; a < D; ++a) z[a] = (idx[a] + 0.5) / (*counts)[a];
            pts.push_back(z);
            for (int a = 0; a < D; ++a) {
                if (++idx[a] < (*counts)[a]) break;
                idx[a] = 0;
            }
        }
        return pts;
    }
    constexpr std::uint64_t primes[3] = {2, 3, 5};
    for (int r = 0; r < Q; ++r) {
        const std::uint64_t i = static_cast<std::uint64_t>(box) * static_cast<std::uint64_t>(Q) + r + 1;
        Point<D> z;
        for (int a = 0; a < D; ++a) z[a] = detail::radical_inverse(i, primes[a]);
        pts.push_back(z);
    }
    return pts;
}

/// Sample points inside box `box` of `grid`.
template <int D>
std::vector<Point<D>> sample_points(const BoxGrid<D>& grid, std::size_t box, int Q, const SamplingOptions& opt = {}) {
    auto pts = unit_samples<D>(Q, grid.box_size(), box, opt);
    const auto lo = grid.box_lower(box);
    for (auto& z : pts)
        for (int a = 0; a < D; ++a) z[a] = lo[a] + z[a] * grid.box_size()[a];
    return pts;
}

// ---------------------------------------------------------------------------
// Reference measures

enum class MeasureKind { Uniform, PressureWeighted, PressureHeight, FromFile };

enum class AreaModel {
    Planar,   // base area (axes 0 and 1) in grid coordinates
    Spherical // axes 0/1 are longitude/latitude in degrees: area ~ dlon * (sin lat_hi - sin lat_lo)
};

struct MeasureSpec {
    MeasureKind kind = MeasureKind::Uniform;
    AreaModel area = AreaModel::Planar;
    std::vector<double> pressure; // per box, for PressureWeighted
    int pressure_axis = 2;        // for PressureHeight
    std::string path;             // for FromFile
};

inline std::vector<double> read_measure_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open measure file", path);
    std::vector<double> w;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            w.push_back(std::stod(line));
        } catch (const std::exception&) {
            throw IoError("malformed measure entry '" + line + "'", path);
        }
    }
    return w;
}

inline void write_measure_file(const std::string& path, const std::vector<double>& w) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write measure file", path);
    out.precision(17);
    for (double v : w) out << v << '\n';
    if (!out) throw IoError("write failed", path);
}

template <int D>
double box_area(const BoxGrid<D>& grid, std::size_t box, AreaModel model) {
    if (model == AreaModel::Planar) {
        double a = grid.box_size()[0];
        if constexpr (D > 1) a *= grid.box_size()[1];
        return a;
    }
    static_assert(D >= 2);
    const auto lo = grid.box_lower(box);
    constexpr double deg = std::numbers::pi / 180.0;
    const double lat0 = lo[1] * deg, lat1 = (lo[1] + grid.box_size()[1]) * deg;
    return grid.box_size()[0] * deg * (std::sin(lat1) - std::sin(lat0));
}

/// Normalized weights validated against the grid size.
inline std::vector<double> normalize_weights(std::vector<double> w, std::size_t m) {
    if (w.size() != m) throw LengthMismatch("measure weights", m, w.size());
    double total = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (!(w[i] >= 0.0) || !std::isfinite(w[i])) throw NegativeWeight(i, w[i]);
        total += w[i];
    }
    if (!(total > 0.0)) throw MeasureDegenerate("all measure weights are zero");
    for (auto& v : w) v /= total;
    return w;
}

/// Probability vector p_i = mu(B_i) on the boxes of `grid`.
template <int D>
std::vector<double> reference_measure(const MeasureSpec& spec, const BoxGrid<D>& grid) {
    const std::size_t m = grid.size();
    std::vector<double> w(m);
    switch (spec.kind) {
    case MeasureKind::Uniform:
        if (m == 0) throw MeasureDegenerate("empty grid");
        return std::vector<double>(m, 1.0 / static_cast<double>(m));
    case MeasureKind::PressureWeighted:
        if (spec.pressure.size() != m) throw LengthMismatch("pressure values", m, spec.pressure.size());
        for (std::size_t i = 0; i < m; ++i) {
            if (!(spec.pressure[i] >= 0.0)) throw NegativeWeight(i, spec.pressure[i]);
            w[i] = std::pow(spec.pressure[i], 5.0 / 7.0) * box_area(grid, i, spec.area);
        }
        break;
    case MeasureKind::PressureHeight:
        if (spec.pressure_axis < 0 || spec.pressure_axis >= D) throw InvalidArgument("pressure axis out of range");
        for (std::size_t i = 0; i < m; ++i) w[i] = box_area(grid, i, spec.area) * grid.box_size()[spec.pressure_axis];
        break;
    case MeasureKind::FromFile:
        w = read_measure_file(spec.path);
        break;
    }
    return normalize_weights(std::move(w), m);
}

// ---------------------------------------------------------------------------
// Transition system

template <int D>
struct TransitionSystem : StochasticSystem {
    BoxGrid<D> source;
    BoxGrid<D> image;
    std::vector<std::uint32_t> counts;   // integer sample counts, parallel to P.val
    std::vector<std::uint32_t> retained; // retained samples per row
    int Q = 0;
    double lost_mass = 0.0;    // fraction of advected samples that left the domain
    std::size_t pruned_rows = 0;
    std::size_t pruned_cols = 0;
};

struct UlamOptions {
    int samples_per_box = 100;
    SamplingOptions sampling{};
    unsigned threads = 1;
};

namespace detail {

struct BoxImage {
    std::vector<std::pair<std::uint64_t, std::uint32_t>> hits; // sorted (image key, count)
    std::uint32_t lost = 0;
};

} // namespace detail

/// Advects Q samples from every box with positive weight, covers the images with boxes of the
/// source lattice, and returns the row-stochastic P with p (renormalized) and q = pP.
/// Rows whose samples are all lost and zero-weight rows are pruned, as are zero-mass columns.
template <VelocityField F>
TransitionSystem<F::dim> build_transition_system(const F& field, const FlowMapSpec& spec,
                                                 const BoxGrid<F::dim>& source, const std::vector<double>& weights,
                                                 const UlamOptions& opt) {
    constexpr int D = F::dim;
    spec.validate();
    if (opt.samples_per_box < 1) throw InvalidArgument("samples per box must be >= 1");
    const std::size_t m = source.size();
    if (weights.size() != m) throw LengthMismatch("reference measure", m, weights.size());
    const int Q = opt.samples_per_box;

    const bool shared_pattern = opt.sampling.mode == SamplingMode::Lattice &&
                                lattice_counts<D>(Q, source.box_size()).has_value();
    const auto pattern = shared_pattern ? unit_samples<D>(Q, source.box_size(), 0, opt.sampling)
                                        : std::vector<Point<D>>{};

    std::vector<detail::BoxImage> images(m);
    parallel_for(
        m, opt.threads,
        [&](std::size_t i) {
            if (!(weights[i] > 0.0)) return;
            const auto unit = shared_pattern ? pattern : unit_samples<D>(Q, source.box_size(), i, opt.sampling);
            const auto lo = source.box_lower(i);
            std::vector<std::uint64_t> keys;
            keys.reserve(unit.size());
            auto& out = images[i];
            for (const auto& u : unit) {
                Point<D> z;
                for (int a = 0; a < D; ++a) z[a] = lo[a] + u[a] * source.box_size()[a];
                try {
                    const auto img = flow_map(field, spec, z);
                    bool finite = true;
                    for (double c : img) finite = finite && std::isfinite(c);
                    if (!finite) {
                        ++out.lost;
                        continue;
                    }
                    keys.push_back(detail::pack_index<D>(source.lattice_index(img)));
                } catch (const OutOfSpatialDomain&) {
                    ++out.lost;
                }
            }
            std::sort(keys.begin(), keys.end());
            for (std::size_t k = 0; k < keys.size();) {
                std::size_t e = k;
                while (e < keys.size() && keys[e] == keys[k]) ++e;
                out.hits.emplace_back(keys[k], static_cast<std::uint32_t>(e - k));
                k = e;
            }
        },
        16);

    // Rows kept: positive weight and at least one retained sample.
    std::vector<std::size_t> rows;
    std::size_t advected = 0, lost = 0;
    for (std::size_t i = 0; i < m; ++i) {
        if (!(weights[i] > 0.0)) continue;
        advected += static_cast<std::size_t>(Q);
        lost += images[i].lost;
        if (!images[i].hits.empty()) rows.push_back(i);
    }
    if (advected > 0 && rows.empty()) throw AllMassLost();
    if (rows.empty()) throw MeasureDegenerate("no box has positive reference weight");

    std::vector<std::uint64_t> keys;
    for (std::size_t i : rows)
        for (const auto& h : images[i].hits) keys.push_back(h.first);
    auto image = BoxGrid<D>::sparse(source.origin(), source.box_size(), source.counts(), source.periodic(), keys);

    TransitionSystem<D> ts;
    ts.Q = Q;
    ts.lost_mass = advected ? static_cast<double>(lost) / static_cast<double>(advected) : 0.0;
    ts.pruned_rows = m - rows.size();
    ts.source = rows.size() == m ? source : source.restricted(rows);

    std::vector<double> p(rows.size());
    double total = 0.0;
    for (std::size_t r = 0; r < rows.size(); ++r) total += weights[rows[r]];
    for (std::size_t r = 0; r < rows.size(); ++r) p[r] = weights[rows[r]] / total;

    SparseMatrix P;
    P.rows = rows.size();
    P.cols = image.size();
    P.row_ptr.assign(P.rows + 1, 0);
    ts.retained.resize(P.rows);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& img = images[rows[r]];
        std::uint32_t kept = 0;
        for (const auto& h : img.hits) kept += h.second;
        ts.retained[r] = kept;
        for (const auto& h : img.hits) {
            P.col.push_back(static_cast<std::uint32_t>(*image.dense_index(detail::unpack_index<D>(h.first))));
            ts.counts.push_back(h.second);
            P.val.push_back(static_cast<double>(h.second) / static_cast<double>(kept));
        }
        P.row_ptr[r + 1] = P.col.size();
    }

    auto q = P.left_multiply(p);
    // Columns with q_j = 0 are removed together with their image boxes.
    std::vector<std::size_t> keep_cols;
    for (std::size_t j = 0; j < q.size(); ++j)
        if (q[j] > 0.0) keep_cols.push_back(j);
    if (keep_cols.size() != q.size()) {
        if (keep_cols.empty()) throw MeasureDegenerate("image measure vanished after pruning");
        std::vector<std::int64_t> remap(q.size(), -1);
        for (std::size_t k = 0; k < keep_cols.size(); ++k) remap[keep_cols[k]] = static_cast<std::int64_t>(k);
        SparseMatrix R;
        R.rows = P.rows;
        R.cols = keep_cols.size();
        R.row_ptr.assign(R.rows + 1, 0);
        std::vector<std::uint32_t> counts;
        for (std::size_t r = 0; r < P.rows; ++r) {
            for (std::size_t k = P.row_ptr[r]; k < P.row_ptr[r + 1]; ++k)
                if (remap[P.col[k]] >= 0) {
                    R.col.push_back(static_cast<std::uint32_t>(remap[P.col[k]]));
                    R.val.push_back(P.val[k]);
                    counts.push_back(ts.counts[k]);
                }
            R.row_ptr[r + 1] = R.col.size();
        }
        ts.pruned_cols = q.size() - keep_cols.size();
        image = image.restricted(keep_cols);
        P = std::move(R);
        ts.counts = std::move(counts);
        q = P.left_multiply(p);
    }

    ts.image = std::move(image);
    ts.P = std::move(P);
    ts.p = std::move(p);
    ts.q = std::move(q);
    return ts;
}

} // namespace ftcs
