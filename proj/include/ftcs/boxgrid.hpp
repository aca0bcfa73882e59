#pragma once

// Box partitions of rectangular (optionally periodic) domains in 2 or 3 dimensions.
//
// Boxes are half-open, [lo, hi) on every axis. A grid is either full (every lattice
// box inside the bounds) or sparse (an explicit sorted set of occupied lattice boxes,
// used for image coverings). Dense indices are 0-based and follow the lattice order
// with axis 0 fastest; sparse grids keep the same relative ordering.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "ftcs/errors.hpp"

namespace ftcs {

template <int D>
using MultiIndex = std::array<std::int64_t, D>;

namespace detail {

inline constexpr int kKeyBits = 21;
inline constexpr std::int64_t kKeyOffset = std::int64_t{1} << (kKeyBits - 1);

/// Order-preserving packing: higher axes are more significant.
template <int D>
std::uint64_t pack_index(const MultiIndex<D>& mi) {
    std::uint64_t key = 0;
    for (int a = D - 1; a >= 0; --a) {
        const std::int64_t shifted = mi[a] + kKeyOffset;
        if (shifted < 0 || shifted >= (std::int64_t{1} << kKeyBits))
            throw InvalidArgument("lattice index out of representable range");
        key = (key << kKeyBits) | static_cast<std::uint64_t>(shifted);
    }
    return key;
}

template <int D>
MultiIndex<D> unpack_index(std::uint64_t key) {
    MultiIndex<D> mi{};
    const std::uint64_t mask = (std::uint64_t{1} << kKeyBits) - 1;
    for (int a = 0; a < D; ++a) {
        mi[a] = static_cast<std::int64_t>(key & mask) - kKeyOffset;
        key >>= kKeyBits;
    }
    return mi;
}

} // namespace detail

template <int D>
class BoxGrid {
public:
    static constexpr int dim = D;

    BoxGrid() = default;

    /// Full rectangular grid: counts[a] boxes of size box_size[a] starting at origin.
    BoxGrid(Point<D> origin, Point<D> box_size, MultiIndex<D> counts, std::array<bool, D> periodic)
        : origin_(origin), size_(box_size), counts_(counts), periodic_(periodic), full_(true) {
        m_ = 1;
        for (int a = 0; a < D; ++a) {
            if (!(size_[a] > 0.0)) throw InvalidArgument("box size must be positive on every axis");
            if (counts_[a] <= 0) throw InvalidArgument("box count must be positive on every axis");
            m_ *= static_cast<std::size_t>(counts_[a]);
        }
    }

    /// Sparse grid made of the given lattice boxes. `counts` is only used on periodic axes.
    static BoxGrid sparse(Point<D> origin, Point<D> box_size, MultiIndex<D> counts, std::array<bool, D> periodic,
                          std::vector<std::uint64_t> keys) {
        BoxGrid g;
        g.origin_ = origin;
        g.size_ = box_size;
        g.counts_ = counts;
        g.periodic_ = periodic;
        for (int a = 0; a < D; ++a) {
            if (!(box_size[a] > 0.0)) throw InvalidArgument("box size must be positive on every axis");
            if (periodic[a] && counts[a] <= 0) throw InvalidArgument("periodic axis needs a box count");
            if (!periodic[a]) g.counts_[a] = 0;
        }
        g.full_ = false;
        std::sort(keys.begin(), keys.end());
        keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
        g.keys_ = std::move(keys);
        g.m_ = g.keys_.size();
        g.lookup_.reserve(g.m_ * 2);
        for (std::size_t i = 0; i < g.m_; ++i) g.lookup_.emplace(g.keys_[i], i);
        return g;
    }

    [[nodiscard]] std::size_t size() const { return m_; }
    [[nodiscard]] bool is_full() const { return full_; }
    [[nodiscard]] const Point<D>& origin() const { return origin_; }
    [[nodiscard]] const Point<D>& box_size() const { return size_; }
    [[nodiscard]] const MultiIndex<D>& counts() const { return counts_; }
    [[nodiscard]] const std::array<bool, D>& periodic() const { return periodic_; }
    [[nodiscard]] double period(int a) const {
        return periodic_[a] ? static_cast<double>(counts_[a]) * size_[a] : 0.0;
    }
    [[nodiscard]] double box_volume() const {
        double v = 1.0;
        for (double s : size_) v *= s;
        return v;
    }

    /// Lattice multi-index of the box containing z (periodic axes wrapped), ignoring occupancy.
    [[nodiscard]] MultiIndex<D> lattice_index(const Point<D>& z) const {
        MultiIndex<D> mi{};
        for (int a = 0; a < D; ++a) {
            double c = z[a];
            if (periodic_[a]) {
                const double period = this->period(a);
                c = std::fmod(c - origin_[a], period);
                if (c < 0.0) c += period;
                if (c >= period) c = 0.0;
                c += origin_[a];
            }
            auto k = static_cast<std::int64_t>(std::floor((c - origin_[a]) / size_[a]));
            // keep agreement with the explicit corners origin + k * size
            if (c < origin_[a] + static_cast<double>(k) * size_[a]) --k;
            else if (c >= origin_[a] + static_cast<double>(k + 1) * size_[a]) ++k;
            if (periodic_[a]) k = ((k % counts_[a]) + counts_[a]) % counts_[a];
            mi[a] = k;
        }
        return mi;
    }

    [[nodiscard]] std::optional<std::size_t> dense_index(const MultiIndex<D>& mi) const {
        if (full_) {
            std::size_t idx = 0;
            for (int a = D - 1; a >= 0; --a) {
                if (mi[a] < 0 || mi[a] >= counts_[a]) return std::nullopt;
                idx = idx * static_cast<std::size_t>(counts_[a]) + static_cast<std::size_t>(mi[a]);
            }
            return idx;
        }
        for (int a = 0; a < D; ++a)
            if (std::abs(mi[a]) >= detail::kKeyOffset) return std::nullopt;
        auto it = lookup_.find(detail::pack_index<D>(mi));
        if (it == lookup_.end()) return std::nullopt;
        return it->second;
    }

    [[nodiscard]] MultiIndex<D> multi_index(std::size_t dense) const {
        if (!full_) return detail::unpack_index<D>(keys_.at(dense));
        MultiIndex<D> mi{};
        for (int a = 0; a < D; ++a) {
            mi[a] = static_cast<std::int64_t>(dense % static_cast<std::size_t>(counts_[a]));
            dense /= static_cast<std::size_t>(counts_[a]);
        }
        return mi;
    }

    [[nodiscard]] std::uint64_t key(std::size_t dense) const {
        return full_ ? detail::pack_index<D>(multi_index(dense)) : keys_.at(dense);
    }

    /// Dense index of the box containing z, or nullopt (outside / unoccupied).
    [[nodiscard]] std::optional<std::size_t> locate(const Point<D>& z) const {
        for (int a = 0; a < D; ++a)
            if (!std::isfinite(z[a])) return std::nullopt;
        return dense_index(lattice_index(z));
    }

    [[nodiscard]] Point<D> box_lower(std::size_t dense) const {
        const auto mi = multi_index(dense);
        Point<D> lo;
        for (int a = 0; a < D; ++a) lo[a] = origin_[a] + static_cast<double>(mi[a]) * size_[a];
        return lo;
    }

    [[nodiscard]] Point<D> box_center(std::size_t dense) const {
        Point<D> c = box_lower(dense);
        for (int a = 0; a < D; ++a) c[a] += 0.5 * size_[a];
        return c;
    }

    [[nodiscard]] bool contains(std::size_t dense, const Point<D>& z) const {
        const auto lo = box_lower(dense);
        for (int a = 0; a < D; ++a) {
            double c = z[a];
            if (periodic_[a]) {
                const double period = this->period(a);
                c = std::fmod(c - origin_[a], period);
                if (c < 0.0) c += period;
                c += origin_[a];
            }
            if (c < lo[a] || c >= origin_[a] + static_cast<double>(multi_index(dense)[a] + 1) * size_[a]) return false;
        }
        return true;
    }

    /// Keeps only the listed boxes (given as sorted dense indices); always yields a sparse grid.
    [[nodiscard]] BoxGrid restricted(std::span<const std::size_t> keep) const {
        std::vector<std::uint64_t> keys;
        keys.reserve(keep.size());
        for (std::size_t i : keep) keys.push_back(key(i));
        return sparse(origin_, size_, counts_, periodic_, std::move(keys));
    }

    /// Same lattice, same periodicity, no boxes: the template used for coverings.
    [[nodiscard]] BoxGrid lattice_template() const { return sparse(origin_, size_, counts_, periodic_, {}); }

private:
    Point<D> origin_{};
    Point<D> size_{};
    MultiIndex<D> counts_{};
    std::array<bool, D> periodic_{};
    bool full_ = true;
    std::size_t m_ = 0;
    std::vector<std::uint64_t> keys_;
    std::unordered_map<std::uint64_t, std::size_t> lookup_;
};

/// Full grid over [lower, upper) tiled by boxes of `box_size`.
template <int D>
BoxGrid<D> build_grid(const Point<D>& lower, const Point<D>& upper, const Point<D>& box_size,
                      const std::array<bool, D>& periodic) {
    MultiIndex<D> counts{};
    for (int a = 0; a < D; ++a) {
        const double span = upper[a] - lower[a];
        if (!(span > 0.0)) throw InvalidArgument("domain bounds must be increasing on every axis");
        if (!(box_size[a] > 0.0)) throw InvalidArgument("box size must be positive on every axis");
        const double ratio = span / box_size[a];
        const double k = std::round(ratio);
        if (k < 1.0 || std::abs(ratio - k) > 1e-9 * std::max(1.0, ratio))
            throw NonCommensurate("box size " + std::to_string(box_size[a]) + " does not tile axis " +
                                  std::to_string(a) + " of length " + std::to_string(span));
        counts[a] = static_cast<std::int64_t>(k);
    }
    return BoxGrid<D>(lower, box_size, counts, periodic);
}

/// Full grid over [lower, upper) with `counts` boxes per axis.
template <int D>
BoxGrid<D> build_grid_counts(const Point<D>& lower, const Point<D>& upper, const MultiIndex<D>& counts,
                             const std::array<bool, D>& periodic) {
    Point<D> size{};
    for (int a = 0; a < D; ++a) {
        if (counts[a] <= 0 || !(upper[a] > lower[a])) throw InvalidArgument("invalid grid bounds or counts");
        size[a] = (upper[a] - lower[a]) / static_cast<double>(counts[a]);
    }
    return BoxGrid<D>(lower, size, counts, periodic);
}

/// Sparse grid of exactly those boxes of `lattice`'s lattice that contain at least one point.
template <int D>
BoxGrid<D> cover_points(std::span<const Point<D>> points, const BoxGrid<D>& lattice) {
    std::vector<std::uint64_t> keys;
    keys.reserve(points.size());
    for (const auto& z : points) {
        bool finite = true;
        for (double c : z) finite = finite && std::isfinite(c);
        if (finite) keys.push_back(detail::pack_index<D>(lattice.lattice_index(z)));
    }
    return BoxGrid<D>::sparse(lattice.origin(), lattice.box_size(), lattice.counts(), lattice.periodic(),
                              std::move(keys));
}

/// Sorted, duplicate-free set of dense box indices on a grid with `universe` boxes.
struct BoxSet {
    std::size_t universe = 0;
    std::vector<std::size_t> indices;

    BoxSet() = default;
    BoxSet(std::size_t universe, std::vector<std::size_t> idx) : universe(universe), indices(std::move(idx)) {
        std::sort(indices.begin(), indices.end());
        if (std::adjacent_find(indices.begin(), indices.end()) != indices.end())
            throw InvalidArgument("BoxSet indices must be unique");
        if (!indices.empty() && indices.back() >= universe) throw InvalidArgument("BoxSet index out of range");
    }

    static BoxSet from_mask(const std::vector<char>& mask) {
        BoxSet s;
        s.universe = mask.size();
        for (std::size_t i = 0; i < mask.size(); ++i)
            if (mask[i]) s.indices.push_back(i);
        return s;
    }

    [[nodiscard]] std::vector<char> mask() const {
        std::vector<char> m(universe, 0);
        for (std::size_t i : indices) m[i] = 1;
        return m;
    }

    [[nodiscard]] BoxSet complement() const {
        auto m = mask();
        for (auto& c : m) c = !c;
        return from_mask(m);
    }

    [[nodiscard]] std::size_t size() const { return indices.size(); }
    [[nodiscard]] bool empty() const { return indices.empty(); }
    friend bool operator==(const BoxSet&, const BoxSet&) = default;
};

} // namespace ftcs
