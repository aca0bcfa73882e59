#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "ftcs/errors.hpp"

namespace ftcs {

/// Compressed sparse row matrix with sorted column indices per row.
struct SparseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::size_t> row_ptr{0};
    std::vector<std::uint32_t> col;
    std::vector<double> val;

    [[nodiscard]] std::size_t nnz() const { return val.size(); }

    [[nodiscard]] double row_sum(std::size_t r) const {
        double s = 0.0;
        for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) s += val[k];
        return s;
    }

    /// y = v^T A (row vector times matrix).
    [[nodiscard]] std::vector<double> left_multiply(std::span<const double> v) const {
        if (v.size() != rows) throw LengthMismatch("left_multiply", rows, v.size());
        std::vector<double> out(cols, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
            const double vr = v[r];
            if (vr == 0.0) continue;
            for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) out[col[k]] += vr * val[k];
        }
        return out;
    }

    /// y = A v.
    [[nodiscard]] std::vector<double> right_multiply(std::span<const double> v) const {
        if (v.size() != cols) throw LengthMismatch("right_multiply", cols, v.size());
        std::vector<double> out(rows, 0.0);
        for (std::size_t r = 0; r < rows; ++r) {
            double s = 0.0;
            for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) s += val[k] * v[col[k]];
            out[r] = s;
        }
        return out;
    }

    /// Column-major copy: row_ptr indexes columns, col holds row indices.
    [[nodiscard]] SparseMatrix transposed() const {
        SparseMatrix t;
        t.rows = cols;
        t.cols = rows;
        t.row_ptr.assign(cols + 1, 0);
        for (auto c : col) ++t.row_ptr[c + 1];
        for (std::size_t c = 0; c < cols; ++c) t.row_ptr[c + 1] += t.row_ptr[c];
        t.col.resize(nnz());
        t.val.resize(nnz());
        std::vector<std::size_t> next(t.row_ptr.begin(), t.row_ptr.end() - 1);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) {
                const std::size_t dst = next[col[k]]++;
                t.col[dst] = static_cast<std::uint32_t>(r);
                t.val[dst] = val[k];
            }
        return t;
    }

    struct Triplet {
        std::size_t row;
        std::size_t col;
        double value;
    };

    /// Builds from triplets; duplicates are summed, explicit zeros dropped.
    static SparseMatrix from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> trips) {
        std::sort(trips.begin(), trips.end(),
                  [](const Triplet& a, const Triplet& b) { return a.row != b.row ? a.row < b.row : a.col < b.col; });
        SparseMatrix m;
        m.rows = rows;
        m.cols = cols;
        m.row_ptr.assign(rows + 1, 0);
        for (std::size_t k = 0; k < trips.size();) {
            const auto& t = trips[k];
            if (t.row >= rows || t.col >= cols) throw InvalidArgument("triplet index out of range");
            double v = 0.0;
            std::size_t e = k;
            while (e < trips.size() && trips[e].row == t.row && trips[e].col == t.col) v += trips[e++].value;
            if (v != 0.0) {
                m.col.push_back(static_cast<std::uint32_t>(t.col));
                m.val.push_back(v);
                ++m.row_ptr[t.row + 1];
            }
            k = e;
        }
        for (std::size_t r = 0; r < rows; ++r) m.row_ptr[r + 1] += m.row_ptr[r];
        return m;
    }
};

/// Row-stochastic matrix together with its reference (p) and image (q) probability vectors.
struct StochasticSystem {
    SparseMatrix P;
    std::vector<double> p;
    std::vector<double> q;

    [[nodiscard]] std::size_t m() const { return P.rows; }
    [[nodiscard]] std::size_t n() const { return P.cols; }

    /// Builds the system and sets q = pP.
    static StochasticSystem with_image_measure(SparseMatrix P, std::vector<double> p) {
        if (p.size() != P.rows) throw LengthMismatch("reference measure", P.rows, p.size());
        StochasticSystem s;
        s.q = P.left_multiply(p);
        s.P = std::move(P);
        s.p = std::move(p);
        return s;
    }

    /// Largest deviation of a row sum from 1.
    [[nodiscard]] double max_row_sum_error() const {
        double e = 0.0;
        for (std::size_t r = 0; r < P.rows; ++r) e = std::max(e, std::abs(P.row_sum(r) - 1.0));
        return e;
    }

    /// Largest entrywise |q - pP|.
    [[nodiscard]] double image_measure_error() const {
        const auto pp = P.left_multiply(p);
        double e = 0.0;
        for (std::size_t j = 0; j < q.size(); ++j) e = std::max(e, std::abs(pp[j] - q[j]));
        return e;
    }
};

} // namespace ftcs
