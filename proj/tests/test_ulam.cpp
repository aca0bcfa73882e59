#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "ftcs/spectral.hpp"
#include "ftcs/ulam.hpp"

using namespace ftcs;

namespace {

/// z -> z + (0.5, 0) at unit speed for tau = 0.5.
struct HalfShift {
    static constexpr int dim = 2;
    Point<2> operator()(const Point<2>&, double) const { return {1.0, 0.0}; }
    double period(int) const { return 0.0; }
    double period_origin(int) const { return 0.0; }
};

} // namespace

TEST(Sampling, FourPointsOnUnitSquare) {
    const auto g = build_grid<2>({0, 0}, {1, 1}, {1, 1}, {false, false});
    const auto pts = sample_points(g, 0, 4);
    ASSERT_EQ(pts.size(), 4u);
    const std::vector<Point<2>> expect{{0.25, 0.25}, {0.75, 0.25}, {0.25, 0.75}, {0.75, 0.75}};
    for (std::size_t k = 0; k < 4; ++k) {
        EXPECT_DOUBLE_EQ(pts[k][0], expect[k][0]);
        EXPECT_DOUBLE_EQ(pts[k][1], expect[k][1]);
    }
}

TEST(Sampling, SinglePointIsBoxCenter) {
    const auto g = build_grid<2>({0, 0}, {2, 2}, {1, 1}, {false, false});
    const auto pts = sample_points(g, 3, 1);
    ASSERT_EQ(pts.size(), 1u);
    EXPECT_DOUBLE_EQ(pts[0][0], 1.5);
    EXPECT_DOUBLE_EQ(pts[0][1], 1.5);
}

TEST(Sampling, FourHundredOnBickleyBoxIsTwentyByTwenty) {
    const double L = std::numbers::pi * 6.371;
    const auto g = build_grid_counts<2>({0, -2.5}, {L, 2.5}, {376, 75}, {true, false});
    const auto counts = lattice_counts<2>(400, g.box_size());
    ASSERT_TRUE(counts);
    EXPECT_EQ((*counts)[0], 20);
    EXPECT_EQ((*counts)[1], 20);
}

TEST(Sampling, FollowsBoxAspectRatio) {
    const auto c = lattice_counts<2>(8, {2.0, 1.0});
    ASSERT_TRUE(c);
    EXPECT_EQ((*c)[0], 4);
    EXPECT_EQ((*c)[1], 2);
}

TEST(Sampling, PrimeCountFallsBackToLowDiscrepancy) {
    EXPECT_FALSE(lattice_counts<2>(13, {1.0, 1.0}));
    const auto a = unit_samples<2>(13, {1.0, 1.0}, 4), b = unit_samples<2>(13, {1.0, 1.0}, 4);
    ASSERT_EQ(a.size(), 13u);
    for (std::size_t k = 0; k < a.size(); ++k) {
        EXPECT_EQ(a[k], b[k]);
        EXPECT_GE(a[k][0], 0.0);
        EXPECT_LT(a[k][0], 1.0);
    }
}

TEST(Sampling, RandomModeIsSeeded) {
    const SamplingOptions opt{SamplingMode::Random, 42};
    const auto a = unit_samples<2>(16, {1.0, 1.0}, 3, opt), b = unit_samples<2>(16, {1.0, 1.0}, 3, opt);
    const auto c = unit_samples<2>(16, {1.0, 1.0}, 4, opt);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, c);
}

TEST(Ulam, IdentityFlowGivesIdentityMatrix) {
    const BickleyField f;
    const double L = f.params().circumference();
    const auto g = build_grid_counts<2>({0, -2.5}, {L, 2.5}, {20, 6}, {true, false});
    const auto ts = build_transition_system(f, FlowMapSpec{20.0, 0.0, 0.1}, g, reference_measure(MeasureSpec{}, g),
                                            UlamOptions{16, {}, 1});
    ASSERT_EQ(ts.m(), g.size());
    ASSERT_EQ(ts.n(), g.size());
    for (std::size_t i = 0; i < ts.m(); ++i) {
        ASSERT_EQ(ts.P.row_ptr[i + 1] - ts.P.row_ptr[i], 1u);
        EXPECT_EQ(ts.P.val[ts.P.row_ptr[i]], 1.0);
        EXPECT_EQ(ts.image.key(ts.P.col[ts.P.row_ptr[i]]), g.key(i));
        EXPECT_EQ(ts.q[ts.P.col[ts.P.row_ptr[i]]], ts.p[i]);
    }
}

TEST(Ulam, OneBoxTranslationIsCyclicPermutation) {
    ConstantField<2> f({0.25, 0.0});
    f.set_periodic(0, 0.0, 2.0);
    const auto g = build_grid<2>({0, 0}, {2, 1}, {0.25, 0.5}, {true, false});
    const auto ts = build_transition_system(f, FlowMapSpec{0.0, 1.0, 0.25}, g, reference_measure(MeasureSpec{}, g),
                                            UlamOptions{9, {}, 1});
    ASSERT_EQ(ts.m(), 16u);
    ASSERT_EQ(ts.n(), 16u);
    for (std::size_t i = 0; i < ts.m(); ++i) {
        ASSERT_EQ(ts.P.row_ptr[i + 1] - ts.P.row_ptr[i], 1u);
        EXPECT_EQ(ts.P.val[ts.P.row_ptr[i]], 1.0);
        auto mi = g.multi_index(i);
        mi[0] = (mi[0] + 1) % 8;
        EXPECT_EQ(ts.image.key(ts.P.col[ts.P.row_ptr[i]]), detail::pack_index<2>(mi));
    }
}

TEST(Ulam, HalfBoxShiftHandCounted) {
    // Two boxes [0,1) and [1,2) (one box tall); 4 samples per box along x at 0.125, 0.375, 0.625, 0.875.
    const auto g = build_grid<2>({0, 0}, {2, 1}, {1, 1}, {false, false});
    const auto ts =
        build_transition_system(HalfShift{}, FlowMapSpec{0.0, 0.5, 0.5}, g, reference_measure(MeasureSpec{}, g),
                                UlamOptions{4, {}, 1});
    // Q = 4 on a square box is a 2x2 lattice; x positions 0.25, 0.75 shift to 0.75, 1.25.
    ASSERT_EQ(ts.n(), 3u);
    EXPECT_EQ(ts.image.box_lower(0)[0], 0.0);
    EXPECT_EQ(ts.image.box_lower(1)[0], 1.0);
    EXPECT_EQ(ts.image.box_lower(2)[0], 2.0);
    const std::vector<std::vector<double>> expect{{0.5, 0.5, 0.0}, {0.0, 0.5, 0.5}};
    for (std::size_t i = 0; i < 2; ++i) {
        std::vector<double> row(3, 0.0);
        for (std::size_t k = ts.P.row_ptr[i]; k < ts.P.row_ptr[i + 1]; ++k) row[ts.P.col[k]] = ts.P.val[k];
        EXPECT_EQ(row, expect[i]);
    }
}

TEST(Ulam, HalfBoxShiftWithFourPointsAlongTheAxis) {
    // Boxes 1 wide and 0.25 tall make the Q = 4 lattice 4 x 1: x = 0.125, 0.375, 0.625, 0.875.
    const auto g = build_grid<2>({0, 0}, {2, 0.25}, {1, 0.25}, {false, false});
    const auto c = lattice_counts<2>(4, g.box_size());
    ASSERT_TRUE(c);
    EXPECT_EQ((*c)[0], 4);
    const auto ts =
        build_transition_system(HalfShift{}, FlowMapSpec{0.0, 0.5, 0.5}, g, reference_measure(MeasureSpec{}, g),
                                UlamOptions{4, {}, 1});
    ASSERT_EQ(ts.n(), 3u);
    std::vector<double> row(3, 0.0);
    for (std::size_t k = ts.P.row_ptr[0]; k < ts.P.row_ptr[1]; ++k) row[ts.P.col[k]] = ts.P.val[k];
    EXPECT_EQ(row, (std::vector<double>{0.5, 0.5, 0.0}));
}

TEST(Ulam, InvariantsOnBickley) {
    const BickleyField f;
    const double L = f.params().circumference();
    const auto g = build_grid_counts<2>({0, -2.5}, {L, 2.5}, {40, 10}, {true, false});
    const auto ts = build_transition_system(f, FlowMapSpec{20.0, 10.0, 0.2}, g, reference_measure(MeasureSpec{}, g),
                                            UlamOptions{25, {}, 2});
    EXPECT_LE(ts.max_row_sum_error(), 1e-12);
    EXPECT_LE(ts.image_measure_error(), 1e-12);
    double ps = 0.0, qs = 0.0;
    for (double v : ts.p) ps += v;
    for (double v : ts.q) qs += v;
    EXPECT_NEAR(ps, 1.0, 1e-12);
    EXPECT_NEAR(qs, 1.0, 1e-12);
    for (double v : ts.q) EXPECT_GT(v, 0.0);
    EXPECT_EQ(ts.lost_mass, 0.0);
    for (std::size_t r = 0; r < ts.m(); ++r) {
        std::uint32_t s = 0;
        for (std::size_t k = ts.P.row_ptr[r]; k < ts.P.row_ptr[r + 1]; ++k) {
            s += ts.counts[k];
            EXPECT_EQ(ts.P.val[k], static_cast<double>(ts.counts[k]) / ts.retained[r]);
        }
        EXPECT_EQ(s, 25u);
    }
    // the image grid covers exactly the images of the samples
    for (std::size_t i = 0; i < g.size(); i += 7)
        for (const auto& z : sample_points(g, i, 25)) {
            const auto img = flow_map(f, FlowMapSpec{20.0, 10.0, 0.2}, z);
            EXPECT_TRUE(ts.image.locate(img));
        }
}

TEST(Ulam, DeterministicAcrossWorkerCounts) {
    const BickleyField f;
    const double L = f.params().circumference();
    const auto g = build_grid_counts<2>({0, -2.5}, {L, 2.5}, {30, 8}, {true, false});
    const auto w = reference_measure(MeasureSpec{}, g);
    const auto a = build_transition_system(f, FlowMapSpec{20.0, 10.0, 0.25}, g, w, UlamOptions{16, {}, 1});
    for (unsigned threads : {4u, 16u}) {
        const auto b = build_transition_system(f, FlowMapSpec{20.0, 10.0, 0.25}, g, w, UlamOptions{16, {}, threads});
        EXPECT_EQ(a.counts, b.counts);
        EXPECT_EQ(a.P.col, b.P.col);
        EXPECT_EQ(a.P.row_ptr, b.P.row_ptr);
        EXPECT_EQ(a.P.val, b.P.val);
    }
}

TEST(Ulam, ZeroWeightRowsArePruned) {
    const ConstantField<2> f({0.0, 0.0});
    const auto g = build_grid<2>({0, 0}, {1, 1}, {0.5, 0.5}, {false, false});
    std::vector<double> w{0.5, 0.0, 0.25, 0.25};
    const auto ts = build_transition_system(f, FlowMapSpec{0.0, 1.0, 0.5}, g, w, UlamOptions{4, {}, 1});
    EXPECT_EQ(ts.m(), 3u);
    EXPECT_EQ(ts.n(), 3u);
    EXPECT_EQ(ts.pruned_rows, 1u);
    EXPECT_DOUBLE_EQ(ts.p[0], 0.5);
    EXPECT_FALSE(ts.source.locate(g.box_center(1)));
}

TEST(Ulam, LostSamplesLeaveTheDenominator) {
    // Gridded field on [0,2]x[0,1] moving right at 1: samples starting right of x = 1.5 exit by tau = 0.5.
    std::array<GridAxis, 2> axes{GridAxis{{0.0, 2.0}}, GridAxis{{0.0, 1.0}}};
    const GriddedField<2> f(axes, {0.0, 1.0}, {{1, 1, 1, 1, 0, 0, 0, 0}, {1, 1, 1, 1, 0, 0, 0, 0}});
    const auto g = build_grid<2>({0, 0}, {2, 1}, {1, 1}, {false, false});
    const auto ts = build_transition_system(f, FlowMapSpec{0.0, 0.5, 0.05}, g, reference_measure(MeasureSpec{}, g),
                                            UlamOptions{4, {}, 1});
    // box 1 samples at x = 1.25 (stay) and 1.75 (exit): half its samples are lost
    EXPECT_DOUBLE_EQ(ts.lost_mass, 0.25);
    EXPECT_EQ(ts.retained[1], 2u);
    EXPECT_LE(ts.max_row_sum_error(), 1e-15);
}

TEST(Ulam, AllMassLost) {
    std::array<GridAxis, 2> axes{GridAxis{{0.0, 1.0}}, GridAxis{{0.0, 1.0}}};
    const GriddedField<2> f(axes, {0.0, 10.0}, {{5, 5, 5, 5, 0, 0, 0, 0}, {5, 5, 5, 5, 0, 0, 0, 0}});
    const auto g = build_grid<2>({0, 0}, {1, 1}, {0.5, 0.5}, {false, false});
    EXPECT_THROW(build_transition_system(f, FlowMapSpec{0.0, 5.0, 0.5}, g, reference_measure(MeasureSpec{}, g),
                                         UlamOptions{4, {}, 1}),
                 AllMassLost);
}

TEST(Measure, UniformFourBoxes) {
    const auto g = build_grid<2>({0, 0}, {1, 1}, {0.5, 0.5}, {false, false});
    EXPECT_EQ(reference_measure(MeasureSpec{}, g), (std::vector<double>(4, 0.25)));
}

TEST(Measure, PressureWeightedRatio) {
    const auto g = build_grid<2>({0, 0}, {2, 1}, {1, 1}, {false, false});
    MeasureSpec s;
    s.kind = MeasureKind::PressureWeighted;
    s.pressure = {100.0, 50.0};
    const auto p = reference_measure(s, g);
    EXPECT_NEAR(p[0] / p[1], std::pow(2.0, 5.0 / 7.0), 1e-14);
    EXPECT_NEAR(p[0] / p[1], 1.64067, 1e-5);
}

TEST(Measure, SphericalAreaFavoursEquator) {
    const auto g = build_grid<2>({0, -90}, {360, 90}, {90, 45}, {true, false});
    MeasureSpec s;
    s.kind = MeasureKind::PressureWeighted;
    s.area = AreaModel::Spherical;
    s.pressure.assign(g.size(), 100.0);
    const auto p = reference_measure(s, g);
    const double polar = p[*g.locate({10, -80})], equatorial = p[*g.locate({10, -10})];
    EXPECT_NEAR(equatorial / polar, std::sin(std::numbers::pi / 4) / (1 - std::sin(std::numbers::pi / 4)), 1e-12);
}

TEST(Measure, PressureHeightUsesBaseAreaTimesThickness) {
    const auto g = build_grid<3>({0, 0, 50}, {2, 1, 250}, {1, 1, 100}, {false, false, false});
    MeasureSpec s;
    s.kind = MeasureKind::PressureHeight;
    const auto p = reference_measure(s, g);
    for (double v : p) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(Measure, NegativeAndLengthErrors) {
    const auto g = build_grid<2>({0, 0}, {2, 1}, {1, 1}, {false, false});
    MeasureSpec s;
    s.kind = MeasureKind::PressureWeighted;
    s.pressure = {100.0, -1.0};
    EXPECT_THROW(reference_measure(s, g), NegativeWeight);
    s.pressure = {100.0};
    EXPECT_THROW(reference_measure(s, g), LengthMismatch);
    EXPECT_THROW(normalize_weights({0.0, 0.0}, 2), MeasureDegenerate);
    EXPECT_THROW(normalize_weights({1.0, -0.5}, 2), NegativeWeight);
}

TEST(Measure, FileRoundtrip) {
    const auto path = std::filesystem::temp_directory_path() / "ftcs_measure_roundtrip.txt";
    const std::vector<double> w{0.1, 0.30000000000000004, 1.0 / 3.0, 2.5e-17};
    write_measure_file(path.string(), w);
    const auto back = read_measure_file(path.string());
    ASSERT_EQ(back.size(), w.size());
    for (std::size_t k = 0; k < w.size(); ++k) EXPECT_NEAR(back[k], w[k], 1e-15 * std::abs(w[k]));
    const auto g = build_grid<2>({0, 0}, {1, 1}, {0.5, 0.5}, {false, false});
    MeasureSpec s;
    s.kind = MeasureKind::FromFile;
    s.path = path.string();
    const auto p = reference_measure(s, g);
    double total = 0.0;
    for (double v : w) total += v;
    EXPECT_NEAR(p[2], w[2] / total, 1e-15);
    std::filesystem::remove(path);
}

TEST(Ulam, RefinementChangesSigma2Little) {
    const BickleyField f;
    const double L = f.params().circumference();
    auto sigma2 = [&](std::int64_t cx, std::int64_t cy) {
        const auto g = build_grid_counts<2>({0, -2.5}, {L, 2.5}, {cx, cy}, {true, false});
        const auto ts = build_transition_system(f, FlowMapSpec{20.0, 10.0, 0.2}, g,
                                                reference_measure(MeasureSpec{}, g), UlamOptions{16, {}, 1});
        return second_singular_triplet(ts).sigma2;
    };
    EXPECT_LT(std::abs(sigma2(84, 21) - sigma2(168, 42)), 0.01);
}
