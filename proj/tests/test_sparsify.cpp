#include <gtest/gtest.h>

#include <bit>

#include "helpers.hpp"
#include "tgrad/sparsify.hpp"

using namespace tgrad;

TEST(SparseCount, CeilingWithSlack) {
    EXPECT_EQ(sparse_count(0.05, 400), 20u);
    EXPECT_EQ(sparse_count(0.05, 401), 21u);
    EXPECT_EQ(sparse_count(1e-9, 10), 1u);
    EXPECT_EQ(sparse_count(1.0, 16), 16u);
}

TEST(SelectIndices, DominantEntry) {
    RealTensor g({2, 2, 2});
    g[5] = -9.0;
    g[2] = 1.0;
    EXPECT_EQ(select_indices(g, 0.1, SelectStrategy::topk, 0).offsets, (std::vector<std::uint64_t>{5}));
}

TEST(SelectIndices, TiesGoToLowerIndex) {
    RealTensor g({3, 4});
    for (auto& x : g.data()) x = 2.0;
    EXPECT_EQ(select_indices(g, 0.25, SelectStrategy::topk, 0).offsets, (std::vector<std::uint64_t>{0, 1, 2}));
}

// Exhaustive check: top-k minimizes ||g - dense(extract(g, omega))|| over every k-subset.
TEST(SelectIndices, TopkOptimalByEnumeration) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 30; ++trial) {
        const Shape s = trial % 2 ? Shape{3, 4} : Shape{2, 3, 2};
        const auto g = testutil::random<Complex>(s, trial);
        const double rho = 0.1 + 0.8 * std::uniform_real_distribution<double>()(rng);
        const auto k = sparse_count(rho, g.size());
        const auto omega = select_indices(g, rho, SelectStrategy::topk, 0);
        ASSERT_EQ(omega.size(), k);
        const double got = fro_norm(g - densify(extract(g, omega)));
        double best = 1e300;
        for (std::uint32_t subset = 0; subset < (1u << g.size()); ++subset) {
            if (static_cast<std::size_t>(std::popcount(subset)) != k) continue;
            double err = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (!(subset >> i & 1u)) err += std::norm(g[i]);
            }
            best = std::min(best, std::sqrt(err));
        }
        EXPECT_LE(got, best + 1e-12);
    }
}

TEST(SelectIndices, RandkGolden) {
    const auto g = testutil::random<double>({2, 2, 2}, 1);
    const auto omega = select_indices(g, 3.0 / 8.0, SelectStrategy::randk, 42);
    EXPECT_EQ(omega.offsets, (std::vector<std::uint64_t>{4, 5, 6}));
}

TEST(SelectIndices, ProbkEqualsRandkOnFlatMagnitudes) {
    RealTensor g({4, 5});
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = i % 2 ? 3.0 : -3.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        EXPECT_EQ(select_indices(g, 0.3, SelectStrategy::probk, seed),
                  select_indices(g, 0.3, SelectStrategy::randk, seed));
    }
}

TEST(SelectIndices, DeterministicSortedUnique) {
    const auto g = testutil::random<Complex>({5, 6, 3}, 8);
    for (auto st : {SelectStrategy::topk, SelectStrategy::randk, SelectStrategy::probk}) {
        const auto a = select_indices(g, 0.2, st, 77);
        EXPECT_EQ(a, select_indices(g, 0.2, st, 77));
        EXPECT_EQ(a.size(), sparse_count(0.2, g.size()));
        EXPECT_NO_THROW(check_index_set(a));
        EXPECT_TRUE(std::is_sorted(a.offsets.begin(), a.offsets.end()));
        EXPECT_EQ(std::adjacent_find(a.offsets.begin(), a.offsets.end()), a.offsets.end());
    }
}

TEST(SelectIndices, RejectsBadDensity) {
    const auto g = testutil::random<double>({3}, 1);
    EXPECT_THROW(select_indices(g, 0.0, SelectStrategy::topk, 0), ValidationError);
    EXPECT_THROW(select_indices(g, 1.5, SelectStrategy::topk, 0), ValidationError);
}

TEST(WeightedSampling, InclusionFrequencies) {
    // k = 1: first draw is exactly proportional to the weights
    const std::vector<double> w{1.0, 2.0, 3.0, 4.0};
    std::vector<int> hits(4, 0);
    const int n = 20000;
    for (int s = 0; s < n; ++s) hits[weighted_sample_without_replacement(w, 1, s)[0]]++;
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(hits[i] / double(n), w[i] / 10.0, 0.015);
    // zero weights are only drawn once the positive mass is exhausted
    const auto pick = weighted_sample_without_replacement({0.0, 5.0, 0.0, 1.0}, 3, 9);
    EXPECT_TRUE(std::find(pick.begin(), pick.end(), 1u) != pick.end());
    EXPECT_TRUE(std::find(pick.begin(), pick.end(), 3u) != pick.end());
}

TEST(Extract, LinearAndFullCover) {
    const auto g = testutil::random<Complex>({3, 3}, 1);
    const auto d = testutil::random<Complex>({3, 3}, 2);
    const auto omega = select_indices(g, 0.4, SelectStrategy::topk, 0);
    const auto a = extract(g, omega);
    const auto b = extract(g + d, omega);
    for (std::size_t i = 0; i < a.nnz(); ++i) {
        EXPECT_LT(std::abs(b.values[i] - a.values[i] - d[a.offsets[i]]), 1e-15);
    }
    IndexSet all{g.shape(), {}};
    for (std::uint64_t i = 0; i < g.size(); ++i) all.offsets.push_back(i);
    EXPECT_EQ(densify(extract(g, all)), g);
    IndexSet oob{g.shape(), {9}};
    EXPECT_THROW(extract(g, oob), ValidationError);
}

TEST(ScatterAdd, AdjointAndInverse) {
    const auto g = testutil::random<Complex>({4, 3, 2}, 3);
    const auto omega = select_indices(g, 0.3, SelectStrategy::randk, 5);
    const auto s = extract(g, omega);
    auto dest = testutil::random<Complex>({4, 3, 2}, 4);
    const auto orig = dest;
    scatter_add(dest, s, Complex(0.0));
    EXPECT_EQ(dest, orig);
    scatter_add(dest, s, Complex(0.7, -0.2));
    scatter_add(dest, s, Complex(-0.7, 0.2));
    EXPECT_LT(max_abs_diff(dest, orig), 1e-15);
    // <scatter(s), y> == <s, extract(y)>
    const auto y = testutil::random<Complex>({4, 3, 2}, 6);
    Complex rhs{};
    const auto ey = extract(y, omega);
    for (std::size_t i = 0; i < s.nnz(); ++i) rhs += s.values[i] * std::conj(ey.values[i]);
    EXPECT_LT(std::abs(inner(densify(s), y) - rhs), 1e-12);
    RealTensor wrong({2, 2});
    EXPECT_THROW(scatter_add(wrong, extract(RealTensor({3}), IndexSet{{3}, {0}}), 1.0), ValidationError);
}

TEST(StructuredMask, DominantSlices) {
    RealTensor g({3, 4, 2});
    g.at({2, 1, 0}) = 10.0;
    const auto m = structured_mask(g, {1, 1, 1}, SelectStrategy::topk, 0);
    EXPECT_EQ(m.modes, (std::vector<std::vector<std::size_t>>{{2}, {1}, {0}}));
    const auto full = structured_mask(g, {3, 4, 2}, SelectStrategy::randk, 0);
    EXPECT_EQ(mask_offsets(full).size(), g.size());
    EXPECT_EQ(back_project(restrict_block(g, full), full), g);
    EXPECT_THROW(structured_mask(g, {4, 1, 1}, SelectStrategy::topk, 0), ValidationError);
}

TEST(StructuredMask, RandkGolden) {
    const auto g = testutil::random<double>({4, 4, 4, 4}, 2);
    const auto m = structured_mask(g, {2, 2, 2, 2}, SelectStrategy::randk, 42);
    EXPECT_EQ(m.modes, (std::vector<std::vector<std::size_t>>{{0, 2}, {0, 2}, {0, 1}, {1, 3}}));
}

TEST(StructuredMask, BackProjectAdjoint) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto y = testutil::random<Complex>({3, 3, 3}, seed);
        const auto m = structured_mask(y, {2, 1, 2}, SelectStrategy::probk, seed);
        const auto x = testutil::random<Complex>(m.block_shape(), seed + 9);
        EXPECT_LT(std::abs(inner(back_project(x, m), y) - inner(x, restrict_block(y, m))), 1e-12);
        EXPECT_EQ(fro_norm(back_project(ComplexTensor(m.block_shape()), m)), 0.0);
    }
}

TEST(StructuredMask, DefaultCounts) {
    EXPECT_EQ(structured_counts({8, 8, 4, 4}, 0.0625), (std::vector<std::size_t>{4, 4, 2, 2}));
    EXPECT_EQ(structured_counts({5, 5}, 1.0), (std::vector<std::size_t>{5, 5}));
}
