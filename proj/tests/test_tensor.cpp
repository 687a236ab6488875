#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include "helpers.hpp"
#include "jacobi_svd.hpp"

using namespace tgrad;

TEST(Unfold, FrozenTwoByTwoByTwo) {
    RealTensor t({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
    Eigen::MatrixXd expect(2, 4);
    expect << 1, 3, 2, 4, 5, 7, 6, 8;
    EXPECT_EQ(unfold(t, 0), expect);
    Eigen::MatrixXd m1(2, 4);
    m1 << 1, 5, 2, 6, 3, 7, 4, 8;
    EXPECT_EQ(unfold(t, 1), m1);
    Eigen::MatrixXd m2(2, 4);
    m2 << 1, 5, 3, 7, 2, 6, 4, 8;
    EXPECT_EQ(unfold(t, 2), m2);
}

template <class T> void round_trip_all_modes(const Shape& s, std::uint64_t seed) {
    const auto t = testutil::random<T>(s, seed);
    for (std::size_t k = 0; k < s.size(); ++k) {
        const auto m = unfold(t, k);
        ASSERT_EQ(static_cast<std::size_t>(m.rows()), s[k]);
        EXPECT_EQ(fold(m, k, s), t) << "mode " << k;
    }
}

TEST(Unfold, FoldRoundTripProperty) {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 40; ++trial) {
        Shape s(1 + rng() % 4);
        for (auto& x : s) x = 1 + rng() % 5;
        round_trip_all_modes<double>(s, trial);
        round_trip_all_modes<Complex>(s, trial + 100);
    }
}

TEST(Unfold, RejectsBadMode) {
    RealTensor t({2, 3});
    EXPECT_THROW(unfold(t, 2), ValidationError);
    EXPECT_THROW(fold(Eigen::MatrixXd(3, 3), 0, Shape{2, 3}), ValidationError);
}

// Brute force: y[.., j, ..] = sum_i u(j, i) t[.., i, ..]
template <class T> Tensor<T> naive_mode_product(const Tensor<T>& t, const Matrix<T>& u, std::size_t mode) {
    Shape out_shape = t.shape();
    out_shape[mode] = static_cast<std::size_t>(u.rows());
    Tensor<T> out(out_shape);
    std::vector<std::size_t> idx(t.order(), 0);
    for (std::size_t flat = 0; flat < t.size(); ++flat) {
        std::size_t rem = flat;
        for (std::size_t k = t.order(); k-- > 0;) {
            idx[k] = rem % t.dim(k);
            rem /= t.dim(k);
        }
        const std::size_t i = idx[mode];
        for (std::size_t j = 0; j < out_shape[mode]; ++j) {
            auto o = idx;
            o[mode] = j;
            out.at(std::span<const std::size_t>(o)) += u(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) * t[flat];
        }
    }
    return out;
}

TEST(ModeProduct, MatchesBruteForce) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Shape s{3, 4, 2, 3};
        const auto t = testutil::random<Complex>(s, seed);
        for (std::size_t k = 0; k < s.size(); ++k) {
            const auto u = testutil::random_matrix<Complex>(5, s[k], seed + 50);
            EXPECT_LT(max_abs_diff(mode_product(t, u, k), naive_mode_product(t, u, k)), 1e-12);
        }
    }
}

TEST(ModeProduct, UnfoldingIdentity) {
    // (t x_k U)_(k) = U t_(k)
    const auto t = testutil::random<double>({4, 3, 5}, 3);
    for (std::size_t k = 0; k < 3; ++k) {
        const auto u = testutil::random_matrix<double>(2, t.dim(k), 9 + k);
        EXPECT_LT((unfold(mode_product(t, u, k), k) - u * unfold(t, k)).norm(), 1e-12);
    }
}

TEST(StableRank, MatchesSvdOracle) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto t = testutil::random<Complex>({5, 4, 6}, seed);
        for (std::size_t k = 0; k < 3; ++k) {
            const auto sv = testutil::jacobi_svd<Complex>(unfold(t, k)).s;
            const double expect = sv.squaredNorm() / (sv(0) * sv(0));
            EXPECT_NEAR(stable_rank(t, k), expect, 1e-10 * expect);
        }
    }
}

TEST(StableRank, RankOneIsOne) {
    const auto t = outer<double>({{1, 2, 3}, {0.5, -1}, {2, 2, 1, 4}});
    for (auto sr : stable_ranks(t)) EXPECT_NEAR(sr, 1.0, 1e-12);
    EXPECT_NEAR(multilinear_stable_rank(t), 1.0, 1e-12);
}

TEST(PowerIteration, NearDegenerateTopPair) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 6;
        Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(testutil::random_matrix<double>(n, n, trial)).householderQ();
        Eigen::VectorXd ev(n);
        ev << 1.0, 1.0 - 1e-6 * trial, 0.5, 0.3, 0.1, 0.0;
        const Eigen::MatrixXd g = q * ev.asDiagonal() * q.transpose();
        const double top = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(g).eigenvalues().maxCoeff();
        EXPECT_NEAR(top_eigenvalue_psd(g), top, 1e-9);
    }
}

TEST(Tensor, ShapeValidation) {
    EXPECT_THROW(RealTensor(Shape{}), ValidationError);
    EXPECT_THROW(RealTensor(Shape{2, 0}), ValidationError);
    EXPECT_THROW(RealTensor(Shape{2, 2}, std::vector<double>(3)), ValidationError);
}
