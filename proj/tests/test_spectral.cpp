#include <gtest/gtest.h>

#include <random>

#include <unsupported/Eigen/MatrixFunctions>

#include "fuchsian/spectral.hpp"
#include "test_support.hpp"

using namespace fuchsian;
using fuchsian::testing::random_invertible;
using fuchsian::testing::random_matrix;

namespace {

// Reference exponential from Eigen's Pade-based implementation.
ComplexMatrix reference_exp_two_pi_i(const ComplexMatrix& k) {
    const ComplexMatrix a = kTwoPiI * k;
    return a.exp();
}

void expect_normalized(const ComplexMatrix& k, double snap = 1e-9) {
    for (Complex mu : eigenvalues(k)) {
        EXPECT_GE(mu.real(), -snap);
        EXPECT_LT(mu.real(), 1.0);
    }
}

} // namespace

TEST(Expm, MatchesReference) {
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 20; ++trial) {
        const ComplexMatrix a = random_matrix(rng, 4, 4, 1.5);
        const ComplexMatrix ref = a.exp();
        EXPECT_LT((expm(a) - ref).norm(), 1e-11 * std::max(1.0, ref.norm()));
    }
}

TEST(SpectralSplit, IdentityIsOneCluster) {
    const SpectralSplit s = spectral_split(ComplexMatrix::Identity(3, 3));
    ASSERT_EQ(s.clusters.size(), 1u);
    EXPECT_EQ(s.clusters[0].multiplicity, 3);
    EXPECT_LT(std::abs(s.clusters[0].value - 1.0), 1e-14);
}

TEST(SpectralSplit, DiagonalTwoClusters) {
    ComplexMatrix g = ComplexMatrix::Zero(2, 2);
    g(0, 0) = 1.0;
    g(1, 1) = 2.0;
    EXPECT_EQ(spectral_split(g).clusters.size(), 2u);
}

TEST(SpectralSplit, JordanBlockIsOneCluster) {
    ComplexMatrix g(2, 2);
    g << 5.0, 1.0, 0.0, 5.0;
    const SpectralSplit s = spectral_split(g);
    ASSERT_EQ(s.clusters.size(), 1u);
    EXPECT_EQ(s.clusters[0].multiplicity, 2);
    EXPECT_EQ(numerical_rank(s.clusters[0].basis, 1e-12), 2);
}

TEST(SpectralSplit, BasesInvariantAndSpanning) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        const Index r = 2 + trial % 5;
        // prescribed spectrum with repeats, conjugated by a random matrix
        ComplexMatrix t = ComplexMatrix::Zero(r, r);
        for (Index i = 0; i < r; ++i) t(i, i) = Complex(static_cast<double>(i % 3), 0.5 * static_cast<double>(i % 2));
        for (Index i = 0; i + 1 < r; ++i) t(i, i + 1) = (trial % 2) ? 1.0 : 0.0;
        const ComplexMatrix p = random_invertible(rng, r, 100.0);
        const ComplexMatrix g = p * t * p.inverse();
        const SpectralSplit s = spectral_split(g);
        Index total = 0;
        ComplexMatrix all(r, 0);
        for (const auto& c : s.clusters) {
            total += c.multiplicity;
            const ComplexMatrix proj = ComplexMatrix::Identity(r, r) - c.basis * c.basis.adjoint();
            EXPECT_LT((proj * g * c.basis).norm(), 1e-7 * g.norm());
            ComplexMatrix grown(r, all.cols() + c.basis.cols());
            grown << all, c.basis;
            all = grown;
        }
        EXPECT_EQ(total, r);
        EXPECT_EQ(numerical_rank(all, 1e-8), r);
    }
}

TEST(SpectralSplit, NumericallySplitJordanBlockMerges) {
    // a 3x3 Jordan block perturbed at eps scale separates its eigenvalues by ~eps^(1/3)
    ComplexMatrix j = ComplexMatrix::Zero(3, 3);
    j(0, 0) = j(1, 1) = j(2, 2) = 2.0;
    j(0, 1) = j(1, 2) = 1.0;
    j(2, 0) = 1e-14;
    const SpectralSplit s = spectral_split(j);
    ASSERT_EQ(s.clusters.size(), 1u);
    EXPECT_EQ(jordan_block_count(j), 1);
}

TEST(NormLog, IdentityGivesZero) {
    EXPECT_LT(norm_log(ComplexMatrix::Identity(4, 4)).k.norm(), 1e-15);
}

TEST(NormLog, MinusOneGivesHalf) {
    ComplexMatrix g(1, 1);
    g << -1.0;
    const ComplexMatrix k = norm_log(g).k;
    EXPECT_LT(std::abs(k(0, 0) - 0.5), 1e-15);
}

TEST(NormLog, UnipotentJordanBlock) {
    ComplexMatrix g(2, 2);
    g << 1.0, 1.0, 0.0, 1.0;
    const ComplexMatrix k = norm_log(g).k;
    ComplexMatrix expected = ComplexMatrix::Zero(2, 2);
    expected(0, 1) = 1.0 / kTwoPiI;
    EXPECT_LT((k - expected).norm(), 1e-14);
    EXPECT_LT((reference_exp_two_pi_i(k) - g).norm(), 1e-13);
}

TEST(NormLog, PositiveRealScalar) {
    ComplexMatrix g(1, 1);
    g << 2.0;
    const ComplexMatrix k = norm_log(g).k;
    EXPECT_NEAR(k(0, 0).real(), 0.0, 1e-15);
    EXPECT_NEAR(k(0, 0).imag(), -std::log(2.0) / (2.0 * kPi), 1e-15);
    EXPECT_LT((reference_exp_two_pi_i(k) - g).norm(), 1e-14);
}

TEST(NormLog, BranchSnapNearOne) {
    // arg slightly below 2 pi: Re(mu) just under 1 snaps to the next branch
    ComplexMatrix g(1, 1);
    g << std::polar(1.0, -1e-12);
    const ComplexMatrix k = norm_log(g).k;
    EXPECT_GE(k(0, 0).real(), 0.0);
    EXPECT_LT(k(0, 0).real(), 1e-9);
    EXPECT_LT((reference_exp_two_pi_i(k) - g).norm(), 1e-9);
}

TEST(NormLog, SingularInputRejected) {
    ComplexMatrix g = ComplexMatrix::Zero(2, 2);
    g(0, 0) = 1.0;
    try {
        norm_log(g);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.reason(), "singular");
    }
}

TEST(NormLog, RandomRoundTrip) {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 100; ++trial) {
        const Index r = 1 + trial % 6;
        const ComplexMatrix g = random_invertible(rng, r, 1e6);
        const ComplexMatrix k = norm_log(g).k;
        EXPECT_LT((reference_exp_two_pi_i(k) - g).norm(), 1e-9 * g.norm()) << "trial " << trial;
        expect_normalized(k);
    }
}

TEST(NormLog, RandomWithJordanStructure) {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 40; ++trial) {
        const Index r = 2 + trial % 5;
        ComplexMatrix t = ComplexMatrix::Zero(r, r);
        const Complex rho = fuchsian::testing::random_unit_complex(rng) * (0.5 + 0.1 * (trial % 3));
        for (Index i = 0; i < r; ++i) t(i, i) = (i < r - 1) ? rho : Complex(-1.0);
        for (Index i = 0; i + 2 < r; ++i) t(i, i + 1) = 1.0;
        const ComplexMatrix p = random_invertible(rng, r, 50.0);
        const ComplexMatrix g = p * t * p.inverse();
        const ComplexMatrix k = norm_log(g).k;
        EXPECT_LT((reference_exp_two_pi_i(k) - g).norm(), 1e-9 * g.norm()) << "trial " << trial;
        expect_normalized(k);
    }
}

TEST(CommutingLog, IdentityConjugator) {
    std::mt19937_64 rng(14);
    const ComplexMatrix g = random_invertible(rng, 3);
    EXPECT_TRUE(commuting_log_check(g, g, ComplexMatrix::Identity(3, 3)));
}

TEST(CommutingLog, SimilarPair) {
    std::mt19937_64 rng(15);
    for (int trial = 0; trial < 20; ++trial) {
        const Index r = 2 + trial % 4;
        const ComplexMatrix gp = random_invertible(rng, r);
        const ComplexMatrix c = random_invertible(rng, r, 100.0);
        const ComplexMatrix g = c * gp * c.inverse();
        EXPECT_TRUE(commuting_log_check(g, gp, c));
    }
}

TEST(CommutingLog, CommutingPairWithSelfConjugator) {
    std::mt19937_64 rng(16);
    const ComplexMatrix g = random_invertible(rng, 3);
    const ComplexMatrix gp = g * g + ComplexMatrix::Identity(3, 3);  // commutes with g
    EXPECT_TRUE(commuting_log_check(g, g, gp));
    EXPECT_TRUE(commuting_log_check(gp, gp, g));
}

TEST(CommutingLog, SingularIntertwinerOnReducibleBlocks) {
    // C projects onto a shared eigenspace: G C = C G' with C not invertible
    ComplexMatrix g = ComplexMatrix::Zero(3, 3);
    g(0, 0) = 2.0;
    g(1, 1) = Complex(0.0, 1.0);
    g(2, 2) = -1.0;
    g(0, 1) = 0.5;
    ComplexMatrix gp = ComplexMatrix::Zero(2, 2);
    gp(0, 0) = 2.0;
    gp(1, 1) = 3.0;
    ComplexMatrix c = ComplexMatrix::Zero(3, 2);
    c(0, 0) = 1.0;
    EXPECT_TRUE(commuting_log_check(g, gp, c));
}

TEST(JordanBlocks, CountsBlocks) {
    ComplexMatrix g = ComplexMatrix::Identity(3, 3);
    g(2, 2) = 2.0;
    EXPECT_EQ(jordan_block_count(g), 3);
    ComplexMatrix u = ComplexMatrix::Identity(3, 3);
    u(0, 1) = 1.0;
    EXPECT_EQ(jordan_block_count(u), 2);
    u(1, 2) = 1.0;
    EXPECT_EQ(jordan_block_count(u), 1);
}
