#include <gtest/gtest.h>

#include <map>
#include <set>

#include "fuchsian/ode.hpp"
#include "fuchsian/synth.hpp"
#include "test_support.hpp"

using namespace fuchsian;
using namespace fuchsian::testing;

namespace {

ComplexMatrix diag(std::initializer_list<Complex> d) {
    ComplexVector v(static_cast<Index>(d.size()));
    Index i = 0;
    for (Complex x : d) v(i++) = x;
    return v.asDiagonal();
}

Representation rep_from(std::vector<ComplexMatrix> mats) {
    Representation rep;
    rep.punctures = default_punctures(mats.size());
    rep.basepoint = Complex(0.5, -3.0);
    rep.matrices = std::move(mats);
    return rep;
}

/// Loop matrix around puncture a for the system, by direct transport on a
/// small circle starting at a + rad.
ComplexMatrix small_circle_loop(const FuchsianSystem& sys, std::size_t j, double rad) {
    const ConnectionField omega = [&](Complex z) { return sys.connection(z); };
    TransportOptions opts;
    opts.tol = 1e-12;
    return transport(omega, sys.rank(), LoopPath::circle(sys.punctures[j], rad), sys.punctures, opts);
}

/// Random commuting representation: G_j = S p_j(J) S^-1 with J a fixed
/// Jordan-structured matrix and p_j random polynomials; the last matrix closes
/// the product relation.
Representation random_commuting(std::mt19937_64& rng, Index r, std::size_t n) {
    std::uniform_int_distribution<int> coin(0, 1);
    ComplexMatrix j = ComplexMatrix::Zero(r, r);
    for (Index i = 0; i < r; ++i) {
        j(i, i) = Complex(static_cast<double>(i % 2), 0.0);  // two eigenvalues, repeated
        if (i + 1 < r && coin(rng)) j(i, i + 1) = 1.0;
    }
    // keep a Jordan chain only inside equal-eigenvalue runs
    for (Index i = 0; i + 1 < r; ++i) {
        if (j(i, i) != j(i + 1, i + 1)) j(i, i + 1) = 0.0;
    }
    const ComplexMatrix s = random_invertible(rng, r, 20.0);
    const ComplexMatrix s_inv = s.inverse();
    std::vector<ComplexMatrix> mats;
    ComplexMatrix prod = ComplexMatrix::Identity(r, r);
    for (std::size_t k = 0; k + 1 < n; ++k) {
        ComplexMatrix p = random_unit_complex(rng) * ComplexMatrix::Identity(r, r);
        ComplexMatrix power = ComplexMatrix::Identity(r, r);
        for (int d = 1; d <= 2; ++d) {
            power = power * j;
            p += random_matrix(rng, 1, 1, 0.4)(0, 0) * power;
        }
        mats.push_back(p);
        prod = prod * p;
    }
    mats.push_back(prod.inverse());
    for (auto& g : mats) g = s * g * s_inv;
    return rep_from(std::move(mats));
}

/// Coefficients of (b Q Pinv) computed by direct convolution.
std::vector<ComplexMatrix> product_coefficients(const MatrixSeries& b, const MatrixSeries& q, const ComplexMatrix& p_inv,
                                                int order) {
    std::vector<ComplexMatrix> out;
    for (int p = 0; p <= order; ++p) {
        ComplexMatrix acc = ComplexMatrix::Zero(b.rows(), q.cols());
        for (int t = 0; t <= p; ++t) acc += b.coeff_or_zero(t) * q.coeff_or_zero(p - t);
        out.push_back(acc * p_inv);
    }
    return out;
}

/// Largest |coefficient| that divisibility z^(c_i - c_m) | (b Q Pinv)_{i,m}, i < m, forbids.
double divisibility_residual(const BqFrame& f, const SplittingType& c, const MatrixSeries& q) {
    const Index r = q.rows();
    const int gap = c.c.front() - c.c.back();
    const auto coeffs = product_coefficients(f.b, q, f.p.inverse(), gap);
    double worst = 0.0;
    for (Index i = 0; i < r; ++i) {
        for (Index m = i + 1; m < r; ++m) {
            for (int p = 0; p < c.c[static_cast<std::size_t>(i)] - c.c[static_cast<std::size_t>(m)]; ++p) {
                worst = std::max(worst, std::abs(coeffs[static_cast<std::size_t>(p)](i, m)));
            }
        }
    }
    return worst;
}

bool b_structure_ok(const BqFrame& f, const SplittingType& c) {
    const Index r = f.b.rows();
    for (int t = 0; t <= f.b.order(); ++t) {
        for (Index i = 0; i < r; ++i) {
            for (Index j = 0; j < r; ++j) {
                const Complex x = f.b[t](i, j);
                if (i == j) {
                    if (x != (t == 0 ? Complex(1.0) : Complex(0.0))) return false;
                } else if (i > j) {
                    if (x != Complex(0.0)) return false;
                } else if (t > c.c[static_cast<std::size_t>(i)] - c.c[static_cast<std::size_t>(j)] - 1) {
                    if (x != Complex(0.0)) return false;
                }
            }
        }
    }
    return true;
}

/// Independent check of weight conditions (a) or (a') and (b).
bool weights_satisfy(const std::vector<std::vector<Complex>>& rho, const std::vector<std::vector<long>>& phi,
                     const std::vector<long>& lambda, WeightCondition mode) {
    const std::size_t n = rho.size();
    const std::size_t r = rho.front().size();
    for (std::size_t i = 0; i < r; ++i) {
        long s = 0;
        for (std::size_t j = 0; j < n; ++j) s += phi[j][i];
        if (s != lambda[i]) return false;
    }
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t k = i + 1; k < r; ++k) {
                if (std::abs(rho[j][i] - rho[j][k]) > 1e-9) continue;
                if (mode == WeightCondition::equal && phi[j][i] != phi[j][k]) return false;
                if (mode == WeightCondition::ordered && phi[j][i] < phi[j][k]) return false;
            }
        }
    }
    return true;
}

/// Upper-triangular representation with prescribed diagonals for j < n; the
/// last matrix closes the product.
Representation upper_triangular_rep(std::mt19937_64& rng, const std::vector<std::vector<Complex>>& diags) {
    const Index r = static_cast<Index>(diags.front().size());
    std::vector<ComplexMatrix> mats;
    ComplexMatrix prod = ComplexMatrix::Identity(r, r);
    for (const auto& d : diags) {
        ComplexMatrix g = random_matrix(rng, r, r, 0.5).triangularView<Eigen::StrictlyUpper>();
        for (Index i = 0; i < r; ++i) g(i, i) = d[static_cast<std::size_t>(i)];
        mats.push_back(g);
        prod = prod * g;
    }
    ComplexMatrix last = prod.inverse();
    last.triangularView<Eigen::StrictlyLower>().setZero();
    mats.push_back(last);
    return rep_from(std::move(mats));
}

} // namespace

// ---------------------------------------------------------------- FuchsianSystem

TEST(FuchsianSystem, ValidateRejectsNonzeroResidueSum) {
    FuchsianSystem sys{{0.0, 1.0}, {diag({1.0}), diag({0.5})}};
    try {
        sys.validate();
        FAIL() << "expected residue-sum error";
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.reason(), "residue-sum");
    }
}

TEST(SplittingType, RejectsIncreasingEntries) {
    EXPECT_THROW(SplittingType({0, 1}).validate(), ValidationError);
    EXPECT_NO_THROW(SplittingType({1, 1, -2}).validate());
}

// ---------------------------------------------------------------- commutative

TEST(CommutativeFuchsian, IdentityMatricesGiveZeroResidues) {
    const auto rep = rep_from({ComplexMatrix::Identity(3, 3), ComplexMatrix::Identity(3, 3), ComplexMatrix::Identity(3, 3)});
    const FuchsianSystem sys = commutative_fuchsian(rep);
    for (const auto& b : sys.residues) EXPECT_LT(b.norm(), 1e-14);
}

TEST(CommutativeFuchsian, DiagonalPairMatchesClosedForm) {
    const auto rep = rep_from({diag({2.0, 1.0}), diag({0.5, 1.0})});
    const FuchsianSystem sys = commutative_fuchsian(rep);
    const Complex k11(0.0, -std::log(2.0) / (2.0 * kPi));
    // K_1 = diag(-i ln2 / 2pi, 0), K_2 = diag(+i ln2 / 2pi, 0)
    EXPECT_LT((sys.residues[0] - (-diag({k11, 0.0}))).norm(), 1e-12);
    EXPECT_LT((sys.residues[1] - (-diag({-k11, 0.0}))).norm(), 1e-12);
    EXPECT_LT((sys.residues[0] + sys.residues[1]).norm(), 1e-14);
    for (std::size_t j = 0; j < 2; ++j) {
        const ComplexMatrix loop = small_circle_loop(sys, j, 0.3);
        EXPECT_LT((loop - rep.matrices[j]).norm(), 1e-8) << "puncture " << j;
    }
}

TEST(CommutativeFuchsian, UnipotentPairGivesOppositeLogs) {
    ComplexMatrix g(2, 2);
    g << 1.0, 1.0, 0.0, 1.0;
    const auto rep = rep_from({g, g.inverse()});
    const FuchsianSystem sys = commutative_fuchsian(rep);
    ComplexMatrix nil = ComplexMatrix::Zero(2, 2);
    nil(0, 1) = 1.0;
    const ComplexMatrix log_g = nil / kTwoPiI;  // log(I + N) = N for N^2 = 0
    EXPECT_LT((sys.residues[0] + log_g).norm(), 1e-12);
    EXPECT_LT((sys.residues[1] - log_g).norm(), 1e-12);
    for (std::size_t j = 0; j < 2; ++j) {
        EXPECT_LT((small_circle_loop(sys, j, 0.3) - rep.matrices[j]).norm(), 1e-8);
    }
}

TEST(CommutativeFuchsian, NonIntegralExponentAtFirstPunctureCarriesShift) {
    // rho_1 = e^{2 pi i 0.75} twice, mu sum = 1.5 per block is impossible; use
    // three punctures with exponents 0.75 + 0.75 + 0.5 = 2
    const Complex a = std::exp(kTwoPiI * 0.75), b = std::exp(kTwoPiI * 0.5);
    const auto rep = rep_from({diag({a, 1.0}), diag({a, 1.0}), diag({b, 1.0})});
    const FuchsianSystem sys = commutative_fuchsian(rep);
    // B_1 = xi - K_1 on the first block with xi = 2
    EXPECT_NEAR(std::real(sys.residues[0](0, 0)), 2.0 - 0.75, 1e-12);
    ComplexMatrix sum = ComplexMatrix::Zero(2, 2);
    for (const auto& bj : sys.residues) sum += bj;
    EXPECT_LT(sum.norm(), 1e-14);
    for (std::size_t j = 0; j < 3; ++j) {
        EXPECT_LT((expm(-kTwoPiI * sys.residues[j]) - rep.matrices[j]).norm(), 1e-10);
    }
}

TEST(CommutativeFuchsian, RejectsNonCommutingInput) {
    std::mt19937_64 rng(5);
    const auto rep = random_representation(rng, 2, 3);
    try {
        commutative_fuchsian(rep);
        FAIL() << "expected non-commuting";
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.reason(), "non-commuting");
    }
}

TEST(CommutativeFuchsian, RandomCommutingRepsRoundTrip) {
    std::mt19937_64 rng(101);
    for (int trial = 0; trial < 30; ++trial) {
        const Index r = 1 + trial % 4;
        const std::size_t n = 2 + static_cast<std::size_t>(trial % 3);
        const auto rep = random_commuting(rng, r, n);
        const FuchsianSystem sys = commutative_fuchsian(rep);
        ComplexMatrix sum = ComplexMatrix::Zero(r, r);
        for (const auto& bj : sys.residues) sum += bj;
        EXPECT_LT(sum.norm(), 1e-10) << "trial " << trial;
        for (std::size_t j = 0; j < n; ++j) {
            const double scale = std::max(1.0, rep.matrices[j].norm());
            // all residues commute, so exp(-2 pi i B_j) is the loop matrix exactly
            EXPECT_LT((expm(-kTwoPiI * sys.residues[j]) - rep.matrices[j]).norm(), 1e-8 * scale)
                << "trial " << trial << " puncture " << j;
        }
    }
}

// ---------------------------------------------------------------- bq_frame

TEST(BqFrame, ConstantTypeGivesIdentities) {
    std::mt19937_64 rng(3);
    const MatrixSeries q({random_invertible(rng, 3), random_matrix(rng, 3, 3)});
    const SplittingType c({2, 2, 2});
    const BqFrame f = bq_frame(c, q);
    EXPECT_EQ(f.p, ComplexMatrix::Identity(3, 3));
    for (int t = 0; t <= f.b.order(); ++t) {
        EXPECT_EQ(f.b[t], t == 0 ? ComplexMatrix(ComplexMatrix::Identity(3, 3)) : ComplexMatrix(ComplexMatrix::Zero(3, 3)));
    }
}

TEST(BqFrame, SwapExample) {
    ComplexMatrix q0(2, 2);
    q0 << 0.0, 1.0, 1.0, 0.0;
    const SplittingType c({1, 0});
    const BqFrame f = bq_frame(c, MatrixSeries::constant(q0, 1));
    ComplexMatrix swap(2, 2);
    swap << 0.0, 1.0, 1.0, 0.0;
    EXPECT_EQ(f.p, swap);
    EXPECT_LT((f.b[0] - ComplexMatrix::Identity(2, 2)).norm(), 1e-15);
    EXPECT_LT(divisibility_residual(f, c, MatrixSeries::constant(q0, 1)), 1e-15);
}

TEST(BqFrame, RandomRankThreeSatisfiesDivisibility) {
    std::mt19937_64 rng(17);
    const SplittingType c({2, 1, 0});
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<ComplexMatrix> co{random_invertible(rng, 3)};
        for (int p = 1; p <= 3; ++p) co.push_back(random_matrix(rng, 3, 3));
        const MatrixSeries q(co);
        const BqFrame f = bq_frame(c, q);
        EXPECT_TRUE(b_structure_ok(f, c));
        EXPECT_LT(divisibility_residual(f, c, q), 1e-9) << "trial " << trial;
    }
}

TEST(BqFrame, NeedsPermutationWhenLeadingMinorSingular) {
    // bottom-right 1x1 entry of Q(0) vanishes, so P = I is not admissible
    ComplexMatrix q0(3, 3);
    q0 << 1.0, 2.0, 0.5, 0.0, 1.0, 3.0, 1.0, 1.0, 0.0;
    const SplittingType c({1, 0, -1});
    const MatrixSeries q({q0, ComplexMatrix::Constant(3, 3, 0.25), ComplexMatrix::Constant(3, 3, -0.5)});
    const BqFrame f = bq_frame(c, q);
    const ComplexMatrix qp = q0 * f.p.inverse();
    for (Index k = 1; k <= 3; ++k) EXPECT_GT(sigma_min(qp.bottomRightCorner(k, k)), 1e-3);
    EXPECT_TRUE(b_structure_ok(f, c));
    EXPECT_LT(divisibility_residual(f, c, q), 1e-9);
}

TEST(BqFrame, RejectsSingularLeadingCoefficient) {
    const SplittingType c({1, 0});
    EXPECT_THROW(bq_frame(c, MatrixSeries::constant(ComplexMatrix::Ones(2, 2), 1)), ValidationError);
}

// ---------------------------------------------------------------- weights

TEST(ShiftWeights, ZeroShiftIsIdentityAndDegreeMoves) {
    std::mt19937_64 rng(9);
    const auto rep = random_representation(rng, 2, 3);
    const auto b = WeightedFlatBundle::canonical(rep);
    const long d0 = degree(b);
    EXPECT_EQ(degree(shift_weights(b, {0, 0, 0})), d0);
    EXPECT_EQ(degree(shift_weights(b, {1, -1, 0})), d0);
    EXPECT_EQ(degree(shift_weights(b, {1, 0, 0})), d0 + 2);
    EXPECT_EQ(degree(shift_weights(b, {3, 2, -1})), d0 + 2 * 4);
    EXPECT_THROW(shift_weights(b, {1, 2}), ValidationError);
}

TEST(Regauge, ExamplesFromArithmetic) {
    const WeightDiagonal phi({10, 0});
    EXPECT_EQ(regauge_given_splitting(phi, SplittingType({0, 0}), {0, 1}, 3).entries(), (std::vector<int>{10, 0}));
    EXPECT_EQ(regauge_given_splitting(phi, SplittingType({1, -1}), {0, 1}, 3).entries(), (std::vector<int>{9, 1}));
}

TEST(Regauge, BoundaryGapAcceptedAndSmallerGapRejected) {
    // r = 3, n = 4: required gap (r - 1)(n - 2) = 4; C at the Thm ne limit
    const SplittingType c({2, 0, -2});
    const auto out = regauge_given_splitting(WeightDiagonal({8, 4, 0}), c, {0, 1, 2}, 4);
    EXPECT_EQ(out.entries(), (std::vector<int>{6, 4, 2}));
    EXPECT_THROW(regauge_given_splitting(WeightDiagonal({7, 4, 0}), c, {0, 1, 2}, 4), ValidationError);
}

TEST(Regauge, PermutationReordersSplittingEntries) {
    // sigma = (1, 0): P^-1 C P = diag(c_2, c_1)
    const auto out = regauge_given_splitting(WeightDiagonal({10, 0}), SplittingType({1, -1}), {1, 0}, 3);
    EXPECT_EQ(out.entries(), (std::vector<int>{11, -1}));
}

TEST(SplittingBound, Examples) {
    const auto r1 = splitting_bound_check(SplittingType({1, 0}), 2, 2);
    EXPECT_FALSE(r1.gaps_ok);
    EXPECT_TRUE(r1.constant_type_forced);
    const auto r2 = splitting_bound_check(SplittingType({2, 0, -2}), 4, 3);
    EXPECT_TRUE(r2.gaps_ok);
    EXPECT_TRUE(r2.sum_ok);
    EXPECT_EQ(r2.spread_sum, 6);
    EXPECT_EQ(r2.spread_bound, 6);
    for (int n = 2; n < 6; ++n) {
        const auto r3 = splitting_bound_check(SplittingType({-3, -3, -3, -3}), n, 4);
        EXPECT_TRUE(r3.gaps_ok && r3.sum_ok);
    }
    EXPECT_FALSE(splitting_bound_check(SplittingType({3, 0, -1}), 4, 3).gaps_ok);
}

TEST(SolveWeights, RankOneCanonical) {
    std::mt19937_64 rng(1);
    const Complex rho = std::exp(kTwoPiI * Complex(0.3, 0.1));
    const auto rep = upper_triangular_rep(rng, {{rho}});
    const auto sol = solve_weights_parabolic(rep, WeightCondition::equal);
    ASSERT_TRUE(sol.feasible);
    // mu_1 = 0.3 + 0.1i, mu_2 = 0.7 - 0.1i: Lambda = -1
    EXPECT_EQ(sol.lambda, (std::vector<long>{-1}));
    EXPECT_EQ(sol.phi[0][0], -1);
    EXPECT_EQ(sol.phi[1][0], 0);
}

TEST(SolveWeights, AllEqualPerPunctureGivesEqualRows) {
    std::mt19937_64 rng(2);
    const Complex a = std::exp(kTwoPiI * 0.4), b = std::exp(kTwoPiI * 0.9);
    const auto rep = upper_triangular_rep(rng, {{a, a, a}, {b, b, b}});
    const auto sol = solve_weights_parabolic(rep, WeightCondition::equal);
    ASSERT_TRUE(sol.feasible);
    EXPECT_EQ(sol.lambda[0], sol.lambda[1]);
    EXPECT_EQ(sol.lambda[1], sol.lambda[2]);
    for (const auto& row : sol.phi) {
        EXPECT_EQ(row[0], row[1]);
        EXPECT_EQ(row[1], row[2]);
    }
    EXPECT_TRUE(weights_satisfy(sol.rho, sol.phi, sol.lambda, WeightCondition::equal));
}

TEST(SolveWeights, RankFourInterleavedPairsUsesDerivedColumn) {
    std::mt19937_64 rng(4);
    const Complex a = std::exp(kTwoPiI * 0.2), b = std::exp(kTwoPiI * 0.65);
    const Complex c = std::exp(kTwoPiI * 0.45), d = std::exp(kTwoPiI * 0.8);
    const auto rep = upper_triangular_rep(rng, {{a, b, a, b}, {c, d, c, d}});
    const auto sol = solve_weights_parabolic(rep, WeightCondition::equal);
    ASSERT_TRUE(sol.feasible);
    EXPECT_EQ(sol.method, "interleaved-pairs");
    for (const auto& row : sol.phi) EXPECT_EQ(row[3], row[0] + row[1] - row[2]);
    EXPECT_TRUE(weights_satisfy(sol.rho, sol.phi, sol.lambda, WeightCondition::equal));
}

TEST(SolveWeights, RankFourTwoBlocksNeedsOrderedMode) {
    std::mt19937_64 rng(6);
    const Complex a = std::exp(kTwoPiI * 0.2), b = std::exp(kTwoPiI * 0.65);
    const Complex c = std::exp(kTwoPiI * 0.45);
    const Complex d = std::exp(kTwoPiI * 0.9);
    // puncture 1: {1,2}{3,4}; punctures 2, 3: {1,3}{2,4}; closing puncture {1,2}{3,4}
    const auto rep = upper_triangular_rep(rng, {{a, a, b, b}, {c, d, c, d}, {d, c, d, c}});
    const auto ordered = solve_weights_parabolic(rep, WeightCondition::ordered);
    ASSERT_TRUE(ordered.feasible);
    EXPECT_EQ(ordered.method, "two-blocks");
    EXPECT_TRUE(weights_satisfy(ordered.rho, ordered.phi, ordered.lambda, WeightCondition::ordered));
}

TEST(SolveWeights, RejectsLowerTriangularEntries) {
    std::mt19937_64 rng(8);
    const auto rep = random_representation(rng, 2, 3);
    EXPECT_THROW(solve_weights_parabolic(rep, WeightCondition::equal), ValidationError);
}

TEST(SolveWeights, ExhaustivePatternsRankUpToFour) {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int solved = 0;
    for (Index r = 1; r <= 4; ++r) {
        // all set partitions of {0..r-1} as restricted growth strings
        std::vector<std::vector<int>> parts;
        std::vector<int> s(static_cast<std::size_t>(r), 0);
        std::function<void(std::size_t, int)> gen = [&](std::size_t i, int mx) {
            if (i == s.size()) {
                parts.push_back(s);
                return;
            }
            for (int v = 0; v <= mx + 1; ++v) {
                s[i] = v;
                gen(i + 1, std::max(mx, v));
            }
        };
        s[0] = 0;
        gen(1, 0);
        for (const auto& p1 : parts) {
            for (const auto& p2 : parts) {
                std::vector<std::vector<Complex>> diags;
                for (const auto* p : {&p1, &p2}) {
                    std::vector<Complex> vals;
                    for (int k = 0; k < 4; ++k) vals.push_back(std::exp(kTwoPiI * Complex(u(rng), 0.3 * (u(rng) - 0.5))));
                    std::vector<Complex> d;
                    for (int lbl : *p) d.push_back(vals[static_cast<std::size_t>(lbl)]);
                    diags.push_back(d);
                }
                const auto rep = upper_triangular_rep(rng, diags);
                const auto sol = solve_weights_parabolic(rep, WeightCondition::ordered);
                ASSERT_TRUE(sol.feasible) << "r=" << r;
                EXPECT_TRUE(weights_satisfy(sol.rho, sol.phi, sol.lambda, WeightCondition::ordered));
                for (long l : sol.lambda) EXPECT_LE(l, 0);
                ++solved;
            }
        }
    }
    EXPECT_EQ(solved, 1 + 4 + 25 + 225);
}

// ---------------------------------------------------------------- cyclic plan

TEST(CyclicWeightPlan, IrreducibleRepGivesDegreeZeroSemistablePlan) {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 5; ++trial) {
        const Index r = 2 + trial % 2;
        const auto rep = random_representation(rng, r, 3);
        const Eigen::ComplexEigenSolver<ComplexMatrix> es(rep.matrices[1]);
        const ComplexVector h = es.eigenvectors().col(0);
        const auto plan = cyclic_weight_plan(rep, 1, h, {-2, 5, 1});
        EXPECT_EQ(degree(plan.bundle), 0);
        EXPECT_NE(plan.verdict, Stability::unstable);
        const auto& w = plan.bundle.flags[1].weights();
        EXPECT_GE(w.front(), 5);
        EXPECT_EQ(weight_of(plan.bundle.flags[1], h), w.front());
        for (std::size_t i = 0; i + 1 < w.size(); ++i) EXPECT_GE(w[i] - w[i + 1], (r - 1) * (3 - 2));
        for (int x : plan.bundle.flags[0].weights()) EXPECT_GE(x, -2);
        for (int x : plan.bundle.flags[2].weights()) EXPECT_GE(x, 1);
    }
}

TEST(CyclicWeightPlan, RejectsNonCyclicOrNonEigenvector) {
    const Complex w = std::exp(kTwoPiI / 3.0);
    const auto rep = rep_from({diag({w, 1.0}), diag({w, 1.0}), diag({w, 1.0})});
    ComplexVector h(2);
    h << 1.0, 0.0;
    try {
        cyclic_weight_plan(rep, 0, h, {0, 0, 0});
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.reason(), "not-cyclic");
    }
    h << 1.0, 1.0;
    try {
        cyclic_weight_plan(rep, 0, h, {0, 0, 0});
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_EQ(e.reason(), "not-eigenvector");
    }
}

// ---------------------------------------------------------------- double rank

TEST(DoubleRankEmbedding, ProductEigenvectorAndKrylov) {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 8; ++trial) {
        const Index r = 2 + trial % 3;
        const std::size_t n = 3 + static_cast<std::size_t>(trial % 3);
        const auto rep = random_representation(rng, r, n);
        const auto emb = double_rank_embedding(rep);
        const Index d = 2 * r;
        EXPECT_EQ(emb.rep.rank(), d);
        EXPECT_LT((emb.rep.product() - ComplexMatrix::Identity(d, d)).norm(), 1e-10);
        const ComplexVector e = ComplexVector::Unit(d, d - 1);
        const ComplexVector g1e = emb.rep.matrices[0] * e;
        EXPECT_LT((g1e - e).norm(), 1e-14);
        // Krylov span of e under the generated algebra, by direct closure
        ComplexMatrix span = e;
        for (int pass = 0; pass < 2 * d; ++pass) {
            ComplexMatrix grown = span;
            for (const auto& g : emb.rep.matrices) {
                ComplexMatrix next(d, grown.cols() + span.cols());
                next << grown, g * span;
                grown = orthonormal_basis(next, 1e-9);
            }
            span = grown;
        }
        EXPECT_EQ(span.cols(), d) << "trial " << trial;
        // upper-left block is conjugate to the input
        const ComplexMatrix s_inv = emb.conjugator.inverse();
        for (std::size_t j = 0; j < n; ++j) {
            const ComplexMatrix top = emb.rep.matrices[j].topLeftCorner(r, r);
            EXPECT_LT((emb.conjugator * top * s_inv - rep.matrices[j]).norm(), 1e-9 * std::max(1.0, rep.matrices[j].norm()));
        }
    }
}

TEST(DoubleRankEmbedding, RejectsSmallCases) {
    std::mt19937_64 rng(43);
    EXPECT_THROW(double_rank_embedding(random_representation(rng, 2, 2)), ValidationError);
    EXPECT_THROW(double_rank_embedding(random_representation(rng, 1, 3)), ValidationError);
}

// ---------------------------------------------------------------- rank 3

TEST(Rank3Decide, IrreducibleIsRealizable) {
    std::mt19937_64 rng(51);
    const auto d = rank3_decide(random_representation(rng, 3, 3));
    EXPECT_EQ(d.verdict, Rank3Verdict::realizable);
    EXPECT_EQ(d.certificate, "irreducible");
}

TEST(Rank3Decide, TwoJordanBlocksIsRealizable) {
    std::mt19937_64 rng(52);
    // common invariant line e_1 makes the rep reducible
    ComplexMatrix g1 = diag({1.0, 1.0, 2.0});
    g1(0, 2) = 0.7;
    ComplexMatrix g2 = ComplexMatrix::Identity(3, 3);
    g2(0, 1) = 1.0;
    g2(1, 2) = 0.5;
    g2(2, 2) = 0.5;
    const ComplexMatrix g3 = (g1 * g2).inverse();
    const auto d = rank3_decide(rep_from({g1, g2, g3}));
    EXPECT_LT(d.algebra_dim, 9);
    EXPECT_EQ(d.verdict, Rank3Verdict::realizable);
    EXPECT_EQ(d.certificate, "multiple-jordan-blocks");
    EXPECT_EQ(d.puncture, 0);
}

TEST(Rank3Decide, ReducibleSingleBlockWithIntegralSumIsUndetermined) {
    // scalar cube roots of unity times unipotent single Jordan blocks
    const Complex w = std::exp(kTwoPiI / 3.0);
    ComplexMatrix u = ComplexMatrix::Identity(3, 3);
    u(0, 1) = 1.0;
    u(1, 2) = 1.0;
    const ComplexMatrix g1 = w * u, g2 = w * u;
    const ComplexMatrix g3 = (g1 * g2).inverse();
    const auto d = rank3_decide(rep_from({g1, g2, g3}));
    EXPECT_EQ(d.verdict, Rank3Verdict::undetermined);
    EXPECT_NEAR(std::real(d.exponent_sum), std::round(std::real(d.exponent_sum)), 1e-9);
}
