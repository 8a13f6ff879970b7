#pragma once

// Local logarithmic connections d + A(z) dz/z at one puncture: integer
// weights, the gauge-fixing recursion producing a normal trivialisation
//   d + z^Phi (-K - Phi) z^-Phi dz/z,
// and the diagnostics that check it.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "fuchsian/algebra.hpp"
#include "fuchsian/ode.hpp"
#include "fuchsian/spectral.hpp"

namespace fuchsian {

/// d + A(z) dz/z with A given as a truncated series; the residue is A^0.
struct LocalLogConnection {
    MatrixSeries a;

    explicit LocalLogConnection(MatrixSeries series) : a(std::move(series)) {
        if (a.rows() != a.cols()) throw ValidationError("shape-mismatch", "connection matrix must be square");
    }

    Index rank() const { return a.rows(); }
    int order() const { return a.order(); }
    const ComplexMatrix& residue() const { return a[0]; }
};

struct NormalFormOptions {
    /// Singular values of a block operator below this (relative to max(1, |L|))
    /// count as zero: resonant cokernel directions.
    double resonance_tol = 1e-8;
    /// -Re(lambda) within this of an integer from below is rounded up.
    double weight_snap = 1e-9;
};

/// A normal trivialisation: A_arr = T^-1 A T is gauged by M into
/// B(z) = z^Phi (-K - Phi) z^-Phi, i.e. z M' = M B - A_arr M.
struct NormalForm {
    MatrixSeries m;
    ComplexMatrix k;
    WeightDiagonal phi;
    ComplexMatrix t;
    /// Non-resonant blocks whose operator was numerically singular, "(i,m,j)".
    std::vector<std::string> near_resonances;
    /// Some resonance gap psi^i - psi^m exceeded the truncation order; the
    /// corresponding block of K is left zero.
    bool truncated_resonances = false;

    Index rank() const { return k.rows(); }
};

/// floor(-Re lambda) with values just below an integer rounded up.
inline int integer_weight(Complex lambda, double snap = 1e-9) {
    return static_cast<int>(std::floor(-lambda.real() + snap));
}

/// The integer weights floor(-Re lambda) of the residue eigenvalues, sorted non-increasing.
inline WeightDiagonal integer_weights(const ComplexMatrix& a0, double snap = 1e-9) {
    require_square(a0, "residue");
    std::vector<int> w;
    for (Complex lambda : eigenvalues(a0)) w.push_back(integer_weight(lambda, snap));
    std::sort(w.begin(), w.end(), std::greater<>());
    return WeightDiagonal(std::move(w));
}

/// B(z) = z^Phi (-K - Phi) z^-Phi as an exact polynomial series.
inline MatrixSeries normal_connection(const ComplexMatrix& k, const WeightDiagonal& phi) {
    const MatrixSeries constant = MatrixSeries::constant(-k - phi.as_matrix(), 0);
    return twist(constant, phi, phi, 0.0, true).series;
}

/// Constant gauge T with T^-1 A0 T block diagonal, one block per integer weight
/// class in descending weight order.
struct ArrangedResidue {
    ComplexMatrix t;
    WeightDiagonal phi;
};

inline ArrangedResidue arrange_residue(const ComplexMatrix& a0, double snap = 1e-9) {
    SchurForm s = schur(a0);
    const Index r = a0.rows();
    std::vector<int> weights(static_cast<std::size_t>(r));
    for (Index i = 0; i < r; ++i) weights[static_cast<std::size_t>(i)] = integer_weight(s.upper(i, i), snap);
    std::vector<int> distinct = weights;
    std::sort(distinct.begin(), distinct.end(), std::greater<>());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    std::vector<int> labels;
    for (int w : weights) {
        labels.push_back(static_cast<int>(std::find(distinct.begin(), distinct.end(), w) - distinct.begin()));
    }
    std::vector<int> sorted = weights;
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    BlockForm form = block_diagonalize(std::move(s), labels, static_cast<int>(distinct.size()));
    return {form.transform, WeightDiagonal(sorted)};
}

/// Gauge fixing by the blockwise recursion
///   (j + A0_ii) M^j_im - M^j_im A0_mm - B^j_im = R^{j-1}_im,
/// with B^j_im allowed only on resonant blocks psi^i - j = psi^m.
inline NormalForm normal_form(const LocalLogConnection& conn, const NormalFormOptions& opts = {}) {
    const Index r = conn.rank();
    const int order = conn.order();
    require_finite(conn.residue(), "residue");

    const ArrangedResidue arr = arrange_residue(conn.residue(), opts.weight_snap);
    const Eigen::PartialPivLU<ComplexMatrix> t_lu(arr.t);
    const ComplexMatrix t_inv = t_lu.inverse();
    std::vector<ComplexMatrix> a;
    for (int j = 0; j <= order; ++j) a.push_back(t_inv * conn.a[j] * arr.t);

    const auto blocks = arr.phi.blocks();
    // the arranged residue is block diagonal: clear the off-block round-off
    ComplexMatrix a0 = ComplexMatrix::Zero(r, r);
    for (const auto& blk : blocks) {
        a0.block(blk.offset, blk.offset, blk.size, blk.size) = a[0].block(blk.offset, blk.offset, blk.size, blk.size);
    }
    a[0] = a0;

    NormalForm nf;
    nf.phi = arr.phi;
    nf.t = arr.t;
    std::vector<ComplexMatrix> m{ComplexMatrix::Identity(r, r)};
    std::vector<ComplexMatrix> b{a0};

    for (int j = 1; j <= order; ++j) {
        ComplexMatrix rhs = -a[static_cast<std::size_t>(j)];
        for (int k = 1; k <= j - 1; ++k) {
            rhs.noalias() += m[static_cast<std::size_t>(k)] * b[static_cast<std::size_t>(j - k)];
            rhs.noalias() -= a[static_cast<std::size_t>(j - k)] * m[static_cast<std::size_t>(k)];
        }
        ComplexMatrix mj = ComplexMatrix::Zero(r, r);
        ComplexMatrix bj = ComplexMatrix::Zero(r, r);
        for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
            for (std::size_t bm = 0; bm < blocks.size(); ++bm) {
                const auto& ri = blocks[bi];
                const auto& cm = blocks[bm];
                const bool resonant = ri.value - j == cm.value;
                const ComplexMatrix aii = a0.block(ri.offset, ri.offset, ri.size, ri.size) +
                                          static_cast<double>(j) * ComplexMatrix::Identity(ri.size, ri.size);
                const ComplexMatrix amm = a0.block(cm.offset, cm.offset, cm.size, cm.size);
                const ComplexMatrix op = sylvester_operator(aii, amm);
                const ComplexVector rvec = vec(rhs.block(ri.offset, cm.offset, ri.size, cm.size));

                Eigen::JacobiSVD<ComplexMatrix> svd(op, Eigen::ComputeFullU | Eigen::ComputeFullV);
                const auto& sv = svd.singularValues();
                const double cut = opts.resonance_tol * std::max(1.0, sv(0));
                Index rank = 0;
                for (Index q = 0; q < sv.size(); ++q) {
                    if (sv(q) > cut) ++rank;
                }
                const ComplexMatrix& u = svd.matrixU();
                const ComplexMatrix& v = svd.matrixV();
                // minimum-norm solution on the numerical range
                ComplexVector coeff = u.leftCols(rank).adjoint() * rvec;
                for (Index q = 0; q < rank; ++q) coeff(q) /= sv(q);
                const ComplexVector xvec = v.leftCols(rank) * coeff;
                if (!all_finite(xvec)) {
                    throw NumericError("ill-conditioned-sylvester", "block solve failed at (" + std::to_string(bi) + "," +
                                                                        std::to_string(bm) + "," + std::to_string(j) + ")");
                }
                mj.block(ri.offset, cm.offset, ri.size, cm.size) = unvec(xvec, ri.size, cm.size);
                if (rank < sv.size()) {
                    const ComplexVector coker = u.rightCols(sv.size() - rank) * (u.rightCols(sv.size() - rank).adjoint() * rvec);
                    if (resonant) {
                        bj.block(ri.offset, cm.offset, ri.size, cm.size) = -unvec(coker, ri.size, cm.size);
                    } else {
                        nf.near_resonances.push_back("(" + std::to_string(bi) + "," + std::to_string(bm) + "," +
                                                     std::to_string(j) + ")");
                    }
                }
            }
        }
        m.push_back(std::move(mj));
        b.push_back(std::move(bj));
    }

    // K from B: diagonal blocks -A0_ii - psi^i, upper blocks from the resonant coefficients
    nf.k = ComplexMatrix::Zero(r, r);
    for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
        const auto& ri = blocks[bi];
        nf.k.block(ri.offset, ri.offset, ri.size, ri.size) =
            -a0.block(ri.offset, ri.offset, ri.size, ri.size) -
            static_cast<double>(ri.value) * ComplexMatrix::Identity(ri.size, ri.size);
        for (std::size_t bm = bi + 1; bm < blocks.size(); ++bm) {
            const auto& cm = blocks[bm];
            const int gap = ri.value - cm.value;
            if (gap > order) {
                nf.truncated_resonances = true;
                continue;
            }
            nf.k.block(ri.offset, cm.offset, ri.size, cm.size) =
                -b[static_cast<std::size_t>(gap)].block(ri.offset, cm.offset, ri.size, cm.size);
        }
    }
    nf.m = MatrixSeries(std::move(m));
    return nf;
}

/// Coefficientwise max of |z M' - (M B - A_arr M)| up to the truncation order.
inline double gauge_residual(const LocalLogConnection& conn, const NormalForm& nf) {
    const Eigen::PartialPivLU<ComplexMatrix> lu(nf.t);
    const ComplexMatrix t_inv = lu.inverse();
    const MatrixSeries a_arr = t_inv * conn.a * nf.t;
    const MatrixSeries b = normal_connection(nf.k, nf.phi).truncate(conn.order());
    const MatrixSeries lhs = z_derivative(nf.m);
    const MatrixSeries rhs = nf.m * b - a_arr * nf.m;
    return series_distance(lhs, rhs);
}

struct FundamentalCheck {
    bool passed = false;
    double deviation = 0.0;  ///< |loop - exp(2 pi i K)| / max(1, |exp(2 pi i K)|)
    ComplexMatrix loop;
    ComplexMatrix expected;
};

/// Integrate d + B dz/z once around the unit circle from z = 1. There the
/// fundamental system z^Phi z^K equals I, so the loop matrix must be exp(2 pi i K).
inline FundamentalCheck fundamental_check_report(const ComplexMatrix& k, const WeightDiagonal& phi, double tol = 1e-7) {
    const MatrixSeries b = normal_connection(k, phi);
    const ConnectionField omega = [&b](Complex z) -> ComplexMatrix { return b.evaluate(z) / z; };
    TransportOptions topts;
    topts.tol = std::min(1e-10, tol * 1e-3);
    FundamentalCheck out;
    out.loop = transport(omega, k.rows(), LoopPath::circle(0.0, 1.0), {Complex(0.0)}, topts);
    out.expected = exp_two_pi_i(k);
    out.deviation = (out.loop - out.expected).norm() / std::max(1.0, out.expected.norm());
    out.passed = out.deviation <= tol;
    return out;
}

inline bool fundamental_check(const NormalForm& nf, double tol = 1e-7) {
    return fundamental_check_report(nf.k, nf.phi, tol).passed;
}

struct ConvergenceCheck {
    int j;
    double lhs;  ///< |M^j| delta^j
    double rhs;  ///< D 2^(c0 - j)
    bool ok;
};

struct ConvergenceReport {
    int c0 = 0;
    double big_c = 0.0;
    double eps0 = 0.0;
    double delta = 0.0;
    double d = 0.0;
    /// delta <= eps0 / (2C), the range in which the bound is proven.
    bool delta_in_range = false;
    std::vector<ConvergenceCheck> checks;
    bool all_ok = false;
};

/// Evaluates |M^j| delta^j <= D 2^(c0 - j) for the computed j > c0, with
/// c_j = |A^j| + |B^j| (arranged coordinates), c0 = 2 floor(|A^0|) + 2,
/// C = max(2, c0 + 1) and eps0 = 0.999 min_j (C / c_j)^(1/j).
/// A delta of nullopt means eps0 / (4C).
inline ConvergenceReport convergence_diagnostic(const LocalLogConnection& conn, const NormalForm& nf,
                                                std::optional<double> delta = std::nullopt) {
    const Eigen::PartialPivLU<ComplexMatrix> lu(nf.t);
    const ComplexMatrix t_inv = lu.inverse();
    const int order = std::min(conn.order(), nf.m.order());
    const MatrixSeries b = normal_connection(nf.k, nf.phi);

    ConvergenceReport rep;
    const double a0_norm = op_norm(t_inv * conn.a[0] * nf.t);
    rep.c0 = 2 * static_cast<int>(std::floor(a0_norm)) + 2;
    rep.big_c = std::max(2.0, rep.c0 + 1.0);
    double eps0 = 1.0;
    for (int j = 1; j <= order; ++j) {
        const double cj = op_norm(t_inv * conn.a[j] * nf.t) + op_norm(b.coeff_or_zero(j));
        if (cj > 0.0) eps0 = std::min(eps0, std::pow(rep.big_c / cj, 1.0 / j));
    }
    rep.eps0 = 0.999 * eps0;
    rep.delta = delta.value_or(rep.eps0 / (4.0 * rep.big_c));
    rep.delta_in_range = rep.delta > 0.0 && rep.delta <= rep.eps0 / (2.0 * rep.big_c);

    for (int k = 0; k <= std::min(rep.c0, order); ++k) rep.d += op_norm(nf.m[k]) * std::pow(rep.delta, k);
    rep.all_ok = true;
    for (int j = rep.c0 + 1; j <= order; ++j) {
        const double lhs = op_norm(nf.m[j]) * std::pow(rep.delta, j);
        const double rhs = rep.d * std::ldexp(1.0, rep.c0 - j);
        // a relative slack for round-off in the norms
        const bool ok = lhs <= rhs * (1.0 + 1e-9) + 1e-300;
        rep.checks.push_back({j, lhs, rhs, ok});
        rep.all_ok = rep.all_ok && ok;
    }
    return rep;
}

/// True iff M (rows graded by phi, columns by phi_prime) has every entry
/// with phi'^m > phi^i vanishing to its order: M does not lower weights.
inline bool morphism_weight_check(const MatrixSeries& m, const WeightDiagonal& phi_prime, const WeightDiagonal& phi,
                                  double tol = 1e-9) {
    if (m.rows() != phi.size() || m.cols() != phi_prime.size()) {
        throw ValidationError("shape-mismatch", "morphism shape does not match the weight diagonals");
    }
    for (int j = 0; j <= m.order(); ++j) {
        for (Index i = 0; i < m.rows(); ++i) {
            for (Index c = 0; c < m.cols(); ++c) {
                if (phi_prime[c] > phi[i] && std::abs(m[j](i, c)) > tol) return false;
            }
        }
    }
    return true;
}

} // namespace fuchsian
