#pragma once

// Constructive synthesis of Fuchsian systems d + sum_j B_j/(z - a_j) dz and
// the combinatorial steps around it: frames adapted to a splitting type,
// weight shifts and regauging, integer weight solvers for upper-triangular
// representations, weight plans from cyclic eigenvectors, the double-rank
// embedding and the partial rank-3 decision.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "fuchsian/algebra.hpp"
#include "fuchsian/bundles.hpp"
#include "fuchsian/spectral.hpp"

namespace fuchsian {

/// d + sum_j B_j / (z - a_j) dz on the trivial bundle; smooth at infinity
/// iff sum_j B_j = 0.
struct FuchsianSystem {
    std::vector<Complex> punctures;
    std::vector<ComplexMatrix> residues;

    Index rank() const { return residues.empty() ? 0 : residues.front().rows(); }
    std::size_t size() const { return residues.size(); }

    /// Omega(z) = sum_j B_j / (z - a_j).
    ComplexMatrix connection(Complex z) const {
        ComplexMatrix out = ComplexMatrix::Zero(rank(), rank());
        for (std::size_t j = 0; j < residues.size(); ++j) out += residues[j] / (z - punctures[j]);
        return out;
    }

    ComplexMatrix residue_sum() const {
        ComplexMatrix s = ComplexMatrix::Zero(rank(), rank());
        for (const auto& b : residues) s += b;
        return s;
    }

    void validate(double tol = 1e-8) const {
        if (residues.empty() || residues.size() != punctures.size()) {
            throw ValidationError("shape-mismatch", "one residue per puncture required");
        }
        const Index r = rank();
        double scale = 1.0;
        for (const auto& b : residues) {
            if (b.rows() != r || b.cols() != r || r == 0) {
                throw ValidationError("shape-mismatch", "residues must be square of equal size");
            }
            require_finite(b, "residue");
            scale = std::max(scale, op_norm(b));
        }
        for (std::size_t i = 0; i < punctures.size(); ++i) {
            if (!std::isfinite(punctures[i].real()) || !std::isfinite(punctures[i].imag())) {
                throw ValidationError("non-finite", "punctures must be finite points");
            }
            for (std::size_t j = i + 1; j < punctures.size(); ++j) {
                if (punctures[i] == punctures[j]) throw ValidationError("duplicate-puncture", "punctures must be distinct");
            }
        }
        if (residue_sum().norm() > tol * scale) {
            throw ValidationError("residue-sum", "residues must sum to zero");
        }
    }
};

/// Splitting type c_1 >= ... >= c_r.
struct SplittingType {
    std::vector<int> c;

    SplittingType() = default;
    explicit SplittingType(std::vector<int> entries) : c(std::move(entries)) {}

    Index rank() const { return static_cast<Index>(c.size()); }
    int spread() const { return c.empty() ? 0 : c.front() - c.back(); }

    void validate() const {
        if (c.empty()) throw ValidationError("shape-mismatch", "splitting type must be non-empty");
        for (std::size_t i = 1; i < c.size(); ++i) {
            if (c[i] > c[i - 1]) throw ValidationError("bad-splitting-type", "splitting type must be non-increasing");
        }
    }
};

// ------------------------------------------------------------------ commutative

namespace detail {

/// Column blocks of S spanning the joint generalised eigenspaces of
/// commuting matrices.
struct JointBlocks {
    ComplexMatrix s;
    std::vector<Index> offsets;
    std::vector<Index> sizes;
};

inline JointBlocks joint_blocks(const std::vector<ComplexMatrix>& mats) {
    const Index r = mats.front().rows();
    JointBlocks jb{ComplexMatrix::Identity(r, r), {0}, {r}};
    for (const auto& g : mats) {
        const Eigen::PartialPivLU<ComplexMatrix> lu(jb.s);
        const ComplexMatrix s_inv = lu.inverse();
        JointBlocks next{ComplexMatrix(r, r), {}, {}};
        Index col = 0;
        for (std::size_t b = 0; b < jb.sizes.size(); ++b) {
            const Index off = jb.offsets[b], d = jb.sizes[b];
            const ComplexMatrix restricted = s_inv.middleRows(off, d) * g * jb.s.middleCols(off, d);
            const SpectralSplit split = spectral_split(restricted);
            const ComplexMatrix cols = jb.s.middleCols(off, d) * split.form.transform;
            for (const auto& blk : split.form.blocks) {
                ComplexMatrix piece = cols.middleCols(blk.offset, blk.size);
                for (Index c = 0; c < piece.cols(); ++c) piece.col(c).normalize();
                next.s.middleCols(col, blk.size) = piece;
                next.offsets.push_back(col);
                next.sizes.push_back(blk.size);
                col += blk.size;
            }
        }
        jb = std::move(next);
    }
    return jb;
}

} // namespace detail

/// Fuchsian system with the given commuting monodromy: on each joint
/// generalised eigenspace B_1 = xi - K_1 and B_j = -K_j (j >= 2), where
/// K_j = norm log G_j and xi = sum_j mu_j is an integer.
inline FuchsianSystem commutative_fuchsian(const Representation& rep) {
    rep.validate();
    const Index r = rep.rank();
    const std::size_t n = rep.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const auto& a = rep.matrices[i];
            const auto& b = rep.matrices[j];
            if ((a * b - b * a).norm() > 1e-8 * std::max(1.0, op_norm(a) * op_norm(b))) {
                throw ValidationError("non-commuting", "monodromy matrices must commute");
            }
        }
    }
    const detail::JointBlocks jb = detail::joint_blocks(rep.matrices);
    const Eigen::PartialPivLU<ComplexMatrix> lu(jb.s);
    const ComplexMatrix s_inv = lu.inverse();

    std::vector<ComplexMatrix> diag_res(n, ComplexMatrix::Zero(r, r));
    for (std::size_t b = 0; b < jb.sizes.size(); ++b) {
        const Index off = jb.offsets[b], d = jb.sizes[b];
        Complex xi = 0.0;
        std::vector<ComplexMatrix> logs;
        for (const auto& g : rep.matrices) {
            const ComplexMatrix gb = s_inv.middleRows(off, d) * g * jb.s.middleCols(off, d);
            logs.push_back(norm_log(gb).k);
            xi += logs.back().trace() / static_cast<double>(d);
        }
        const double xi_int = std::round(xi.real());
        if (std::abs(xi - Complex(xi_int, 0.0)) > 1e-6) {
            throw ValidationError("non-integral-exponent", "sum of normalised exponents on a joint block is not an integer");
        }
        const ComplexMatrix id = ComplexMatrix::Identity(d, d);
        diag_res[0].block(off, off, d, d) = xi_int * id - logs[0];
        for (std::size_t j = 1; j < n; ++j) diag_res[j].block(off, off, d, d) = -logs[j];
    }

    FuchsianSystem sys;
    sys.punctures = rep.punctures;
    double scale = 1.0;
    for (const auto& dr : diag_res) {
        sys.residues.push_back(jb.s * dr * s_inv);
        scale = std::max(scale, op_norm(sys.residues.back()));
    }
    if (sys.residue_sum().norm() > 1e-8 * scale) {
        throw NumericError("residue-sum", "assembled residues do not sum to zero");
    }
    // remove the rounding part of the sum
    ComplexMatrix rest = ComplexMatrix::Zero(r, r);
    for (std::size_t j = 1; j < n; ++j) rest += sys.residues[j];
    sys.residues[0] = -rest;
    return sys;
}

// ------------------------------------------------------------------ frames

/// Permutation and unipotent polynomial gauge for a splitting type.
/// Column i of Q(0) P^-1 is column sigma[i] of Q(0).
struct BqFrame {
    std::vector<int> sigma;
    ComplexMatrix p;
    MatrixSeries b;
    double residual = 0.0;   ///< largest coefficient that the divisibility condition forbids
    double min_pivot = 0.0;  ///< smallest sigma_min over bottom-right minors of Q(0) P^-1
};

inline ComplexMatrix permutation_matrix(const std::vector<int>& sigma) {
    const Index r = static_cast<Index>(sigma.size());
    ComplexMatrix p_inv = ComplexMatrix::Zero(r, r);
    for (Index i = 0; i < r; ++i) p_inv(sigma[static_cast<std::size_t>(i)], i) = 1.0;
    return p_inv.transpose();
}

namespace detail {

inline ComplexMatrix select(const ComplexMatrix& m, Index row0, const std::vector<int>& cols) {
    ComplexMatrix out(m.rows() - row0, static_cast<Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) out.col(static_cast<Index>(c)) = m.col(cols[c]).tail(m.rows() - row0);
    return out;
}

} // namespace detail

/// Finds P with every bottom-right minor of Q(0) P^-1 invertible and the
/// polynomial b (unit diagonal, zero below, deg b_ij <= c_i - c_j - 1) with
/// z^(c_i - c_m) dividing (b Q P^-1)_im for all i < m.
inline BqFrame bq_frame(const SplittingType& c, const MatrixSeries& q, double tol = 1e-9) {
    c.validate();
    const Index r = c.rank();
    if (q.rows() != r || q.cols() != r) throw ValidationError("shape-mismatch", "Q must be r x r");
    const int gap = c.spread();
    if (q.order() < gap - 1) throw ValidationError("insufficient-order", "Q needs coefficients up to c_1 - c_r - 1");
    const ComplexMatrix& q0 = q[0];
    const double q_scale = std::max(1.0, op_norm(q0));
    if (sigma_min(q0) <= 1e-12 * q_scale) {
        throw ValidationError("singular-leading-coefficient", "Q(0) must be invertible");
    }

    BqFrame f;
    f.sigma.resize(static_cast<std::size_t>(r));
    std::iota(f.sigma.begin(), f.sigma.end(), 0);
    if (gap > 0) {
        // Expand the determinant along row i: some column leaves an invertible
        // complementary minor on rows i+1..r; take the best conditioned one.
        std::vector<int> remaining = f.sigma;
        for (Index i = 0; i + 1 < r; ++i) {
            double best = -1.0;
            std::size_t best_pos = 0;
            for (std::size_t pos = 0; pos < remaining.size(); ++pos) {
                std::vector<int> rest = remaining;
                rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(pos));
                const double score = sigma_min(detail::select(q0, i + 1, rest));
                if (score > best) {
                    best = score;
                    best_pos = pos;
                }
            }
            f.sigma[static_cast<std::size_t>(i)] = remaining[best_pos];
            remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(best_pos));
        }
        f.sigma[static_cast<std::size_t>(r - 1)] = remaining.front();
    }
    f.p = permutation_matrix(f.sigma);
    const ComplexMatrix p_inv = f.p.transpose();
    const MatrixSeries qp = q * p_inv;

    f.min_pivot = 1e300;
    for (Index k = 1; k <= r; ++k) f.min_pivot = std::min(f.min_pivot, sigma_min(qp[0].bottomRightCorner(k, k)));
    if (gap > 0 && f.min_pivot <= 1e-12 * q_scale) {
        throw NumericError("near-singular-minors", "no permutation with invertible bottom-right minors");
    }

    const auto cc = [&](Index i) { return c.c[static_cast<std::size_t>(i)]; };
    std::vector<ComplexMatrix> bc(static_cast<std::size_t>(std::max(gap - 1, 0)) + 1, ComplexMatrix::Zero(r, r));
    bc[0] = ComplexMatrix::Identity(r, r);
    for (Index i = 0; i < r; ++i) {
        for (int p = 0; p < cc(i) - cc(r - 1); ++p) {
            Index alpha = i + 1;
            while (p > cc(i) - cc(alpha) - 1) ++alpha;
            const Index len = r - alpha;
            // x * q0[alpha.., alpha..] = -(q^p_i + sum_{t<p} b^t_i q^(p-t)) on columns alpha..
            // b^p_i is still zero here, and b^0_ii = 1 carries q^p_i
            Eigen::RowVectorXcd known = Eigen::RowVectorXcd::Zero(len);
            for (int t = 0; t <= p; ++t) {
                known += bc[static_cast<std::size_t>(t)].row(i) * qp[p - t].rightCols(len);
            }
            const ComplexMatrix minor = qp[0].bottomRightCorner(len, len);
            const ComplexVector x = minor.transpose().fullPivLu().solve(ComplexVector(-known.transpose()));
            bc[static_cast<std::size_t>(p)].row(i).tail(len) = x.transpose();
        }
    }
    f.b = MatrixSeries(std::move(bc));

    // coefficientwise divisibility check
    for (int p = 0; p < gap; ++p) {
        ComplexMatrix prod = ComplexMatrix::Zero(r, r);
        for (int t = 0; t <= p; ++t) prod += f.b.coeff_or_zero(t) * qp[p - t];
        for (Index i = 0; i < r; ++i) {
            for (Index m = i + 1; m < r; ++m) {
                if (p < cc(i) - cc(m)) f.residual = std::max(f.residual, std::abs(prod(i, m)));
            }
        }
    }
    const double scale = std::max(1.0, q.max_coeff_norm()) * std::max(1.0, f.b.max_coeff_norm());
    if (f.residual > tol * scale) {
        throw NumericError("divisibility-residual", "divisibility conditions not met within tolerance");
    }
    return f;
}

// ------------------------------------------------------------------ weights

/// Phi'_j = Phi_j + lambda_j I at every puncture; the degree moves by r sum lambda_j.
inline WeightedFlatBundle shift_weights(const WeightedFlatBundle& b, const std::vector<int>& lambda) {
    if (lambda.size() != b.flags.size()) throw ValidationError("shape-mismatch", "one shift per puncture required");
    WeightedFlatBundle out = b;
    for (std::size_t j = 0; j < lambda.size(); ++j) out.flags[j] = b.flags[j].shifted(lambda[j]);
    return out;
}

/// Phi'_k = Phi_k - P^-1 C P, where P^-1 C P = diag(c_{sigma^-1(i)}).
/// Requires phi_k^i - phi_k^(i+1) >= (r - 1)(n - 2).
inline WeightDiagonal regauge_given_splitting(const WeightDiagonal& phi_k, const SplittingType& c,
                                              const std::vector<int>& sigma, int n) {
    c.validate();
    const Index r = phi_k.size();
    if (c.rank() != r || static_cast<Index>(sigma.size()) != r) {
        throw ValidationError("shape-mismatch", "weights, splitting type and permutation must have equal length");
    }
    std::vector<int> inv(static_cast<std::size_t>(r), -1);
    for (Index i = 0; i < r; ++i) {
        const int s = sigma[static_cast<std::size_t>(i)];
        if (s < 0 || s >= r || inv[static_cast<std::size_t>(s)] >= 0) {
            throw ValidationError("shape-mismatch", "sigma must be a permutation");
        }
        inv[static_cast<std::size_t>(s)] = static_cast<int>(i);
    }
    const long need = static_cast<long>(r - 1) * (n - 2);
    for (Index i = 0; i + 1 < r; ++i) {
        if (static_cast<long>(phi_k[i]) - phi_k[i + 1] < need) {
            throw ValidationError("precondition", "weight gaps must be at least (r - 1)(n - 2)");
        }
    }
    std::vector<int> out(static_cast<std::size_t>(r));
    for (Index i = 0; i < r; ++i) {
        out[static_cast<std::size_t>(i)] = phi_k[i] - c.c[static_cast<std::size_t>(inv[static_cast<std::size_t>(i)])];
    }
    for (std::size_t i = 1; i < out.size(); ++i) {
        if (out[i] > out[i - 1]) throw ValidationError("precondition", "regauged weights are not non-increasing");
    }
    return WeightDiagonal(std::move(out));
}

/// Bounds on the splitting type of a semistable degree-zero bundle with n
/// punctures: consecutive gaps <= n - 2 and sum (c_1 - c_i) <= (n - 2) r (r - 1) / 2.
struct SplittingBoundReport {
    bool gaps_ok = true;
    bool sum_ok = true;
    bool constant_type_forced = false;  ///< n = 2 admits only constant types
    long max_gap = 0;
    long gap_bound = 0;
    long spread_sum = 0;
    long spread_bound = 0;
    std::vector<std::string> violations;
};

inline SplittingBoundReport splitting_bound_check(const SplittingType& c, int n, Index r) {
    c.validate();
    if (n < 2) throw ValidationError("precondition", "need at least two punctures");
    if (c.rank() != r) throw ValidationError("shape-mismatch", "splitting type length differs from rank");
    SplittingBoundReport rep;
    rep.gap_bound = n - 2;
    rep.spread_bound = static_cast<long>(n - 2) * r * (r - 1) / 2;
    rep.constant_type_forced = (n == 2);
    for (std::size_t i = 0; i + 1 < c.c.size(); ++i) {
        const long g = static_cast<long>(c.c[i]) - c.c[i + 1];
        rep.max_gap = std::max(rep.max_gap, g);
        if (g > rep.gap_bound) {
            rep.gaps_ok = false;
            rep.violations.push_back("gap c_" + std::to_string(i + 1) + " - c_" + std::to_string(i + 2) + " = " +
                                     std::to_string(g) + " exceeds " + std::to_string(rep.gap_bound));
        }
    }
    for (std::size_t i = 0; i < c.c.size(); ++i) rep.spread_sum += static_cast<long>(c.c.front()) - c.c[i];
    if (rep.spread_sum > rep.spread_bound) {
        rep.sum_ok = false;
        rep.violations.push_back("sum of c_1 - c_i = " + std::to_string(rep.spread_sum) + " exceeds " +
                                 std::to_string(rep.spread_bound));
    }
    return rep;
}

/// (a): phi_j^i >= phi_j^k for i <= k with equal diagonal entries; (a'): equality there.
enum class WeightCondition { ordered, equal };

inline const char* to_string(WeightCondition m) { return m == WeightCondition::ordered ? "ordered" : "equal"; }

/// Integer weights phi[j][i] (puncture j, diagonal position i) with
/// sum_j phi[j][i] = lambda[i].
struct WeightSolution {
    bool feasible = false;
    std::vector<std::vector<long>> phi;
    std::vector<long> lambda;
    std::vector<std::vector<Complex>> rho;
    std::string method;
    std::string reason;
};

namespace detail {

class ParabolicSolver {
public:
    ParabolicSolver(const std::vector<std::vector<Complex>>& rho, const std::vector<long>& lambda, WeightCondition mode)
        : rho_(rho), lambda_(lambda), mode_(mode), n_(rho.size()), r_(rho.front().size()) {
        phi_.assign(n_, std::vector<long>(r_, 0));
    }

    bool run(std::string& method, std::string& reason) {
        std::vector<std::size_t> all(r_);
        std::iota(all.begin(), all.end(), 0);
        const bool ok = solve(all);
        method = method_.empty() ? "reduction" : method_;
        reason = reason_;
        return ok;
    }

    const std::vector<std::vector<long>>& phi() const { return phi_; }

private:
    bool eq(std::size_t j, std::size_t a, std::size_t b) const {
        return a == b || relative_gap(rho_[j][a], rho_[j][b]) < 1e-8;
    }

    bool solve(const std::vector<std::size_t>& s) {
        if (s.empty()) return true;
        // a diagonal value occurring once in its row lets the column be peeled
        for (auto kit = s.rbegin(); kit != s.rend(); ++kit) {
            const std::size_t k = *kit;
            for (std::size_t m = 0; m < n_; ++m) {
                bool unique = true;
                for (std::size_t t : s) unique = unique && (t == k || !eq(m, k, t));
                if (!unique) continue;
                std::vector<std::size_t> rest;
                for (std::size_t t : s) {
                    if (t != k) rest.push_back(t);
                }
                if (!solve(rest)) return false;
                long sum = 0;
                for (std::size_t j = 0; j < n_; ++j) {
                    if (j == m) continue;
                    std::optional<long> above, below;
                    for (std::size_t t : rest) {
                        if (!eq(j, k, t)) continue;
                        if (t < k) above = above ? std::min(*above, phi_[j][t]) : phi_[j][t];
                        if (t > k) below = below ? std::max(*below, phi_[j][t]) : phi_[j][t];
                    }
                    phi_[j][k] = above ? *above : (below ? *below : 0);
                    sum += phi_[j][k];
                }
                phi_[m][k] = lambda_[k] - sum;
                return true;
            }
        }
        // every column of s carries the same diagonal at every puncture
        bool uniform = true;
        for (std::size_t j = 0; j < n_; ++j) {
            for (std::size_t t : s) uniform = uniform && eq(j, s.front(), t);
        }
        if (uniform) {
            for (std::size_t t : s) {
                for (std::size_t j = 0; j < n_; ++j) phi_[j][t] = (j == 0) ? lambda_[t] : 0;
            }
            note("uniform");
            return true;
        }
        if (s.size() == 4) {
            const std::size_t i1 = s[0], i2 = s[1], i3 = s[2], i4 = s[3];
            bool interleaved = true;
            std::optional<std::size_t> split_at;
            for (std::size_t j = 0; j < n_; ++j) {
                const bool p13 = eq(j, i1, i3) && eq(j, i2, i4);
                const bool p14 = eq(j, i1, i4) && eq(j, i2, i3);
                interleaved = interleaved && (p13 || p14);
                if (!split_at && eq(j, i1, i2) && eq(j, i3, i4) && !eq(j, i1, i3)) split_at = j;
            }
            if (interleaved) {
                if (lambda_[i4] != lambda_[i1] + lambda_[i2] - lambda_[i3]) {
                    reason_ = "interleaved pattern with inconsistent Lambda";
                    return false;
                }
                if (!solve({i1, i2, i3})) return false;
                for (std::size_t j = 0; j < n_; ++j) phi_[j][i4] = phi_[j][i1] + phi_[j][i2] - phi_[j][i3];
                note("interleaved-pairs");
                return true;
            }
            if (split_at) {
                if (mode_ == WeightCondition::equal) {
                    reason_ = "two-block pattern only admits the ordered condition";
                    return false;
                }
                if (!solve({i1, i2}) || !solve({i3, i4})) return false;
                const std::size_t m = *split_at;
                long big = 0;
                for (std::size_t j = 0; j < n_; ++j) {
                    if (j == m) continue;
                    big = std::max(big, std::max(phi_[j][i3], phi_[j][i4]) - std::min(phi_[j][i1], phi_[j][i2]));
                }
                for (std::size_t j = 0; j < n_; ++j) {
                    for (std::size_t t : {i1, i2}) phi_[j][t] += (j == m) ? -static_cast<long>(n_ - 1) * big : big;
                }
                note("two-blocks");
                return true;
            }
        }
        reason_ = "no case of the rank <= 4 analysis applies to this coincidence pattern";
        return false;
    }

    // outer cases finish last, so the label names the outermost case used
    void note(const std::string& m) { method_ = m; }

    const std::vector<std::vector<Complex>>& rho_;
    const std::vector<long>& lambda_;
    WeightCondition mode_;
    std::size_t n_, r_;
    std::vector<std::vector<long>> phi_;
    std::string method_, reason_;
};

} // namespace detail

/// Checks (a) or (a') together with (b) in exact integer arithmetic.
inline bool weight_conditions_hold(const std::vector<std::vector<Complex>>& rho, const std::vector<std::vector<long>>& phi,
                                   const std::vector<long>& lambda, WeightCondition mode) {
    const std::size_t n = rho.size(), r = lambda.size();
    if (phi.size() != n) return false;
    for (std::size_t i = 0; i < r; ++i) {
        long s = 0;
        for (std::size_t j = 0; j < n; ++j) s += phi[j][i];
        if (s != lambda[i]) return false;
    }
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t k = i + 1; k < r; ++k) {
                if (detail::relative_gap(rho[j][i], rho[j][k]) >= 1e-8) continue;
                if (mode == WeightCondition::equal ? phi[j][i] != phi[j][k] : phi[j][i] < phi[j][k]) return false;
            }
        }
    }
    return true;
}

/// Weight solver on diagonal data rho[j][i] = (G_j)_ii.
inline WeightSolution solve_weights_diagonal(const std::vector<std::vector<Complex>>& rho, WeightCondition mode) {
    if (rho.empty() || rho.front().empty()) throw ValidationError("shape-mismatch", "diagonal data must be non-empty");
    const std::size_t n = rho.size(), r = rho.front().size();
    WeightSolution sol;
    sol.rho = rho;
    for (std::size_t i = 0; i < r; ++i) {
        Complex mu_sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (rho[j].size() != r) throw ValidationError("shape-mismatch", "ragged diagonal data");
            mu_sum += norm_log_scalar(rho[j][i]);
        }
        const double rounded = std::round(mu_sum.real());
        if (std::abs(mu_sum - Complex(rounded, 0.0)) > 1e-6) {
            throw ValidationError("non-integral-exponent", "sum of normalised exponents in column " +
                                                               std::to_string(i + 1) + " is not an integer");
        }
        sol.lambda.push_back(-static_cast<long>(rounded));
    }
    detail::ParabolicSolver solver(rho, sol.lambda, mode);
    sol.feasible = solver.run(sol.method, sol.reason);
    if (sol.feasible) {
        sol.phi = solver.phi();
        if (!weight_conditions_hold(rho, sol.phi, sol.lambda, mode)) {
            sol.feasible = false;
            sol.reason = "constructed weights violate the conditions";
        }
    }
    if (!sol.feasible) sol.phi.clear();
    return sol;
}

/// Weights for an upper-triangular representation: sum_j phi_j^i = Lambda^i
/// with Lambda^i = -sum_j Re norm log (G_j)_ii.
inline WeightSolution solve_weights_parabolic(const Representation& rep, WeightCondition mode) {
    rep.validate();
    std::vector<std::vector<Complex>> rho;
    for (const auto& g : rep.matrices) {
        const double scale = std::max(1.0, op_norm(g));
        const ComplexMatrix lower = g.triangularView<Eigen::StrictlyLower>();
        if (lower.norm() > 1e-10 * scale) {
            throw ValidationError("not-upper-triangular", "monodromy matrices must be upper triangular");
        }
        std::vector<Complex> d;
        for (Index i = 0; i < g.rows(); ++i) d.push_back(g(i, i));
        rho.push_back(std::move(d));
    }
    return solve_weights_diagonal(rho, mode);
}

// ------------------------------------------------------------------ cyclic vectors

/// Orthonormal basis of the span of all words in gens applied to v.
inline ComplexMatrix krylov_span(const std::vector<ComplexMatrix>& gens, const ComplexVector& v, double rel_tol = 1e-9) {
    const Index r = v.size();
    ComplexMatrix span = orthonormal_basis(v, rel_tol);
    for (Index guard = 0; guard <= r; ++guard) {
        ComplexMatrix stacked(r, span.cols() * static_cast<Index>(gens.size() + 1));
        stacked.leftCols(span.cols()) = span;
        for (std::size_t g = 0; g < gens.size(); ++g) {
            stacked.middleCols(span.cols() * static_cast<Index>(g + 1), span.cols()) = gens[g] * span;
        }
        ComplexMatrix grown = orthonormal_basis(stacked, rel_tol);
        if (grown.cols() == span.cols()) return span;
        span = grown;
    }
    return span;
}

struct CyclicPlan {
    WeightedFlatBundle bundle;
    Stability verdict = Stability::undetermined;
    bool constraints_met = true;  ///< phi_j^i >= N_j (j != k) and phi_k^1 >= N_k
    int semistability_shift = 0;  ///< t used to lower phi_k^2..phi_k^r
};

/// Flags and weights for a cyclic eigenvector h of G_k: full flag at k
/// starting with <h>, gaps >= (r - 1)(n - 2), phi_k^1 >= N_k + (r - 1)(n - 2),
/// trivial flags of weight N_j elsewhere, degree zero.
inline CyclicPlan cyclic_weight_plan(const Representation& rep, std::size_t k, const ComplexVector& h,
                                     const std::vector<int>& lower_bounds, const InvariantSearchOptions& opts = {}) {
    rep.validate();
    const Index r = rep.rank();
    const std::size_t n = rep.size();
    if (k >= n) throw ValidationError("shape-mismatch", "puncture index out of range");
    if (lower_bounds.size() != n) throw ValidationError("shape-mismatch", "one lower bound per puncture required");
    if (h.size() != r || h.norm() == 0.0) throw ValidationError("shape-mismatch", "h must be a non-zero vector of length r");
    const ComplexMatrix& gk = rep.matrices[k];
    const ComplexVector u = h.normalized();
    const Complex lambda = u.dot(gk * u);
    if ((gk * u - lambda * u).norm() > 1e-8 * std::max(1.0, op_norm(gk))) {
        throw ValidationError("not-eigenvector", "h is not an eigenvector of G_k");
    }
    if (krylov_span(rep.matrices, u).cols() != r) throw ValidationError("not-cyclic", "h is not a cyclic vector");

    // full G_k-invariant flag with first line <h>
    const ComplexMatrix q = complete_to_unitary(u);
    ComplexMatrix basis = q;
    if (r > 1) {
        const ComplexMatrix t = q.adjoint() * gk * q;
        const SchurForm s = schur(t.bottomRightCorner(r - 1, r - 1));
        basis.rightCols(r - 1) = q.rightCols(r - 1) * s.unitary;
    }
    std::vector<Index> dims(static_cast<std::size_t>(r));
    std::iota(dims.begin(), dims.end(), Index{1});

    const int g = static_cast<int>((r - 1) * (static_cast<Index>(n) - 2));
    const int step = std::max(g, 1);
    std::vector<int> wk(static_cast<std::size_t>(r));
    for (Index i = 0; i < r; ++i) wk[static_cast<std::size_t>(i)] = lower_bounds[k] + g - static_cast<int>(i) * step;

    CyclicPlan plan;
    plan.bundle.rep = rep;
    for (std::size_t j = 0; j < n; ++j) {
        plan.bundle.flags.push_back(j == k ? WeightedFlag(basis, dims, wk) : WeightedFlag::trivial(r, lower_bounds[j]));
    }
    const long d = degree(plan.bundle);
    if (d < 0) {
        wk.front() -= static_cast<int>(d);
    } else if (d > 0) {
        wk.back() -= static_cast<int>(d);
    }
    plan.bundle.flags[k] = WeightedFlag(basis, dims, wk);

    SemistabilityResult ss = semistable(plan.bundle, opts);
    // subsystems miss h, so lowering phi_k^2..phi_k^r lowers their slopes
    for (int t = 1; ss.verdict == Stability::unstable && r > 1 && t < (1 << 20); t *= 2) {
        std::vector<int> w = wk;
        w.front() += static_cast<int>(r - 1) * t;
        for (std::size_t i = 1; i < w.size(); ++i) w[i] -= t;
        plan.bundle.flags[k] = WeightedFlag(basis, dims, w);
        plan.semistability_shift = t;
        ss = semistable(plan.bundle, opts);
    }
    plan.verdict = ss.verdict;
    const auto& final_w = plan.bundle.flags[k].weights();
    plan.constraints_met = final_w.front() >= lower_bounds[k];
    return plan;
}

// ------------------------------------------------------------------ double rank

struct DoubleEmbedding {
    Representation rep;          ///< rank 2r, first block conjugate to the input
    ComplexMatrix conjugator;    ///< S with S^-1 G_j S the upper-left blocks
    double product_defect = 0.0;
    bool eigenvector_ok = false; ///< e_2r is an eigenvector of G'_1
    Index krylov_rank = 0;       ///< dimension of the span of e_2r under the new module
};

/// Embeds chi as the upper-left block of a rank-2r representation in which
/// e_2r is a cyclic eigenvector of G'_1.
inline DoubleEmbedding double_rank_embedding(const Representation& rep) {
    rep.validate();
    const Index r = rep.rank();
    const std::size_t n = rep.size();
    if (n < 3 || r < 2) {
        throw ValidationError("precondition", "needs n >= 3 and r >= 2; smaller cases are covered by commutative synthesis");
    }
    const ComplexMatrix& g1 = rep.matrices[0];

    // a vector v with v, G_1 v independent; conjugate so that G_1 e_r = e_(r-1)
    std::vector<ComplexVector> candidates;
    for (Index i = 0; i < r; ++i) candidates.push_back(ComplexVector::Unit(r, i));
    candidates.push_back(ComplexVector::Ones(r) / std::sqrt(static_cast<double>(r)));
    double best = -1.0;
    ComplexVector v;
    for (const auto& cand : candidates) {
        ComplexMatrix pair(r, 2);
        pair << cand, (g1 * cand).normalized();
        const double score = sigma_min(pair);
        if (score > best) {
            best = score;
            v = cand;
        }
    }
    if (best <= 1e-8) throw ValidationError("precondition", "G_1 is scalar");
    ComplexMatrix pair(r, 2);
    pair << v, g1 * v;
    const ComplexMatrix comp = complete_to_unitary(orthonormal_basis(pair)).rightCols(r - 2);
    ComplexMatrix s(r, r);
    s << comp, g1 * v, v;
    const Eigen::PartialPivLU<ComplexMatrix> lu(s);
    const ComplexMatrix s_inv = lu.inverse();

    std::vector<ComplexMatrix> g;
    for (const auto& m : rep.matrices) g.push_back(s_inv * m * s);

    ComplexMatrix m1 = ComplexMatrix::Zero(r, r);
    for (Index i = 0; i + 2 < r; ++i) m1(i, i) = 1.0;
    m1(r - 1, r - 2) = 1.0;
    ComplexMatrix m2 = ComplexMatrix::Identity(r, r);
    for (Index i = 0; i + 1 < r; ++i) m2(i, i + 1) = 1.0;
    const ComplexMatrix id = ComplexMatrix::Identity(r, r);

    DoubleEmbedding out;
    out.conjugator = s;
    out.rep.punctures = rep.punctures;
    out.rep.basepoint = rep.basepoint;
    for (std::size_t j = 0; j < n; ++j) {
        ComplexMatrix big = ComplexMatrix::Zero(2 * r, 2 * r);
        big.topLeftCorner(r, r) = g[j];
        if (j == 0) {
            big.topRightCorner(r, r) = m1;
            big.bottomRightCorner(r, r) = id;
        } else if (j == 1) {
            big.bottomRightCorner(r, r) = m2;
        } else if (j == 2) {
            big.topRightCorner(r, r) = -(g[0] * g[1]).inverse() * m1;
            big.bottomRightCorner(r, r) = m2.inverse();
        } else {
            big.bottomRightCorner(r, r) = id;
        }
        out.rep.matrices.push_back(big);
    }
    double scale = 1.0;
    for (const auto& m : out.rep.matrices) scale *= std::max(1.0, op_norm(m));
    out.product_defect = (out.rep.product() - ComplexMatrix::Identity(2 * r, 2 * r)).norm();
    if (out.product_defect > 1e-8 * scale) throw NumericError("product-check", "embedded matrices do not multiply to I");
    const ComplexVector e = ComplexVector::Unit(2 * r, 2 * r - 1);
    const ComplexVector g1e = out.rep.matrices[0] * e;
    out.eigenvector_ok = (g1e - g1e.dot(e) * e).norm() <= 1e-12 * std::max(1.0, g1e.norm());
    out.krylov_rank = krylov_span(out.rep.matrices, e).cols();
    return out;
}

// ------------------------------------------------------------------ rank three

enum class Rank3Verdict { realizable, not_realizable, undetermined };

inline const char* to_string(Rank3Verdict v) {
    switch (v) {
        case Rank3Verdict::realizable: return "Realizable";
        case Rank3Verdict::not_realizable: return "NotRealizable";
        case Rank3Verdict::undetermined: return "Undetermined";
    }
    return "?";
}

struct Rank3Decision {
    Rank3Verdict verdict = Rank3Verdict::undetermined;
    std::string certificate;
    int puncture = -1;                  ///< the G_k with several Jordan blocks
    Index algebra_dim = 0;              ///< 9 iff irreducible
    std::vector<Index> jordan_blocks;   ///< per puncture
    Complex exponent_sum{};             ///< sum_j norm log of the single eigenvalues
};

/// Realizable when irreducible or when some G_k has several Jordan blocks;
/// NotRealizable when reducible, every G_j is a single Jordan block and
/// sum_j mu_j is not an integer; Undetermined otherwise.
inline Rank3Decision rank3_decide(const Representation& rep, const InvariantSearchOptions& opts = {}) {
    rep.validate();
    if (rep.rank() != 3) throw ValidationError("precondition", "rank3_decide needs rank 3");
    Rank3Decision d;
    d.algebra_dim = algebra_dimension(rep, opts.budget);
    if (d.algebra_dim == 9) {
        d.verdict = Rank3Verdict::realizable;
        d.certificate = "irreducible";
        return d;
    }
    for (std::size_t j = 0; j < rep.size(); ++j) {
        d.jordan_blocks.push_back(jordan_block_count(rep.matrices[j]));
        if (d.jordan_blocks.back() > 1 && d.puncture < 0) d.puncture = static_cast<int>(j);
    }
    if (d.puncture >= 0) {
        d.verdict = Rank3Verdict::realizable;
        d.certificate = "multiple-jordan-blocks";
        return d;
    }
    for (const auto& g : rep.matrices) {
        const SpectralSplit split = spectral_split(g);
        d.exponent_sum += norm_log_scalar(split.clusters.front().value);
    }
    if (std::abs(d.exponent_sum - Complex(std::round(d.exponent_sum.real()), 0.0)) > 1e-6) {
        d.verdict = Rank3Verdict::not_realizable;
        d.certificate = "non-integral-exponent-sum";
    } else {
        d.verdict = Rank3Verdict::undetermined;
        d.certificate = "splitting-type-required";
    }
    return d;
}

} // namespace fuchsian
