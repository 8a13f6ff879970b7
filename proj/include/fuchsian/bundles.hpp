#pragma once

// Weighted flat bundles on the n-punctured sphere: a monodromy
// representation G_1 ... G_n = I together with, at every puncture, a flag of
// G_j-invariant subspaces carrying strictly decreasing integer weights.

#include <climits>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "fuchsian/local_forms.hpp"
#include "fuchsian/spectral.hpp"

namespace fuchsian {

/// Relative tolerance for subspace containment and invariance tests.
inline constexpr double kSubspaceTol = 1e-8;

/// chi: pi_1 -> GL(r), given by the loop matrices at the punctures.
/// Composition: chi(gamma_a gamma_b) = chi(gamma_a) chi(gamma_b).
struct Representation {
    std::vector<Complex> punctures;
    Complex basepoint{};
    std::vector<ComplexMatrix> matrices;

    Index rank() const { return matrices.empty() ? 0 : matrices.front().rows(); }
    std::size_t size() const { return matrices.size(); }

    ComplexMatrix product() const {
        ComplexMatrix p = ComplexMatrix::Identity(rank(), rank());
        for (const auto& g : matrices) p = p * g;
        return p;
    }

    /// Shapes, invertibility, and G_1 ... G_n = I within tol * max(1, prod |G_j|).
    void validate(double tol = 1e-8) const {
        if (matrices.empty()) throw ValidationError("shape-mismatch", "representation needs at least one matrix");
        if (punctures.size() != matrices.size()) {
            throw ValidationError("shape-mismatch", "one matrix per puncture required");
        }
        const Index r = rank();
        double scale = 1.0;
        for (const auto& g : matrices) {
            if (g.rows() != r || g.cols() != r || r == 0) {
                throw ValidationError("shape-mismatch", "monodromy matrices must be square of equal size");
            }
            require_finite(g, "monodromy matrix");
            if (sigma_min(g) <= 1e-13 * std::max(1.0, op_norm(g))) {
                throw ValidationError("singular", "monodromy matrices must be invertible");
            }
            scale *= std::max(1.0, op_norm(g));
        }
        for (std::size_t i = 0; i < punctures.size(); ++i) {
            for (std::size_t j = i + 1; j < punctures.size(); ++j) {
                if (punctures[i] == punctures[j]) throw ValidationError("duplicate-puncture", "punctures must be distinct");
            }
        }
        if ((product() - ComplexMatrix::Identity(r, r)).norm() > tol * scale) {
            throw ValidationError("product-relation", "G_1 ... G_n != I");
        }
    }
};

/// Weight reported for the zero vector.
inline constexpr int kInfiniteWeight = INT_MAX;

/// 0 = V^0 in V^1 in ... in V^l = C^r with weights psi^1 > ... > psi^l. The
/// first dims[m] columns of the unitary `basis` span V^(m+1).
class WeightedFlag {
public:
    WeightedFlag() = default;

    WeightedFlag(const ComplexMatrix& basis, std::vector<Index> dims, std::vector<int> weights)
        : dims_(std::move(dims)), weights_(std::move(weights)) {
        require_square(basis, "flag basis");
        require_finite(basis, "flag basis");
        const Index r = basis.rows();
        if (dims_.empty() || dims_.size() != weights_.size()) {
            throw ValidationError("shape-mismatch", "flag needs one weight per subspace");
        }
        for (std::size_t m = 0; m < dims_.size(); ++m) {
            if (dims_[m] <= (m ? dims_[m - 1] : 0)) throw ValidationError("bad-flag", "flag dimensions must increase");
            if (m && weights_[m] >= weights_[m - 1]) {
                throw ValidationError("bad-flag", "flag weights must strictly decrease");
            }
        }
        if (dims_.back() != r) throw ValidationError("bad-flag", "last flag subspace must be the whole space");
        if (numerical_rank(basis, 1e-10) != r) throw ValidationError("bad-flag", "flag basis must be invertible");
        if ((basis.adjoint() * basis - ComplexMatrix::Identity(r, r)).norm() <= 1e-13) {
            basis_ = basis;
            return;
        }
        // Householder QR keeps the nested column spans; fix phases so R has a positive diagonal
        Eigen::HouseholderQR<ComplexMatrix> qr(basis);
        basis_ = qr.householderQ();
        const ComplexMatrix& packed = qr.matrixQR();
        for (Index i = 0; i < r; ++i) {
            const Complex d = packed(i, i);
            if (std::abs(d) > 0.0) basis_.col(i) *= d / std::abs(d);
        }
    }

    /// C^r with the single weight w.
    static WeightedFlag trivial(Index r, int w = 0) {
        return WeightedFlag(ComplexMatrix::Identity(r, r), {r}, {w});
    }

    /// Build from nested spans (columns need not be orthonormal) and their weights.
    static WeightedFlag from_pieces(const std::vector<ComplexMatrix>& spans, const std::vector<int>& weights) {
        if (spans.empty()) throw ValidationError("bad-flag", "flag needs at least one subspace");
        const Index r = spans.front().rows();
        ComplexMatrix basis(r, 0);
        std::vector<Index> dims;
        for (const auto& s : spans) {
            const ComplexMatrix proj = ComplexMatrix::Identity(r, r) - basis * basis.adjoint();
            const ComplexMatrix extra = orthonormal_basis(proj * s, 1e-9, std::max(1.0, s.norm()));
            ComplexMatrix grown(r, basis.cols() + extra.cols());
            grown << basis, extra;
            basis = grown;
            dims.push_back(basis.cols());
        }
        return WeightedFlag(basis, dims, weights);
    }

    Index rank() const { return basis_.rows(); }
    std::size_t length() const { return dims_.size(); }
    const ComplexMatrix& basis() const { return basis_; }
    const std::vector<Index>& dims() const { return dims_; }
    const std::vector<int>& weights() const { return weights_; }

    /// Orthonormal basis of V^(m+1), m = 0..length-1.
    ComplexMatrix subspace(std::size_t m) const { return basis_.leftCols(dims_[m]); }

    /// Phi = diag(phi^1 >= ... >= phi^r): psi^m repeated dim V^m / V^(m-1) times.
    WeightDiagonal weight_diagonal() const {
        std::vector<int> e;
        Index prev = 0;
        for (std::size_t m = 0; m < dims_.size(); ++m) {
            for (Index i = prev; i < dims_[m]; ++i) e.push_back(weights_[m]);
            prev = dims_[m];
        }
        return WeightDiagonal(std::move(e));
    }

    long weight_trace() const { return weight_diagonal().trace(); }

    bool invariant_under(const ComplexMatrix& g, double tol = kSubspaceTol) const {
        const Index r = rank();
        for (std::size_t m = 0; m + 1 < dims_.size(); ++m) {
            const ComplexMatrix q = subspace(m);
            const ComplexMatrix leak = (ComplexMatrix::Identity(r, r) - q * q.adjoint()) * g * q;
            if (leak.norm() > tol * std::max(1.0, op_norm(g))) return false;
        }
        return true;
    }

    /// The flag with every weight shifted by s.
    WeightedFlag shifted(int s) const {
        std::vector<int> w = weights_;
        for (int& x : w) x += s;
        return WeightedFlag(basis_, dims_, w);
    }

private:
    ComplexMatrix basis_;
    std::vector<Index> dims_;
    std::vector<int> weights_;
};

/// phi(v) = psi^m for the first V^m containing v; +infinity for v = 0.
inline int weight_of(const WeightedFlag& flag, const ComplexVector& v, double tol = 1e-9) {
    const double nv = v.norm();
    if (nv <= 1e-14) return kInfiniteWeight;
    for (std::size_t m = 0; m < flag.length(); ++m) {
        const ComplexMatrix q = flag.subspace(m);
        const ComplexVector rest = v - q * (q.adjoint() * v);
        if (rest.norm() <= tol * nv) return flag.weights()[m];
    }
    return flag.weights().back();
}

struct WeightedFlatBundle {
    Representation rep;
    std::vector<WeightedFlag> flags;

    Index rank() const { return rep.rank(); }

    void validate(double tol = 1e-8) const {
        rep.validate(tol);
        if (flags.size() != rep.size()) throw ValidationError("shape-mismatch", "one flag per puncture required");
        for (std::size_t j = 0; j < flags.size(); ++j) {
            if (flags[j].rank() != rep.rank()) throw ValidationError("shape-mismatch", "flag rank differs from rep rank");
            if (!flags[j].invariant_under(rep.matrices[j])) {
                throw ValidationError("non-invariant-flag", "flag at puncture " + std::to_string(j) + " is not invariant");
            }
        }
    }

    /// Bundle with trivial flags of weight zero.
    static WeightedFlatBundle canonical(const Representation& rep) {
        WeightedFlatBundle b{rep, {}};
        for (std::size_t j = 0; j < rep.size(); ++j) b.flags.push_back(WeightedFlag::trivial(rep.rank()));
        return b;
    }
};

/// Exact rational number with positive denominator in lowest terms.
struct Rational {
    std::int64_t num = 0;
    std::int64_t den = 1;

    Rational() = default;
    Rational(std::int64_t n, std::int64_t d = 1) : num(n), den(d) {
        if (den == 0) throw ValidationError("division-by-zero", "rational with zero denominator");
        if (den < 0) {
            num = -num;
            den = -den;
        }
        const std::int64_t g = std::gcd(num < 0 ? -num : num, den);
        if (g > 1) {
            num /= g;
            den /= g;
        }
    }

    friend bool operator==(const Rational& a, const Rational& b) { return a.num == b.num && a.den == b.den; }
    friend bool operator<(const Rational& a, const Rational& b) { return a.num * b.den < b.num * a.den; }
    friend bool operator>(const Rational& a, const Rational& b) { return b < a; }
    friend bool operator<=(const Rational& a, const Rational& b) { return !(b < a); }
    friend bool operator>=(const Rational& a, const Rational& b) { return !(a < b); }

    std::string str() const { return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den); }
};

/// Sum_j Tr(norm log G_j), checked to be real.
inline double norm_log_trace_sum(const Representation& rep) {
    Complex sum = 0.0;
    for (const auto& g : rep.matrices) sum += norm_log(g).k.trace();
    return sum.real();
}

/// deg = sum_j { Tr Phi_j + Tr norm log G_j }, an integer.
inline long degree(const WeightedFlatBundle& b, double tol = 1e-6) {
    Complex sum = 0.0;
    for (std::size_t j = 0; j < b.rep.size(); ++j) {
        sum += static_cast<double>(b.flags[j].weight_trace());
        sum += norm_log(b.rep.matrices[j]).k.trace();
    }
    const double rounded = std::round(sum.real());
    if (std::abs(sum.imag()) > tol || std::abs(sum.real() - rounded) > tol) {
        throw ValidationError("non-integral-degree", "degree is not an integer: inconsistent representation");
    }
    return static_cast<long>(rounded);
}

inline Rational slope(const WeightedFlatBundle& b) { return Rational(degree(b), b.rank()); }

/// A subrepresentation W (orthonormal columns, G_j W = W) with the induced
/// weighted bundle expressed in W's coordinates.
struct SubBundle {
    ComplexMatrix basis;
    WeightedFlatBundle bundle;
};

/// Induced flag on W: the distinct subspaces W cap V^m, each with the first
/// weight at which it appears. Coordinates are those of W's columns.
inline WeightedFlag induced_flag(const WeightedFlag& flag, const ComplexMatrix& w) {
    const Index r = flag.rank();
    std::vector<ComplexMatrix> spans;
    std::vector<int> weights;
    Index last_dim = 0;
    for (std::size_t m = 0; m < flag.length(); ++m) {
        const ComplexMatrix q = flag.subspace(m);
        const ComplexMatrix leak = (ComplexMatrix::Identity(r, r) - q * q.adjoint()) * w;
        const ComplexMatrix inter = null_space(leak, 1e-8, 1.0);
        if (inter.cols() > last_dim) {
            spans.push_back(inter);
            weights.push_back(flag.weights()[m]);
            last_dim = inter.cols();
        }
    }
    return WeightedFlag::from_pieces(spans, weights);
}

inline SubBundle restrict_bundle(const WeightedFlatBundle& b, const ComplexMatrix& w_cols) {
    const ComplexMatrix w = orthonormal_basis(w_cols, 1e-9);
    SubBundle s;
    s.basis = w;
    s.bundle.rep.punctures = b.rep.punctures;
    s.bundle.rep.basepoint = b.rep.basepoint;
    for (std::size_t j = 0; j < b.rep.size(); ++j) {
        const ComplexMatrix& g = b.rep.matrices[j];
        const ComplexMatrix leak = (ComplexMatrix::Identity(g.rows(), g.rows()) - w * w.adjoint()) * g * w;
        if (leak.norm() > kSubspaceTol * std::max(1.0, op_norm(g))) {
            throw ValidationError("non-invariant-subspace", "subspace is not invariant under the monodromy");
        }
        s.bundle.rep.matrices.push_back(w.adjoint() * g * w);
        s.bundle.flags.push_back(induced_flag(b.flags[j], w));
    }
    return s;
}

/// Common invariant subspaces found by the algebra search.
struct InvariantSubspaces {
    std::vector<ComplexMatrix> subspaces;  ///< proper, non-zero, orthonormal columns
    bool complete = false;
    Index algebra_dim = 0;
};

struct InvariantSearchOptions {
    long budget = 20000;          ///< maximum number of word products
    std::uint64_t seed = 0x5eed;  ///< random algebra elements
    int attempts = 8;             ///< random elements tried for a cyclic one
    long max_candidates = 4096;   ///< submodule combinations examined
};

namespace detail {

/// Orthonormal basis (Frobenius inner product) of the algebra generated by
/// the matrices, built by closing words under left multiplication.
inline std::vector<ComplexMatrix> algebra_basis(const std::vector<ComplexMatrix>& gens, long budget) {
    const Index r = gens.front().rows();
    const Index full = r * r;
    std::vector<ComplexMatrix> basis;
    auto try_add = [&](ComplexMatrix m) -> bool {
        const double n0 = m.norm();
        if (n0 == 0.0) return false;
        m /= n0;
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto& e : basis) m -= e.conjugate().cwiseProduct(m).sum() * e;
        }
        const double n1 = m.norm();
        if (n1 <= 1e-9) return false;
        basis.push_back(m / n1);
        return true;
    };
    try_add(ComplexMatrix::Identity(r, r));
    std::size_t frontier = 0;
    long products = 0;
    while (frontier < basis.size() && static_cast<Index>(basis.size()) < full) {
        const ComplexMatrix e = basis[frontier++];
        for (const auto& g : gens) {
            if (++products > budget) throw NumericError("budget-exhausted", "algebra closure exceeded the word budget");
            try_add(g * e);
            if (static_cast<Index>(basis.size()) == full) break;
        }
    }
    return basis;
}

inline bool is_invariant(const std::vector<ComplexMatrix>& gens, const ComplexMatrix& q) {
    const Index r = q.rows();
    const ComplexMatrix proj = ComplexMatrix::Identity(r, r) - q * q.adjoint();
    for (const auto& g : gens) {
        if ((proj * g * q).norm() > kSubspaceTol * std::max(1.0, op_norm(g))) return false;
    }
    return true;
}

inline bool same_subspace(const ComplexMatrix& a, const ComplexMatrix& b) {
    if (a.cols() != b.cols()) return false;
    return (a * a.adjoint() - b * b.adjoint()).norm() <= 1e-7;
}

inline void add_unique(std::vector<ComplexMatrix>& list, const ComplexMatrix& q) {
    for (const auto& x : list) {
        if (same_subspace(x, q)) return;
    }
    list.push_back(q);
}

inline ComplexMatrix random_algebra_element(const std::vector<ComplexMatrix>& basis, std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    ComplexMatrix a = ComplexMatrix::Zero(basis.front().rows(), basis.front().cols());
    for (const auto& e : basis) a += Complex(nd(rng), nd(rng)) * e;
    return a;
}

/// Generalized eigenspace data of a, or nullopt when some eigenvalue has more
/// than one Jordan block (a is derogatory).
struct CyclicSplit {
    std::vector<ComplexMatrix> cluster_bases;
    std::vector<ComplexMatrix> nilpotents;  ///< restriction of a - rho to each cluster
};

inline std::optional<CyclicSplit> cyclic_split(const ComplexMatrix& a) {
    const SpectralSplit split = spectral_split(a);
    const double scale = std::max(1.0, op_norm(a));
    CyclicSplit out;
    for (const auto& c : split.clusters) {
        const ComplexMatrix restricted = c.basis.adjoint() * a * c.basis;
        const ComplexMatrix nil = restricted - c.value * ComplexMatrix::Identity(c.multiplicity, c.multiplicity);
        const Index geometric = c.multiplicity - numerical_rank(nil, 1e-7, scale);
        if (geometric != 1) return std::nullopt;
        out.cluster_bases.push_back(c.basis);
        out.nilpotents.push_back(nil);
    }
    return out;
}

} // namespace detail

/// Dimension of the algebra generated by the monodromy matrices.
inline Index algebra_dimension(const Representation& rep, long budget = 20000) {
    return static_cast<Index>(detail::algebra_basis(rep.matrices, budget).size());
}

/// Common invariant subspaces of the G_j. Complete when the algebra is all
/// of End(C^r) (irreducible) or when a random algebra element is cyclic, so
/// that every submodule is a sum of kernels ker (a - lambda_i)^(t_i).
inline InvariantSubspaces invariant_subspaces(const Representation& rep, const InvariantSearchOptions& opts = {}) {
    const Index r = rep.rank();
    const std::vector<ComplexMatrix> basis = detail::algebra_basis(rep.matrices, opts.budget);
    InvariantSubspaces out;
    out.algebra_dim = static_cast<Index>(basis.size());
    if (out.algebra_dim == r * r) {
        out.complete = true;
        return out;
    }
    std::mt19937_64 rng(opts.seed);
    for (int attempt = 0; attempt < opts.attempts; ++attempt) {
        const ComplexMatrix a = detail::random_algebra_element(basis, rng);
        const auto split = detail::cyclic_split(a);
        if (!split) continue;
        // enumerate exponent tuples 0 <= t_i <= m_i
        const std::size_t nc = split->cluster_bases.size();
        std::vector<std::vector<ComplexMatrix>> kernels(nc);
        long combos = 1;
        for (std::size_t i = 0; i < nc; ++i) {
            const Index m = split->cluster_bases[i].cols();
            combos *= (m + 1);
            ComplexMatrix power = ComplexMatrix::Identity(m, m);
            kernels[i].push_back(ComplexMatrix(r, 0));
            for (Index t = 1; t <= m; ++t) {
                power = power * split->nilpotents[i];
                kernels[i].push_back(split->cluster_bases[i] * smallest_right_singular_vectors(power, t));
            }
        }
        if (combos > opts.max_candidates) break;
        std::vector<Index> t(nc, 0);
        for (long c = 0; c < combos; ++c) {
            long rest = c;
            Index dim = 0;
            for (std::size_t i = 0; i < nc; ++i) {
                const Index m = split->cluster_bases[i].cols();
                t[i] = rest % (m + 1);
                rest /= (m + 1);
                dim += t[i];
            }
            if (dim == 0 || dim == r) continue;
            ComplexMatrix cols(r, dim);
            Index off = 0;
            for (std::size_t i = 0; i < nc; ++i) {
                cols.middleCols(off, t[i]) = kernels[i][static_cast<std::size_t>(t[i])];
                off += t[i];
            }
            const ComplexMatrix q = orthonormal_basis(cols, 1e-10);
            if (q.cols() == dim && detail::is_invariant(rep.matrices, q)) detail::add_unique(out.subspaces, q);
        }
        out.complete = true;
        return out;
    }
    // partial list: cyclic submodules generated by eigenvectors of a random element
    const ComplexMatrix a = detail::random_algebra_element(basis, rng);
    const SpectralSplit split = spectral_split(a);
    for (const auto& c : split.clusters) {
        const ComplexMatrix restricted = c.basis.adjoint() * a * c.basis;
        const ComplexMatrix nil = restricted - c.value * ComplexMatrix::Identity(c.multiplicity, c.multiplicity);
        const ComplexMatrix ker = c.basis * null_space(nil, 1e-7, std::max(1.0, op_norm(a)));
        for (Index k = 0; k < ker.cols(); ++k) {
            ComplexMatrix orbit(r, static_cast<Index>(basis.size()));
            for (std::size_t e = 0; e < basis.size(); ++e) orbit.col(static_cast<Index>(e)) = basis[e] * ker.col(k);
            const ComplexMatrix q = orthonormal_basis(orbit, 1e-9);
            if (q.cols() > 0 && q.cols() < r && detail::is_invariant(rep.matrices, q)) detail::add_unique(out.subspaces, q);
        }
    }
    out.complete = false;
    return out;
}

enum class Stability { stable, semistable, unstable, undetermined };

inline const char* to_string(Stability s) {
    switch (s) {
        case Stability::stable: return "Stable";
        case Stability::semistable: return "Semistable";
        case Stability::unstable: return "Unstable";
        case Stability::undetermined: return "Undetermined";
    }
    return "Undetermined";
}

struct SemistabilityResult {
    Stability verdict = Stability::undetermined;
    Rational total_slope;
    /// Largest subsystem slope among the examined candidates, if any.
    std::optional<Rational> max_sub_slope;
    /// A subsystem attaining max_sub_slope.
    std::optional<ComplexMatrix> witness;
    std::string reason;
};

/// Induced degree of an invariant subspace W.
inline long sub_degree(const WeightedFlatBundle& b, const ComplexMatrix& w) {
    return degree(restrict_bundle(b, w).bundle);
}

/// Stability by comparing subsystem slopes against the total slope.
inline SemistabilityResult semistable(const WeightedFlatBundle& b, const InvariantSearchOptions& opts = {}) {
    b.validate();
    const Index r = b.rank();
    SemistabilityResult res;
    res.total_slope = slope(b);
    const InvariantSubspaces inv = invariant_subspaces(b.rep, opts);
    if (inv.complete && inv.subspaces.empty() && inv.algebra_dim == r * r) {
        res.verdict = Stability::stable;
        res.reason = "irreducible";
        return res;
    }

    std::vector<ComplexMatrix> candidates = inv.subspaces;
    bool exact = inv.complete;
    const bool scalar_algebra = inv.algebra_dim == 1;
    if (!exact) {
        for (std::size_t j = 0; j < b.flags.size(); ++j) {
            for (std::size_t m = 0; m + 1 < b.flags[j].length(); ++m) {
                const ComplexMatrix q = b.flags[j].subspace(m);
                if (detail::is_invariant(b.rep.matrices, q)) detail::add_unique(candidates, q);
            }
        }
    }
    bool all_flags_trivial = true;
    for (const auto& f : b.flags) all_flags_trivial = all_flags_trivial && f.length() == 1;
    if (scalar_algebra && r == 2) {
        // every line is invariant; its induced weight at j is the top weight if it is
        // the flag line and the bottom weight otherwise, so flag lines plus one
        // generic line exhaust the possible slopes
        std::mt19937_64 rng(opts.seed);
        std::normal_distribution<double> nd;
        ComplexMatrix generic(2, 1);
        generic << Complex(nd(rng), nd(rng)), Complex(nd(rng), nd(rng));
        detail::add_unique(candidates, orthonormal_basis(generic));
        exact = true;
    }

    for (const auto& w : candidates) {
        const Rational s(sub_degree(b, w), w.cols());
        if (!res.max_sub_slope || s > *res.max_sub_slope) {
            res.max_sub_slope = s;
            res.witness = w;
        }
    }
    if (res.max_sub_slope && *res.max_sub_slope > res.total_slope) {
        res.verdict = Stability::unstable;
        res.reason = "destabilizing subsystem";
        return res;
    }
    if (scalar_algebra && all_flags_trivial) {
        // every subspace has the slope of the whole bundle
        res.verdict = Stability::semistable;
        res.reason = "scalar monodromy with trivial flags";
        return res;
    }
    if (!exact) {
        res.verdict = Stability::undetermined;
        res.reason = "submodule enumeration incomplete";
        return res;
    }
    if (res.max_sub_slope && *res.max_sub_slope == res.total_slope) {
        res.verdict = Stability::semistable;
        res.reason = "subsystem of equal slope";
    } else {
        res.verdict = Stability::stable;
        res.reason = "all subsystems have smaller slope";
    }
    return res;
}

/// Data of a split extension 0 -> sub -> total -> quot -> 0: the total matrices
/// are [[G'_j, X_j], [0, G''_j]] and alpha = [a; I] satisfies G_k alpha = alpha G''_k.
struct SplitExtensionData {
    std::vector<ComplexMatrix> off_diagonal;  ///< X_j, r' x r''
    std::size_t k = 0;                        ///< puncture with the splitting
    ComplexMatrix alpha;                      ///< r x r'', right inverse of the projection
};

namespace detail {

/// dim (A cap B) for subspaces given by orthonormal columns.
inline Index intersection_dim(const ComplexMatrix& a, const ComplexMatrix& b) {
    if (a.cols() == 0 || b.cols() == 0) return 0;
    ComplexMatrix ab(a.rows(), a.cols() + b.cols());
    ab << a, b;
    return a.cols() + b.cols() - numerical_rank(ab, 1e-8, 1.0);
}

} // namespace detail

/// The total weighted bundle of a split extension: stacked flags away from k
/// (requires every sub weight to exceed every quotient weight there) and the
/// direct-sum filtration iota(V'_{>=w}) + alpha(V''_{>=w}) at k.
inline WeightedFlatBundle induce_weights_split_extension(const WeightedFlatBundle& sub, const WeightedFlatBundle& quot,
                                                         const SplitExtensionData& data) {
    const std::size_t n = sub.rep.size();
    if (quot.rep.size() != n || data.off_diagonal.size() != n || data.k >= n) {
        throw ValidationError("shape-mismatch", "sub, quotient and extension data need the same punctures");
    }
    const Index r1 = sub.rank();
    const Index r2 = quot.rank();
    const Index r = r1 + r2;

    WeightedFlatBundle total;
    total.rep.punctures = sub.rep.punctures;
    total.rep.basepoint = sub.rep.basepoint;
    for (std::size_t j = 0; j < n; ++j) {
        const ComplexMatrix& x = data.off_diagonal[j];
        if (x.rows() != r1 || x.cols() != r2) throw ValidationError("shape-mismatch", "off-diagonal block has wrong shape");
        ComplexMatrix g = ComplexMatrix::Zero(r, r);
        g.topLeftCorner(r1, r1) = sub.rep.matrices[j];
        g.topRightCorner(r1, r2) = x;
        g.bottomRightCorner(r2, r2) = quot.rep.matrices[j];
        total.rep.matrices.push_back(g);
    }
    total.rep.validate();

    if (data.alpha.rows() != r || data.alpha.cols() != r2) throw ValidationError("shape-mismatch", "alpha has wrong shape");
    const ComplexMatrix& gk = total.rep.matrices[data.k];
    const double alpha_scale = std::max(1.0, op_norm(data.alpha) * op_norm(gk));
    if ((data.alpha.bottomRows(r2) - ComplexMatrix::Identity(r2, r2)).norm() > 1e-9 * alpha_scale) {
        throw ValidationError("bad-right-inverse", "alpha is not a right inverse of the projection");
    }
    if ((gk * data.alpha - data.alpha * quot.rep.matrices[data.k]).norm() > 1e-8 * alpha_scale) {
        throw ValidationError("bad-right-inverse", "alpha does not intertwine the monodromy at k");
    }

    ComplexMatrix iota = ComplexMatrix::Zero(r, r1);
    iota.topRows(r1) = ComplexMatrix::Identity(r1, r1);

    for (std::size_t j = 0; j < n; ++j) {
        const WeightedFlag& f1 = sub.flags[j];
        const WeightedFlag& f2 = quot.flags[j];
        std::vector<ComplexMatrix> spans;
        std::vector<int> weights;
        if (j != data.k) {
            const int min_sub = f1.weights().back();
            const int max_quot = f2.weights().front();
            if (min_sub <= max_quot) {
                throw ValidationError("weight-order", "sub weights must exceed quotient weights at puncture " +
                                                          std::to_string(j));
            }
            for (std::size_t m = 0; m < f1.length(); ++m) {
                spans.push_back(iota * f1.subspace(m));
                weights.push_back(f1.weights()[m]);
            }
            for (std::size_t m = 0; m < f2.length(); ++m) {
                ComplexMatrix s = ComplexMatrix::Zero(r, r1 + f2.dims()[m]);
                s.topLeftCorner(r1, r1) = ComplexMatrix::Identity(r1, r1);
                s.bottomRightCorner(r2, f2.dims()[m]) = f2.subspace(m);
                spans.push_back(s);
                weights.push_back(f2.weights()[m]);
            }
        } else {
            std::vector<int> all = f1.weights();
            all.insert(all.end(), f2.weights().begin(), f2.weights().end());
            std::sort(all.begin(), all.end(), std::greater<>());
            all.erase(std::unique(all.begin(), all.end()), all.end());
            for (int w : all) {
                Index d1 = 0, d2 = 0;
                for (std::size_t m = 0; m < f1.length(); ++m) {
                    if (f1.weights()[m] >= w) d1 = f1.dims()[m];
                }
                for (std::size_t m = 0; m < f2.length(); ++m) {
                    if (f2.weights()[m] >= w) d2 = f2.dims()[m];
                }
                if (d1 + d2 == 0) continue;
                ComplexMatrix s(r, d1 + d2);
                s.leftCols(d1) = iota * f1.basis().leftCols(d1);
                s.rightCols(d2) = data.alpha * f2.basis().leftCols(d2);
                spans.push_back(s);
                weights.push_back(w);
            }
        }
        total.flags.push_back(WeightedFlag::from_pieces(spans, weights));
    }
    total.validate();

    // injection: iota^-1(V_{>=w}) = V'_{>=w}; surjection: pi(V_{>=w}) = V''_{>=w}
    const ComplexMatrix iota_q = iota;
    for (std::size_t j = 0; j < n; ++j) {
        const WeightedFlag& f = total.flags[j];
        for (std::size_t m = 0; m < f.length(); ++m) {
            const int w = f.weights()[m];
            Index d1 = 0, d2 = 0;
            for (std::size_t q = 0; q < sub.flags[j].length(); ++q) {
                if (sub.flags[j].weights()[q] >= w) d1 = sub.flags[j].dims()[q];
            }
            for (std::size_t q = 0; q < quot.flags[j].length(); ++q) {
                if (quot.flags[j].weights()[q] >= w) d2 = quot.flags[j].dims()[q];
            }
            const ComplexMatrix v = f.subspace(m);
            if (detail::intersection_dim(iota_q, v) != d1) {
                throw NumericError("weight-check", "inclusion is not an injection of weighted bundles");
            }
            const ComplexMatrix image = v.bottomRows(r2);
            if (numerical_rank(image, 1e-8, 1.0) != d2) {
                throw NumericError("weight-check", "projection is not a surjection of weighted bundles");
            }
            if (d2 > 0) {
                const ComplexMatrix target = quot.flags[j].basis().leftCols(d2);
                const ComplexMatrix leak = (ComplexMatrix::Identity(r2, r2) - target * target.adjoint()) * image;
                if (leak.norm() > 1e-8 * std::max(1.0, image.norm())) {
                    throw NumericError("weight-check", "projection lowers weights");
                }
            }
        }
    }
    return total;
}

/// The extension of a weighted local system across one puncture:
/// d + z^Phi (-K - Phi) z^-Phi dz/z in a basis adapted to the flag.
struct LocalExtension {
    LocalLogConnection connection;
    ComplexMatrix frame;  ///< adapted unitary basis (columns)
    ComplexMatrix k;      ///< norm log of the monodromy in that basis
    WeightDiagonal phi;
};

inline LocalExtension local_extension(const ComplexMatrix& g, const WeightedFlag& flag) {
    require_square(g, "monodromy");
    if (g.rows() != flag.rank()) throw ValidationError("shape-mismatch", "flag rank differs from matrix size");
    if (!flag.invariant_under(g)) throw ValidationError("non-invariant-flag", "flag is not invariant under G");
    const ComplexMatrix q = flag.basis();
    const ComplexMatrix ga = q.adjoint() * g * q;
    ComplexMatrix k = norm_log(ga).k;
    const WeightDiagonal phi = flag.weight_diagonal();
    for (Index i = 0; i < k.rows(); ++i) {
        for (Index c = 0; c < k.cols(); ++c) {
            if (phi[i] < phi[c]) k(i, c) = 0.0;
        }
    }
    return {LocalLogConnection(normal_connection(k, phi)), q, k, phi};
}

} // namespace fuchsian
