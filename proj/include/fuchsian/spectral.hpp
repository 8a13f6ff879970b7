#pragma once

// Eigenstructure of complex matrices: Schur forms with reordering,
// clustering into generalised eigenspaces, and the normalised logarithm
// K = norm log G with exp(2 pi i K) = G and Re(spec K) in [0, 1).

#include <algorithm>
#include <complex>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "fuchsian/linalg.hpp"

namespace fuchsian {

struct SpectralOptions {
    /// Relative distance below which two eigenvalues are one cluster.
    double cluster_tol = 1e-8;
    /// Adjacent clusters whose Schur decoupling has norm above this are
    /// numerically inseparable (a split Jordan block) ...
    double decoupling_limit = 1e4;
    /// ... and are merged when the merged cluster stays this narrow (relative).
    double merge_diameter = 1e-2;
    /// Re(mu) within this of 0 or 1 is snapped onto the half-open branch [0, 1).
    double branch_snap = 1e-9;
};

/// Complex Schur form G = U T U^*.
struct SchurForm {
    ComplexMatrix unitary;
    ComplexMatrix upper;
};

inline SchurForm schur(const ComplexMatrix& g) {
    require_square(g, "matrix");
    require_finite(g, "matrix");
    Eigen::ComplexSchur<ComplexMatrix> cs(g.rows());
    cs.compute(g, true);
    if (cs.info() != Eigen::Success) {
        throw NumericError("eigen-nonconvergence", "Schur QR iteration did not converge within " +
                                                       std::to_string(cs.getMaxIterations()) + " iterations");
    }
    SchurForm out{cs.matrixU(), cs.matrixT()};
    for (Index i = 0; i < out.upper.rows(); ++i) {
        for (Index j = 0; j < i; ++j) out.upper(i, j) = 0.0;
    }
    return out;
}

/// Swap the diagonal entries k and k+1 of the Schur form by a Givens rotation.
inline void swap_schur_adjacent(SchurForm& s, Index k) {
    const Complex a = s.upper(k, k);
    const Complex b = s.upper(k, k + 1);
    const Complex c = s.upper(k + 1, k + 1);
    // eigenvector of the 2x2 block for eigenvalue c
    const Complex x1 = b;
    const Complex x2 = c - a;
    const double nrm = std::hypot(std::abs(x1), std::abs(x2));
    if (nrm == 0.0) return;
    Eigen::Matrix2cd q;
    q << x1 / nrm, -std::conj(x2) / nrm, x2 / nrm, std::conj(x1) / nrm;
    const Index n = s.upper.rows();
    s.upper.block(k, 0, 2, n) = q.adjoint() * s.upper.block(k, 0, 2, n);
    s.upper.block(0, k, n, 2) = s.upper.block(0, k, n, 2) * q;
    s.unitary.block(0, k, n, 2) = s.unitary.block(0, k, n, 2) * q;
    s.upper(k + 1, k) = 0.0;
    s.upper(k, k) = c;
    s.upper(k + 1, k + 1) = a;
}

/// Stable bubble sort of the Schur diagonal by `rank_of_position` (smaller first).
/// The ranks are permuted along with the diagonal.
inline void reorder_schur(SchurForm& s, std::vector<int>& rank_of_position) {
    const Index n = s.upper.rows();
    bool moved = true;
    while (moved) {
        moved = false;
        for (Index k = 0; k + 1 < n; ++k) {
            auto& lo = rank_of_position[static_cast<std::size_t>(k)];
            auto& hi = rank_of_position[static_cast<std::size_t>(k + 1)];
            if (hi < lo) {
                swap_schur_adjacent(s, k);
                std::swap(lo, hi);
                moved = true;
            }
        }
    }
}

/// A block-diagonal similarity: transform^{-1} G transform = blocks.
struct BlockForm {
    struct Block {
        Index offset;
        Index size;
    };
    ComplexMatrix transform;
    ComplexMatrix block_diagonal;
    std::vector<Block> blocks;
    /// Norm of each decoupling Sylvester solution (block k against the rest).
    std::vector<double> decoupling_norms;
};

/// Decouple a reordered Schur form whose diagonal is grouped into the given
/// consecutive block sizes.
inline BlockForm decouple_schur(const SchurForm& s, const std::vector<Index>& sizes) {
    const Index n = s.upper.rows();
    BlockForm out;
    out.transform = s.unitary;
    ComplexMatrix t = s.upper;
    Index offset = 0;
    for (std::size_t b = 0; b < sizes.size(); ++b) {
        const Index sz = sizes[b];
        out.blocks.push_back({offset, sz});
        const Index rest = n - offset - sz;
        if (rest > 0) {
            const ComplexMatrix t11 = t.block(offset, offset, sz, sz);
            const ComplexMatrix t12 = t.block(offset, offset + sz, sz, rest);
            const ComplexMatrix t22 = t.block(offset + sz, offset + sz, rest, rest);
            const ComplexMatrix y = solve_sylvester(t11, t22, -t12, 1e-15);
            out.decoupling_norms.push_back(op_norm(y));
            // T <- X^{-1} T X with X = [[I, Y], [0, I]] on the trailing part
            t.block(offset, offset + sz, sz, rest).setZero();
            out.transform.block(0, offset + sz, n, rest) += out.transform.block(0, offset, n, sz) * y;
        } else {
            out.decoupling_norms.push_back(0.0);
        }
        offset += sz;
    }
    for (std::size_t a = 0; a < out.blocks.size(); ++a) {
        for (std::size_t b = 0; b < out.blocks.size(); ++b) {
            if (a != b) t.block(out.blocks[a].offset, out.blocks[b].offset, out.blocks[a].size, out.blocks[b].size).setZero();
        }
    }
    out.block_diagonal = t;
    return out;
}

/// Group eigenvalue positions by label (labels 0..k-1 give the block order),
/// reorder the Schur form accordingly and decouple.
inline BlockForm block_diagonalize(SchurForm s, std::vector<int> labels, int label_count) {
    reorder_schur(s, labels);
    std::vector<Index> sizes(static_cast<std::size_t>(label_count), 0);
    for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
    std::vector<Index> nonempty;
    for (Index sz : sizes) {
        if (sz > 0) nonempty.push_back(sz);
    }
    return decouple_schur(s, nonempty);
}

/// One cluster of eigenvalues with an orthonormal basis of the sum of their
/// generalised eigenspaces.
struct SpectralCluster {
    Complex value;  ///< representative (mean of the member eigenvalues)
    Index multiplicity;
    ComplexMatrix basis;
};

struct SpectralSplit {
    std::vector<SpectralCluster> clusters;
    /// Internal block form (transform^{-1} G transform block diagonal, blocks in cluster order).
    BlockForm form;
};

namespace detail {

inline double relative_gap(Complex a, Complex b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

/// Single-linkage clustering; returns labels ordered by first appearance.
inline std::vector<int> cluster_labels(const std::vector<Complex>& eig, double tol, int& count) {
    const std::size_t n = eig.size();
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
        while (parent[static_cast<std::size_t>(x)] != x) x = parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
        return x;
    };
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (relative_gap(eig[i], eig[j]) < tol) parent[static_cast<std::size_t>(find(static_cast<int>(i)))] = find(static_cast<int>(j));
        }
    }
    std::vector<int> label(n, -1), root_label(n, -1);
    count = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const int r = find(static_cast<int>(i));
        if (root_label[static_cast<std::size_t>(r)] < 0) root_label[static_cast<std::size_t>(r)] = count++;
        label[i] = root_label[static_cast<std::size_t>(r)];
    }
    return label;
}

inline double cluster_diameter(const std::vector<Complex>& eig, const std::vector<int>& labels, int a, int b) {
    double d = 0.0;
    for (std::size_t i = 0; i < eig.size(); ++i) {
        if (labels[i] != a && labels[i] != b) continue;
        for (std::size_t j = 0; j < eig.size(); ++j) {
            if (labels[j] != a && labels[j] != b) continue;
            d = std::max(d, relative_gap(eig[i], eig[j]));
        }
    }
    return d;
}

} // namespace detail

/// Split C^r into generalised eigenspaces of g, clustering eigenvalues closer
/// than opts.cluster_tol (relative) and merging numerically inseparable
/// neighbours (split Jordan blocks).
inline SpectralSplit spectral_split(const ComplexMatrix& g, const SpectralOptions& opts = {}) {
    const SchurForm base = schur(g);
    const Index n = g.rows();
    std::vector<Complex> eig(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) eig[static_cast<std::size_t>(i)] = base.upper(i, i);

    int count = 0;
    std::vector<int> labels = detail::cluster_labels(eig, opts.cluster_tol, count);

    for (int guard = 0; guard < static_cast<int>(n) + 1; ++guard) {
        BlockForm form = block_diagonalize(base, labels, count);
        // find an ill-conditioned split and merge it with its nearest cluster
        int merge_a = -1, merge_b = -1;
        for (int b = 0; b < count && merge_a < 0; ++b) {
            if (form.decoupling_norms[static_cast<std::size_t>(b)] <= opts.decoupling_limit) continue;
            double best = 1e300;
            int partner = -1;
            for (std::size_t i = 0; i < eig.size(); ++i) {
                if (labels[i] != b) continue;
                for (std::size_t j = 0; j < eig.size(); ++j) {
                    if (labels[j] <= b) continue;
                    const double gap = detail::relative_gap(eig[i], eig[j]);
                    if (gap < best) {
                        best = gap;
                        partner = labels[j];
                    }
                }
            }
            if (partner >= 0 && detail::cluster_diameter(eig, labels, b, partner) <= opts.merge_diameter) {
                merge_a = b;
                merge_b = partner;
            }
        }
        if (merge_a < 0) {
            SpectralSplit out;
            for (std::size_t b = 0; b < form.blocks.size(); ++b) {
                Complex mean = 0.0;
                Index m = 0;
                for (std::size_t i = 0; i < eig.size(); ++i) {
                    if (labels[i] == static_cast<int>(b)) {
                        mean += eig[i];
                        ++m;
                    }
                }
                const auto& blk = form.blocks[b];
                ComplexMatrix cols = form.transform.block(0, blk.offset, n, blk.size);
                Eigen::HouseholderQR<ComplexMatrix> qr(cols);
                ComplexMatrix q = qr.householderQ() * ComplexMatrix::Identity(n, blk.size);
                out.clusters.push_back({mean / static_cast<double>(m), m, q});
            }
            out.form = std::move(form);
            return out;
        }
        for (int& l : labels) {
            if (l == merge_b) l = merge_a;
        }
        // relabel to 0..count-2 preserving order
        std::vector<int> remap(static_cast<std::size_t>(count), -1);
        int next = 0;
        for (int& l : labels) {
            if (remap[static_cast<std::size_t>(l)] < 0) remap[static_cast<std::size_t>(l)] = next++;
            l = remap[static_cast<std::size_t>(l)];
        }
        count = next;
    }
    throw NumericError("eigen-clustering", "eigenvalue clustering did not stabilise");
}

/// Normalised logarithm of a non-zero scalar: mu with exp(2 pi i mu) = rho
/// and Re(mu) in [0, 1).
inline Complex norm_log_scalar(Complex rho, double snap = 1e-9) {
    if (rho == Complex(0.0)) throw ValidationError("singular", "norm log of zero");
    double t = std::arg(rho) / (2.0 * kPi);  // (-1/2, 1/2]
    if (t < 0.0) t += 1.0;
    if (t >= 1.0 - snap) t -= 1.0;
    if (t < 0.0 && t > -snap) t = 0.0;
    return {t, -std::log(std::abs(rho)) / (2.0 * kPi)};
}

/// log(I + N) for N with spectral radius < 1 (exact finite sum when N is nilpotent).
inline ComplexMatrix log_near_identity(const ComplexMatrix& n) {
    const Index dim = n.rows();
    ComplexMatrix sum = ComplexMatrix::Zero(dim, dim);
    ComplexMatrix power = n;
    const double scale = std::max(1.0, n.norm());
    for (int j = 1; j <= 2000; ++j) {
        const double sign = (j % 2 == 1) ? 1.0 : -1.0;
        sum += (sign / j) * power;
        if (power.norm() <= 1e-18 * scale) return sum;
        power = power * n;
        if (!all_finite(power) || power.norm() > 1e30) break;
    }
    throw NumericError("log-series-divergence", "logarithm series did not converge on a cluster block");
}

struct NormalizedLog {
    ComplexMatrix k;
};

/// K = norm log G: exp(2 pi i K) = G and every eigenvalue of K has real part in [0, 1).
inline NormalizedLog norm_log(const ComplexMatrix& g, const SpectralOptions& opts = {}) {
    require_square(g, "norm_log argument");
    require_finite(g, "norm_log argument");
    if (sigma_min(g) <= 1e-14 * std::max(1.0, op_norm(g))) {
        throw ValidationError("singular", "norm_log needs an invertible matrix");
    }
    const SpectralSplit split = spectral_split(g, opts);
    const BlockForm& form = split.form;
    const Index n = g.rows();
    ComplexMatrix kd = ComplexMatrix::Zero(n, n);
    for (std::size_t b = 0; b < form.blocks.size(); ++b) {
        const auto& blk = form.blocks[b];
        const Complex rho = split.clusters[b].value;
        const Complex mu = norm_log_scalar(rho, opts.branch_snap);
        const ComplexMatrix gb = form.block_diagonal.block(blk.offset, blk.offset, blk.size, blk.size);
        const ComplexMatrix nil = gb / rho - ComplexMatrix::Identity(blk.size, blk.size);
        kd.block(blk.offset, blk.offset, blk.size, blk.size) =
            mu * ComplexMatrix::Identity(blk.size, blk.size) + log_near_identity(nil) / kTwoPiI;
    }
    const Eigen::PartialPivLU<ComplexMatrix> lu(form.transform);
    return {form.transform * kd * lu.inverse()};
}

/// Eigenvalues of g (Schur diagonal).
inline std::vector<Complex> eigenvalues(const ComplexMatrix& g) {
    const SchurForm s = schur(g);
    std::vector<Complex> out;
    for (Index i = 0; i < g.rows(); ++i) out.push_back(s.upper(i, i));
    return out;
}

/// Diagnostic for the intertwining property: if G C = C G' then
/// norm log(G) C = C norm log(G'). Throws when G C != C G'.
inline bool commuting_log_check(const ComplexMatrix& g, const ComplexMatrix& g_prime, const ComplexMatrix& c,
                                double tol = 1e-8, const SpectralOptions& opts = {}) {
    const double scale = std::max(1.0, (op_norm(g) + op_norm(g_prime)) * op_norm(c));
    if ((g * c - c * g_prime).norm() > tol * scale) {
        throw ValidationError("precondition", "G C != C G'");
    }
    const ComplexMatrix k = norm_log(g, opts).k;
    const ComplexMatrix kp = norm_log(g_prime, opts).k;
    const double kscale = std::max(1.0, (op_norm(k) + op_norm(kp)) * op_norm(c));
    return (k * c - c * kp).norm() <= tol * kscale;
}

/// Number of Jordan blocks of g: sum over eigenvalue clusters of
/// dim ker(G|cluster - rho I).
inline Index jordan_block_count(const ComplexMatrix& g, double rank_tol = 1e-7, const SpectralOptions& opts = {}) {
    const SpectralSplit split = spectral_split(g, opts);
    const double scale = std::max(1.0, op_norm(g));
    Index blocks = 0;
    for (const auto& c : split.clusters) {
        const ComplexMatrix restricted = c.basis.adjoint() * g * c.basis;
        const ComplexMatrix shifted = restricted - c.value * ComplexMatrix::Identity(c.multiplicity, c.multiplicity);
        blocks += c.multiplicity - numerical_rank(shifted, rank_tol, scale);
    }
    return blocks;
}

} // namespace fuchsian
