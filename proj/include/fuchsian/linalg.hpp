#pragma once

// Small dense linear-algebra kernels shared by every module: rank and
// subspace computations via the SVD, Kronecker-form Sylvester solves and
// the matrix exponential. Dimensions here are desk scale (r <= 16), so
// clarity beats blocking.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "fuchsian/error.hpp"

namespace fuchsian {

using Complex = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using Index = Eigen::Index;

inline constexpr double kPi = std::numbers::pi;
inline const Complex kTwoPiI{0.0, 2.0 * std::numbers::pi};

inline bool all_finite(const ComplexMatrix& m) {
    for (Index i = 0; i < m.size(); ++i) {
        const Complex v = m.data()[i];
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
    }
    return true;
}

inline void require_finite(const ComplexMatrix& m, const char* what) {
    if (!all_finite(m)) {
        throw ValidationError("non-finite", std::string(what) + " has NaN or Inf entries");
    }
}

inline void require_square(const ComplexMatrix& m, const char* what) {
    if (m.rows() != m.cols() || m.rows() == 0) {
        throw ValidationError("shape-mismatch", std::string(what) + " must be a non-empty square matrix");
    }
}

/// Spectral norm (largest singular value).
inline double op_norm(const ComplexMatrix& m) {
    if (m.size() == 0) return 0.0;
    Eigen::JacobiSVD<ComplexMatrix> svd(m);
    return svd.singularValues()(0);
}

/// Numerical rank with singular values compared against rel_tol * max(sigma_max, floor).
inline Index numerical_rank(const ComplexMatrix& m, double rel_tol, double floor = 0.0) {
    if (m.size() == 0) return 0;
    Eigen::JacobiSVD<ComplexMatrix> svd(m);
    const auto& s = svd.singularValues();
    const double cut = rel_tol * std::max(s(0), floor);
    Index rank = 0;
    for (Index i = 0; i < s.size(); ++i) {
        if (s(i) > cut) ++rank;
    }
    return rank;
}

/// Orthonormal basis of the column space of m.
inline ComplexMatrix orthonormal_basis(const ComplexMatrix& m, double rel_tol = 1e-9, double floor = 0.0) {
    if (m.cols() == 0) return ComplexMatrix(m.rows(), 0);
    Eigen::JacobiSVD<ComplexMatrix> svd(m, Eigen::ComputeThinU);
    const auto& s = svd.singularValues();
    const double cut = rel_tol * std::max(s.size() ? s(0) : 0.0, floor);
    Index rank = 0;
    for (Index i = 0; i < s.size(); ++i) {
        if (s(i) > cut) ++rank;
    }
    return svd.matrixU().leftCols(rank);
}

/// Orthonormal basis of the right null space of m (singular values <= cut count as zero).
inline ComplexMatrix null_space(const ComplexMatrix& m, double rel_tol = 1e-9, double floor = 0.0) {
    const Index n = m.cols();
    if (m.rows() == 0) return ComplexMatrix::Identity(n, n);
    Eigen::JacobiSVD<ComplexMatrix> svd(m, Eigen::ComputeFullV);
    const auto& s = svd.singularValues();
    const double cut = rel_tol * std::max(s(0), floor);
    Index rank = 0;
    for (Index i = 0; i < s.size(); ++i) {
        if (s(i) > cut) ++rank;
    }
    return svd.matrixV().rightCols(n - rank);
}

/// The last `count` right singular vectors of m: the best `count`-dimensional
/// approximate kernel, for callers that know the kernel dimension exactly.
inline ComplexMatrix smallest_right_singular_vectors(const ComplexMatrix& m, Index count) {
    Eigen::JacobiSVD<ComplexMatrix> svd(m, Eigen::ComputeFullV);
    return svd.matrixV().rightCols(count);
}

/// Complete an orthonormal set of columns to a unitary matrix, keeping the
/// given columns first.
inline ComplexMatrix complete_to_unitary(const ComplexMatrix& q) {
    const Index n = q.rows();
    if (q.cols() == n) return q;
    ComplexMatrix projector = ComplexMatrix::Identity(n, n) - q * q.adjoint();
    ComplexMatrix rest = orthonormal_basis(projector, 1e-8);
    ComplexMatrix out(n, n);
    out << q, rest.leftCols(n - q.cols());
    return out;
}

/// Smallest singular value.
inline double sigma_min(const ComplexMatrix& m) {
    if (m.size() == 0) return 0.0;
    Eigen::JacobiSVD<ComplexMatrix> svd(m);
    return svd.singularValues()(svd.singularValues().size() - 1);
}

/// Column-major vectorisation.
inline ComplexVector vec(const ComplexMatrix& m) {
    return Eigen::Map<const ComplexVector>(m.data(), m.size());
}

inline ComplexMatrix unvec(const ComplexVector& v, Index rows, Index cols) {
    return Eigen::Map<const ComplexMatrix>(v.data(), rows, cols);
}

inline ComplexMatrix kron(const ComplexMatrix& a, const ComplexMatrix& b) {
    ComplexMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Index i = 0; i < a.rows(); ++i) {
        for (Index j = 0; j < a.cols(); ++j) {
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        }
    }
    return out;
}

/// Matrix of X -> A X - X B acting on vec(X).
inline ComplexMatrix sylvester_operator(const ComplexMatrix& a, const ComplexMatrix& b) {
    const ComplexMatrix ia = kron(ComplexMatrix::Identity(b.rows(), b.rows()), a);
    const ComplexMatrix bi = kron(b.transpose(), ComplexMatrix::Identity(a.rows(), a.rows()));
    return ia - bi;
}

/// Solve A X - X B = C. Throws NumericError when the operator is numerically
/// singular (smallest singular value below rel_tol times its norm).
inline ComplexMatrix solve_sylvester(const ComplexMatrix& a, const ComplexMatrix& b, const ComplexMatrix& c,
                                     double rel_tol = 1e-13) {
    const ComplexMatrix op = sylvester_operator(a, b);
    Eigen::JacobiSVD<ComplexMatrix> svd(op, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const auto& s = svd.singularValues();
    if (s.size() == 0) return ComplexMatrix(a.rows(), b.rows());
    if (s(s.size() - 1) <= rel_tol * std::max(s(0), 1.0)) {
        throw NumericError("singular-sylvester", "Sylvester operator is numerically singular");
    }
    const ComplexVector x = svd.solve(vec(c));
    return unvec(x, a.rows(), b.rows());
}

/// exp(A) by scaling and squaring with a Taylor kernel.
inline ComplexMatrix expm(const ComplexMatrix& a) {
    require_square(a, "expm argument");
    const Index n = a.rows();
    const double norm = a.cwiseAbs().colwise().sum().maxCoeff();
    int squarings = 0;
    if (norm > 0.25) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.25)));
    const ComplexMatrix scaled = a / std::ldexp(1.0, squarings);
    ComplexMatrix result = ComplexMatrix::Identity(n, n);
    ComplexMatrix term = ComplexMatrix::Identity(n, n);
    for (int k = 1; k <= 40; ++k) {
        term = term * scaled / static_cast<double>(k);
        result += term;
        if (term.norm() <= 1e-18 * result.norm()) break;
    }
    for (int i = 0; i < squarings; ++i) result = result * result;
    return result;
}

/// Convenience: exp(2 pi i K).
inline ComplexMatrix exp_two_pi_i(const ComplexMatrix& k) { return expm(kTwoPiI * k); }

} // namespace fuchsian
