#pragma once

// Truncated matrix power series  A(z) = sum_{j=0}^{N} A^j z^j  and the
// integer weight diagonals that grade them.

#include <algorithm>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fuchsian/linalg.hpp"

namespace fuchsian {

/// Default absolute tolerance for "is zero" tests on series coefficients.
inline constexpr double kSeriesZeroTol = 1e-10;

/// Truncated power series with r_out x r_in matrix coefficients. The
/// truncation order travels with the value: arithmetic never extends it.
class MatrixSeries {
public:
    MatrixSeries() = default;

    /// Zero series of the given shape and order.
    MatrixSeries(Index rows, Index cols, int order) : rows_(rows), cols_(cols) {
        if (rows <= 0 || cols <= 0 || order < 0) {
            throw ValidationError("shape-mismatch", "series needs positive dimensions and order >= 0");
        }
        coeffs_.assign(static_cast<std::size_t>(order) + 1, ComplexMatrix::Zero(rows, cols));
    }

    /// Series from explicit coefficients A^0..A^N.
    explicit MatrixSeries(std::vector<ComplexMatrix> coeffs, bool truncated = false)
        : coeffs_(std::move(coeffs)), truncated_(truncated) {
        if (coeffs_.empty()) throw ValidationError("shape-mismatch", "series needs at least one coefficient");
        rows_ = coeffs_.front().rows();
        cols_ = coeffs_.front().cols();
        if (rows_ <= 0 || cols_ <= 0) throw ValidationError("shape-mismatch", "series coefficients must be non-empty");
        for (const auto& c : coeffs_) {
            if (c.rows() != rows_ || c.cols() != cols_) {
                throw ValidationError("shape-mismatch", "series coefficients have inconsistent shapes");
            }
            require_finite(c, "series coefficient");
        }
    }

    static MatrixSeries constant(const ComplexMatrix& m, int order) {
        std::vector<ComplexMatrix> c(static_cast<std::size_t>(order) + 1, ComplexMatrix::Zero(m.rows(), m.cols()));
        c[0] = m;
        return MatrixSeries(std::move(c));
    }

    static MatrixSeries identity(Index n, int order) {
        return constant(ComplexMatrix::Identity(n, n), order);
    }

    /// The monomial m * z^power truncated at `order` (power > order gives zero).
    static MatrixSeries monomial(const ComplexMatrix& m, int power, int order) {
        std::vector<ComplexMatrix> c(static_cast<std::size_t>(order) + 1, ComplexMatrix::Zero(m.rows(), m.cols()));
        if (power >= 0 && power <= order) c[static_cast<std::size_t>(power)] = m;
        return MatrixSeries(std::move(c));
    }

    Index rows() const { return rows_; }
    Index cols() const { return cols_; }
    int order() const { return static_cast<int>(coeffs_.size()) - 1; }

    /// Set when this value came from operands of different orders.
    bool truncated() const { return truncated_; }

    const ComplexMatrix& operator[](int j) const { return coeffs_.at(static_cast<std::size_t>(j)); }
    const std::vector<ComplexMatrix>& coeffs() const { return coeffs_; }

    /// Coefficient j, or zero beyond the truncation order.
    ComplexMatrix coeff_or_zero(int j) const {
        if (j < 0 || j > order()) return ComplexMatrix::Zero(rows_, cols_);
        return coeffs_[static_cast<std::size_t>(j)];
    }

    ComplexMatrix evaluate(Complex z) const {
        // Horner
        ComplexMatrix acc = coeffs_.back();
        for (int j = order() - 1; j >= 0; --j) acc = acc * z + coeffs_[static_cast<std::size_t>(j)];
        return acc;
    }

    MatrixSeries truncate(int order) const {
        if (order < 0) throw ValidationError("bad-order", "truncation order must be >= 0");
        std::vector<ComplexMatrix> c;
        for (int j = 0; j <= order; ++j) c.push_back(coeff_or_zero(j));
        return MatrixSeries(std::move(c), truncated_ || order > this->order());
    }

    double max_coeff_norm() const {
        double m = 0.0;
        for (const auto& c : coeffs_) m = std::max(m, op_norm(c));
        return m;
    }

private:
    Index rows_ = 0;
    Index cols_ = 0;
    std::vector<ComplexMatrix> coeffs_;
    bool truncated_ = false;
};

enum class SeriesOp { add, sub, mul };

/// Exact truncated arithmetic; the result order is the smaller operand order.
inline MatrixSeries series_arith(const MatrixSeries& a, const MatrixSeries& b, SeriesOp op) {
    const int order = std::min(a.order(), b.order());
    const bool mixed = a.order() != b.order() || a.truncated() || b.truncated();
    std::vector<ComplexMatrix> out;
    out.reserve(static_cast<std::size_t>(order) + 1);
    if (op == SeriesOp::mul) {
        if (a.cols() != b.rows()) throw ValidationError("shape-mismatch", "series product shapes incompatible");
        for (int j = 0; j <= order; ++j) {
            ComplexMatrix acc = ComplexMatrix::Zero(a.rows(), b.cols());
            for (int k = 0; k <= j; ++k) acc.noalias() += a[k] * b[j - k];
            out.push_back(std::move(acc));
        }
    } else {
        if (a.rows() != b.rows() || a.cols() != b.cols()) {
            throw ValidationError("shape-mismatch", "series sum shapes differ");
        }
        for (int j = 0; j <= order; ++j) out.push_back(op == SeriesOp::add ? ComplexMatrix(a[j] + b[j]) : ComplexMatrix(a[j] - b[j]));
    }
    return MatrixSeries(std::move(out), mixed);
}

inline MatrixSeries operator+(const MatrixSeries& a, const MatrixSeries& b) { return series_arith(a, b, SeriesOp::add); }
inline MatrixSeries operator-(const MatrixSeries& a, const MatrixSeries& b) { return series_arith(a, b, SeriesOp::sub); }
inline MatrixSeries operator*(const MatrixSeries& a, const MatrixSeries& b) { return series_arith(a, b, SeriesOp::mul); }

inline MatrixSeries operator*(Complex s, const MatrixSeries& a) {
    std::vector<ComplexMatrix> out;
    for (const auto& c : a.coeffs()) out.push_back(s * c);
    return MatrixSeries(std::move(out), a.truncated());
}

inline MatrixSeries operator-(const MatrixSeries& a) { return Complex(-1.0) * a; }

/// Constant left factor: m * A(z).
inline MatrixSeries operator*(const ComplexMatrix& m, const MatrixSeries& a) {
    if (m.cols() != a.rows()) throw ValidationError("shape-mismatch", "matrix-series product shapes incompatible");
    std::vector<ComplexMatrix> out;
    for (const auto& c : a.coeffs()) out.push_back(m * c);
    return MatrixSeries(std::move(out), a.truncated());
}

/// Constant right factor: A(z) * m.
inline MatrixSeries operator*(const MatrixSeries& a, const ComplexMatrix& m) {
    if (a.cols() != m.rows()) throw ValidationError("shape-mismatch", "series-matrix product shapes incompatible");
    std::vector<ComplexMatrix> out;
    for (const auto& c : a.coeffs()) out.push_back(c * m);
    return MatrixSeries(std::move(out), a.truncated());
}

/// z dA/dz, i.e. coefficients j * A^j.
inline MatrixSeries z_derivative(const MatrixSeries& a) {
    std::vector<ComplexMatrix> out;
    for (int j = 0; j <= a.order(); ++j) out.push_back(static_cast<double>(j) * a[j]);
    return MatrixSeries(std::move(out), a.truncated());
}

/// Coefficientwise maximum of the spectral norm of a - b.
inline double series_distance(const MatrixSeries& a, const MatrixSeries& b) {
    const MatrixSeries d = a - b;
    return d.max_coeff_norm();
}

/// Inverse of a series with invertible constant term, to the same order.
/// Throws when A^0 has condition number above cond_limit.
inline MatrixSeries series_inverse(const MatrixSeries& a, double cond_limit = 1e12) {
    if (a.rows() != a.cols()) throw ValidationError("shape-mismatch", "series_inverse needs a square series");
    Eigen::JacobiSVD<ComplexMatrix> svd(a[0]);
    const auto& s = svd.singularValues();
    if (s(s.size() - 1) == 0.0 || s(0) / s(s.size() - 1) > cond_limit) {
        throw NumericError("singular-leading-coefficient", "leading coefficient is singular or too ill-conditioned");
    }
    const Eigen::PartialPivLU<ComplexMatrix> lu(a[0]);
    const ComplexMatrix inv0 = lu.inverse();
    std::vector<ComplexMatrix> out{inv0};
    for (int j = 1; j <= a.order(); ++j) {
        ComplexMatrix acc = ComplexMatrix::Zero(a.rows(), a.cols());
        for (int k = 1; k <= j; ++k) acc.noalias() += a[k] * out[static_cast<std::size_t>(j - k)];
        out.push_back(-inv0 * acc);
    }
    return MatrixSeries(std::move(out), a.truncated());
}

/// Integer weight diagonal Phi = diag(phi^1 >= ... >= phi^r), grouped into
/// blocks of equal value psi^1 > ... > psi^l.
class WeightDiagonal {
public:
    struct Block {
        int value;
        Index offset;
        Index size;
    };

    WeightDiagonal() = default;

    explicit WeightDiagonal(std::vector<int> entries) : entries_(std::move(entries)) {
        if (entries_.empty()) throw ValidationError("shape-mismatch", "weight diagonal must be non-empty");
        for (std::size_t i = 1; i < entries_.size(); ++i) {
            if (entries_[i] > entries_[i - 1]) {
                throw ValidationError("unsorted-weights", "weight diagonal entries must be non-increasing");
            }
        }
    }

    static WeightDiagonal zero(Index r) { return WeightDiagonal(std::vector<int>(static_cast<std::size_t>(r), 0)); }

    Index size() const { return static_cast<Index>(entries_.size()); }
    const std::vector<int>& entries() const { return entries_; }
    int operator[](Index i) const { return entries_[static_cast<std::size_t>(i)]; }

    std::vector<Block> blocks() const {
        std::vector<Block> out;
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (out.empty() || out.back().value != entries_[i]) {
                out.push_back({entries_[i], static_cast<Index>(i), 1});
            } else {
                ++out.back().size;
            }
        }
        return out;
    }

    long trace() const {
        long t = 0;
        for (int e : entries_) t += e;
        return t;
    }

    ComplexMatrix as_matrix() const {
        ComplexMatrix m = ComplexMatrix::Zero(size(), size());
        for (Index i = 0; i < size(); ++i) m(i, i) = static_cast<double>(entries_[static_cast<std::size_t>(i)]);
        return m;
    }

    bool operator==(const WeightDiagonal&) const = default;

private:
    std::vector<int> entries_;
};

/// Result of twisting a series by z^{row_exp} . z^{-col_exp}.
struct TwistResult {
    MatrixSeries series;
    /// Smallest valuation over non-zero entries of the result; empty when
    /// every entry vanishes to the known order.
    std::optional<int> min_valuation;
};

/// Entrywise multiply the (i,m) entry of c by z^{row_exp[i] - col_exp[m]}.
/// Entries that vanish identically (within tol) are exact zeros; for the
/// rest the result is known to order N + min shift. When c is an exact
/// polynomial every term is kept instead (order N + max shift). A pole in
/// any entry is a negative valuation: the map would decrease weights.
inline TwistResult twist(const MatrixSeries& c, std::span<const int> row_exp, std::span<const int> col_exp,
                         double tol = kSeriesZeroTol, bool polynomial = false) {
    if (static_cast<Index>(row_exp.size()) != c.rows() || static_cast<Index>(col_exp.size()) != c.cols()) {
        throw ValidationError("shape-mismatch", "twist weights do not match series shape");
    }
    const int n = c.order();
    std::optional<int> min_val;
    std::optional<int> min_shift;
    std::optional<int> max_shift;
    for (Index i = 0; i < c.rows(); ++i) {
        for (Index m = 0; m < c.cols(); ++m) {
            const int shift = row_exp[static_cast<std::size_t>(i)] - col_exp[static_cast<std::size_t>(m)];
            std::optional<int> first;
            for (int j = 0; j <= n; ++j) {
                if (std::abs(c[j](i, m)) > tol) {
                    first = j;
                    break;
                }
            }
            if (!first) continue;
            const int val = *first + shift;
            if (val < 0) {
                throw ValidationError("negative-valuation",
                                      "twist produces a pole in entry (" + std::to_string(i) + "," +
                                          std::to_string(m) + "): weights decrease");
            }
            min_val = min_val ? std::min(*min_val, val) : val;
            min_shift = min_shift ? std::min(*min_shift, shift) : shift;
            max_shift = max_shift ? std::max(*max_shift, shift) : shift;
        }
    }
    const int out_order = n + (polynomial ? (max_shift ? std::max(*max_shift, 0) : 0) : (min_shift ? *min_shift : 0));
    std::vector<ComplexMatrix> out(static_cast<std::size_t>(out_order) + 1, ComplexMatrix::Zero(c.rows(), c.cols()));
    for (Index i = 0; i < c.rows(); ++i) {
        for (Index m = 0; m < c.cols(); ++m) {
            const int shift = row_exp[static_cast<std::size_t>(i)] - col_exp[static_cast<std::size_t>(m)];
            for (int j = 0; j <= n; ++j) {
                const int t = j + shift;
                if (t < 0 || t > out_order) continue;
                out[static_cast<std::size_t>(t)](i, m) = c[j](i, m);
            }
        }
    }
    return {MatrixSeries(std::move(out), c.truncated() || (!polynomial && out_order != n)), min_val};
}

inline TwistResult twist(const MatrixSeries& c, const WeightDiagonal& phi, const WeightDiagonal& phi_prime,
                         double tol = kSeriesZeroTol, bool polynomial = false) {
    return twist(c, std::span<const int>(phi.entries()), std::span<const int>(phi_prime.entries()), tol, polynomial);
}

} // namespace fuchsian
