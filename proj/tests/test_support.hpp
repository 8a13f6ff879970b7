#pragma once

#include <random>

#include "fuchsian/linalg.hpp"

namespace fuchsian::testing {

inline ComplexMatrix random_matrix(std::mt19937_64& rng, Index rows, Index cols, double scale = 1.0) {
    std::normal_distribution<double> nd(0.0, scale);
    ComplexMatrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < cols; ++j) m(i, j) = Complex(nd(rng), nd(rng));
    }
    return m;
}

/// Random matrix with condition number bounded by roughly `cond`.
inline ComplexMatrix random_invertible(std::mt19937_64& rng, Index n, double cond = 1e3) {
    for (;;) {
        ComplexMatrix m = random_matrix(rng, n, n);
        Eigen::JacobiSVD<ComplexMatrix> svd(m);
        const auto& s = svd.singularValues();
        if (s(0) / s(n - 1) < cond) return m;
    }
}

inline Complex random_unit_complex(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 2.0 * kPi);
    return std::polar(1.0, u(rng));
}

} // namespace fuchsian::testing

#include "fuchsian/bundles.hpp"

namespace fuchsian::testing {

inline std::vector<Complex> default_punctures(std::size_t n) {
    std::vector<Complex> p;
    for (std::size_t j = 0; j < n; ++j) p.emplace_back(static_cast<double>(j), 0.0);
    return p;
}

/// n - 1 random matrices and the last one closing the product relation.
inline Representation random_representation(std::mt19937_64& rng, Index r, std::size_t n, double cond = 20.0) {
    Representation rep;
    rep.punctures = default_punctures(n);
    rep.basepoint = Complex(0.5, -3.0);
    ComplexMatrix prod = ComplexMatrix::Identity(r, r);
    for (std::size_t j = 0; j + 1 < n; ++j) {
        rep.matrices.push_back(random_invertible(rng, r, cond));
        prod = prod * rep.matrices.back();
    }
    rep.matrices.push_back(prod.inverse());
    return rep;
}

/// The representation conjugated by s: G_j -> s G_j s^-1.
inline Representation conjugated(const Representation& rep, const ComplexMatrix& s) {
    Representation out = rep;
    const ComplexMatrix s_inv = s.inverse();
    for (auto& g : out.matrices) g = s * g * s_inv;
    return out;
}

} // namespace fuchsian::testing
