#pragma once

// Numerical monodromy of Fuchsian systems, comparison of representations up
// to simultaneous conjugation, and growth exponents of flat sections.

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "fuchsian/local_forms.hpp"
#include "fuchsian/ode.hpp"
#include "fuchsian/synth.hpp"

namespace fuchsian {

/// One loop per puncture from a common basepoint: out along a ray, once
/// anticlockwise around a small circle, back along the same ray.
/// relation_order lists puncture indices with G_{o_1} ... G_{o_n} = I.
struct StandardLoops {
    Complex basepoint{};
    double radius = 0.0;
    std::vector<LoopPath> loops;
    std::vector<std::size_t> relation_order;
};

namespace detail {

inline double segment_point_distance(Complex a, Complex b, Complex x) {
    return PathPiece::segment(a, b).distance_to(x);
}

} // namespace detail

/// The basepoint sits outside the punctures' hull in the direction that keeps
/// every ray farthest from the other punctures, so rays need no detours and
/// only meet at the basepoint.
inline StandardLoops standard_loops(const std::vector<Complex>& punctures) {
    const std::size_t n = punctures.size();
    if (n == 0) throw ValidationError("shape-mismatch", "need at least one puncture");
    Complex centroid = 0.0;
    for (Complex a : punctures) centroid += a;
    centroid /= static_cast<double>(n);
    double spread = 0.0, dmin = 1e300;
    for (std::size_t i = 0; i < n; ++i) {
        spread = std::max(spread, std::abs(punctures[i] - centroid));
        for (std::size_t j = i + 1; j < n; ++j) dmin = std::min(dmin, std::abs(punctures[i] - punctures[j]));
    }
    if (n == 1) dmin = 1.0;
    if (dmin <= 0.0) throw ValidationError("duplicate-puncture", "punctures must be distinct");
    const double far = 2.0 * spread + 1.0;

    // pick the direction maximising the smallest ray-to-puncture distance
    StandardLoops out;
    double best = -1.0;
    constexpr int kDirections = 360;
    for (int t = 0; t < kDirections; ++t) {
        const Complex s = centroid + std::polar(far, -0.5 * kPi + 2.0 * kPi * t / kDirections);
        double sep = 1e300;
        for (std::size_t j = 0; j < n; ++j) {
            for (std::size_t k = 0; k < n; ++k) {
                if (k != j) sep = std::min(sep, detail::segment_point_distance(s, punctures[j], punctures[k]));
            }
        }
        if (sep > best * (1.0 + 1e-9)) {
            best = sep;
            out.basepoint = s;
        }
    }
    if (n == 1) best = 1.0;
    out.radius = 0.4 * std::min(dmin, best);

    std::vector<double> angle(n);
    for (std::size_t j = 0; j < n; ++j) {
        const Complex a = punctures[j];
        const Complex dir = (out.basepoint - a) / std::abs(out.basepoint - a);
        const Complex touch = a + out.radius * dir;
        const double theta = std::arg(dir);
        out.loops.push_back(LoopPath{{PathPiece::segment(out.basepoint, touch),
                                      PathPiece::arc(a, out.radius, theta, theta + 2.0 * kPi),
                                      PathPiece::segment(touch, out.basepoint)}});
        angle[j] = std::arg(a - out.basepoint);
    }
    // the basepoint is outside the hull, so angles seen from it do not wrap
    // when measured relative to the direction of the centroid
    const double ref = std::arg(centroid - out.basepoint);
    for (double& a : angle) a = std::remainder(a - ref, 2.0 * kPi);
    out.relation_order.resize(n);
    std::iota(out.relation_order.begin(), out.relation_order.end(), std::size_t{0});
    std::sort(out.relation_order.begin(), out.relation_order.end(),
              [&](std::size_t a, std::size_t b) { return angle[a] > angle[b]; });
    return out;
}

struct IntegrationResult {
    ComplexMatrix matrix;
    double defect = 0.0;  ///< difference to a re-integration at half the step cap and tighter tolerance
    long steps = 0;
};

/// Loop matrix G' with Y o gamma = Y G' for the flat sections of the system,
/// Y(start) = I.
inline IntegrationResult integrate_fuchsian(const FuchsianSystem& sys, const LoopPath& loop, double tol = 1e-10) {
    sys.validate();
    if (!loop.closed()) throw ValidationError("open-loop", "loop must be closed");
    if (loop.clearance(sys.punctures) <= 1e-9) throw ValidationError("loop-clearance", "loop passes too close to a puncture");
    const ConnectionField omega = [&](Complex z) { return sys.connection(z); };
    TransportOptions opts;
    opts.tol = tol;
    TransportStats stats;
    IntegrationResult res;
    res.matrix = transport(omega, sys.rank(), loop, sys.punctures, opts, &stats);
    res.steps = stats.accepted;
    TransportOptions fine = opts;
    fine.step_fraction *= 0.5;
    fine.tol = tol / 32.0;
    const ComplexMatrix check = transport(omega, sys.rank(), loop, sys.punctures, fine);
    res.defect = (check - res.matrix).norm();
    return res;
}

/// Simultaneous conjugacy A_j S = S B_j.
struct ConjugacyResult {
    bool found = false;
    ComplexMatrix s;         ///< scaled to |det S| = 1
    double residual = 0.0;   ///< max_j |A_j S - S B_j| / (|S| max(1, |A_j| + |B_j|))
    Index null_dim = 0;
};

inline ConjugacyResult conjugacy_compare(const std::vector<ComplexMatrix>& a, const std::vector<ComplexMatrix>& b,
                                         double tol = 1e-6, std::uint64_t seed = 0x5eed) {
    if (a.size() != b.size() || a.empty()) throw ValidationError("shape-mismatch", "lists must have equal non-zero length");
    const Index r = a.front().rows();
    for (std::size_t j = 0; j < a.size(); ++j) {
        if (a[j].rows() != r || a[j].cols() != r || b[j].rows() != r || b[j].cols() != r) {
            throw ValidationError("shape-mismatch", "matrices must be square of equal size");
        }
    }
    ConjugacyResult res;
    auto residual_of = [&](const ComplexMatrix& s) {
        double worst = 0.0;
        for (std::size_t j = 0; j < a.size(); ++j) {
            const double scale = std::max(1.0, op_norm(a[j]) + op_norm(b[j])) * op_norm(s);
            worst = std::max(worst, (a[j] * s - s * b[j]).norm() / scale);
        }
        return worst;
    };
    const ComplexMatrix id = ComplexMatrix::Identity(r, r);
    if (residual_of(id) <= tol) {
        res.found = true;
        res.s = id;
        res.residual = residual_of(id);
        res.null_dim = -1;  // not computed
        return res;
    }
    ComplexMatrix stacked(static_cast<Index>(a.size()) * r * r, r * r);
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double scale = std::max(1.0, op_norm(a[j]) + op_norm(b[j]));
        stacked.middleRows(static_cast<Index>(j) * r * r, r * r) = sylvester_operator(a[j], b[j]) / scale;
    }
    Eigen::JacobiSVD<ComplexMatrix> svd(stacked, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    Index dim = 0;
    for (Index i = sv.size() - 1; i >= 0 && sv(i) <= tol; --i) ++dim;
    res.null_dim = dim;
    if (dim == 0) return res;
    const ComplexMatrix basis = svd.matrixV().rightCols(dim);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    for (int attempt = 0; attempt < 8; ++attempt) {
        ComplexVector combo = basis.col(0);
        if (dim > 1) {
            combo.setZero();
            for (Index c = 0; c < dim; ++c) combo += Complex(nd(rng), nd(rng)) * basis.col(c);
        }
        ComplexMatrix s = unvec(combo, r, r);
        if (sigma_min(s) <= 1e-6 * op_norm(s)) {
            if (dim == 1) break;
            continue;
        }
        const double det_abs = std::abs(s.determinant());
        s /= std::pow(det_abs, 1.0 / static_cast<double>(r));
        res.s = s;
        res.residual = residual_of(s);
        res.found = res.residual <= tol;
        return res;
    }
    return res;
}

/// Computed monodromy of a Fuchsian system on its standard loops, with
/// optional comparison against a target representation.
struct MonodromyReport {
    Complex basepoint{};
    std::vector<ComplexMatrix> loops;            ///< by puncture index
    std::vector<std::size_t> relation_order;
    double product_defect = 0.0;                 ///< |G'_{o_1} ... G'_{o_n} - I|
    double product_defect_relative = 0.0;        ///< product_defect / prod_j max(1, |G'_j|)
    std::vector<double> integration_defects;     ///< per loop
    double max_reversal_defect = 0.0;            ///< |G'(gamma) G'(gamma^-1) - I| / (|G'(gamma)| |G'(gamma^-1)|)
    bool compared = false;
    ConjugacyResult conjugacy;
    std::vector<double> residuals;               ///< per loop |G'_j S - S G_j| relative
};

inline double ordered_product_defect(const std::vector<ComplexMatrix>& g, const std::vector<std::size_t>& order) {
    const Index r = g.front().rows();
    ComplexMatrix p = ComplexMatrix::Identity(r, r);
    for (std::size_t j : order) p = p * g[j];
    return (p - ComplexMatrix::Identity(r, r)).norm();
}

/// Rounding scale of an ordered product: prod_j max(1, |G_j|).
inline double product_scale(const std::vector<ComplexMatrix>& g) {
    double scale = 1.0;
    for (const auto& m : g) scale *= std::max(1.0, op_norm(m));
    return scale;
}

inline std::vector<double> conjugacy_residuals(const std::vector<ComplexMatrix>& computed, const ComplexMatrix& s,
                                               const std::vector<ComplexMatrix>& target) {
    std::vector<double> out;
    for (std::size_t j = 0; j < computed.size(); ++j) {
        const double scale = std::max(1.0, op_norm(computed[j]) + op_norm(target[j])) * op_norm(s);
        out.push_back((computed[j] * s - s * target[j]).norm() / scale);
    }
    return out;
}

inline MonodromyReport monodromy_report(const FuchsianSystem& sys, const Representation* target = nullptr,
                                        double tol = 1e-10, double compare_tol = 1e-6) {
    sys.validate();
    const StandardLoops std_loops = standard_loops(sys.punctures);
    MonodromyReport rep;
    rep.basepoint = std_loops.basepoint;
    rep.relation_order = std_loops.relation_order;
    const Index r = sys.rank();
    for (const auto& loop : std_loops.loops) {
        const IntegrationResult res = integrate_fuchsian(sys, loop, tol);
        rep.loops.push_back(res.matrix);
        rep.integration_defects.push_back(res.defect);
        const IntegrationResult back = integrate_fuchsian(sys, loop.reversed(), tol);
        const double scale = std::max(1.0, op_norm(res.matrix) * op_norm(back.matrix));
        rep.max_reversal_defect =
            std::max(rep.max_reversal_defect, (res.matrix * back.matrix - ComplexMatrix::Identity(r, r)).norm() / scale);
    }
    rep.product_defect = ordered_product_defect(rep.loops, rep.relation_order);
    rep.product_defect_relative = rep.product_defect / product_scale(rep.loops);
    if (target) {
        if (target->rank() != r || target->size() != sys.size()) {
            throw ValidationError("shape-mismatch", "target representation does not match the system");
        }
        rep.compared = true;
        rep.conjugacy = conjugacy_compare(rep.loops, target->matrices, compare_tol);
        if (rep.conjugacy.found) rep.residuals = conjugacy_residuals(rep.loops, rep.conjugacy.s, target->matrices);
    }
    return rep;
}

/// Residuals and product defect recomputed from the stored matrices agree
/// with the stored values.
inline bool report_consistent(const MonodromyReport& rep, const Representation* target = nullptr, double tol = 1e-12) {
    if (rep.loops.empty()) return false;
    const double defect = ordered_product_defect(rep.loops, rep.relation_order);
    if (std::abs(defect - rep.product_defect) > tol * std::max(1.0, defect)) return false;
    if (std::abs(defect / product_scale(rep.loops) - rep.product_defect_relative) > tol) return false;
    if (rep.compared && rep.conjugacy.found && target) {
        const auto again = conjugacy_residuals(rep.loops, rep.conjugacy.s, target->matrices);
        if (again.size() != rep.residuals.size()) return false;
        for (std::size_t j = 0; j < again.size(); ++j) {
            if (std::abs(again[j] - rep.residuals[j]) > tol) return false;
        }
    }
    return true;
}

// ------------------------------------------------------------------ growth

/// count radii from r0 down to r1, geometrically spaced.
inline std::vector<double> geometric_radii(double r0, double r1, int count) {
    if (!(r0 > 0.0 && r1 > 0.0) || count < 2) throw ValidationError("bad-radii", "need positive radii and count >= 2");
    std::vector<double> out;
    for (int i = 0; i < count; ++i) out.push_back(r0 * std::pow(r1 / r0, static_cast<double>(i) / (count - 1)));
    return out;
}

struct GrowthEstimate {
    int exponent = 0;          ///< floor of the fitted slope (snapped to a nearby integer)
    double slope = 0.0;        ///< fitted d log|v| / d log|z|
    double half_width = 0.0;   ///< two standard errors of the slope
    bool reliable = false;
    std::vector<double> log_radius;
    std::vector<double> log_norm;
};

namespace detail {

/// Transport v along the positive real axis through the given radii of the
/// local coordinate and fit log|v| against log|z|.
inline GrowthEstimate growth_fit(const ConnectionField& local_omega, Index rank, const ComplexVector& v,
                                 const std::vector<double>& radii) {
    if (v.size() != rank || v.norm() == 0.0) throw ValidationError("shape-mismatch", "v must be a non-zero vector of length r");
    if (radii.size() < 2) throw ValidationError("bad-radii", "need at least two radii");
    for (std::size_t i = 0; i < radii.size(); ++i) {
        if (!(radii[i] > 0.0) || (i > 0 && !(radii[i] < radii[i - 1]))) {
            throw ValidationError("bad-radii", "radii must be positive and strictly decreasing");
        }
    }
    GrowthEstimate g;
    ComplexVector w = v.normalized();
    double log_scale = std::log(v.norm());
    g.log_radius.push_back(std::log(radii.front()));
    g.log_norm.push_back(log_scale);
    TransportOptions opts;
    opts.tol = 1e-12;
    const std::vector<Complex> origin{Complex(0.0)};
    for (std::size_t i = 1; i < radii.size(); ++i) {
        // relative transport per segment keeps small and large norms accurate
        const LoopPath seg{{PathPiece::segment(radii[i - 1], radii[i])}};
        const ComplexMatrix y = transport(local_omega, rank, seg, origin, opts);
        w = y * w;
        const double nw = w.norm();
        if (!(nw > 0.0) || !std::isfinite(nw)) throw NumericError("non-finite", "transported section vanished");
        log_scale += std::log(nw);
        w /= nw;
        g.log_radius.push_back(std::log(radii[i]));
        g.log_norm.push_back(log_scale);
    }
    const std::size_t m = g.log_radius.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        mx += g.log_radius[i];
        my += g.log_norm[i];
    }
    mx /= static_cast<double>(m);
    my /= static_cast<double>(m);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        sxx += (g.log_radius[i] - mx) * (g.log_radius[i] - mx);
        sxy += (g.log_radius[i] - mx) * (g.log_norm[i] - my);
    }
    g.slope = sxy / sxx;
    double sse = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double e = g.log_norm[i] - (my + g.slope * (g.log_radius[i] - mx));
        sse += e * e;
    }
    const double se = m > 2 ? std::sqrt(sse / static_cast<double>(m - 2) / sxx) : 1e300;
    g.half_width = 2.0 * se;
    const double nearest = std::round(g.slope);
    const double snapped = std::abs(g.slope - nearest) <= std::max(1e-6, g.half_width) ? nearest : g.slope;
    g.exponent = static_cast<int>(std::floor(snapped));
    const double decades = (g.log_radius.front() - g.log_radius.back()) / std::log(10.0);
    const bool straddles = std::floor(g.slope - g.half_width) != std::floor(g.slope + g.half_width) && snapped != nearest;
    g.reliable = m >= 8 && decades >= 3.0 - 1e-9 && g.half_width < 0.05 && !straddles;
    return g;
}

} // namespace detail

/// Growth exponent of the flat section through v at the outermost radius of
/// the local connection d + A(z) dz / z.
inline GrowthEstimate growth_exponent(const LocalLogConnection& conn, const ComplexVector& v, const std::vector<double>& radii) {
    const ConnectionField omega = [&](Complex z) { return ComplexMatrix(conn.a.evaluate(z) / z); };
    return detail::growth_fit(omega, conn.rank(), v, radii);
}

/// Same at puncture j of a Fuchsian system, in the coordinate z = x - a_j.
inline GrowthEstimate growth_exponent(const FuchsianSystem& sys, std::size_t j, const ComplexVector& v,
                                      const std::vector<double>& radii) {
    sys.validate();
    if (j >= sys.size()) throw ValidationError("shape-mismatch", "puncture index out of range");
    double dmin = 1e300;
    for (std::size_t k = 0; k < sys.size(); ++k) {
        if (k != j) dmin = std::min(dmin, std::abs(sys.punctures[k] - sys.punctures[j]));
    }
    if (!radii.empty() && radii.front() >= dmin) throw ValidationError("bad-radii", "radii must stay inside the puncture's disc");
    const Complex a = sys.punctures[j];
    const ConnectionField omega = [&](Complex z) { return sys.connection(a + z); };
    return detail::growth_fit(omega, sys.rank(), v, radii);
}

} // namespace fuchsian
