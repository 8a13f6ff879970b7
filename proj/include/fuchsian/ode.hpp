#pragma once

// Parallel transport of matrix-valued flat sections along piecewise smooth
// paths in the punctured plane. A connection d + Omega(z) dz has flat
// sections with dY = -Omega(z) Y dz; along a piece z(t), t in [0, 1], this is
// the linear ODE Y'(t) = -Omega(z(t)) z'(t) Y(t), integrated here with the
// Dormand-Prince 5(4) pair.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "fuchsian/linalg.hpp"

namespace fuchsian {

/// A straight segment or a circular arc parametrised by t in [0, 1].
struct PathPiece {
    enum class Kind { segment, arc };
    Kind kind = Kind::segment;
    Complex from{};         ///< segment start
    Complex to{};           ///< segment end
    Complex center{};       ///< arc centre
    double radius = 0.0;    ///< arc radius
    double theta0 = 0.0;    ///< arc start angle
    double theta1 = 0.0;    ///< arc end angle (theta1 > theta0 is anticlockwise)

    static PathPiece segment(Complex a, Complex b) {
        PathPiece p;
        p.kind = Kind::segment;
        p.from = a;
        p.to = b;
        return p;
    }

    static PathPiece arc(Complex c, double r, double t0, double t1) {
        PathPiece p;
        p.kind = Kind::arc;
        p.center = c;
        p.radius = r;
        p.theta0 = t0;
        p.theta1 = t1;
        return p;
    }

    Complex point(double t) const {
        if (kind == Kind::segment) return from + t * (to - from);
        return center + std::polar(radius, theta0 + t * (theta1 - theta0));
    }

    Complex velocity(double t) const {
        if (kind == Kind::segment) return to - from;
        const double th = theta0 + t * (theta1 - theta0);
        return Complex(0.0, 1.0) * std::polar(radius, th) * (theta1 - theta0);
    }

    /// Upper bound of |z'(t)|.
    double speed() const {
        if (kind == Kind::segment) return std::abs(to - from);
        return radius * std::abs(theta1 - theta0);
    }

    Complex start() const { return point(0.0); }
    Complex end() const { return point(1.0); }

    PathPiece reversed() const {
        PathPiece p = *this;
        if (kind == Kind::segment) {
            std::swap(p.from, p.to);
        } else {
            std::swap(p.theta0, p.theta1);
        }
        return p;
    }

    /// Distance from the piece to a point.
    double distance_to(Complex x) const {
        if (kind == Kind::segment) {
            const Complex d = to - from;
            const double len2 = std::norm(d);
            double t = len2 > 0.0 ? std::real((x - from) * std::conj(d)) / len2 : 0.0;
            t = std::clamp(t, 0.0, 1.0);
            return std::abs(point(t) - x);
        }
        // arc: check the angular projection and the endpoints
        double best = std::min(std::abs(start() - x), std::abs(end() - x));
        const Complex rel = x - center;
        if (std::abs(rel) > 0.0) {
            const double lo = std::min(theta0, theta1);
            const double hi = std::max(theta0, theta1);
            double ang = std::arg(rel);
            while (ang < lo) ang += 2.0 * kPi;
            while (ang >= lo + 2.0 * kPi) ang -= 2.0 * kPi;
            if (ang <= hi) best = std::min(best, std::abs(std::abs(rel) - radius));
        } else {
            best = std::min(best, radius);
        }
        return best;
    }
};

/// A closed path made of pieces, start point = end point.
struct LoopPath {
    std::vector<PathPiece> pieces;

    Complex start() const { return pieces.front().start(); }
    Complex end() const { return pieces.back().end(); }

    bool closed(double tol = 1e-12) const {
        if (pieces.empty()) return false;
        for (std::size_t i = 0; i + 1 < pieces.size(); ++i) {
            if (std::abs(pieces[i].end() - pieces[i + 1].start()) > tol * std::max(1.0, std::abs(pieces[i].end()))) {
                return false;
            }
        }
        return std::abs(start() - end()) <= tol * std::max(1.0, std::abs(start()));
    }

    LoopPath reversed() const {
        LoopPath out;
        for (auto it = pieces.rbegin(); it != pieces.rend(); ++it) out.pieces.push_back(it->reversed());
        return out;
    }

    double clearance(const std::vector<Complex>& singular_points) const {
        double c = 1e300;
        for (const auto& p : pieces) {
            for (Complex x : singular_points) c = std::min(c, p.distance_to(x));
        }
        return c;
    }

    /// The circle |z - c| = r traversed once anticlockwise from angle theta0.
    static LoopPath circle(Complex c, double r, double theta0 = 0.0) {
        return LoopPath{{PathPiece::arc(c, r, theta0, theta0 + 2.0 * kPi)}};
    }
};

struct TransportOptions {
    double tol = 1e-10;          ///< local error per unit parameter, relative to max(1, |Y|)
    double step_fraction = 0.25; ///< step cap as a fraction of clearance / speed
    double min_step = 1e-13;
    long max_steps = 2'000'000;
};

struct TransportStats {
    long accepted = 0;
    long rejected = 0;
};

/// Omega(z): the connection coefficient, flat sections satisfy dY = -Omega(z) Y dz.
using ConnectionField = std::function<ComplexMatrix(Complex)>;

namespace detail {

inline ComplexMatrix transport_piece(const ConnectionField& omega, const PathPiece& piece, ComplexMatrix y,
                                     double clearance, const TransportOptions& opts, TransportStats& stats) {
    // Dormand-Prince 5(4) tableau
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                            a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                            e6 = 22.0 / 525, e7 = -1.0 / 40;

    auto rhs = [&](double t, const ComplexMatrix& yy) -> ComplexMatrix {
        return -(omega(piece.point(t)) * piece.velocity(t)) * yy;
    };

    const double speed = std::max(piece.speed(), 1e-300);
    const double h_max = std::min(0.1, opts.step_fraction * clearance / speed);
    double h = h_max;
    double t = 0.0;
    ComplexMatrix k1 = rhs(t, y);
    while (1.0 - t > 1e-14) {
        if (stats.accepted + stats.rejected > opts.max_steps) {
            throw NumericError("tolerance-not-met", "transport exceeded the step budget");
        }
        h = std::min({h, h_max, 1.0 - t});
        if (h < opts.min_step) throw NumericError("step-underflow", "transport step size underflow");
        const ComplexMatrix k2 = rhs(t + c2 * h, y + h * (a21 * k1));
        const ComplexMatrix k3 = rhs(t + c3 * h, y + h * (a31 * k1 + a32 * k2));
        const ComplexMatrix k4 = rhs(t + c4 * h, y + h * (a41 * k1 + a42 * k2 + a43 * k3));
        const ComplexMatrix k5 = rhs(t + c5 * h, y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
        const ComplexMatrix k6 = rhs(t + h, y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
        const ComplexMatrix y_new = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
        const ComplexMatrix k7 = rhs(t + h, y_new);
        const ComplexMatrix err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
        const double scale = std::max(1.0, std::max(y.norm(), y_new.norm()));
        // error per unit parameter length
        const double ratio = err.norm() / (opts.tol * scale * h);
        if (!std::isfinite(ratio)) throw NumericError("non-finite", "transport produced non-finite values");
        if (ratio <= 1.0) {
            t += h;
            y = y_new;
            k1 = k7;
            ++stats.accepted;
        } else {
            ++stats.rejected;
        }
        const double factor = ratio == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(ratio, -0.2), 0.2, 5.0);
        h *= factor;
    }
    return y;
}

} // namespace detail

/// Transport of the fundamental solution with Y(start) = I around the path.
/// With Y o gamma* = Y G this end value is the loop matrix G.
inline ComplexMatrix transport(const ConnectionField& omega, Index rank, const LoopPath& path,
                               const std::vector<Complex>& singular_points, const TransportOptions& opts = {},
                               TransportStats* stats_out = nullptr) {
    if (path.pieces.empty()) return ComplexMatrix::Identity(rank, rank);
    TransportStats stats;
    ComplexMatrix y = ComplexMatrix::Identity(rank, rank);
    for (const auto& piece : path.pieces) {
        double clearance = 1e300;
        for (Complex x : singular_points) clearance = std::min(clearance, piece.distance_to(x));
        if (clearance <= 0.0) throw ValidationError("loop-clearance", "path passes through a singular point");
        y = detail::transport_piece(omega, piece, y, clearance, opts, stats);
    }
    if (stats_out) *stats_out = stats;
    return y;
}

} // namespace fuchsian
