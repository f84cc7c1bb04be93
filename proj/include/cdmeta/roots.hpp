#pragma once

#include "cdmeta/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

namespace cdmeta::roots {

struct Tolerance {
    /// Stop once |f(x)| <= f_tol.
    double f_tol = 0.0;
    /// Stop once the bracket half-width is below x_abs + x_rel * |x|.
    double x_abs = 1e-14;
    double x_rel = 4.0 * std::numeric_limits<double>::epsilon();
    int max_iter = 200;
};

/// Brent-Dekker root search on [a, b] given f(a), f(b) of opposite sign
/// (or one of them zero). Mixes bisection, secant and inverse quadratic
/// steps; never leaves the bracket.
template <class F>
double brent(F&& f, double a, double b, double fa, double fb, const Tolerance& tol) {
    if (fa == 0.0) return a;
    if (fb == 0.0) return b;
    if ((fa > 0.0) == (fb > 0.0)) {
        throw NumericError("root bracket does not change sign");
    }
    double c = a, fc = fa;
    double d = b - a, e = d;
    for (int iter = 0; iter < tol.max_iter; ++iter) {
        if ((fb > 0.0) == (fc > 0.0)) {
            c = a;
            fc = fa;
            d = e = b - a;
        }
        if (std::abs(fc) < std::abs(fb)) {
            a = b; b = c; c = a;
            fa = fb; fb = fc; fc = fa;
        }
        const double tol1 = 2.0 * std::numeric_limits<double>::epsilon() * std::abs(b)
                            + 0.5 * (tol.x_abs + tol.x_rel * std::abs(b));
        const double xm = 0.5 * (c - b);
        if (std::abs(xm) <= tol1 || std::abs(fb) <= tol.f_tol || fb == 0.0) {
            return b;
        }
        if (std::abs(e) >= tol1 && std::abs(fa) > std::abs(fb)) {
            double p, q;
            const double s = fb / fa;
            if (a == c) {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                const double qa = fa / fc;
                const double r = fb / fc;
                p = s * (2.0 * xm * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if (p > 0.0) q = -q;
            p = std::abs(p);
            const double min1 = 3.0 * xm * q - std::abs(tol1 * q);
            const double min2 = std::abs(e * q);
            if (2.0 * p < std::min(min1, min2)) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += std::abs(d) > tol1 ? d : std::copysign(tol1, xm);
        fb = f(b);
    }
    return b;
}

/// Widen [lo, hi] around a monotone increasing function until f(lo) <= 0 <= f(hi).
/// The bracket width doubles on every failed attempt.
template <class F>
std::pair<double, double> expand_increasing(F&& f, double& lo, double& hi, int max_doublings) {
    double flo = f(lo);
    double fhi = f(hi);
    for (int i = 0; i < max_doublings && (flo > 0.0 || fhi < 0.0); ++i) {
        const double width = hi - lo;
        if (flo > 0.0) {
            lo -= width;
            flo = f(lo);
        }
        if (fhi < 0.0) {
            hi += width;
            fhi = f(hi);
        }
    }
    if (flo > 0.0 || fhi < 0.0) {
        throw NumericError("bracket expansion failed after " + std::to_string(max_doublings) +
                           " doublings");
    }
    return {flo, fhi};
}

}  // namespace cdmeta::roots
