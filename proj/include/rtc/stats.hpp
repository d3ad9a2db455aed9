#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>

#include "rtc/errors.hpp"

namespace rtc {

/// Standard Pearson product-moment coefficient, in [-1, 1].
inline double pearson(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size())
        throw LengthMismatch("series lengths differ: " + std::to_string(xs.size()) + " vs " +
                             std::to_string(ys.size()));
    const std::size_t n = xs.size();
    if (n < 2) throw LengthMismatch("need at least 2 points, got " + std::to_string(n));
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double cov = 0, vx = 0, vy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        cov += (xs[i] - mx) * (ys[i] - my);
        vx += (xs[i] - mx) * (xs[i] - mx);
        vy += (ys[i] - my) * (ys[i] - my);
    }
    if (vx == 0.0 || vy == 0.0) throw ZeroVariance("a series has zero variance");
    double r = cov / (std::sqrt(vx) * std::sqrt(vy));
    return r < -1.0 ? -1.0 : (r > 1.0 ? 1.0 : r);
}

/// (before - after) / before. Negative when the patch introduced defects; that
/// is reported as-is. Throws DivisionByZero when there was nothing to fix.
inline double fix_percentage(std::int64_t defects_before, std::int64_t defects_after) {
    if (defects_before < 0 || defects_after < 0)
        throw ValidationError("defect counts must be nonnegative", "defects");
    if (defects_before == 0)
        throw DivisionByZero("fix percentage undefined with zero defects before");
    return static_cast<double>(defects_before - defects_after) /
           static_cast<double>(defects_before);
}

struct Improvement {
    double absolute;      // same unit as the inputs
    double relative_pct;  // percent change against the baseline
};

/// Change from a baseline rate to a new rate, absolute and relative. A move
/// from 52.8 to 60.4 is +7.6 points and +14.4% relative.
inline Improvement relative_improvement(double baseline, double improved) {
    if (baseline == 0.0) throw DivisionByZero("relative improvement undefined from zero");
    return {improved - baseline, (improved - baseline) / baseline * 100.0};
}

}  // namespace rtc
