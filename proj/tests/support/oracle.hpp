#pragma once

// Brute-force references shared by unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <random>

#include "derasim/prosumer.hpp"

namespace oracle {

struct Argmax {
    double x = 0.0;
    double value = 0.0;
};

/// Grid search at `step` followed by golden-section refinement around the best grid point.
/// Assumes f is unimodal on [lo, hi].
template <class F>
Argmax maximize(F&& f, double lo, double hi, double step = 1e-4) {
    Argmax best{lo, f(lo)};
    if (hi <= lo) return best;
    const auto n = static_cast<long>(std::ceil((hi - lo) / step));
    for (long i = 1; i <= n; ++i) {
        const double x = std::min(hi, lo + static_cast<double>(i) * step);
        const double v = f(x);
        if (v > best.value) best = {x, v};
    }
    double a = std::max(lo, best.x - step);
    double b = std::min(hi, best.x + step);
    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
    double c = b - r * (b - a);
    double d = a + r * (b - a);
    double fc = f(c);
    double fd = f(d);
    for (int it = 0; it < 100 && b - a > 1e-13; ++it) {
        if (fc > fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    const double x = 0.5 * (a + b);
    const double v = f(x);
    if (v > best.value) best = {x, v};
    return best;
}

/// Feasible consumption interval, with an unbounded top capped where further consumption stops paying off.
inline std::pair<double, double> search_box(const derasim::Prosumer& p, const derasim::PoAAccess& a, double g) {
    const double lo = std::max(p.d_min, g - a.c_inj);
    double hi = std::min(p.d_max, g + a.c_wd);
    if (!std::isfinite(hi)) hi = std::max(lo, p.utility.satiation());
    return {lo, hi};
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace oracle
