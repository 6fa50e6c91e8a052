#include "derasim/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/core.h>

#include "derasim/errors.hpp"
#include "derasim/parallel.hpp"

namespace derasim {

void EquilibriumParams::validate() const {
    if (n_prosumers < 1) throw DomainError("equilibrium needs at least one prosumer");
    if (!(alpha > 0.0) || !(beta > 0.0)) throw DomainError("equilibrium needs alpha, beta > 0");
    if (!(dso_a > 0.0) || !(dso_b > 0.0)) throw DomainError("equilibrium needs DSO cost coefficients a, b > 0");
    if (initial_deras < 0) throw DomainError("initial aggregator count must be >= 0");
}

namespace {

struct Economics {
    double alpha, beta, n, g, k, pi;
    AccessAxis side;

    // Aggregator profit before access payments when it buys access c.
    double profit(double c) const {
        const double d = side == AccessAxis::Injection ? g - c : g + c;
        const double energy = side == AccessAxis::Injection ? pi * c : -pi * c;
        return -beta * d * d / (2.0 * n) + alpha * d + energy - k;
    }
    double marginal(double c) const {
        if (side == AccessAxis::Injection) return -alpha + pi + beta * (g - c) / n;
        return alpha - pi - beta * (c + g) / n;
    }
};

Economics economics(const EquilibriumParams& p, double pi, AccessAxis side) {
    if (side == AccessAxis::Symmetric) throw DomainError("equilibrium side must be injection or withdrawal");
    return {p.alpha, p.beta, static_cast<double>(p.n_prosumers), p.g_total, p.k_total, pi, side};
}

int floor_survivors(double k, int initial) {
    if (!std::isfinite(k)) return k > 0 ? initial : 0;
    return static_cast<int>(std::clamp(std::floor(k), 0.0, static_cast<double>(initial)));
}

void fill_gamma_psi(const EquilibriumParams& p, EquilibriumOutcome& out) {
    const double n = p.n_prosumers;
    out.gamma = p.alpha * p.g_total - 0.5 * p.beta * p.g_total * p.g_total / n - p.k_total;
    out.psi = -p.beta / (2.0 * n);
}

}  // namespace

EquilibriumOutcome single_interval_equilibrium(const EquilibriumParams& p) {
    p.validate();
    EquilibriumOutcome out;
    fill_gamma_psi(p, out);
    if (out.gamma >= 0.0) {
        out.reason = "gamma >= 0: no real access level";
        return out;
    }
    out.c_star = std::sqrt(out.gamma / out.psi);
    const double numer = 2.0 * out.psi * out.c_star + p.beta - p.dso_b;
    out.k_star = numer / (2.0 * p.dso_a * out.c_star);
    out.exists = numer >= 0.0;
    if (!out.exists) out.reason = "2 psi C + beta - b < 0";
    out.survivors = out.exists ? floor_survivors(out.k_star, p.initial_deras) : 0;
    return out;
}

EquilibriumOutcome equilibrium_from_conditions(const EquilibriumParams& p, double pi_lmp, AccessAxis side) {
    p.validate();
    const auto econ = economics(p, pi_lmp, side);
    EquilibriumOutcome out;
    fill_gamma_psi(p, out);
    if (out.gamma >= 0.0) {
        out.reason = "gamma >= 0: zero-access profit is nonnegative";
        return out;
    }
    out.c_star = std::sqrt(out.gamma / out.psi);
    out.k_star = (econ.marginal(out.c_star) - p.dso_a) / (p.dso_b * out.c_star);
    out.exists = out.k_star >= 0.0;
    if (!out.exists) out.reason = "marginal access value below the DSO's marginal cost";
    out.survivors = out.exists ? floor_survivors(out.k_star, p.initial_deras) : 0;
    return out;
}

ConditionResiduals verify_conditions(const EquilibriumOutcome& out, const EquilibriumParams& p, double pi_lmp,
                                     AccessAxis side) {
    ConditionResiduals r;
    if (!out.exists) return r;
    const auto econ = economics(p, pi_lmp, side);
    const double lambda = p.dso_b * out.k_star * out.c_star + p.dso_a;
    r.marginal = lambda - econ.marginal(out.c_star);
    r.profit = econ.profit(out.c_star) - lambda * out.c_star;
    r.applicable = true;
    return r;
}

EquilibriumOutcome newton_equilibrium(const EquilibriumParams& p, double pi_lmp, double c0, double k0,
                                      AccessAxis side) {
    p.validate();
    const auto econ = economics(p, pi_lmp, side);
    const double a = p.dso_a;
    const double b = p.dso_b;
    const double curvature = p.beta / p.n_prosumers;

    auto residual = [&](double c, double k, double& f1, double& f2) {
        const double lambda = b * k * c + a;
        f1 = lambda - econ.marginal(c);
        f2 = econ.profit(c) - lambda * c;
    };

    double c = c0;
    double k = k0;
    double f1, f2;
    residual(c, k, f1, f2);
    int it = 0;
    for (; it < 200; ++it) {
        const double norm = std::hypot(f1, f2);
        if (norm <= 1e-13) break;
        const double j11 = b * k + curvature;
        const double j12 = b * c;
        const double j21 = econ.marginal(c) - 2.0 * b * k * c - a;
        const double j22 = -b * c * c;
        const double det = j11 * j22 - j12 * j21;
        if (det == 0.0 || !std::isfinite(det)) throw ConvergenceError("singular Jacobian in equilibrium solve", {f1, f2});
        const double dc = (-f1 * j22 + f2 * j12) / det;
        const double dk = (-f2 * j11 + f1 * j21) / det;
        double step = 1.0;
        for (int ls = 0; ls < 60; ++ls) {
            const double cn = c + step * dc;
            if (cn > 0.0) {
                double g1, g2;
                residual(cn, k + step * dk, g1, g2);
                if (std::hypot(g1, g2) < (1.0 - 1e-4 * step) * norm) {
                    c = cn;
                    k += step * dk;
                    f1 = g1;
                    f2 = g2;
                    break;
                }
            }
            step *= 0.5;
            if (ls == 59) throw ConvergenceError("equilibrium line search failed", {f1, f2});
        }
    }
    if (std::hypot(f1, f2) > 1e-10) throw ConvergenceError("equilibrium Newton did not converge", {f1, f2});

    EquilibriumOutcome out;
    fill_gamma_psi(p, out);
    out.c_star = c;
    out.k_star = k;
    out.exists = k >= 0.0;
    out.survivors = out.exists ? floor_survivors(k, p.initial_deras) : 0;
    return out;
}

EquilibriumBank build_equilibrium_bank(const SolarTrace& trace, const MultiIntervalConfig& cfg, double eps1) {
    const auto scaled = scale_trace(trace, eps1);
    if (cfg.scenarios == 0) throw DomainError("equilibrium bank needs at least one scenario");
    const std::size_t S = cfg.scenarios;
    const int N = cfg.n_prosumers;

    Prosumer proto;
    proto.utility = QuadraticUtility(cfg.alpha, cfg.beta);
    proto.d_min = cfg.d_min;
    proto.d_max = cfg.d_max;
    proto.behavior = Behavior::Passive;
    const CompetitiveConfig competition{cfg.zeta, cfg.benchmark, 0.0};

    EquilibriumBank bank;
    bank.n_prosumers = N;
    bank.alpha = cfg.alpha;
    bank.beta = cfg.beta;
    bank.d_min = cfg.d_min;
    bank.d_max = cfg.d_max;
    bank.hours = parallel_map<HourBank>(24, [&](std::size_t h) {
        HourBank hb;
        hb.lmp = sample_trunc_gauss(cfg.lmp, S, substream_seed(cfg.seed, "hour-lmp", h));
        hb.g_total.assign(S, 0.0);
        hb.k_total.assign(S, 0.0);
        hb.x_unc.assign(S, 0.0);
        const double mean = scaled.hourly[h];
        const TruncGaussSpec dg{mean, cfg.dg_std, 0.0, kUnlimited};
        std::vector<double> g(S * static_cast<std::size_t>(N), 0.0);
        for (int n = 0; n < N; ++n) {
            std::mt19937_64 rng(substream_seed(cfg.seed, "hour-dg", h * 100000 + static_cast<std::size_t>(n)));
            for (std::size_t s = 0; s < S; ++s) {
                const double u = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
                g[s * N + n] = mean == 0.0 ? 0.0 : dg.quantile(u);
            }
        }
        for (std::size_t s = 0; s < S; ++s) {
            NemTariff t = cfg.tariff;
            if (cfg.pi_minus_tracks_lmp) t.pi_minus = hb.lmp[s];
            double G = 0.0;
            double K = 0.0;
            for (int n = 0; n < N; ++n) {
                const double gn = g[s * N + n];
                G += gn;
                K += benchmark_K(competition, proto, t, PoAAccess::unlimited(), gn);
            }
            const double d_unc = std::clamp(N * proto.utility.inverse_marginal(hb.lmp[s]), N * cfg.d_min, N * cfg.d_max);
            hb.g_total[s] = G;
            hb.k_total[s] = K;
            hb.x_unc[s] = d_unc - G;
        }
        return hb;
    });
    return bank;
}

namespace {

double per_capita_marginal(const EquilibriumBank& m, double load) {
    return std::max(m.alpha - m.beta * load / m.n_prosumers, 0.0);
}

double per_capita_utility(const EquilibriumBank& m, double load) {
    const double x = load / m.n_prosumers;
    const double sat = m.alpha / m.beta;
    if (x >= sat) return m.n_prosumers * m.alpha * m.alpha / (2.0 * m.beta);
    return m.n_prosumers * (m.alpha * x - 0.5 * m.beta * x * x);
}

// Largest c in [0, hi] with slope(c) >= price(c); slope nonincreasing, price increasing.
template <class Slope, class Price>
double solve_access(Slope slope, Price price, double hi) {
    if (hi <= 0.0 || slope(0.0) <= price(0.0)) return 0.0;
    if (slope(hi) >= price(hi)) return hi;
    double lo = 0.0;
    for (int it = 0; it < 100 && hi - lo > 1e-10 * (1.0 + hi); ++it) {
        const double mid = 0.5 * (lo + hi);
        if (slope(mid) > price(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace

HourAccess hour_equilibrium(const HourBank& hb, const EquilibriumBank& m, const MultiIntervalConfig& cfg, double eps2,
                            double firms) {
    const std::size_t S = hb.lmp.size();
    const double inv_s = 1.0 / static_cast<double>(S);
    double max_wd = 0.0;
    double max_inj = 0.0;
    for (double x : hb.x_unc) {
        max_wd = std::max(max_wd, x);
        max_inj = std::max(max_inj, -x);
    }
    auto price = [&](double c) { return eps2 * (cfg.dso_a + cfg.dso_b * firms * c); };
    auto slope_wd = [&](double c) {
        double acc = 0.0;
        for (std::size_t s = 0; s < S; ++s)
            if (hb.x_unc[s] > c) acc += per_capita_marginal(m, hb.g_total[s] + c) - hb.lmp[s];
        return acc * inv_s;
    };
    auto slope_inj = [&](double c) {
        double acc = 0.0;
        for (std::size_t s = 0; s < S; ++s)
            if (hb.x_unc[s] < -c) acc += hb.lmp[s] - per_capita_marginal(m, hb.g_total[s] - c);
        return acc * inv_s;
    };

    HourAccess out;
    out.c_wd = solve_access(slope_wd, price, max_wd);
    out.c_inj = solve_access(slope_inj, price, max_inj);
    out.price_wd = price(out.c_wd);
    out.price_inj = price(out.c_inj);
    double total = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
        const double g = hb.g_total[s];
        const double d = std::clamp(g + hb.x_unc[s], g - out.c_inj, g + out.c_wd);
        total += per_capita_utility(m, d) - hb.lmp[s] * (d - g) - hb.k_total[s];
    }
    out.benefit = total * inv_s;
    return out;
}

double firm_profit(const EquilibriumBank& bank, const MultiIntervalConfig& cfg, double eps2, double firms) {
    double total = 0.0;
    for (const auto& hb : bank.hours) {
        const auto h = hour_equilibrium(hb, bank, cfg, eps2, firms);
        total += h.benefit - h.price_wd * h.c_wd - h.price_inj * h.c_inj;
    }
    return total;
}

SurvivorResult survivor_count(const EquilibriumBank& bank, const MultiIntervalConfig& cfg, double eps2) {
    if (!(eps2 >= 0.0)) throw DomainError(fmt::format("DSO cost scale must be >= 0 (got {})", eps2));
    if (bank.hours.empty()) throw DomainError("survivor_count: empty trace");
    const double top = cfg.initial_deras;
    SurvivorResult r;
    r.profit_at_initial = firm_profit(bank, cfg, eps2, top);
    if (r.profit_at_initial >= 0.0) {
        r.k_star = top;
    } else if (firm_profit(bank, cfg, eps2, 0.0) < 0.0) {
        r.k_star = 0.0;
    } else {
        double lo = 0.0;
        double hi = top;
        int it = 0;
        while (hi - lo > cfg.k_tol) {
            if (++it > 200) throw ConvergenceError("firm-count bisection did not converge", {lo, hi});
            const double mid = 0.5 * (lo + hi);
            if (firm_profit(bank, cfg, eps2, mid) >= 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        r.k_star = lo;
    }
    r.survivors = floor_survivors(r.k_star, cfg.initial_deras);
    for (const auto& hb : bank.hours) {
        const auto h = hour_equilibrium(hb, bank, cfg, eps2, r.k_star);
        r.net_injection_access.push_back(h.c_inj - h.c_wd);
    }
    return r;
}

SurvivorResult multi_interval_survivors(const SolarTrace& trace, const MultiIntervalConfig& cfg, double eps1,
                                        double eps2) {
    return survivor_count(build_equilibrium_bank(trace, cfg, eps1), cfg, eps2);
}

}  // namespace derasim
