#include "derasim/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/core.h>

#include "derasim/errors.hpp"

namespace derasim {

Schedule optimal_schedule(const Prosumer& p, const PoAAccess& a, double g, double pi, double k) {
    feasible_box(p, a, g);
    const double d_hat = p.inverse_demand(pi);
    const double d = std::min(g + a.c_wd, std::max(d_hat, g - a.c_inj));
    return {d, p.utility.value(d) - k};
}

std::optional<double> avg_cost(double d_star, double omega) {
    if (d_star == 0.0) return std::nullopt;
    return omega / d_star;
}

AggregationOutcome aggregate(const std::vector<Prosumer>& fleet, const std::vector<PoAAccess>& access,
                             const std::vector<double>& g, double pi, const std::vector<double>& k) {
    const std::size_t n = fleet.size();
    if (access.size() != n || g.size() != n || k.size() != n)
        throw DomainError(fmt::format("aggregate: size mismatch (fleet {}, access {}, g {}, k {})", n, access.size(),
                                      g.size(), k.size()));
    AggregationOutcome out;
    out.d_star.resize(n);
    out.omega.resize(n);
    out.k = k;
    out.prosumer_surplus.resize(n);
    out.profit_share.resize(n);
    out.avg_cost.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto s = optimal_schedule(fleet[i], access[i], g[i], pi, k[i]);
        out.d_star[i] = s.d_star;
        out.omega[i] = s.omega;
        out.prosumer_surplus[i] = fleet[i].utility.value(s.d_star) - s.omega;
        out.profit_share[i] = s.omega - pi * (s.d_star - g[i]);
        out.avg_cost[i] = avg_cost(s.d_star, s.omega);
        out.dera_profit += out.profit_share[i];
    }
    return out;
}

AggregationOutcome aggregate(const std::vector<Prosumer>& fleet, const std::vector<double>& g, double pi,
                             const std::vector<double>& k) {
    std::vector<PoAAccess> access;
    access.reserve(fleet.size());
    for (const auto& p : fleet) access.push_back(p.access);
    return aggregate(fleet, access, g, pi, k);
}

double dera_profit(const AggregationOutcome& out, const std::vector<double>& g, double pi) {
    if (g.size() != out.d_star.size()) throw DomainError("dera_profit: size mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) total += out.omega[i] - pi * (out.d_star[i] - g[i]);
    return total;
}

double zeta_bar(const Prosumer& p, const NemTariff& t, const PoAAccess& a, double g, double pi) {
    if (t.pi_minus != pi)
        throw AssumptionError(fmt::format("zeta_bar needs pi_minus == LMP (got {} vs {})", t.pi_minus, pi));
    const double s_nem = nem_outcome(p, t, a, g).surplus;
    if (s_nem < 0.0) throw AssumptionError(fmt::format("prosumer {}: negative benchmark surplus {}", p.id, s_nem));
    if (s_nem == 0.0) return 1.0;
    const double d = optimal_schedule(p, a, g, pi, 0.0).d_star;
    return (p.utility.value(d) - pi * (d - g)) / s_nem;
}

double zeta_bar_min(const std::vector<Prosumer>& fleet, const NemTariff& t, const std::vector<PoAAccess>& access,
                    const std::vector<double>& g, double pi) {
    if (fleet.empty()) throw DomainError("zeta_bar_min: empty fleet");
    double z = kUnlimited;
    for (std::size_t i = 0; i < fleet.size(); ++i) z = std::min(z, zeta_bar(fleet[i], t, access[i], g[i], pi));
    return z;
}

namespace {

double device_response(const Device& dev, double x) {
    return std::max(dev.d_min, std::min(dev.utility.inverse_marginal(x), dev.d_max));
}

double total_response(const std::vector<DeviceProsumer>& fleet, double x) {
    double s = 0.0;
    for (const auto& p : fleet)
        for (const auto& dev : p.devices) s += device_response(dev, x);
    return s;
}

// Root of H(x) = target on [lo, hi], H nonincreasing and piecewise linear.
double solve_shadow_price(const std::vector<DeviceProsumer>& fleet, double target, double lo, double hi) {
    double h_lo = total_response(fleet, lo);
    double h_hi = total_response(fleet, hi);
    if (h_lo < target || h_hi > target)
        throw ConvergenceError(fmt::format("shadow price not bracketed: H({})={}, H({})={}, target {}", lo, h_lo, hi,
                                           h_hi, target));
    for (int it = 0; it < 200 && hi - lo > 1e-10; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double h_mid = total_response(fleet, mid);
        if (h_mid > target) {
            lo = mid;
            h_lo = h_mid;
        } else {
            hi = mid;
            h_hi = h_mid;
        }
    }
    if (h_lo - h_hi <= 0.0) return 0.5 * (lo + hi);
    return lo + (h_lo - target) / (h_lo - h_hi) * (hi - lo);
}

}  // namespace

PoaOutcome poa_schedule(const std::vector<DeviceProsumer>& fleet, const PoAAccess& poa, const std::vector<double>& g,
                        double pi, const std::vector<double>& k) {
    if (g.size() != fleet.size() || k.size() != fleet.size()) throw DomainError("poa_schedule: size mismatch");
    if (pi < 0.0) throw DomainError(fmt::format("negative LMP {}", pi));
    poa.validate();

    const double g_total = std::accumulate(g.begin(), g.end(), 0.0);
    double d_lo = 0.0;
    double d_hi = 0.0;
    double alpha_max = 0.0;
    for (const auto& p : fleet) {
        for (const auto& dev : p.devices) {
            d_lo += dev.d_min;
            d_hi += dev.d_max;
            alpha_max = std::max(alpha_max, dev.utility.alpha);
        }
    }
    if (d_lo - g_total > poa.c_wd)
        throw FeasibilityError(fmt::format("aggregate minimum load {} exceeds G + c_wd", d_lo), "sum d_min > G + c_wd");
    if (g_total - d_hi > poa.c_inj)
        throw FeasibilityError(fmt::format("aggregate maximum load {} below G - c_inj", d_hi), "G - c_inj > sum d_max");

    PoaOutcome out;
    out.shadow_price = pi;
    const double h_pi = total_response(fleet, pi);
    if (h_pi > g_total + poa.c_wd) {
        out.binding = Binding::Withdrawal;
        out.shadow_price = solve_shadow_price(fleet, g_total + poa.c_wd, pi, std::max(pi, alpha_max));
    } else if (h_pi < g_total - poa.c_inj) {
        out.binding = Binding::Injection;
        const double target = g_total - poa.c_inj;
        out.shadow_price = total_response(fleet, 0.0) < target ? 0.0 : solve_shadow_price(fleet, target, 0.0, pi);
    }

    out.d_star.resize(fleet.size());
    out.omega.resize(fleet.size());
    for (std::size_t n = 0; n < fleet.size(); ++n) {
        double u = 0.0;
        for (const auto& dev : fleet[n].devices) {
            const double d = device_response(dev, out.shadow_price);
            out.d_star[n].push_back(d);
            u += dev.utility.value(d);
        }
        out.omega[n] = u - k[n];
    }

    // Satiated devices absorb what the injection limit still forces in, pro rata to headroom.
    if (out.binding == Binding::Injection && out.shadow_price == 0.0) {
        double placed = 0.0;
        double headroom = 0.0;
        for (std::size_t n = 0; n < fleet.size(); ++n) {
            for (std::size_t j = 0; j < fleet[n].devices.size(); ++j) {
                placed += out.d_star[n][j];
                headroom += fleet[n].devices[j].d_max - out.d_star[n][j];
            }
        }
        double missing = std::max(0.0, g_total - poa.c_inj - placed);
        const double share = std::isfinite(headroom) && headroom > 0.0 ? missing / headroom : 0.0;
        for (std::size_t n = 0; n < fleet.size(); ++n) {
            double u = 0.0;
            for (std::size_t j = 0; j < fleet[n].devices.size(); ++j) {
                const auto& dev = fleet[n].devices[j];
                auto& d = out.d_star[n][j];
                if (std::isfinite(headroom)) {
                    d += share * (dev.d_max - d);
                } else if (!std::isfinite(dev.d_max)) {
                    d += missing;
                    missing = 0.0;
                }
                u += dev.utility.value(d);
            }
            out.omega[n] = u - k[n];
        }
    }
    return out;
}

}  // namespace derasim
