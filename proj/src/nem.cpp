#include "derasim/nem.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

#include "derasim/errors.hpp"
#include "derasim/gab.hpp"

namespace derasim {

void NemTariff::validate() const {
    if (!(pi_minus >= 0.0) || !(pi_minus <= pi_plus))
        throw DomainError(fmt::format("tariff needs 0 <= pi_minus <= pi_plus (got {}, {})", pi_minus, pi_plus));
    if (!(pi_zero >= 0.0)) throw DomainError(fmt::format("connection charge must be >= 0 (got {})", pi_zero));
}

double nem_bill(const NemTariff& t, double z) {
    return std::max(t.pi_plus * z, t.pi_minus * z) + t.pi_zero;
}

ConsumptionBox feasible_box(const Prosumer& p, const PoAAccess& a, double g) {
    const double from_inj = g - a.c_inj;
    const double to_wd = g + a.c_wd;
    if (p.d_min > p.d_max) throw FeasibilityError("empty consumption range", "d_min > d_max");
    if (p.d_min > to_wd)
        throw FeasibilityError(fmt::format("prosumer {}: d_min {} exceeds g + c_wd = {}", p.id, p.d_min, to_wd),
                               "d_min > g + c_wd");
    if (from_inj > p.d_max)
        throw FeasibilityError(fmt::format("prosumer {}: g - c_inj = {} exceeds d_max {}", p.id, from_inj, p.d_max),
                               "g - c_inj > d_max");
    return {std::max(p.d_min, from_inj), std::min(p.d_max, to_wd)};
}

double clamp_f(const Prosumer& p, const PoAAccess& a, double g, double x) {
    const auto box = feasible_box(p, a, g);
    return std::max(box.lo, std::min(p.utility.inverse_marginal(x), box.hi));
}

namespace {

NemOutcome settle(const Prosumer& p, const NemTariff& t, double g, double d, double price) {
    NemOutcome out;
    out.d = d;
    out.z = d - g;
    out.bill = nem_bill(t, out.z);
    out.surplus = p.utility.value(d) - out.bill;
    out.price = price;
    return out;
}

// Solves f(mu) = g on [lo, hi] with f nonincreasing.
double interior_price(const Prosumer& p, const PoAAccess& a, double g, double lo, double hi) {
    if (clamp_f(p, a, g, lo) < g || clamp_f(p, a, g, hi) > g)
        throw ConvergenceError(fmt::format("prosumer {}: interior NEM price not bracketed on [{}, {}]", p.id, lo, hi));
    for (int it = 0; it < 200 && hi - lo > 1e-10; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (clamp_f(p, a, g, mid) > g) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace

NemOutcome active_surplus(const Prosumer& p, const NemTariff& t, const PoAAccess& a, double g) {
    const double d_plus = clamp_f(p, a, g, t.pi_plus);
    const double d_minus = clamp_f(p, a, g, t.pi_minus);
    if (g >= d_minus) return settle(p, t, g, d_minus, t.pi_minus);
    if (g <= d_plus) return settle(p, t, g, d_plus, t.pi_plus);
    const double mu = interior_price(p, a, g, t.pi_minus, t.pi_plus);
    return settle(p, t, g, g, mu);
}

NemOutcome passive_surplus(const Prosumer& p, const NemTariff& t, const PoAAccess& a, double g) {
    const double d_plus = clamp_f(p, a, g, t.pi_plus);
    return settle(p, t, g, d_plus, d_plus > g ? t.pi_plus : t.pi_minus);
}

NemOutcome nem_outcome(const Prosumer& p, const NemTariff& t, const PoAAccess& a, double g) {
    return p.behavior == Behavior::Active ? active_surplus(p, t, a, g) : passive_surplus(p, t, a, g);
}

double benchmark_K(const CompetitiveConfig& cfg, const Prosumer& p, const NemTariff& t, const PoAAccess& a,
                   double g) {
    cfg.validate();
    switch (cfg.mode) {
        case BenchmarkMode::Nem: return cfg.zeta * nem_outcome(p, t, a, g).surplus;
        case BenchmarkMode::NemActive: return cfg.zeta * active_surplus(p, t, a, g).surplus;
        case BenchmarkMode::NemPassive: return cfg.zeta * passive_surplus(p, t, a, g).surplus;
        case BenchmarkMode::Gab: return cfg.zeta * s_no(p, t, a, g);
        case BenchmarkMode::Fixed: return cfg.fixed_k;
    }
    return 0.0;
}

void CompetitiveConfig::validate() const {
    if (!(zeta >= 1.0)) throw DomainError(fmt::format("zeta must be >= 1 (got {})", zeta));
}

BenchmarkMode benchmark_mode_from_string(const std::string& s) {
    if (s == "nem") return BenchmarkMode::Nem;
    if (s == "nem_active") return BenchmarkMode::NemActive;
    if (s == "nem_passive") return BenchmarkMode::NemPassive;
    if (s == "gab") return BenchmarkMode::Gab;
    if (s == "fixed") return BenchmarkMode::Fixed;
    throw ConfigError(fmt::format("unknown benchmark mode '{}'", s));
}

const char* to_string(BenchmarkMode m) {
    switch (m) {
        case BenchmarkMode::Nem: return "nem";
        case BenchmarkMode::NemActive: return "nem_active";
        case BenchmarkMode::NemPassive: return "nem_passive";
        case BenchmarkMode::Gab: return "gab";
        case BenchmarkMode::Fixed: return "fixed";
    }
    return "?";
}

}  // namespace derasim
