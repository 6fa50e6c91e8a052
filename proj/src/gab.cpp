#include "derasim/gab.hpp"

#include <algorithm>

#include <fmt/core.h>

#include "derasim/errors.hpp"

namespace derasim {

double s_no(const Prosumer& p, const NemTariff& t, const PoAAccess& a, double g) {
    const double f0 = clamp_f(p, a, g, 0.0);
    const double d_plus = clamp_f(p, a, g, t.pi_plus);
    if (f0 <= g) return p.utility.value(f0);
    if (d_plus <= g) return p.utility.value(g);
    return p.utility.value(d_plus) - t.pi_plus * (d_plus - g);
}

GabOutcome gab_outcome(const Prosumer& p, const NemTariff& t, const PoAAccess& a, double g, double pi_lmp,
                       double zeta) {
    if (pi_lmp < 0.0) throw DomainError(fmt::format("negative LMP {}", pi_lmp));
    if (!(zeta >= 1.0)) throw DomainError(fmt::format("zeta must be >= 1 (got {})", zeta));

    GabOutcome out;
    out.s_no = s_no(p, t, a, g);
    out.k = zeta * out.s_no;
    const double f = clamp_f(p, a, g, pi_lmp);
    if (g > f) {
        out.aggregated = true;
        out.lambda_star = pi_lmp;
        out.x_star = g - f;
        out.d_star = f;
        out.delta_star = p.utility.value(f) + pi_lmp * out.x_star - out.k;
        out.dera_profit = out.delta_star;
        out.prosumer_surplus = out.k;
    } else {
        // Stays with the utility at the opt-out optimum.
        const double f0 = clamp_f(p, a, g, 0.0);
        const double d_plus = clamp_f(p, a, g, t.pi_plus);
        out.d_star = std::max(d_plus, std::min(g, f0));
        out.prosumer_surplus = out.s_no;
        out.dera_profit = 0.0;
    }
    return out;
}

}  // namespace derasim
