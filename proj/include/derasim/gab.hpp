#pragma once

#include "derasim/nem.hpp"
#include "derasim/prosumer.hpp"

namespace derasim {

// Two-part pricing benchmark: variable buy-back price lambda plus a per-prosumer fixed charge delta.
struct GabOutcome {
    bool aggregated = false;
    double lambda_star = 0.0;
    double delta_star = 0.0;
    double x_star = 0.0;  // energy sold to the aggregator
    double d_star = 0.0;
    double k = 0.0;
    double prosumer_surplus = 0.0;
    double dera_profit = 0.0;
    double s_no = 0.0;
};

// Best surplus when the prosumer sells nothing and buys at pi_plus.
double s_no(const Prosumer& p, const NemTariff& t, const PoAAccess& a, double g);

GabOutcome gab_outcome(const Prosumer& p, const NemTariff& t, const PoAAccess& a, double g, double pi_lmp,
                       double zeta);

}  // namespace derasim
