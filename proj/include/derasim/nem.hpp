#pragma once

#include "derasim/competitive_config.hpp"
#include "derasim/prosumer.hpp"

namespace derasim {

/// Net-metering tariff billed on net consumption z = d - g.
struct NemTariff {
    double pi_plus = 0.3;   // retail rate, $/kWh
    double pi_minus = 0.0;  // export credit, $/kWh
    double pi_zero = 0.0;   // connection charge, $

    void validate() const;
};

struct NemOutcome {
    double d = 0.0;        // consumption, kWh
    double surplus = 0.0;  // U(d) - bill
    double z = 0.0;        // d - g
    double bill = 0.0;
    double price = 0.0;    // effective marginal price at the optimum (pi+, pi-, or the interior mu)
};

/// max{pi+ z, pi- z} + pi0
double nem_bill(const NemTariff& t, double z);

/// Lower and upper ends of the access-constrained consumption box.
struct ConsumptionBox {
    double lo;
    double hi;
};

/// Throws FeasibilityError when max{d_min, g - c_inj} > min{d_max, g + c_wd}.
ConsumptionBox feasible_box(const Prosumer& p, const PoAAccess& a, double g);

/// Consumption response to price x inside the access box:
/// max{d_min, g - c_inj, min{V^-1(x), d_max, g + c_wd}}.
double clamp_f(const Prosumer& p, const PoAAccess& a, double g, double x);

NemOutcome active_surplus(const Prosumer& p, const NemTariff& t, const PoAAccess& a, double g);
NemOutcome passive_surplus(const Prosumer& p, const NemTariff& t, const PoAAccess& a, double g);

/// Dispatches on p.behavior.
NemOutcome nem_outcome(const Prosumer& p, const NemTariff& t, const PoAAccess& a, double g);

/// Competitive floor K for one prosumer. Negative values are returned as-is.
double benchmark_K(const CompetitiveConfig& cfg, const Prosumer& p, const NemTariff& t, const PoAAccess& a,
                   double g);

}  // namespace derasim
