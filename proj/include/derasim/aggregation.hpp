#pragma once

#include <optional>
#include <string>
#include <vector>

#include "derasim/nem.hpp"
#include "derasim/prosumer.hpp"

namespace derasim {

struct Schedule {
    double d_star = 0.0;
    double omega = 0.0;  // payment from the prosumer to the aggregator
};

/// Profit-maximizing schedule and payment for one prosumer facing LMP `pi`,
/// holding the prosumer's surplus at exactly `k`.
Schedule optimal_schedule(const Prosumer& p, const PoAAccess& a, double g, double pi, double k);

/// omega / d; nullopt when d == 0.
std::optional<double> avg_cost(double d_star, double omega);

struct AggregationOutcome {
    std::vector<double> d_star;
    std::vector<double> omega;
    std::vector<double> k;
    std::vector<double> prosumer_surplus;  // U(d*) - omega
    std::vector<double> profit_share;      // omega - pi (d* - g)
    std::vector<std::optional<double>> avg_cost;
    double dera_profit = 0.0;
};

/// Fleet version; uses each prosumer's own access limits.
AggregationOutcome aggregate(const std::vector<Prosumer>& fleet, const std::vector<double>& g, double pi,
                             const std::vector<double>& k);
AggregationOutcome aggregate(const std::vector<Prosumer>& fleet, const std::vector<PoAAccess>& access,
                             const std::vector<double>& g, double pi, const std::vector<double>& k);

/// sum_n omega_n - pi (d_n - g_n)
double dera_profit(const AggregationOutcome& out, const std::vector<double>& g, double pi);

/// Largest zeta keeping this prosumer's contribution to profit nonnegative.
/// Requires t.pi_minus == pi; throws AssumptionError if the benchmark surplus is negative.
double zeta_bar(const Prosumer& p, const NemTariff& t, const PoAAccess& a, double g, double pi);
double zeta_bar_min(const std::vector<Prosumer>& fleet, const NemTariff& t, const std::vector<PoAAccess>& access,
                    const std::vector<double>& g, double pi);

// Several flexible devices behind one point of aggregation.
struct Device {
    QuadraticUtility utility;
    double d_min = 0.0;
    double d_max = kUnlimited;
};

struct DeviceProsumer {
    std::string id;
    std::vector<Device> devices;
};

enum class Binding { None, Withdrawal, Injection };

struct PoaOutcome {
    std::vector<std::vector<double>> d_star;  // [prosumer][device]
    std::vector<double> omega;
    double shadow_price = 0.0;
    Binding binding = Binding::None;
};

/// Schedules every device against one aggregate access limit. When the limit binds, all
/// devices are priced at a common shadow price found by bisection.
PoaOutcome poa_schedule(const std::vector<DeviceProsumer>& fleet, const PoAAccess& poa, const std::vector<double>& g,
                        double pi, const std::vector<double>& k);

}  // namespace derasim
