#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "derasim/access.hpp"
#include "derasim/nem.hpp"
#include "derasim/scenario.hpp"

namespace derasim {

// Homogeneous aggregators competing for one access product priced at the DSO's marginal cost a + b P.
struct EquilibriumParams {
    int n_prosumers = 50;
    double alpha = 0.4;
    double beta = 0.1;
    double g_total = 0.0;
    double k_total = 0.0;
    double dso_a = 0.009;
    double dso_b = 0.0005;
    int initial_deras = 200;

    void validate() const;
};

struct EquilibriumOutcome {
    double c_star = 0.0;
    double k_star = 0.0;
    double gamma = 0.0;
    double psi = 0.0;
    bool exists = false;
    int survivors = 0;
    std::string reason;
};

/// Closed form: C = sqrt(gamma/psi), K = (2 psi C + beta - b) / (2 a C).
EquilibriumOutcome single_interval_equilibrium(const EquilibriumParams& params);

/// Closed form re-derived from the two equilibrium conditions at a given LMP.
EquilibriumOutcome equilibrium_from_conditions(const EquilibriumParams& params, double pi_lmp,
                                               AccessAxis side = AccessAxis::Withdrawal);

struct ConditionResiduals {
    double marginal = 0.0;  // (b P + a) - dPi/dC
    double profit = 0.0;    // Pi(C) - lambda C
    bool applicable = false;
};

ConditionResiduals verify_conditions(const EquilibriumOutcome& out, const EquilibriumParams& params, double pi_lmp,
                                     AccessAxis side = AccessAxis::Withdrawal);

/// Damped Newton on the two conditions in (C, K). Throws ConvergenceError.
EquilibriumOutcome newton_equilibrium(const EquilibriumParams& params, double pi_lmp, double c0, double k0,
                                      AccessAxis side = AccessAxis::Withdrawal);

// Multi-interval survivor analysis.
struct MultiIntervalConfig {
    int n_prosumers = 50;
    double alpha = 0.4;
    double beta = 0.1;
    double d_min = 0.0;
    double d_max = 1000.0;
    double zeta = 1.01;
    NemTariff tariff{0.3, 0.0, 0.0};
    bool pi_minus_tracks_lmp = true;
    BenchmarkMode benchmark = BenchmarkMode::NemPassive;
    TruncGaussSpec lmp{0.05, 0.01, 0.0, 0.3};
    double dg_std = 0.2;
    double dso_a = 0.009;
    double dso_b = 0.0005;
    int initial_deras = 200;
    std::size_t scenarios = 10000;
    std::uint64_t seed = 2024;
    double k_tol = 0.01;
};

// Per-hour, per-scenario sufficient statistics for one aggregator.
struct HourBank {
    std::vector<double> g_total;   // aggregate DG
    std::vector<double> lmp;
    std::vector<double> k_total;   // sum of competitive floors
    std::vector<double> x_unc;     // unconstrained net withdrawal
};

struct EquilibriumBank {
    std::vector<HourBank> hours;
    int n_prosumers = 50;
    double alpha = 0.4;
    double beta = 0.1;
    double d_min = 0.0;
    double d_max = 1000.0;
};

EquilibriumBank build_equilibrium_bank(const SolarTrace& trace, const MultiIntervalConfig& cfg, double eps1);

struct HourAccess {
    double c_wd = 0.0;
    double c_inj = 0.0;
    double price_wd = 0.0;
    double price_inj = 0.0;
    double benefit = 0.0;
};

/// Access each firm buys in one hour when `firms` identical firms share the DSO's supply.
HourAccess hour_equilibrium(const HourBank& bank, const EquilibriumBank& model, const MultiIntervalConfig& cfg,
                            double eps2, double firms);

/// Summed hourly profit net of access payments for one firm.
double firm_profit(const EquilibriumBank& bank, const MultiIntervalConfig& cfg, double eps2, double firms);

struct SurvivorResult {
    double k_star = 0.0;
    int survivors = 0;
    std::vector<double> net_injection_access;  // per hour, at the surviving firm count
    double profit_at_initial = 0.0;
};

SurvivorResult survivor_count(const EquilibriumBank& bank, const MultiIntervalConfig& cfg, double eps2);

SurvivorResult multi_interval_survivors(const SolarTrace& trace, const MultiIntervalConfig& cfg, double eps1,
                                        double eps2);

}  // namespace derasim
