#pragma once

#include <cstdint>
#include <vector>

#include "derasim/competitive_config.hpp"
#include "derasim/nem.hpp"
#include "derasim/prosumer.hpp"
#include "derasim/scenario.hpp"

namespace derasim {

enum class AccessBranch { Withdrawal, Injection, Interior };

// Profit split of one prosumer into withdrawal-limited, injection-limited and unconstrained parts.
struct BenefitSample {
    double q_plus = 0.0;
    double q_minus = 0.0;
    double phi_wd = 0.0;
    double phi_inj = 0.0;
    double h = 0.0;
    double k = 0.0;
    AccessBranch branch = AccessBranch::Interior;

    double contribution() const { return phi_wd + phi_inj + h - k; }
};

BenefitSample benefit_sample(const Prosumer& p, const PoAAccess& a, double g, double pi, double k);

enum class AccessAxis { Injection, Withdrawal, Symmetric };

const char* to_string(AccessAxis axis);
AccessAxis access_axis_from_string(const std::string& s);

struct BenefitOptions {
    AccessAxis axis = AccessAxis::Withdrawal;
    std::vector<double> grid;
    double other_limit = kUnlimited;     // limit on the axis not being swept
    CompetitiveConfig competition{1.01, BenchmarkMode::NemPassive, 0.0};
    PoAAccess benchmark_access{};        // access used when pricing the benchmark K
    bool pi_minus_tracks_lmp = true;
};

struct BenefitCurve {
    AccessAxis axis = AccessAxis::Withdrawal;
    std::vector<double> grid;
    std::vector<double> phi;
    std::vector<double> phi_stderr;
    std::size_t mc_count = 0;
    std::uint64_t seed = 0;
};

PoAAccess access_at(const BenefitOptions& opt, double c);

/// Sample mean of the fleet's maximum profit at each grid point, with common scenarios across the grid.
BenefitCurve benefit_curve(const std::vector<Prosumer>& fleet, const ScenarioSet& scenarios, const NemTariff& tariff,
                           const BenefitOptions& opt);

struct BidStep {
    double c_start = 0.0;
    double c_end = 0.0;
    double price = 0.0;  // $/kWh of additional access
};

/// Marginal access bid: forward differences of phi, repaired to be nonincreasing.
std::vector<BidStep> access_bid(const BenefitCurve& curve);

/// Weighted pool-adjacent-violators fit, nonincreasing.
std::vector<double> isotonic_nonincreasing(const std::vector<double>& y, const std::vector<double>& w);

}  // namespace derasim
