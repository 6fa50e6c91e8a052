#pragma once

#include <string>
#include <vector>

#include "derasim/prosumer.hpp"

namespace derasim {

/// Net supply F(pi) = G - sum_n d_n(pi) of an aggregated fleet, piecewise linear in pi.
class SupplyCurve {
public:
    SupplyCurve() = default;
    SupplyCurve(const std::vector<Prosumer>& fleet, const std::vector<PoAAccess>& access, const std::vector<double>& g);

    double operator()(double pi) const;
    /// Ordered (pi, F(pi)) knots on [0, max alpha].
    const std::vector<std::pair<double, double>>& breakpoints() const { return knots_; }
    double g_total() const { return g_total_; }
    /// G - sum of the upper consumption bounds; -inf when some bound is unlimited.
    double q_min() const { return q_min_; }
    double q_max() const { return q_max_; }

private:
    struct Piece {
        double alpha, beta, lo, hi;
    };
    std::vector<Piece> pieces_;
    std::vector<std::pair<double, double>> knots_;
    double g_total_ = 0.0;
    double q_min_ = 0.0;
    double q_max_ = 0.0;
};

SupplyCurve build_supply_curve(const std::vector<Prosumer>& fleet, const std::vector<PoAAccess>& access,
                               const std::vector<double>& g);

/// Smallest pi >= 0 with F(pi) >= q. Throws DomainError outside [q_min, q_max].
double invert_supply(const SupplyCurve& curve, double q);

struct GeneratorOffer {
    double c1 = 0.0;    // $/kWh
    double c2 = 0.0;    // $/kWh^2, >= 0
    double pmax = 0.0;  // kWh
};

struct DemandBid {
    double e1 = 0.0;    // $/kWh
    double e2 = 0.0;    // $/kWh^2, <= 0
    double dmax = 0.0;  // kWh
};

struct TransmissionNetwork {
    std::vector<GeneratorOffer> gen;     // one per bus
    std::vector<DemandBid> demand;       // one per bus
    std::vector<std::vector<double>> shift;  // L x M
    std::vector<double> line_limits;     // L

    std::size_t buses() const { return gen.size(); }
    std::size_t lines() const { return line_limits.size(); }
    void validate() const;
};

/// Prosumers attached to one bus.
struct BusFleet {
    std::vector<Prosumer> prosumers;
    std::vector<PoAAccess> access;
    std::vector<double> g;
};

enum class ClearingMode { Direct, Aggregated };

struct ClearingOutcome {
    std::vector<double> p;                // generation per bus
    std::vector<double> dd;               // elastic demand per bus
    std::vector<std::vector<double>> d;   // [bus][prosumer] consumption
    double lambda = 0.0;
    std::vector<double> mu;               // line multipliers
    std::vector<double> lmp;
    double sw = 0.0;
    double balance_residual = 0.0;
    double complementarity_residual = 0.0;
    int iterations = 0;
};

/// Welfare-maximizing dispatch under the DC line limits S * injection <= F.
/// Direct mode bids every prosumer separately; Aggregated mode bids one supply curve per bus.
ClearingOutcome clear(const TransmissionNetwork& net, const std::vector<BusFleet>& fleets, ClearingMode mode);

/// sum over buses and prosumers of U(d) - lmp (d - g)
double surplus_split(const ClearingOutcome& out, const std::vector<BusFleet>& fleets);

/// Worst violation of pi_lmp + rho_up - rho_lo = V(d) with rho inferred from which bound is active.
double stationarity_residual(const ClearingOutcome& out, const std::vector<BusFleet>& fleets, double bound_tol = 1e-7);

struct EquivalenceReport {
    ClearingOutcome direct;
    ClearingOutcome aggregated;
    double d_sw = 0.0;
    double d_lmp = 0.0;
    double d_surplus = 0.0;
    double kkt_residual = 0.0;
};

EquivalenceReport equivalence_report(const TransmissionNetwork& net, const std::vector<BusFleet>& fleets);

/// Network JSON: {buses:[{gen:{c1,c2,pmax}, demand:{e1,e2,dmax}}], lines:[{limit}], shift:[[...]],
/// prosumers:[{bus, alpha, beta, d_min, d_max, g, c_inj, c_wd}]}
struct NetworkCase {
    TransmissionNetwork net;
    std::vector<BusFleet> fleets;
};

NetworkCase network_from_json(const std::string& text);
NetworkCase load_network(const std::string& path);
std::string clearing_to_json(const ClearingOutcome& out, int indent = 2);

}  // namespace derasim
