#include <doctest.h>

#include <random>

#include "derasim/errors.hpp"
#include "derasim/market.hpp"
#include "oracle.hpp"

using namespace derasim;

namespace {

Prosumer make(double alpha = 0.4, double beta = 0.1, double d_max = kUnlimited) {
    Prosumer p;
    p.id = "p";
    p.utility = QuadraticUtility(alpha, beta);
    p.d_max = d_max;
    return p;
}

BusFleet fleet_of(std::vector<Prosumer> ps, std::vector<double> g) {
    BusFleet f;
    f.access.assign(ps.size(), PoAAccess::unlimited());
    f.prosumers = std::move(ps);
    f.g = std::move(g);
    return f;
}

TransmissionNetwork one_bus() {
    TransmissionNetwork net;
    net.gen = {{0.1, 0.0, 10.0}};
    net.demand = {{0.0, 0.0, 0.0}};
    return net;
}

// Generator at bus 0, nothing else there; one line carrying bus 0's injection.
TransmissionNetwork two_bus(double limit, DemandBid demand0 = {}) {
    TransmissionNetwork net;
    net.gen = {{0.05, 0.0, 10.0}, {0.0, 0.0, 0.0}};
    net.demand = {demand0, {0.0, 0.0, 0.0}};
    net.shift = {{1.0, 0.0}};
    net.line_limits = {limit};
    return net;
}

}  // namespace

TEST_SUITE("market") {
    TEST_CASE("supply curve of one prosumer") {
        const SupplyCurve c({make(0.4, 0.1, 4.0)}, {PoAAccess::unlimited()}, {2.0});
        CHECK(c(0.05) == doctest::Approx(-1.5));
        CHECK(c(0.2) == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(c(0.4) == doctest::Approx(2.0));
        CHECK(invert_supply(c, 0.0) == doctest::Approx(0.2));
        CHECK(invert_supply(c, 2.0) == doctest::Approx(0.4));
        CHECK_THROWS_AS(invert_supply(c, -3.0), DomainError);
        CHECK_THROWS_AS(invert_supply(c, 2.5), DomainError);
        CHECK(c.q_min() == doctest::Approx(-2.0));
        CHECK(c.q_max() == doctest::Approx(2.0));
    }

    TEST_CASE("property: supply curve is nondecreasing, additive and matches knots") {
        std::mt19937_64 rng(41);
        for (int i = 0; i < 300; ++i) {
            const int n = 1 + static_cast<int>(rng() % 5);
            std::vector<Prosumer> fleet;
            std::vector<PoAAccess> access;
            std::vector<double> g;
            for (int j = 0; j < n; ++j) {
                fleet.push_back(make(oracle::uniform(rng, 0.1, 1.0), oracle::uniform(rng, 0.05, 0.5),
                                     oracle::uniform(rng, 1.0, 10.0)));
                access.push_back(rng() % 2 ? PoAAccess::unlimited()
                                           : PoAAccess{oracle::uniform(rng, 0.5, 4.0), oracle::uniform(rng, 0.5, 4.0)});
                g.push_back(oracle::uniform(rng, 0.0, 5.0));
                if (std::max(0.0, g.back() - access.back().c_inj) > fleet.back().d_max) g.back() = 0.0;
            }
            const SupplyCurve all(fleet, access, g);
            for (int t = 0; t < 20; ++t) {
                double a = oracle::uniform(rng, 0.0, 1.0), b = oracle::uniform(rng, 0.0, 1.0);
                if (a > b) std::swap(a, b);
                CHECK(all(a) <= all(b) + 1e-12);
                double sum = 0.0;
                for (int j = 0; j < n; ++j) sum += SupplyCurve({fleet[j]}, {access[j]}, {g[j]})(a);
                CHECK(all(a) == doctest::Approx(sum).epsilon(1e-12));
            }
            const auto& k = all.breakpoints();
            for (std::size_t j = 1; j < k.size(); ++j) {
                const double mid = 0.5 * (k[j - 1].first + k[j].first);
                CHECK(all(mid) == doctest::Approx(0.5 * (k[j - 1].second + k[j].second)).epsilon(1e-12));
            }
        }
    }

    TEST_CASE("one bus clears at marginal cost") {
        const std::vector<BusFleet> fleets{fleet_of({make()}, {0.0})};
        for (auto mode : {ClearingMode::Direct, ClearingMode::Aggregated}) {
            const auto out = clear(one_bus(), fleets, mode);
            CHECK(out.lambda == doctest::Approx(0.1).epsilon(1e-9));
            CHECK(out.lmp[0] == doctest::Approx(0.1).epsilon(1e-9));
            CHECK(out.d[0][0] == doctest::Approx(3.0).epsilon(1e-9));
            CHECK(out.p[0] == doctest::Approx(3.0).epsilon(1e-9));
            CHECK(out.sw == doctest::Approx(0.45).epsilon(1e-9));
            CHECK(out.balance_residual <= 1e-8);
            CHECK(surplus_split(out, fleets) == doctest::Approx(0.45).epsilon(1e-9));
        }
    }

    TEST_CASE("congested line separates prices") {
        const std::vector<BusFleet> fleets{fleet_of({}, {}), fleet_of({make()}, {0.0})};
        for (auto mode : {ClearingMode::Direct, ClearingMode::Aggregated}) {
            const auto out = clear(two_bus(1.0), fleets, mode);
            CHECK(out.d[1][0] == doctest::Approx(1.0).epsilon(1e-9));
            CHECK(out.lmp[0] == doctest::Approx(0.05).epsilon(1e-9));
            CHECK(out.lmp[1] == doctest::Approx(0.3).epsilon(1e-9));
            REQUIRE(out.mu.size() == 1);
            CHECK(out.mu[0] == doctest::Approx(0.25).epsilon(1e-9));
            CHECK(out.sw == doctest::Approx(0.3).epsilon(1e-9));
            CHECK(out.complementarity_residual <= 1e-8);
            CHECK(stationarity_residual(out, fleets) <= 1e-6);
        }
    }

    TEST_CASE("no prosumers: textbook supply and demand") {
        TransmissionNetwork net;
        net.gen = {{0.1, 0.02, 100.0}};
        net.demand = {{0.5, -0.02, 100.0}};
        const std::vector<BusFleet> fleets{BusFleet{}};
        const auto out = clear(net, fleets, ClearingMode::Direct);
        CHECK(out.p[0] == doctest::Approx(10.0).epsilon(1e-9));
        CHECK(out.dd[0] == doctest::Approx(10.0).epsilon(1e-9));
        CHECK(out.lambda == doctest::Approx(0.3).epsilon(1e-9));
        CHECK(out.sw == doctest::Approx(2.0).epsilon(1e-9));
        const auto rep = equivalence_report(net, fleets);
        CHECK(rep.d_sw == 0.0);
        CHECK(rep.d_lmp == 0.0);
        CHECK(rep.d_surplus == 0.0);
    }

    TEST_CASE("surplus split") {
        ClearingOutcome out;
        out.lmp = {0.1, 0.1};
        out.d = {{2.0}, {2.0}};
        const std::vector<BusFleet> fleets{fleet_of({make()}, {2.0}), fleet_of({make()}, {2.0})};
        CHECK(surplus_split(out, fleets) == doctest::Approx(2 * 0.6));
    }

    TEST_CASE("direct and aggregated clearing agree on the worked examples") {
        const std::vector<BusFleet> one{fleet_of({make()}, {0.0})};
        auto rep = equivalence_report(one_bus(), one);
        CHECK(rep.d_sw <= 1e-6);
        CHECK(rep.d_lmp <= 1e-6);
        CHECK(rep.d_surplus <= 1e-6);
        const std::vector<BusFleet> two{fleet_of({}, {}), fleet_of({make()}, {0.0})};
        rep = equivalence_report(two_bus(1.0), two);
        CHECK(rep.d_sw <= 1e-6);
        CHECK(rep.d_lmp <= 1e-6);
        CHECK(rep.d_surplus <= 1e-6);
        CHECK(rep.kkt_residual <= 1e-6);
    }

    TEST_CASE("property: clearing matches a nested brute-force search on the two-bus case") {
        std::mt19937_64 rng(42);
        for (int i = 0; i < 25; ++i) {
            const double limit = oracle::uniform(rng, 0.5, 5.0);
            const DemandBid dem{oracle::uniform(rng, 0.2, 0.5), -oracle::uniform(rng, 0.01, 0.05), 8.0};
            const auto p = make(oracle::uniform(rng, 0.2, 0.8), oracle::uniform(rng, 0.05, 0.3), 8.0);
            const double g = oracle::uniform(rng, 0.0, 3.0);
            const auto net = two_bus(limit, dem);
            const std::vector<BusFleet> fleets{fleet_of({}, {}), fleet_of({p}, {g})};
            const auto out = clear(net, fleets, ClearingMode::Direct);

            auto welfare = [&](double d, double dd) {
                const double pg = dd + d - g;
                return dem.e1 * dd + 0.5 * dem.e2 * dd * dd - 0.05 * pg + p.utility.value(d);
            };
            // Feasibility: 0 <= P = D + d - g <= 10, flow d - g <= limit.
            const double d_hi = std::min(p.d_max, g + limit);
            auto best_for_d = [&](double d) {
                const double lo = std::max(0.0, g - d);
                const double hi = std::min(dem.dmax, 10.0 + g - d);
                return oracle::maximize([&](double dd) { return welfare(d, dd); }, lo, hi, 1e-2).value;
            };
            const auto best = oracle::maximize(best_for_d, 0.0, d_hi, 1e-2);
            CHECK(out.sw == doctest::Approx(best.value).epsilon(1e-5));
            CHECK(std::abs(out.sw - best.value) <= 1e-5);

            // No random feasible point beats the cleared welfare.
            for (int t = 0; t < 10000; ++t) {
                const double d = oracle::uniform(rng, 0.0, d_hi);
                const double lo = std::max(0.0, g - d);
                const double hi = std::min(dem.dmax, 10.0 + g - d);
                if (lo > hi) continue;
                CHECK(welfare(d, oracle::uniform(rng, lo, hi)) <= out.sw + 1e-9);
            }
        }
    }

    TEST_CASE("infeasible dispatch is reported") {
        TransmissionNetwork net = one_bus();
        net.gen[0].pmax = 1.0;
        auto p = make();
        p.d_min = 3.0;
        const std::vector<BusFleet> fleets{fleet_of({p}, {0.0})};
        CHECK_THROWS_AS(clear(net, fleets, ClearingMode::Direct), FeasibilityError);
    }

    TEST_CASE("network validation") {
        auto net = two_bus(1.0);
        net.line_limits[0] = 0.0;
        CHECK_THROWS_AS(net.validate(), DomainError);
        net = two_bus(1.0);
        net.shift = {{1.0}};
        CHECK_THROWS_AS(net.validate(), DomainError);
    }

    TEST_CASE("network JSON round trip") {
        const auto nc = network_from_json(R"({
            "buses": [{"gen": {"c1": 0.05, "c2": 0, "pmax": 10}}, {"demand": {"e1": 0.3, "e2": -0.01, "dmax": 5}}],
            "lines": [{"limit": 1}],
            "shift": [[1, 0]],
            "prosumers": [{"id": "x", "bus": 1, "alpha": 0.4, "beta": 0.1, "g": 0.5, "c_wd": 2}]
        })");
        REQUIRE(nc.net.buses() == 2);
        CHECK(nc.fleets[1].prosumers.size() == 1);
        CHECK(nc.fleets[1].prosumers[0].id == "x");
        CHECK(nc.fleets[1].access[0].c_wd == 2.0);
        CHECK(std::isinf(nc.fleets[1].access[0].c_inj));
        const auto out = clear(nc.net, nc.fleets, ClearingMode::Direct);
        const auto text = clearing_to_json(out);
        CHECK(text.find("\"lmp\"") != std::string::npos);
        CHECK_THROWS_AS(network_from_json("{}"), ConfigError);
        CHECK_THROWS_AS(network_from_json(R"({"buses": [{}], "prosumers": [{"bus": 3, "alpha": 0.4, "beta": 0.1}]})"),
                        ConfigError);
    }
}
