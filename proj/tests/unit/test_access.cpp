#include <doctest.h>

#include <random>

#include "derasim/access.hpp"
#include "derasim/aggregation.hpp"
#include "derasim/errors.hpp"
#include "oracle.hpp"

using namespace derasim;

namespace {

Prosumer make(double d_max = 4.0) {
    Prosumer p;
    p.id = "p";
    p.utility = QuadraticUtility(0.4, 0.1);
    p.d_max = d_max;
    return p;
}

ScenarioSet fixed_set(std::vector<double> lmp, std::vector<std::vector<double>> dg) {
    ScenarioSet s;
    s.lmp = std::move(lmp);
    s.dg = std::move(dg);
    s.seed = 5;
    return s;
}

std::vector<Prosumer> population(std::size_t n) {
    std::vector<Prosumer> fleet(n, make(10.0));
    for (std::size_t i = 0; i < n; ++i) fleet[i].id = "p" + std::to_string(i + 1);
    return fleet;
}

ScenarioSet draw(const std::vector<Prosumer>& fleet, double mean_dg, std::size_t count, std::uint64_t seed) {
    std::vector<std::optional<TruncGaussSpec>> dg(fleet.size(), TruncGaussSpec{mean_dg, 0.2, 0.0, kUnlimited});
    std::vector<std::string> ids;
    for (const auto& p : fleet) ids.push_back(p.id);
    return generate_scenarios(count, {0.05, 0.01, 0.0, 0.3}, dg, ids, seed);
}

}  // namespace

TEST_SUITE("access") {
    TEST_CASE("benefit sample branches") {
        const auto p = make();
        auto s = benefit_sample(p, {1.0, 10.0}, 5.0, 0.05, 0.2);
        CHECK(s.branch == AccessBranch::Injection);
        CHECK(s.phi_inj == doctest::Approx(0.85));
        CHECK(s.h == 0.0);
        CHECK(s.phi_wd == 0.0);
        CHECK(s.q_minus == doctest::Approx(4.5));
        CHECK(s.contribution() == doctest::Approx(0.65));

        s = benefit_sample(p, {10.0, 1.0}, 0.0, 0.05, 0.0);
        CHECK(s.branch == AccessBranch::Withdrawal);
        CHECK(s.q_plus == doctest::Approx(2.5));
        CHECK(s.phi_wd == doctest::Approx(0.30));

        s = benefit_sample(p, PoAAccess::unlimited(), 2.0, 0.05, 0.0);
        CHECK(s.branch == AccessBranch::Interior);
        CHECK(s.h == doctest::Approx(0.7125));
    }

    TEST_CASE("infeasible box is rejected") {
        CHECK_THROWS_AS(benefit_sample(make(), {1.0, 1.0}, 6.0, 0.05, 0.0), FeasibilityError);
    }

    TEST_CASE("property: decomposition matches the optimal schedule and sides are exclusive") {
        std::mt19937_64 rng(7);
        for (int i = 0; i < 5000; ++i) {
            Prosumer p;
            p.utility = QuadraticUtility(oracle::uniform(rng, 0.1, 1.0), oracle::uniform(rng, 0.01, 0.5));
            p.d_max = rng() % 5 == 0 ? kUnlimited : oracle::uniform(rng, 4.0, 12.0);
            const PoAAccess a{rng() % 3 == 0 ? kUnlimited : oracle::uniform(rng, 0.0, 5.0),
                              rng() % 3 == 0 ? kUnlimited : oracle::uniform(rng, 0.0, 5.0)};
            double g = oracle::uniform(rng, 0.0, 8.0);
            if (g - a.c_inj > p.d_max) g = p.d_max;
            const double pi = oracle::uniform(rng, 0.0, 0.5);
            const double k = oracle::uniform(rng, -0.5, 1.0);
            const auto s = benefit_sample(p, a, g, pi, k);
            const auto sch = optimal_schedule(p, a, g, pi, k);
            const double profit = sch.omega - pi * (sch.d_star - g);
            CHECK(std::abs(s.contribution() - profit) <= 1e-9);
            CHECK(s.phi_wd * s.phi_inj == 0.0);
            const int nonzero_terms = (s.branch == AccessBranch::Withdrawal) + (s.branch == AccessBranch::Injection) +
                                      (s.branch == AccessBranch::Interior);
            CHECK(nonzero_terms == 1);
            if (s.branch != AccessBranch::Interior) CHECK(s.h == 0.0);
        }
    }

    TEST_CASE("zero access pins consumption to generation") {
        const auto fleet = population(3);
        const auto set = fixed_set({0.05, 0.08}, {{1.0, 2.0, 3.0}, {0.5, 0.0, 4.0}});
        BenefitOptions opt;
        opt.axis = AccessAxis::Symmetric;
        opt.grid = {0.0};
        const NemTariff tariff{0.3, 0.0, 0.0};
        const auto curve = benefit_curve(fleet, set, tariff, opt);
        double expect = 0.0;
        for (std::size_t s = 0; s < 2; ++s) {
            NemTariff t = tariff;
            t.pi_minus = set.lmp[s];
            for (std::size_t n = 0; n < 3; ++n) {
                const double g = set.dg[s][n];
                expect += fleet[n].utility.value(g) - benchmark_K(opt.competition, fleet[n], t, {}, g);
            }
        }
        CHECK(curve.phi[0] == doctest::Approx(expect / 2.0).epsilon(1e-12));
        CHECK(curve.mc_count == 2);
        CHECK(curve.seed == 5);
    }

    TEST_CASE("unlimited access gives the unconstrained value") {
        const auto fleet = population(2);
        const auto set = fixed_set({0.05, 0.1}, {{1.0, 6.0}, {0.0, 2.5}});
        BenefitOptions opt;
        opt.axis = AccessAxis::Symmetric;
        opt.grid = {kUnlimited};
        const NemTariff tariff{0.3, 0.0, 0.0};
        const auto curve = benefit_curve(fleet, set, tariff, opt);
        double expect = 0.0;
        for (std::size_t s = 0; s < 2; ++s) {
            NemTariff t = tariff;
            t.pi_minus = set.lmp[s];
            const double pi = set.lmp[s];
            for (std::size_t n = 0; n < 2; ++n) {
                const double g = set.dg[s][n];
                const double d = fleet[n].inverse_demand(pi);
                expect += fleet[n].utility.value(d) - pi * (d - g) - benchmark_K(opt.competition, fleet[n], t, {}, g);
            }
        }
        CHECK(curve.phi[0] == doctest::Approx(expect / 2.0).epsilon(1e-12));
    }

    TEST_CASE("single scenario reproduces the per-prosumer samples") {
        const auto fleet = population(1);
        const auto set = fixed_set({0.05}, {{5.0}});
        BenefitOptions opt;
        opt.axis = AccessAxis::Injection;
        opt.other_limit = 10.0;
        opt.grid = {0.0, 1.0, 2.0};
        opt.competition = {1.0, BenchmarkMode::Fixed, 0.1};
        const auto curve = benefit_curve(fleet, set, {0.3, 0.05, 0.0}, opt);
        for (std::size_t j = 0; j < 3; ++j) {
            const auto s = benefit_sample(fleet[0], {opt.grid[j], 10.0}, 5.0, 0.05, 0.1);
            CHECK(curve.phi[j] == doctest::Approx(s.contribution()).epsilon(1e-14));
            CHECK(curve.phi_stderr[j] == 0.0);
        }
    }

    TEST_CASE("benefit curve rejects bad input") {
        const auto fleet = population(1);
        BenefitOptions opt;
        opt.grid = {1.0, 0.5};
        CHECK_THROWS_AS(benefit_curve(fleet, fixed_set({0.05}, {{1.0}}), {}, opt), DomainError);
        opt.grid = {};
        CHECK_THROWS_AS(benefit_curve(fleet, fixed_set({0.05}, {{1.0}}), {}, opt), DomainError);
        opt.grid = {0.0};
        CHECK_THROWS_AS(benefit_curve(fleet, fixed_set({}, {}), {}, opt), DomainError);
    }

    TEST_CASE("access bid") {
        BenefitCurve c;
        c.grid = {0, 1, 2, 3};
        c.phi = {0, 2, 4, 6};
        for (const auto& s : access_bid(c)) CHECK(s.price == doctest::Approx(2.0));

        c.grid = {0, 1, 2};
        c.phi = {0, 3, 4};
        auto bid = access_bid(c);
        REQUIRE(bid.size() == 2);
        CHECK(bid[0].price == doctest::Approx(3.0));
        CHECK(bid[1].price == doctest::Approx(1.0));
        CHECK(bid[1].c_start == 1.0);
        CHECK(bid[1].c_end == 2.0);

        c.grid = {0, 1, 2, 3};
        c.phi = {0, 3, 4, 6};
        bid = access_bid(c);
        CHECK(bid[0].price == doctest::Approx(3.0));
        CHECK(bid[1].price == doctest::Approx(1.5));
        CHECK(bid[2].price == doctest::Approx(1.5));
        CHECK(c.phi[2] == 4.0);

        c.grid = {0};
        c.phi = {1};
        CHECK_THROWS_AS(access_bid(c), DomainError);
        c.grid = {0, 0};
        c.phi = {1, 1};
        CHECK_THROWS_AS(access_bid(c), DomainError);
    }

    TEST_CASE("pool adjacent violators") {
        const auto fit = isotonic_nonincreasing({3, 1, 2}, {1, 1, 1});
        CHECK(fit[0] == 3.0);
        CHECK(fit[1] == doctest::Approx(1.5));
        CHECK(fit[2] == doctest::Approx(1.5));
        const auto weighted = isotonic_nonincreasing({1, 2}, {3, 1});
        CHECK(weighted[0] == doctest::Approx(1.25));
        CHECK(weighted[1] == doctest::Approx(1.25));
    }

    TEST_CASE("property: benefit is nondecreasing in access along both axes") {
        const auto fleet = population(20);
        for (double mean : {1.1, 5.1}) {
            const auto set = draw(fleet, mean, 500, 11);
            for (auto axis : {AccessAxis::Withdrawal, AccessAxis::Injection, AccessAxis::Symmetric}) {
                BenefitOptions opt;
                opt.axis = axis;
                opt.grid = {0, 0.25, 0.5, 1, 2, 4, 8};
                const auto c = benefit_curve(fleet, set, {0.3, 0.0, 0.0}, opt);
                for (std::size_t j = 1; j < c.phi.size(); ++j) CHECK(c.phi[j - 1] <= c.phi[j] + 1e-12);
            }
        }
    }

    TEST_CASE("scarce generation values withdrawal, ample generation values injection") {
        const auto fleet = population(50);
        auto slope = [&](double mean, AccessAxis axis) {
            BenefitOptions opt;
            opt.axis = axis;
            opt.grid = {0.0, 1.0};
            const auto c = benefit_curve(fleet, draw(fleet, mean, 1000, 3), {0.3, 0.0, 0.0}, opt);
            return c.phi[1] - c.phi[0];
        };
        CHECK(slope(1.1, AccessAxis::Withdrawal) > slope(1.1, AccessAxis::Injection));
        CHECK(slope(5.1, AccessAxis::Injection) > slope(5.1, AccessAxis::Withdrawal));
    }

    TEST_CASE("axis names") {
        for (auto a : {AccessAxis::Injection, AccessAxis::Withdrawal, AccessAxis::Symmetric})
            CHECK(access_axis_from_string(to_string(a)) == a);
        CHECK_THROWS_AS(access_axis_from_string("sideways"), ConfigError);
    }
}
