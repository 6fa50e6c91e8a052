#include <doctest.h>

#include <random>

#include "derasim/errors.hpp"
#include "derasim/gab.hpp"
#include "oracle.hpp"

using namespace derasim;

namespace {

Prosumer standard() {
    Prosumer p;
    p.id = "p";
    p.utility = QuadraticUtility(0.4, 0.1);
    return p;
}

const NemTariff kTariff{0.3, 0.0, 0.0};

}  // namespace

TEST_SUITE("gab") {
    TEST_CASE("opt-out surplus branches") {
        const auto p = standard();
        const auto a = PoAAccess::unlimited();
        CHECK(s_no(p, kTariff, a, 5.0) == doctest::Approx(0.8));
        CHECK(s_no(p, kTariff, a, 2.0) == doctest::Approx(0.6));
        CHECK(s_no(p, kTariff, a, 0.5) == doctest::Approx(0.2));
    }

    TEST_CASE("two-part pricing outcome") {
        const auto p = standard();
        const auto a = PoAAccess::unlimited();
        auto o = gab_outcome(p, kTariff, a, 5.0, 0.05, 1.05);
        CHECK(o.aggregated);
        CHECK(o.lambda_star == doctest::Approx(0.05));
        CHECK(o.x_star == doctest::Approx(1.5));
        CHECK(o.delta_star == doctest::Approx(0.0225));
        CHECK(o.prosumer_surplus == doctest::Approx(0.84));
        CHECK(o.dera_profit == doctest::Approx(o.delta_star));

        o = gab_outcome(p, kTariff, a, 2.0, 0.05, 1.05);
        CHECK_FALSE(o.aggregated);
        CHECK(o.dera_profit == 0.0);
        CHECK(o.prosumer_surplus == doctest::Approx(0.6));

        o = gab_outcome(p, kTariff, a, 0.0, 0.05, 1.05);
        CHECK_FALSE(o.aggregated);
    }

    TEST_CASE("boundary g equal to the response is not aggregated") {
        const auto o = gab_outcome(standard(), kTariff, PoAAccess::unlimited(), 3.5, 0.05, 1.0);
        CHECK_FALSE(o.aggregated);
    }

    TEST_CASE("rejects bad arguments") {
        CHECK_THROWS_AS(gab_outcome(standard(), kTariff, PoAAccess::unlimited(), 5.0, -0.01, 1.0), DomainError);
        CHECK_THROWS_AS(gab_outcome(standard(), kTariff, PoAAccess::unlimited(), 5.0, 0.05, 0.99), DomainError);
    }

    TEST_CASE("property: invariants over random instances") {
        std::mt19937_64 rng(21);
        for (int i = 0; i < 3000; ++i) {
            Prosumer p;
            p.utility = QuadraticUtility(oracle::uniform(rng, 0.1, 1.0), oracle::uniform(rng, 0.05, 0.5));
            p.d_max = oracle::uniform(rng, 2.0, 10.0);
            const double g = oracle::uniform(rng, 0.0, 8.0);
            const PoAAccess a = (rng() % 2) ? PoAAccess::unlimited()
                                            : PoAAccess{oracle::uniform(rng, 0.0, 4.0), oracle::uniform(rng, 0.0, 4.0)};
            if (std::max(p.d_min, g - a.c_inj) > std::min(p.d_max, g + a.c_wd)) continue;
            const double pi = oracle::uniform(rng, 0.0, 0.3);
            const double zeta = oracle::uniform(rng, 1.0, 1.2);
            const auto o = gab_outcome(p, kTariff, a, g, pi, zeta);
            CHECK(o.prosumer_surplus >= o.s_no - 1e-12);
            CHECK(o.x_star >= 0.0);
            CHECK(o.x_star <= g + 1e-12);
            if (o.aggregated) {
                CHECK(g > clamp_f(p, a, g, pi));
                CHECK(o.prosumer_surplus == doctest::Approx(zeta * o.s_no));
                // Utility plus sales minus the fixed charge is what the prosumer keeps.
                CHECK(p.utility.value(o.d_star) + o.lambda_star * o.x_star - o.delta_star ==
                      doctest::Approx(o.prosumer_surplus));
                CHECK(o.dera_profit == o.delta_star);
            }
        }
    }
}
