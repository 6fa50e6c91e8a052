#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "derasim/errors.hpp"
#include "derasim/experiment.hpp"

using namespace derasim;
namespace fs = std::filesystem;

namespace {

const char* kPareto = R"({
  "experiment": "pareto",
  "seed": 42,
  "scenarios": 200,
  "population": {"n": 20, "alpha": 0.4, "beta": 0.1, "d_min": 0.0, "d_max": 10.0,
                 "dg_std": 0.2, "adoption_ratio": 0.8, "mean_dg": 5.1, "access_ratio": null},
  "tariff": {"pi_plus": 0.3, "pi_minus": "lmp", "pi_zero": 0.0},
  "lmp": {"mean": 0.05, "std": 0.01, "lower": 0.0, "upper": 0.3},
  "grids": {"mean_dg": [1.1, 5.1]}
})";

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("derasim_test_" + name);
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string f;
        while (std::getline(ss, f, ',')) fields.push_back(f);
        if (!line.empty() && line.back() == ',') fields.emplace_back();
        rows.push_back(fields);
    }
    return rows;
}

ExperimentConfig parse_ok(const std::string& text) {
    std::vector<std::string> problems;
    auto cfg = parse_config(text, problems);
    std::string all;
    for (const auto& p : problems) all += p + "; ";
    INFO(all);
    REQUIRE(problems.empty());
    cfg.source_text = text;
    return cfg;
}

bool mentions(const std::vector<std::string>& problems, const std::string& needle) {
    for (const auto& p : problems)
        if (p.find(needle) != std::string::npos) return true;
    return false;
}

}  // namespace

TEST_SUITE("experiment") {
    TEST_CASE("bundled configs validate") {
        int checked = 0;
        for (const auto& e : fs::directory_iterator(DERASIM_CONFIG_DIR)) {
            const auto name = e.path().filename().string();
            if (e.path().extension() != ".json" || name.rfind("network", 0) == 0) continue;
            INFO(name);
            const auto problems = validate_config_text(slurp(e.path()), DERASIM_CONFIG_DIR);
            CHECK(problems.empty());
            ++checked;
        }
        CHECK(checked >= 8);
    }

    TEST_CASE("validation reports every problem") {
        const auto problems = validate_config_text(R"({
            "experiment": "pareto",
            "variants": {"co_gab_zeta": 0.9},
            "colour": "blue"
        })");
        CHECK(mentions(problems, "/tariff"));
        CHECK(mentions(problems, "zeta must be >= 1"));
        CHECK(mentions(problems, "/colour: unknown key"));
        CHECK(mentions(validate_config_text("{"), "invalid JSON"));
        CHECK(mentions(validate_config_text(R"({"experiment": "bogus"})"), "unknown experiment"));
        CHECK(mentions(validate_config_text(R"({"experiment": "equilibrium_multi",
            "tariff": {"pi_plus": 0.3, "pi_minus": "lmp"}, "equilibrium": {"trace": "missing.csv"}})"),
                       "file not found"));
        CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
    }

    TEST_CASE("variant names") {
        for (Variant v : all_variants()) CHECK(variant_from_string(to_string(v)) == v);
        CHECK_THROWS_AS(variant_from_string("NEM"), ConfigError);
    }

    TEST_CASE("population layout") {
        PopulationSpec spec;
        spec.n = 10;
        spec.adoption_ratio = 0.3;
        spec.access_ratio = 0.5;
        const auto pop = build_population(spec);
        REQUIRE(pop.fleet.size() == 10);
        CHECK(pop.fleet[0].id == "p1");
        CHECK(pop.fleet[9].id == "p10");
        CHECK(pop.dg[2].has_value());
        CHECK_FALSE(pop.dg[3].has_value());
        CHECK(pop.access[0].c_inj == 4.0);
        CHECK(pop.access[0].c_wd == 4.0);
        spec.mean_dg = 0.0;
        for (const auto& d : build_population(spec).dg) CHECK_FALSE(d.has_value());
    }

    TEST_CASE("property: competitive variants reach the direct total") {
        PopulationSpec spec;
        spec.n = 10;
        std::mt19937_64 rng(3);
        std::normal_distribution<double> noise(0.0, 0.2);
        for (double mean : {1.1, 5.1}) {
            spec.mean_dg = mean;
            const auto pop = build_population(spec);
            for (int s = 0; s < 50; ++s) {
                std::vector<double> g(10, 0.0);
                for (std::size_t n = 0; n < 10; ++n)
                    if (pop.dg[n]) g[n] = std::max(0.0, mean + noise(rng));
                const double pi = 0.03 + 0.04 * (s % 5) / 4.0;
                const NemTariff t{0.3, 0.0, 0.0};
                const VariantSettings vs;
                const auto direct = evaluate_variant(Variant::Direct, pop, g, pi, t, true, vs);
                CHECK(std::abs(direct.dera) <= 1e-9);
                for (Variant v : {Variant::CoNEMa, Variant::CoGAB})
                    CHECK(evaluate_variant(v, pop, g, pi, t, true, vs).total() ==
                          doctest::Approx(direct.total()).epsilon(1e-12));
                for (Variant v : {Variant::NEMa, Variant::NEMp, Variant::GAB})
                    CHECK(evaluate_variant(v, pop, g, pi, t, true, vs).total() <= direct.total() + 1e-9);
                const auto co = evaluate_variant(Variant::CoNEMa, pop, g, pi, t, true, vs);
                const auto nema = evaluate_variant(Variant::NEMa, pop, g, pi, t, true, vs);
                CHECK(co.customer >= nema.customer - 1e-9);
                CHECK(co.dera >= nema.dera - 1e-9);
            }
        }
    }

    TEST_CASE("aggregate_once writes the schedule") {
        auto cfg = load_config(DERASIM_CONFIG_DIR "/aggregate_once.json");
        const auto dir = scratch("aggregate");
        cfg.output_dir = dir.string();
        const auto rep = run(cfg);
        CHECK(rep.error_rows == 0);
        const auto rows = read_csv(dir / "aggregation.csv");
        REQUIRE(rows.size() == 2);
        CHECK(rows[1][1] == "p1");
        CHECK(std::stod(rows[1][4]) == doctest::Approx(3.5));
        CHECK(std::stod(rows[1][5]) == doctest::Approx(0.2875));
        CHECK(std::stod(rows[1][8]) == doctest::Approx(0.2125));
        CHECK(fs::exists(dir / "manifest.json"));
    }

    TEST_CASE("runs are byte-identical for a fixed seed") {
        auto cfg = parse_ok(kPareto);
        const auto a = scratch("rerun_a");
        const auto b = scratch("rerun_b");
        cfg.output_dir = a.string();
        run(cfg);
        cfg.output_dir = b.string();
        run(cfg);
        for (const char* f : {"pareto.csv", "pareto_scenarios.csv", "manifest.json"}) {
            INFO(f);
            CHECK(slurp(a / f) == slurp(b / f));
        }
        const auto rows = read_csv(a / "pareto.csv");
        CHECK(rows.size() == 1 + 2 * 6);
        CHECK(rows[0].size() == 12);
        const auto detail = read_csv(a / "pareto_scenarios.csv");
        CHECK(detail.size() == 1 + 2 * 6 * 200);
    }

    TEST_CASE("no access means the least aggregator profit") {
        auto cfg = parse_ok(kPareto);
        cfg.experiment = "access_sweep";
        cfg.mean_dg_grid = {1.1, 5.1};
        cfg.access_grid = {0.0, 0.25, 0.5, 1.0};
        for (double mean : cfg.mean_dg_grid) {
            std::vector<SweepPoint> pts;
            for (double d : cfg.access_grid) {
                PopulationSpec spec = cfg.population;
                spec.mean_dg = mean;
                spec.access_ratio = d;
                pts.push_back(run_point(cfg, spec));
                REQUIRE(pts.back().error.empty());
            }
            for (std::size_t v = 0; v < pts[0].summaries.size(); ++v) {
                INFO(to_string(pts[0].summaries[v].variant), " at mean_dg ", mean);
                for (std::size_t j = 1; j < pts.size(); ++j)
                    CHECK(pts[0].summaries[v].dera_mean <= pts[j].summaries[v].dera_mean + 1e-9);
            }
        }
    }

    TEST_CASE("infeasible grid points become error rows") {
        auto cfg = parse_ok(kPareto);
        cfg.experiment = "access_sweep";
        cfg.mean_dg_grid = {20.0};
        cfg.access_grid = {0.0, 2.0};
        cfg.scenarios = 20;
        const auto dir = scratch("errors");
        cfg.output_dir = dir.string();
        const auto rep = run(cfg);
        CHECK(rep.error_rows == 6);
        const auto rows = read_csv(dir / "access_sweep.csv");
        REQUIRE(rows.size() == 13);
        CHECK_FALSE(rows[1][11].empty());
        CHECK(rows[1][10] == "0");
        CHECK(rows[7][11].empty());
        CHECK(slurp(dir / "manifest.json").find("\"error_rows\": 6") != std::string::npos);
    }

    TEST_CASE("single-interval experiment table") {
        auto cfg = load_config(DERASIM_CONFIG_DIR "/equilibrium_single.json");
        const auto dir = scratch("single");
        cfg.output_dir = dir.string();
        run(cfg);
        const auto rows = read_csv(dir / "equilibrium_single.csv");
        REQUIRE(rows.size() == 1 + 2 * 3);
        CHECK(std::stod(rows[1][3]) == doctest::Approx(40.0));
        CHECK(std::stod(rows[1][4]) == doctest::Approx(0.027083).epsilon(1e-5));
        CHECK(rows[4][7] == "0");
    }

    TEST_CASE("benefit experiment writes curves and bids") {
        auto cfg = load_config(DERASIM_CONFIG_DIR "/benefit_curve.json");
        cfg.scenarios = 100;
        const auto dir = scratch("benefit");
        cfg.output_dir = dir.string();
        run_benefit(cfg);
        const auto curve = read_csv(dir / "benefit_curve.csv");
        CHECK(curve[0] == std::vector<std::string>{"axis", "mean_dg", "c_kwh", "phi_mean", "phi_stderr", "mc_count",
                                                   "seed"});
        CHECK(curve.size() > 1);
        CHECK(fs::exists(dir / "access_bid.csv"));
    }
}
