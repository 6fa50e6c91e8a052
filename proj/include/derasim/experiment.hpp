#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "derasim/access.hpp"
#include "derasim/equilibrium.hpp"
#include "derasim/nem.hpp"
#include "derasim/prosumer.hpp"
#include "derasim/scenario.hpp"

namespace derasim {

enum class Variant { NEMa, NEMp, GAB, CoNEMa, CoGAB, Direct };

const char* to_string(Variant v);
Variant variant_from_string(const std::string& s);
const std::vector<Variant>& all_variants();

struct PopulationSpec {
    int n = 50;
    double alpha = 0.4;
    double beta = 0.1;
    double d_min = 0.0;
    double d_max = 10.0;
    double dg_std = 0.2;
    double adoption_ratio = 0.8;
    double mean_dg = 5.1;
    std::optional<double> access_ratio;  // per-prosumer limits 8 * ratio on both sides; nullopt = unlimited
};

struct VariantSettings {
    std::vector<Variant> variants = all_variants();
    double gab_zeta = 1.0;
    double co_gab_zeta = 1.05;
    std::optional<double> co_nema_zeta;  // nullopt: the fleet's smallest break-even zeta per scenario
};

struct ExperimentConfig {
    std::string experiment = "pareto";
    std::uint64_t seed = 42;
    std::size_t scenarios = 10000;
    std::string output_dir = "results";
    PopulationSpec population;
    NemTariff tariff{0.3, 0.0, 0.0};
    bool pi_minus_tracks_lmp = true;
    TruncGaussSpec lmp{0.05, 0.01, 0.0, 0.3};
    VariantSettings variants;

    std::vector<double> adoption_grid{0.2, 0.4, 0.6, 0.8, 1.0};
    std::vector<double> mean_dg_grid{1.1, 5.1};
    std::vector<double> access_grid{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    std::vector<double> eps1_grid{0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 2.0};
    std::vector<double> eps2_grid{1.0, 0.5};
    std::vector<double> access_kwh_grid{0, 0.5, 1, 1.5, 2, 3, 4, 5, 6, 8, 10};  // per prosumer
    std::vector<AccessAxis> axes{AccessAxis::Withdrawal, AccessAxis::Injection};
    BenefitOptions benefit;

    std::string trace_path;
    MultiIntervalConfig multi;
    EquilibriumParams single;
    std::string network_path;
    std::vector<double> single_k_total{1.6};
    std::vector<double> single_pi{0.0, 0.05, 0.2};

    struct AggregateCase {
        std::vector<Prosumer> prosumers;
        std::vector<double> g;
        double pi = 0.05;
        std::vector<double> k;
    } aggregate;

    std::string source_text;  // raw config, hashed into the manifest
    std::string base_dir;     // directory of the config file
};

/// Parses and checks a config. Problems are appended; the returned config is usable only if none were added.
ExperimentConfig parse_config(const std::string& text, std::vector<std::string>& problems,
                              const std::string& base_dir = ".");
std::vector<std::string> validate_config_text(const std::string& text, const std::string& base_dir = ".");
ExperimentConfig load_config(const std::string& path);

struct Population {
    std::vector<Prosumer> fleet;
    std::vector<PoAAccess> access;
    std::vector<std::optional<TruncGaussSpec>> dg;
};

Population build_population(const PopulationSpec& spec);

struct SurplusPair {
    double customer = 0.0;
    double dera = 0.0;
    double total() const { return customer + dera; }
};

/// Customer and aggregator surplus of one variant in one scenario.
SurplusPair evaluate_variant(Variant v, const Population& pop, const std::vector<double>& g, double pi,
                             const NemTariff& tariff, bool pi_minus_tracks_lmp, const VariantSettings& settings);

struct VariantSummary {
    Variant variant;
    double customer_mean = 0.0, customer_stderr = 0.0;
    double dera_mean = 0.0, dera_stderr = 0.0;
    double total_mean = 0.0, total_stderr = 0.0;
    std::size_t count = 0;
};

struct SweepPoint {
    double mean_dg = 0.0;
    double adoption_ratio = 0.0;
    std::optional<double> access_ratio;
    std::vector<VariantSummary> summaries;
    std::vector<std::vector<SurplusPair>> per_scenario;  // [variant][scenario]
    std::string error;
};

SweepPoint run_point(const ExperimentConfig& cfg, const PopulationSpec& pop_spec, bool keep_scenarios = false);

struct RunReport {
    std::vector<std::string> files;
    std::size_t error_rows = 0;
};

/// Executes cfg.experiment and writes CSVs plus manifest.json into cfg.output_dir.
RunReport run(const ExperimentConfig& cfg);
RunReport run_benefit(const ExperimentConfig& cfg);

}  // namespace derasim
