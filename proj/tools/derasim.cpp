// derasim: command-line front end for the experiment runner.
//
//   derasim run <config.json> [--out DIR]
//   derasim validate <config.json>
//   derasim clear <network.json> [--mode direct|aggregated|both]
//   derasim benefit <config.json> [--out DIR]
//
// Exit status: 0 ok, 1 configuration error, 2 runtime error.
// DERASIM_THREADS caps the worker count.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/core.h>

#include "derasim/errors.hpp"
#include "derasim/experiment.hpp"
#include "derasim/market.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

int report(const derasim::RunReport& r) {
    for (const auto& f : r.files) std::cout << f << '\n';
    if (r.error_rows) std::cerr << fmt::format("warning: {} grid rows recorded errors\n", r.error_rows);
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Competitive DER aggregation simulator"};
    app.set_version_flag("--version", DERASIM_VERSION);
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::string network_path;
    std::string mode = "both";

    auto* run = app.add_subcommand("run", "Run the experiment named in a config file");
    run->add_option("config", config_path, "Experiment config (JSON)")->required();
    run->add_option("--out", out_dir, "Override output_dir");

    auto* validate = app.add_subcommand("validate", "Check a config file without running it");
    validate->add_option("config", config_path, "Experiment config (JSON)")->required();

    auto* clear = app.add_subcommand("clear", "Clear a network case and print the dispatch as JSON");
    clear->add_option("network", network_path, "Network case (JSON)")->required();
    clear->add_option("--mode", mode, "direct, aggregated or both")
        ->check(CLI::IsMember({"direct", "aggregated", "both"}));

    auto* benefit = app.add_subcommand("benefit", "Compute benefit curves and access bids from a config file");
    benefit->add_option("config", config_path, "Experiment config (JSON)")->required();
    benefit->add_option("--out", out_dir, "Override output_dir");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*validate) {
            std::ifstream in(config_path);
            if (!in) {
                std::cerr << config_path << ": cannot open\n";
                return kConfigError;
            }
            std::stringstream ss;
            ss << in.rdbuf();
            const auto problems =
                derasim::validate_config_text(ss.str(), std::filesystem::path(config_path).parent_path().string());
            for (const auto& p : problems) std::cout << p << '\n';
            if (problems.empty()) std::cout << "ok\n";
            return problems.empty() ? kOk : kConfigError;
        }
        if (*clear) {
            const auto nc = derasim::load_network(network_path);
            if (mode == "both") {
                const auto rep = derasim::equivalence_report(nc.net, nc.fleets);
                std::cout << "{\"direct\": " << derasim::clearing_to_json(rep.direct, -1)
                          << ", \"aggregated\": " << derasim::clearing_to_json(rep.aggregated, -1)
                          << fmt::format(", \"d_sw\": {}, \"d_lmp\": {}, \"d_surplus\": {}, \"kkt_residual\": {}}}\n",
                                         rep.d_sw, rep.d_lmp, rep.d_surplus, rep.kkt_residual);
            } else {
                const auto m = mode == "direct" ? derasim::ClearingMode::Direct : derasim::ClearingMode::Aggregated;
                std::cout << derasim::clearing_to_json(derasim::clear(nc.net, nc.fleets, m)) << '\n';
            }
            return kOk;
        }
        auto cfg = derasim::load_config(config_path);
        if (!out_dir.empty()) cfg.output_dir = out_dir;
        if (*benefit) return report(derasim::run_benefit(cfg));
        return report(derasim::run(cfg));
    } catch (const derasim::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntimeError;
    }
}
