#include "derasim/io.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "derasim/errors.hpp"

namespace derasim {

std::string csv_field(double v) { return fmt::format("{}", v); }

std::string csv_field(const std::optional<double>& v) { return v ? csv_field(*v) : std::string(); }

CsvWriter::CsvWriter(std::ostream& out, const std::vector<std::string>& header) : out_(out), columns_(header.size()) {
    if (!header.empty()) row_vector(header);
}

void CsvWriter::row_vector(const std::vector<std::string>& fields) {
    std::string line;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) line += ',';
        line += fields[i];
    }
    write_line(line);
}

void CsvWriter::write_line(const std::string& line) {
    if (columns_) {
        const auto commas = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
        if (commas + 1 != columns_) throw DomainError(fmt::format("CSV row has {} fields, header {}", commas + 1, columns_));
    }
    out_ << line << '\n';
}

void write_aggregation_csv(std::ostream& out, std::size_t scenario_id, const std::vector<Prosumer>& fleet,
                           const std::vector<double>& g, double pi, const AggregationOutcome& agg, bool header) {
    CsvWriter w(out, header ? std::vector<std::string>{"scenario_id", "prosumer_id", "g", "pi_lmp", "d_star", "omega",
                                                       "k", "prosumer_surplus", "dera_profit_share", "avg_cost"}
                            : std::vector<std::string>{});
    for (std::size_t n = 0; n < fleet.size(); ++n)
        w.row(scenario_id, fleet[n].id, g[n], pi, agg.d_star[n], agg.omega[n], agg.k[n], agg.prosumer_surplus[n],
              agg.profit_share[n], agg.avg_cost[n]);
}

void write_gab_csv(std::ostream& out, std::size_t scenario_id, const std::vector<Prosumer>& fleet,
                   const std::vector<double>& g, double pi, const std::vector<GabOutcome>& gab, bool header) {
    CsvWriter w(out, header ? std::vector<std::string>{"scenario_id", "prosumer_id", "g", "pi_lmp", "d_star", "omega",
                                                       "k", "prosumer_surplus", "dera_profit_share", "avg_cost",
                                                       "aggregated"}
                            : std::vector<std::string>{});
    for (std::size_t n = 0; n < fleet.size(); ++n) {
        const auto& o = gab[n];
        // Aggregated prosumers pay delta and receive lambda per kWh sold.
        const double omega = o.aggregated ? o.delta_star - o.lambda_star * o.x_star : 0.0;
        w.row(scenario_id, fleet[n].id, g[n], pi, o.d_star, omega, o.k, o.prosumer_surplus, o.dera_profit,
              avg_cost(o.d_star, omega), o.aggregated);
    }
}

void write_nem_csv(std::ostream& out, const std::vector<Prosumer>& fleet, const std::vector<double>& g,
                   const std::vector<NemOutcome>& nem, bool header) {
    CsvWriter w(out, header ? std::vector<std::string>{"prosumer_id", "g", "d", "surplus", "bill"}
                            : std::vector<std::string>{});
    for (std::size_t n = 0; n < fleet.size(); ++n) w.row(fleet[n].id, g[n], nem[n].d, nem[n].surplus, nem[n].bill);
}

void write_benefit_csv(std::ostream& out, const std::vector<BenefitCurve>& curves, const std::vector<double>& mean_dg) {
    const bool tagged = !mean_dg.empty();
    std::vector<std::string> header{"axis", "c_kwh", "phi_mean", "phi_stderr", "mc_count", "seed"};
    if (tagged) header.insert(header.begin() + 1, "mean_dg");
    CsvWriter w(out, header);
    for (std::size_t c = 0; c < curves.size(); ++c) {
        const auto& cv = curves[c];
        for (std::size_t j = 0; j < cv.grid.size(); ++j) {
            if (tagged) {
                w.row(to_string(cv.axis), mean_dg[c], cv.grid[j], cv.phi[j], cv.phi_stderr[j], cv.mc_count,
                      std::to_string(cv.seed));
            } else {
                w.row(to_string(cv.axis), cv.grid[j], cv.phi[j], cv.phi_stderr[j], cv.mc_count, std::to_string(cv.seed));
            }
        }
    }
}

void write_bid_csv(std::ostream& out, const std::vector<BenefitCurve>& curves, const std::vector<double>& mean_dg) {
    const bool tagged = !mean_dg.empty();
    std::vector<std::string> header{"axis", "c_start", "c_end", "price"};
    if (tagged) header.insert(header.begin() + 1, "mean_dg");
    CsvWriter w(out, header);
    for (std::size_t c = 0; c < curves.size(); ++c) {
        std::vector<BenefitCurve> finite = {curves[c]};
        auto& cv = finite.front();
        while (!cv.grid.empty() && !std::isfinite(cv.grid.back())) {
            cv.grid.pop_back();
            cv.phi.pop_back();
            cv.phi_stderr.pop_back();
        }
        if (cv.grid.size() < 2) continue;
        for (const auto& step : access_bid(cv)) {
            if (tagged) {
                w.row(to_string(cv.axis), mean_dg[c], step.c_start, step.c_end, step.price);
            } else {
                w.row(to_string(cv.axis), step.c_start, step.c_end, step.price);
            }
        }
    }
}

std::string content_hash(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return fmt::format("{:016x}", h);
}

}  // namespace derasim
