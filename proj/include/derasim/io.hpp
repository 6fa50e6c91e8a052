#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/core.h>

#include "derasim/aggregation.hpp"
#include "derasim/access.hpp"
#include "derasim/gab.hpp"
#include "derasim/nem.hpp"

namespace derasim {

/// Shortest round-trip text for a double; empty for nullopt.
std::string csv_field(double v);
std::string csv_field(const std::optional<double>& v);
inline std::string csv_field(std::string_view s) { return std::string(s); }
inline std::string csv_field(const char* s) { return s; }
inline std::string csv_field(const std::string& s) { return s; }
inline std::string csv_field(bool b) { return b ? "1" : "0"; }
inline std::string csv_field(int v) { return std::to_string(v); }
inline std::string csv_field(std::size_t v) { return std::to_string(v); }

class CsvWriter {
public:
    CsvWriter(std::ostream& out, const std::vector<std::string>& header);

    template <class... Ts>
    void row(const Ts&... fields) {
        std::string line;
        bool first = true;
        ((line += (first ? "" : ","), line += csv_field(fields), first = false), ...);
        write_line(line);
    }
    void row_vector(const std::vector<std::string>& fields);

private:
    void write_line(const std::string& line);
    std::ostream& out_;
    std::size_t columns_;
};

void write_aggregation_csv(std::ostream& out, std::size_t scenario_id, const std::vector<Prosumer>& fleet,
                           const std::vector<double>& g, double pi, const AggregationOutcome& agg, bool header = true);

void write_gab_csv(std::ostream& out, std::size_t scenario_id, const std::vector<Prosumer>& fleet,
                   const std::vector<double>& g, double pi, const std::vector<GabOutcome>& gab, bool header = true);

void write_nem_csv(std::ostream& out, const std::vector<Prosumer>& fleet, const std::vector<double>& g,
                   const std::vector<NemOutcome>& nem, bool header = true);

void write_benefit_csv(std::ostream& out, const std::vector<BenefitCurve>& curves,
                       const std::vector<double>& mean_dg = {});

void write_bid_csv(std::ostream& out, const std::vector<BenefitCurve>& curves, const std::vector<double>& mean_dg = {});

/// 64-bit FNV-1a, hex encoded.
std::string content_hash(std::string_view text);

}  // namespace derasim
