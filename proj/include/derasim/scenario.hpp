#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "derasim/prosumer.hpp"

namespace derasim {

struct TruncGaussSpec {
    double mean = 0.0;
    double stddev = 1.0;
    double lower = 0.0;
    double upper = kUnlimited;

    void validate() const;
    /// Probability mass of the truncation interval under the parent normal.
    double mass() const;
    double truncated_mean() const;
    double truncated_variance() const;
    /// Inverse CDF of the truncated law at u in (0, 1).
    double quantile(double u) const;
};

/// Rejection sampling from the parent normal. Deterministic per seed.
std::vector<double> sample_trunc_gauss(const TruncGaussSpec& spec, std::size_t n, std::uint64_t seed);

/// Order-independent child seed for a (role, index) pair.
std::uint64_t substream_seed(std::uint64_t seed, std::string_view role, std::uint64_t index = 0);
std::uint64_t substream_seed(std::uint64_t seed, std::string_view role, std::string_view key);

struct ScenarioSet {
    std::vector<double> lmp;              // [scenario]
    std::vector<std::vector<double>> dg;  // [scenario][prosumer]
    std::uint64_t seed = 0;

    std::size_t count() const { return lmp.size(); }
};

/// LMPs and per-prosumer DG. A missing DG spec means the prosumer has no generation.
ScenarioSet generate_scenarios(std::size_t count, const TruncGaussSpec& lmp,
                               const std::vector<std::optional<TruncGaussSpec>>& dg,
                               const std::vector<std::string>& prosumer_ids, std::uint64_t seed);

void write_scenarios_csv(const ScenarioSet& set, std::ostream& out);

struct SolarTrace {
    std::array<double, 24> hourly{};
};

SolarTrace parse_trace(std::istream& in, const std::string& source = "<stream>");
SolarTrace load_trace(const std::string& path);
SolarTrace scale_trace(const SolarTrace& trace, double eps1);

/// Uniform draws in (0, 1) shaped [hour][scenario], reused across trace scalings.
std::vector<std::vector<double>> trace_uniforms(std::size_t count, std::uint64_t seed);

/// DG draw for one hour: zero when the hourly mean is zero, else a truncated normal on (0, inf).
double dg_from_uniform(double mean, double stddev, double u);

}  // namespace derasim
