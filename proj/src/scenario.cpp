#include "derasim/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <boost/math/distributions/normal.hpp>
#include <fmt/core.h>
#include <fmt/ostream.h>

#include "derasim/errors.hpp"

namespace derasim {

namespace {

const boost::math::normal_distribution<double> kStdNormal(0.0, 1.0);

double phi(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }

// Upper-tail probability Q(x) = 1 - Phi(x), accurate for large x.
double upper_tail(double x) {
    if (x == kUnlimited) return 0.0;
    if (x == -kUnlimited) return 1.0;
    return 0.5 * std::erfc(x / std::sqrt(2.0));
}

double lower_tail(double x) { return upper_tail(-x); }

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

void TruncGaussSpec::validate() const {
    if (!(stddev > 0.0) || !std::isfinite(stddev))
        throw DomainError(fmt::format("truncated normal needs stddev > 0 (got {})", stddev));
    if (!(lower < upper)) throw DomainError(fmt::format("truncation needs lower < upper (got {}, {})", lower, upper));
    if (!std::isfinite(mean)) throw DomainError("truncated normal mean must be finite");
}

double TruncGaussSpec::mass() const {
    const double a = (lower - mean) / stddev;
    const double b = (upper - mean) / stddev;
    if (a > 0.0) return upper_tail(a) - upper_tail(b);
    return lower_tail(b) - lower_tail(a);
}

double TruncGaussSpec::truncated_mean() const {
    const double a = (lower - mean) / stddev;
    const double b = (upper - mean) / stddev;
    const double pa = std::isfinite(a) ? phi(a) : 0.0;
    const double pb = std::isfinite(b) ? phi(b) : 0.0;
    return mean + stddev * (pa - pb) / mass();
}

double TruncGaussSpec::truncated_variance() const {
    const double a = (lower - mean) / stddev;
    const double b = (upper - mean) / stddev;
    const double z = mass();
    const double pa = std::isfinite(a) ? phi(a) : 0.0;
    const double pb = std::isfinite(b) ? phi(b) : 0.0;
    const double apa = std::isfinite(a) ? a * pa : 0.0;
    const double bpb = std::isfinite(b) ? b * pb : 0.0;
    const double r = (pa - pb) / z;
    return stddev * stddev * (1.0 + (apa - bpb) / z - r * r);
}

double TruncGaussSpec::quantile(double u) const {
    if (!(u > 0.0 && u < 1.0)) throw DomainError(fmt::format("quantile level must be in (0, 1) (got {})", u));
    const double a = (lower - mean) / stddev;
    const double b = (upper - mean) / stddev;
    double x;
    if (a > 0.0) {
        // Work with upper tails so a deep right truncation keeps its precision.
        const double qa = upper_tail(a);
        const double q = qa - u * (qa - upper_tail(b));
        x = -boost::math::quantile(kStdNormal, q);
    } else {
        const double pa = lower_tail(a);
        const double p = pa + u * (lower_tail(b) - pa);
        x = boost::math::quantile(kStdNormal, p);
    }
    return std::clamp(mean + stddev * x, lower, upper);
}

std::vector<double> sample_trunc_gauss(const TruncGaussSpec& spec, std::size_t n, std::uint64_t seed) {
    spec.validate();
    if (n == 0) throw DomainError("sample_trunc_gauss needs n >= 1");
    if (spec.mass() < 1e-12)
        throw DomainError(fmt::format("truncation interval ({}, {}) has negligible mass", spec.lower, spec.upper));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(spec.mean, spec.stddev);
    std::vector<double> out;
    out.reserve(n);
    while (out.size() < n) {
        const double x = normal(rng);
        if (x > spec.lower && x < spec.upper) out.push_back(x);
    }
    return out;
}

std::uint64_t substream_seed(std::uint64_t seed, std::string_view role, std::uint64_t index) {
    return splitmix64(seed ^ splitmix64(fnv1a(role) + index));
}

std::uint64_t substream_seed(std::uint64_t seed, std::string_view role, std::string_view key) {
    return substream_seed(seed, role, fnv1a(key));
}

ScenarioSet generate_scenarios(std::size_t count, const TruncGaussSpec& lmp,
                               const std::vector<std::optional<TruncGaussSpec>>& dg,
                               const std::vector<std::string>& prosumer_ids, std::uint64_t seed) {
    if (dg.size() != prosumer_ids.size()) throw DomainError("generate_scenarios: DG spec count != prosumer count");
    ScenarioSet set;
    set.seed = seed;
    set.lmp = sample_trunc_gauss(lmp, count, substream_seed(seed, "lmp"));
    set.dg.assign(count, std::vector<double>(dg.size(), 0.0));
    for (std::size_t n = 0; n < dg.size(); ++n) {
        if (!dg[n]) continue;
        const auto draws = sample_trunc_gauss(*dg[n], count, substream_seed(seed, "dg", prosumer_ids[n]));
        for (std::size_t s = 0; s < count; ++s) set.dg[s][n] = draws[s];
    }
    return set;
}

void write_scenarios_csv(const ScenarioSet& set, std::ostream& out) {
    const std::size_t n = set.dg.empty() ? 0 : set.dg.front().size();
    out << "scenario_id,lmp";
    for (std::size_t i = 1; i <= n; ++i) out << ",dg_" << i;
    out << '\n';
    for (std::size_t s = 0; s < set.count(); ++s) {
        fmt::print(out, "{},{}", s, set.lmp[s]);
        for (double g : set.dg[s]) fmt::print(out, ",{}", g);
        out << '\n';
    }
}

SolarTrace parse_trace(std::istream& in, const std::string& source) {
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("empty trace file", source);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "hour,kwh") throw ConfigError(fmt::format("expected header 'hour,kwh', found '{}'", line), source);

    SolarTrace trace;
    std::size_t rows = 0;
    int first_hour = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw ConfigError(fmt::format("malformed row '{}'", line), source);
        std::size_t used_h = 0;
        std::size_t used_v = 0;
        int hour;
        double kwh;
        try {
            hour = std::stoi(line.substr(0, comma), &used_h);
            kwh = std::stod(line.substr(comma + 1), &used_v);
        } catch (const std::exception&) {
            throw ConfigError(fmt::format("malformed row '{}'", line), source);
        }
        if (used_h != comma || used_v != line.size() - comma - 1)
            throw ConfigError(fmt::format("malformed row '{}'", line), source);
        if (rows >= 24) throw ConfigError("trace has more than 24 rows", source);
        if (rows == 0 && hour == 1) first_hour = 1;
        if (hour != first_hour + static_cast<int>(rows))
            throw ConfigError(fmt::format("expected hour {}, found {}", first_hour + static_cast<int>(rows), hour), source);
        if (!(kwh >= 0.0) || !std::isfinite(kwh))
            throw ConfigError(fmt::format("hour {}: negative or non-finite value {}", hour, kwh), source);
        trace.hourly[rows++] = kwh;
    }
    if (rows != 24) throw ConfigError(fmt::format("trace must have 24 rows, found {}", rows), source);
    return trace;
}

SolarTrace load_trace(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open trace file", path);
    return parse_trace(in, path);
}

SolarTrace scale_trace(const SolarTrace& trace, double eps1) {
    if (!(eps1 >= 0.0)) throw DomainError(fmt::format("DG scale must be >= 0 (got {})", eps1));
    SolarTrace out;
    for (std::size_t h = 0; h < 24; ++h) out.hourly[h] = eps1 * trace.hourly[h];
    return out;
}

std::vector<std::vector<double>> trace_uniforms(std::size_t count, std::uint64_t seed) {
    std::vector<std::vector<double>> u(24, std::vector<double>(count));
    for (std::size_t h = 0; h < 24; ++h) {
        std::mt19937_64 rng(substream_seed(seed, "trace", h));
        for (auto& x : u[h]) {
            // 53 random bits mapped to the open interval (0, 1).
            x = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
        }
    }
    return u;
}

double dg_from_uniform(double mean, double stddev, double u) {
    if (mean == 0.0) return 0.0;
    return TruncGaussSpec{mean, stddev, 0.0, kUnlimited}.quantile(u);
}

}  // namespace derasim
