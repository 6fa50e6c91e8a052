#include "derasim/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <type_traits>

#include <fmt/format.h>
#include <json.hpp>

#include "derasim/aggregation.hpp"
#include "derasim/errors.hpp"
#include "derasim/gab.hpp"
#include "derasim/io.hpp"
#include "derasim/market.hpp"
#include "derasim/parallel.hpp"

#ifndef DERASIM_VERSION
#define DERASIM_VERSION "dev"
#endif

namespace derasim {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::vector<std::string> kExperiments{"pareto",          "adoption_sweep",    "access_sweep", "benefit_curve",
                                            "equilibrium_single", "equilibrium_multi", "clear_once",   "aggregate_once"};

// Reads typed fields out of a JSON object, recording problems under a JSON-pointer style path.
class Reader {
public:
    Reader(std::vector<std::string>& problems) : problems_(problems) {}

    void problem(const std::string& path, const std::string& msg) { problems_.push_back(fmt::format("{}: {}", path, msg)); }

    void number(const json& obj, const char* key, const std::string& path, double& out) {
        if (!obj.contains(key)) return;
        const auto& v = obj[key];
        if (!v.is_number()) {
            problem(path + "/" + key, "expected a number");
            return;
        }
        out = v.get<double>();
        if (!std::isfinite(out)) problem(path + "/" + key, "must be finite");
    }

    // null or "inf" means unlimited
    void limit(const json& obj, const char* key, const std::string& path, double& out) {
        if (!obj.contains(key)) return;
        const auto& v = obj[key];
        if (v.is_null() || (v.is_string() && v.get<std::string>() == "inf")) {
            out = kUnlimited;
        } else if (v.is_number()) {
            out = v.get<double>();
        } else {
            problem(path + "/" + key, "expected a number, null or \"inf\"");
        }
    }

    template <class Int>
    void integer(const json& obj, const char* key, const std::string& path, Int& out) {
        if (!obj.contains(key)) return;
        const auto& v = obj[key];
        if (!v.is_number_integer() || (std::is_unsigned_v<Int> && v.get<long long>() < 0)) {
            problem(path + "/" + key, "expected a nonnegative integer");
            return;
        }
        out = v.get<Int>();
    }

    void string(const json& obj, const char* key, const std::string& path, std::string& out) {
        if (!obj.contains(key)) return;
        if (!obj[key].is_string()) {
            problem(path + "/" + key, "expected a string");
            return;
        }
        out = obj[key].get<std::string>();
    }

    void grid(const json& obj, const char* key, const std::string& path, std::vector<double>& out) {
        if (!obj.contains(key)) return;
        const auto& v = obj[key];
        const std::string where = path + "/" + key;
        if (!v.is_array()) {
            problem(where, "expected an array");
            return;
        }
        std::vector<double> vals;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (v[i].is_number()) {
                vals.push_back(v[i].get<double>());
            } else if (v[i].is_null() || (v[i].is_string() && v[i].get<std::string>() == "inf")) {
                vals.push_back(kUnlimited);
            } else {
                problem(fmt::format("{}/{}", where, i), "expected a number");
            }
        }
        if (vals.empty()) problem(where, "grid must be nonempty");
        out = std::move(vals);
    }

    const json* object(const json& obj, const char* key, const std::string& path) {
        if (!obj.contains(key)) return nullptr;
        if (!obj[key].is_object()) {
            problem(path + "/" + key, "expected an object");
            return nullptr;
        }
        return &obj[key];
    }

    void known_keys(const json& obj, const std::string& path, std::initializer_list<const char*> keys) {
        for (auto it = obj.begin(); it != obj.end(); ++it) {
            if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return it.key() == k; }))
                problem(path + "/" + it.key(), "unknown key");
        }
    }

private:
    std::vector<std::string>& problems_;
};

void read_lmp(Reader& r, const json& obj, const std::string& path, TruncGaussSpec& spec) {
    r.known_keys(obj, path, {"mean", "std", "lower", "upper"});
    r.number(obj, "mean", path, spec.mean);
    r.number(obj, "std", path, spec.stddev);
    r.number(obj, "lower", path, spec.lower);
    r.limit(obj, "upper", path, spec.upper);
    try {
        spec.validate();
    } catch (const std::exception& e) {
        r.problem(path, e.what());
    }
}

std::string resolve(const std::string& base, const std::string& p) {
    if (p.empty()) return p;
    const fs::path path(p);
    return path.is_absolute() ? p : (fs::path(base) / path).lexically_normal().string();
}

void check_zeta(Reader& r, double zeta, const std::string& path) {
    if (!(zeta >= 1.0)) r.problem(path, fmt::format("zeta must be >= 1 (got {})", zeta));
}

}  // namespace

const char* to_string(Variant v) {
    switch (v) {
        case Variant::NEMa: return "NEMa";
        case Variant::NEMp: return "NEMp";
        case Variant::GAB: return "GAB";
        case Variant::CoNEMa: return "Co.NEMa";
        case Variant::CoGAB: return "Co.GAB";
        case Variant::Direct: return "Direct";
    }
    return "?";
}

Variant variant_from_string(const std::string& s) {
    for (Variant v : all_variants())
        if (s == to_string(v)) return v;
    throw ConfigError(fmt::format("unknown variant '{}'", s));
}

const std::vector<Variant>& all_variants() {
    static const std::vector<Variant> v{Variant::NEMa,   Variant::NEMp,  Variant::GAB,
                                        Variant::CoNEMa, Variant::CoGAB, Variant::Direct};
    return v;
}

ExperimentConfig parse_config(const std::string& text, std::vector<std::string>& problems, const std::string& base_dir) {
    ExperimentConfig cfg;
    cfg.source_text = text;
    cfg.base_dir = base_dir;
    Reader r(problems);

    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        r.problem("", fmt::format("invalid JSON: {}", e.what()));
        return cfg;
    }
    if (!doc.is_object()) {
        r.problem("", "top level must be an object");
        return cfg;
    }
    r.known_keys(doc, "", {"experiment", "seed", "scenarios", "output_dir", "population", "tariff", "lmp", "variants",
                           "grids", "benefit", "equilibrium", "network", "aggregate"});

    if (!doc.contains("experiment")) {
        r.problem("/experiment", "missing");
    } else {
        r.string(doc, "experiment", "", cfg.experiment);
        if (std::find(kExperiments.begin(), kExperiments.end(), cfg.experiment) == kExperiments.end())
            r.problem("/experiment", fmt::format("unknown experiment '{}'", cfg.experiment));
    }
    r.integer(doc, "seed", "", cfg.seed);
    r.integer(doc, "scenarios", "", cfg.scenarios);
    if (cfg.scenarios == 0) r.problem("/scenarios", "must be positive");
    r.string(doc, "output_dir", "", cfg.output_dir);

    if (const json* pop = r.object(doc, "population", "")) {
        const std::string path = "/population";
        r.known_keys(*pop, path,
                     {"n", "alpha", "beta", "d_min", "d_max", "dg_std", "adoption_ratio", "mean_dg", "access_ratio"});
        auto& p = cfg.population;
        r.integer(*pop, "n", path, p.n);
        r.number(*pop, "alpha", path, p.alpha);
        r.number(*pop, "beta", path, p.beta);
        r.number(*pop, "d_min", path, p.d_min);
        r.limit(*pop, "d_max", path, p.d_max);
        r.number(*pop, "dg_std", path, p.dg_std);
        r.number(*pop, "adoption_ratio", path, p.adoption_ratio);
        r.number(*pop, "mean_dg", path, p.mean_dg);
        if (pop->contains("access_ratio") && !(*pop)["access_ratio"].is_null()) {
            double ratio = 0.0;
            r.number(*pop, "access_ratio", path, ratio);
            p.access_ratio = ratio;
        }
        if (p.n < 1) r.problem(path + "/n", "must be >= 1");
        if (!(p.alpha > 0.0) || !(p.beta > 0.0)) r.problem(path, "alpha and beta must be positive");
        if (!(p.dg_std > 0.0)) r.problem(path + "/dg_std", "must be positive");
        if (p.adoption_ratio < 0.0 || p.adoption_ratio > 1.0) r.problem(path + "/adoption_ratio", "must lie in [0, 1]");
        if (p.mean_dg < 0.0) r.problem(path + "/mean_dg", "must be nonnegative");
        if (p.d_min < 0.0 || p.d_min > p.d_max) r.problem(path, "need 0 <= d_min <= d_max");
        if (p.access_ratio && *p.access_ratio < 0.0) r.problem(path + "/access_ratio", "must be nonnegative");
    }

    if (!doc.contains("tariff")) {
        r.problem("/tariff", "missing");
    } else if (const json* t = r.object(doc, "tariff", "")) {
        const std::string path = "/tariff";
        r.known_keys(*t, path, {"pi_plus", "pi_minus", "pi_zero"});
        r.number(*t, "pi_plus", path, cfg.tariff.pi_plus);
        r.number(*t, "pi_zero", path, cfg.tariff.pi_zero);
        if (t->contains("pi_minus")) {
            const auto& v = (*t)["pi_minus"];
            if (v.is_string() && v.get<std::string>() == "lmp") {
                cfg.pi_minus_tracks_lmp = true;
                cfg.tariff.pi_minus = 0.0;
            } else if (v.is_number()) {
                cfg.pi_minus_tracks_lmp = false;
                cfg.tariff.pi_minus = v.get<double>();
            } else {
                r.problem(path + "/pi_minus", "expected a number or \"lmp\"");
            }
        }
        try {
            cfg.tariff.validate();
        } catch (const std::exception& e) {
            r.problem(path, e.what());
        }
    }

    if (const json* l = r.object(doc, "lmp", "")) read_lmp(r, *l, "/lmp", cfg.lmp);

    if (const json* v = r.object(doc, "variants", "")) {
        const std::string path = "/variants";
        r.known_keys(*v, path, {"names", "gab_zeta", "co_gab_zeta", "co_nema_zeta"});
        if (v->contains("names")) {
            const auto& names = (*v)["names"];
            if (!names.is_array() || names.empty()) {
                r.problem(path + "/names", "expected a nonempty array");
            } else {
                cfg.variants.variants.clear();
                for (std::size_t i = 0; i < names.size(); ++i) {
                    try {
                        cfg.variants.variants.push_back(variant_from_string(names[i].get<std::string>()));
                    } catch (const std::exception& e) {
                        r.problem(fmt::format("{}/names/{}", path, i), e.what());
                    }
                }
            }
        }
        r.number(*v, "gab_zeta", path, cfg.variants.gab_zeta);
        r.number(*v, "co_gab_zeta", path, cfg.variants.co_gab_zeta);
        check_zeta(r, cfg.variants.gab_zeta, path + "/gab_zeta");
        check_zeta(r, cfg.variants.co_gab_zeta, path + "/co_gab_zeta");
        if (v->contains("co_nema_zeta")) {
            const auto& z = (*v)["co_nema_zeta"];
            if (z.is_string() && z.get<std::string>() == "min_zeta_bar") {
                cfg.variants.co_nema_zeta.reset();
            } else if (z.is_number()) {
                cfg.variants.co_nema_zeta = z.get<double>();
                check_zeta(r, *cfg.variants.co_nema_zeta, path + "/co_nema_zeta");
            } else {
                r.problem(path + "/co_nema_zeta", "expected a number or \"min_zeta_bar\"");
            }
        }
    }

    if (const json* g = r.object(doc, "grids", "")) {
        const std::string path = "/grids";
        r.known_keys(*g, path, {"adoption_ratio", "mean_dg", "access_ratio", "eps1", "eps2", "access_kwh", "axes"});
        r.grid(*g, "adoption_ratio", path, cfg.adoption_grid);
        r.grid(*g, "mean_dg", path, cfg.mean_dg_grid);
        r.grid(*g, "access_ratio", path, cfg.access_grid);
        r.grid(*g, "eps1", path, cfg.eps1_grid);
        r.grid(*g, "eps2", path, cfg.eps2_grid);
        r.grid(*g, "access_kwh", path, cfg.access_kwh_grid);
        if (g->contains("axes")) {
            const auto& axes = (*g)["axes"];
            if (!axes.is_array() || axes.empty()) {
                r.problem(path + "/axes", "expected a nonempty array");
            } else {
                cfg.axes.clear();
                for (std::size_t i = 0; i < axes.size(); ++i) {
                    try {
                        cfg.axes.push_back(access_axis_from_string(axes[i].get<std::string>()));
                    } catch (const std::exception& e) {
                        r.problem(fmt::format("{}/axes/{}", path, i), e.what());
                    }
                }
            }
        }
        for (double a : cfg.adoption_grid)
            if (a < 0.0 || a > 1.0) r.problem(path + "/adoption_ratio", "values must lie in [0, 1]");
        for (double e : cfg.eps2_grid)
            if (!(e > 0.0)) r.problem(path + "/eps2", "values must be positive");
        for (std::size_t i = 1; i < cfg.access_kwh_grid.size(); ++i)
            if (!(cfg.access_kwh_grid[i - 1] < cfg.access_kwh_grid[i]))
                r.problem(path + "/access_kwh", "must be strictly ascending");
    }

    cfg.benefit.pi_minus_tracks_lmp = cfg.pi_minus_tracks_lmp;
    if (const json* b = r.object(doc, "benefit", "")) {
        const std::string path = "/benefit";
        r.known_keys(*b, path, {"zeta", "benchmark", "other_limit", "benchmark_access"});
        r.number(*b, "zeta", path, cfg.benefit.competition.zeta);
        check_zeta(r, cfg.benefit.competition.zeta, path + "/zeta");
        if (b->contains("benchmark")) {
            try {
                cfg.benefit.competition.mode = benchmark_mode_from_string((*b)["benchmark"].get<std::string>());
            } catch (const std::exception& e) {
                r.problem(path + "/benchmark", e.what());
            }
        }
        r.limit(*b, "other_limit", path, cfg.benefit.other_limit);
        if (b->contains("benchmark_access")) {
            double c = kUnlimited;
            r.limit(*b, "benchmark_access", path, c);
            cfg.benefit.benchmark_access = PoAAccess::symmetric(c);
        }
    }

    cfg.multi.tariff = cfg.tariff;
    cfg.multi.pi_minus_tracks_lmp = cfg.pi_minus_tracks_lmp;
    cfg.multi.lmp = cfg.lmp;
    cfg.multi.scenarios = cfg.scenarios;
    cfg.multi.seed = cfg.seed;
    if (const json* e = r.object(doc, "equilibrium", "")) {
        const std::string path = "/equilibrium";
        r.known_keys(*e, path,
                     {"trace", "n", "alpha", "beta", "d_min", "d_max", "zeta", "benchmark", "dg_std", "dso_a", "dso_b",
                      "initial_deras", "k_tol", "g_total", "k_total", "pi"});
        auto& m = cfg.multi;
        std::string trace;
        r.string(*e, "trace", path, trace);
        cfg.trace_path = resolve(base_dir, trace);
        r.integer(*e, "n", path, m.n_prosumers);
        r.number(*e, "alpha", path, m.alpha);
        r.number(*e, "beta", path, m.beta);
        r.number(*e, "d_min", path, m.d_min);
        r.limit(*e, "d_max", path, m.d_max);
        r.number(*e, "zeta", path, m.zeta);
        check_zeta(r, m.zeta, path + "/zeta");
        if (e->contains("benchmark")) {
            try {
                m.benchmark = benchmark_mode_from_string((*e)["benchmark"].get<std::string>());
            } catch (const std::exception& ex) {
                r.problem(path + "/benchmark", ex.what());
            }
        }
        r.number(*e, "dg_std", path, m.dg_std);
        r.number(*e, "dso_a", path, m.dso_a);
        r.number(*e, "dso_b", path, m.dso_b);
        r.integer(*e, "initial_deras", path, m.initial_deras);
        r.number(*e, "k_tol", path, m.k_tol);
        r.number(*e, "g_total", path, cfg.single.g_total);
        r.grid(*e, "k_total", path, cfg.single_k_total);
        r.grid(*e, "pi", path, cfg.single_pi);
        if (!(m.dso_a > 0.0) || !(m.dso_b > 0.0)) r.problem(path, "dso_a and dso_b must be positive");
        if (!(m.k_tol > 0.0)) r.problem(path + "/k_tol", "must be positive");
    }
    cfg.single.n_prosumers = cfg.multi.n_prosumers;
    cfg.single.alpha = cfg.multi.alpha;
    cfg.single.beta = cfg.multi.beta;
    cfg.single.dso_a = cfg.multi.dso_a;
    cfg.single.dso_b = cfg.multi.dso_b;
    cfg.single.initial_deras = cfg.multi.initial_deras;

    std::string network;
    r.string(doc, "network", "", network);
    cfg.network_path = resolve(base_dir, network);

    if (const json* a = r.object(doc, "aggregate", "")) {
        const std::string path = "/aggregate";
        r.known_keys(*a, path, {"prosumers", "g", "pi", "k"});
        if (!a->contains("prosumers")) {
            r.problem(path + "/prosumers", "missing");
        } else {
            try {
                cfg.aggregate.prosumers = prosumers_from_json((*a)["prosumers"].dump());
            } catch (const std::exception& e) {
                r.problem(path + "/prosumers", e.what());
            }
        }
        r.grid(*a, "g", path, cfg.aggregate.g);
        r.grid(*a, "k", path, cfg.aggregate.k);
        r.number(*a, "pi", path, cfg.aggregate.pi);
        const std::size_t n = cfg.aggregate.prosumers.size();
        if (cfg.aggregate.g.size() != n || cfg.aggregate.k.size() != n)
            r.problem(path, "g and k need one entry per prosumer");
    }

    // Cross-field requirements per experiment.
    const auto& ex = cfg.experiment;
    if (ex == "equilibrium_multi") {
        if (cfg.trace_path.empty()) {
            r.problem("/equilibrium/trace", "missing");
        } else if (!fs::exists(cfg.trace_path)) {
            r.problem("/equilibrium/trace", fmt::format("file not found: {}", cfg.trace_path));
        }
    }
    if (ex == "clear_once") {
        if (cfg.network_path.empty()) {
            r.problem("/network", "missing");
        } else if (!fs::exists(cfg.network_path)) {
            r.problem("/network", fmt::format("file not found: {}", cfg.network_path));
        }
    }
    if (ex == "aggregate_once" && !doc.contains("aggregate")) r.problem("/aggregate", "missing");
    if (ex == "equilibrium_single" && !(cfg.single.g_total >= 0.0)) r.problem("/equilibrium/g_total", "must be >= 0");
    return cfg;
}

std::vector<std::string> validate_config_text(const std::string& text, const std::string& base_dir) {
    std::vector<std::string> problems;
    parse_config(text, problems, base_dir);
    return problems;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config", path);
    std::stringstream ss;
    ss << in.rdbuf();
    std::vector<std::string> problems;
    auto cfg = parse_config(ss.str(), problems, fs::path(path).parent_path().string());
    if (!problems.empty()) {
        std::string msg = "invalid config";
        for (const auto& p : problems) msg += "\n  " + p;
        throw ConfigError(msg, path);
    }
    return cfg;
}

Population build_population(const PopulationSpec& spec) {
    Population pop;
    const auto adopters = static_cast<int>(std::lround(spec.adoption_ratio * spec.n));
    const PoAAccess access =
        spec.access_ratio ? PoAAccess::symmetric(8.0 * *spec.access_ratio) : PoAAccess::unlimited();
    for (int n = 0; n < spec.n; ++n) {
        Prosumer p;
        p.id = fmt::format("p{}", n + 1);
        p.utility = QuadraticUtility(spec.alpha, spec.beta);
        p.d_min = spec.d_min;
        p.d_max = spec.d_max;
        p.access = access;
        pop.fleet.push_back(std::move(p));
        pop.access.push_back(access);
        if (n < adopters && spec.mean_dg > 0.0) {
            pop.dg.push_back(TruncGaussSpec{spec.mean_dg, spec.dg_std, 0.0, kUnlimited});
        } else {
            pop.dg.push_back(std::nullopt);
        }
    }
    return pop;
}

SurplusPair evaluate_variant(Variant v, const Population& pop, const std::vector<double>& g, double pi,
                             const NemTariff& tariff, bool pi_minus_tracks_lmp, const VariantSettings& settings) {
    NemTariff t = tariff;
    if (pi_minus_tracks_lmp) t.pi_minus = pi;
    const auto& fleet = pop.fleet;
    const std::size_t N = fleet.size();
    SurplusPair out;

    auto nem_variant = [&](bool active) {
        for (std::size_t n = 0; n < N; ++n) {
            const auto o = active ? active_surplus(fleet[n], t, pop.access[n], g[n])
                                  : passive_surplus(fleet[n], t, pop.access[n], g[n]);
            out.customer += o.surplus;
            // The utility settles the net position at the LMP.
            out.dera += o.bill - t.pi_zero - pi * o.z;
        }
    };
    auto competitive = [&](const std::vector<double>& k) {
        const auto agg = aggregate(fleet, pop.access, g, pi, k);
        for (double s : agg.prosumer_surplus) out.customer += s;
        out.dera = agg.dera_profit;
    };

    switch (v) {
        case Variant::NEMa: nem_variant(true); break;
        case Variant::NEMp: nem_variant(false); break;
        case Variant::GAB:
            for (std::size_t n = 0; n < N; ++n) {
                const auto o = gab_outcome(fleet[n], t, pop.access[n], g[n], pi, settings.gab_zeta);
                out.customer += o.prosumer_surplus;
                out.dera += o.dera_profit;
            }
            break;
        case Variant::CoNEMa: {
            const double zeta =
                settings.co_nema_zeta ? *settings.co_nema_zeta : zeta_bar_min(fleet, t, pop.access, g, pi);
            std::vector<double> k(N);
            for (std::size_t n = 0; n < N; ++n) k[n] = zeta * active_surplus(fleet[n], t, pop.access[n], g[n]).surplus;
            competitive(k);
            break;
        }
        case Variant::CoGAB: {
            const CompetitiveConfig cc{settings.co_gab_zeta, BenchmarkMode::Gab, 0.0};
            std::vector<double> k(N);
            for (std::size_t n = 0; n < N; ++n) k[n] = benchmark_K(cc, fleet[n], t, pop.access[n], g[n]);
            competitive(k);
            break;
        }
        case Variant::Direct: {
            // Floors that hand each prosumer its whole surplus leave the aggregator nothing.
            std::vector<double> k(N);
            for (std::size_t n = 0; n < N; ++n) {
                const double d = optimal_schedule(fleet[n], pop.access[n], g[n], pi, 0.0).d_star;
                k[n] = fleet[n].utility.value(d) - pi * (d - g[n]);
            }
            competitive(k);
            break;
        }
    }
    return out;
}

namespace {

void mean_stderr(const std::vector<double>& x, double& mean, double& se) {
    const auto n = static_cast<double>(x.size());
    double sum = 0.0;
    for (double v : x) sum += v;
    mean = sum / n;
    if (x.size() < 2) {
        se = 0.0;
        return;
    }
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    se = std::sqrt(ss / (n - 1.0) / n);
}

std::string sanitize(std::string s) {
    std::replace(s.begin(), s.end(), ',', ';');
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

struct Output {
    fs::path dir;
    RunReport report;

    explicit Output(const std::string& d) : dir(d) { fs::create_directories(dir); }

    std::ofstream open(const std::string& name) {
        const auto path = dir / name;
        std::ofstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
        report.files.push_back(path.string());
        return f;
    }
};

void write_manifest(Output& out, const ExperimentConfig& cfg) {
    json m;
    m["experiment"] = cfg.experiment;
    m["config_hash"] = content_hash(cfg.source_text);
    m["seed"] = cfg.seed;
    m["scenarios"] = cfg.scenarios;
    m["version"] = DERASIM_VERSION;
    m["libraries"] = {{"fmt", fmt::format("{}.{}.{}", FMT_VERSION / 10000, FMT_VERSION / 100 % 100, FMT_VERSION % 100)},
                      {"nlohmann_json", fmt::format("{}.{}.{}", NLOHMANN_JSON_VERSION_MAJOR,
                                                    NLOHMANN_JSON_VERSION_MINOR, NLOHMANN_JSON_VERSION_PATCH)}};
    m["error_rows"] = out.report.error_rows;
    json files = json::array();
    for (const auto& f : out.report.files) files.push_back(fs::path(f).filename().string());
    m["files"] = files;
    auto f = out.open("manifest.json");
    f << m.dump(2) << '\n';
}

const std::vector<std::string> kSurplusHeader{"mean_dg",         "adoption_ratio", "access_ratio", "variant",
                                              "customer_mean",   "customer_stderr", "dera_mean",   "dera_stderr",
                                              "total_mean",      "total_stderr",    "scenario_count", "error"};

void write_point(CsvWriter& w, const ExperimentConfig& cfg, const SweepPoint& pt, RunReport& report) {
    if (!pt.error.empty()) {
        for (Variant v : cfg.variants.variants)
            w.row(pt.mean_dg, pt.adoption_ratio, pt.access_ratio, to_string(v), "", "", "", "", "", "", std::size_t{0},
                  sanitize(pt.error));
        report.error_rows += cfg.variants.variants.size();
        return;
    }
    for (const auto& s : pt.summaries)
        w.row(pt.mean_dg, pt.adoption_ratio, pt.access_ratio, to_string(s.variant), s.customer_mean, s.customer_stderr,
              s.dera_mean, s.dera_stderr, s.total_mean, s.total_stderr, s.count, "");
}

RunReport run_sweep(const ExperimentConfig& cfg) {
    Output out(cfg.output_dir);
    std::vector<PopulationSpec> points;
    for (double mean : cfg.mean_dg_grid) {
        PopulationSpec spec = cfg.population;
        spec.mean_dg = mean;
        if (cfg.experiment == "pareto") {
            points.push_back(spec);
        } else if (cfg.experiment == "adoption_sweep") {
            for (double a : cfg.adoption_grid) {
                spec.adoption_ratio = a;
                points.push_back(spec);
            }
        } else {
            for (double d : cfg.access_grid) {
                spec.access_ratio = d;
                points.push_back(spec);
            }
        }
    }
    const bool keep = cfg.experiment == "pareto";
    std::vector<SweepPoint> results;
    results.reserve(points.size());
    for (const auto& spec : points) results.push_back(run_point(cfg, spec, keep));

    {
        auto f = out.open(cfg.experiment + ".csv");
        CsvWriter w(f, kSurplusHeader);
        for (const auto& pt : results) write_point(w, cfg, pt, out.report);
    }
    if (keep) {
        auto f = out.open("pareto_scenarios.csv");
        CsvWriter w(f, {"mean_dg", "scenario_id", "variant", "customer", "dera", "total"});
        for (const auto& pt : results) {
            if (!pt.error.empty()) continue;
            for (std::size_t v = 0; v < pt.per_scenario.size(); ++v)
                for (std::size_t s = 0; s < pt.per_scenario[v].size(); ++s) {
                    const auto& sp = pt.per_scenario[v][s];
                    w.row(pt.mean_dg, s, to_string(cfg.variants.variants[v]), sp.customer, sp.dera, sp.total());
                }
        }
    }
    write_manifest(out, cfg);
    return out.report;
}

RunReport run_single(const ExperimentConfig& cfg) {
    Output out(cfg.output_dir);
    {
        auto f = out.open("equilibrium_single.csv");
        CsvWriter w(f, {"g_total", "k_total", "pi_lmp", "c_star", "k_star", "gamma", "psi", "exists", "survivors",
                        "k_star_conditions", "marginal_residual", "profit_residual", "reason"});
        for (double k : cfg.single_k_total) {
            EquilibriumParams p = cfg.single;
            p.k_total = k;
            const auto pub = single_interval_equilibrium(p);
            for (double pi : cfg.single_pi) {
                const auto res = verify_conditions(pub, p, pi);
                const auto cond = equilibrium_from_conditions(p, pi);
                w.row(p.g_total, k, pi, pub.c_star, pub.k_star, pub.gamma, pub.psi, pub.exists, pub.survivors,
                      cond.k_star, res.marginal, res.profit, sanitize(pub.reason));
            }
        }
    }
    write_manifest(out, cfg);
    return out.report;
}

RunReport run_multi(const ExperimentConfig& cfg) {
    Output out(cfg.output_dir);
    const auto trace = load_trace(cfg.trace_path);
    std::vector<std::vector<SurvivorResult>> results(cfg.eps1_grid.size());
    std::vector<std::string> errors(cfg.eps1_grid.size());
    for (std::size_t i = 0; i < cfg.eps1_grid.size(); ++i) {
        try {
            const auto bank = build_equilibrium_bank(trace, cfg.multi, cfg.eps1_grid[i]);
            for (double e2 : cfg.eps2_grid) results[i].push_back(survivor_count(bank, cfg.multi, e2));
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    }
    {
        auto f = out.open("survivors.csv");
        CsvWriter w(f, {"eps1", "eps2", "survivors", "k_star", "profit_at_initial", "scenario_count", "error"});
        for (std::size_t i = 0; i < cfg.eps1_grid.size(); ++i)
            for (std::size_t j = 0; j < cfg.eps2_grid.size(); ++j) {
                if (!errors[i].empty()) {
                    w.row(cfg.eps1_grid[i], cfg.eps2_grid[j], "", "", "", std::size_t{0}, sanitize(errors[i]));
                    ++out.report.error_rows;
                    continue;
                }
                const auto& r = results[i][j];
                w.row(cfg.eps1_grid[i], cfg.eps2_grid[j], r.survivors, r.k_star, r.profit_at_initial,
                      cfg.multi.scenarios, "");
            }
    }
    {
        auto f = out.open("access_profile.csv");
        CsvWriter w(f, {"eps1", "eps2", "hour", "net_injection_access"});
        for (std::size_t i = 0; i < cfg.eps1_grid.size(); ++i) {
            if (!errors[i].empty()) continue;
            for (std::size_t j = 0; j < cfg.eps2_grid.size(); ++j) {
                const auto& prof = results[i][j].net_injection_access;
                for (std::size_t h = 0; h < prof.size(); ++h) w.row(cfg.eps1_grid[i], cfg.eps2_grid[j], h, prof[h]);
            }
        }
    }
    write_manifest(out, cfg);
    return out.report;
}

RunReport run_clear(const ExperimentConfig& cfg) {
    Output out(cfg.output_dir);
    const auto nc = load_network(cfg.network_path);
    const auto rep = equivalence_report(nc.net, nc.fleets);
    {
        auto f = out.open("clearing_direct.json");
        f << clearing_to_json(rep.direct) << '\n';
    }
    {
        auto f = out.open("clearing_aggregated.json");
        f << clearing_to_json(rep.aggregated) << '\n';
    }
    {
        auto f = out.open("lmp.csv");
        CsvWriter w(f, {"bus", "lmp_direct", "lmp_aggregated", "generation", "demand"});
        for (std::size_t i = 0; i < rep.direct.lmp.size(); ++i)
            w.row(i, rep.direct.lmp[i], rep.aggregated.lmp[i], rep.direct.p[i], rep.direct.dd[i]);
    }
    {
        auto f = out.open("equivalence.csv");
        CsvWriter w(f, {"sw_direct", "sw_aggregated", "d_sw", "d_lmp", "d_surplus", "kkt_residual"});
        w.row(rep.direct.sw, rep.aggregated.sw, rep.d_sw, rep.d_lmp, rep.d_surplus, rep.kkt_residual);
    }
    write_manifest(out, cfg);
    return out.report;
}

RunReport run_aggregate(const ExperimentConfig& cfg) {
    Output out(cfg.output_dir);
    const auto& a = cfg.aggregate;
    const auto agg = aggregate(a.prosumers, a.g, a.pi, a.k);
    {
        auto f = out.open("aggregation.csv");
        write_aggregation_csv(f, 0, a.prosumers, a.g, a.pi, agg);
    }
    write_manifest(out, cfg);
    return out.report;
}

}  // namespace

SweepPoint run_point(const ExperimentConfig& cfg, const PopulationSpec& pop_spec, bool keep_scenarios) {
    SweepPoint pt;
    pt.mean_dg = pop_spec.mean_dg;
    pt.adoption_ratio = pop_spec.adoption_ratio;
    pt.access_ratio = pop_spec.access_ratio;
    const auto& variants = cfg.variants.variants;
    try {
        const auto pop = build_population(pop_spec);
        std::vector<std::string> ids;
        for (const auto& p : pop.fleet) ids.push_back(p.id);
        const auto scen = generate_scenarios(cfg.scenarios, cfg.lmp, pop.dg, ids, cfg.seed);

        const auto rows = parallel_map<std::vector<SurplusPair>>(scen.count(), [&](std::size_t s) {
            std::vector<SurplusPair> r;
            r.reserve(variants.size());
            for (Variant v : variants)
                r.push_back(evaluate_variant(v, pop, scen.dg[s], scen.lmp[s], cfg.tariff, cfg.pi_minus_tracks_lmp,
                                             cfg.variants));
            return r;
        });

        for (std::size_t v = 0; v < variants.size(); ++v) {
            std::vector<double> cust(rows.size()), dera(rows.size()), total(rows.size());
            for (std::size_t s = 0; s < rows.size(); ++s) {
                cust[s] = rows[s][v].customer;
                dera[s] = rows[s][v].dera;
                total[s] = rows[s][v].total();
            }
            VariantSummary sum;
            sum.variant = variants[v];
            sum.count = rows.size();
            mean_stderr(cust, sum.customer_mean, sum.customer_stderr);
            mean_stderr(dera, sum.dera_mean, sum.dera_stderr);
            mean_stderr(total, sum.total_mean, sum.total_stderr);
            pt.summaries.push_back(sum);
            if (keep_scenarios) {
                std::vector<SurplusPair> col(rows.size());
                for (std::size_t s = 0; s < rows.size(); ++s) col[s] = rows[s][v];
                pt.per_scenario.push_back(std::move(col));
            }
        }
    } catch (const std::exception& e) {
        pt.error = e.what();
        pt.summaries.clear();
        pt.per_scenario.clear();
    }
    return pt;
}

RunReport run_benefit(const ExperimentConfig& cfg) {
    Output out(cfg.output_dir);
    std::vector<BenefitCurve> curves;
    std::vector<double> tags;
    for (double mean : cfg.mean_dg_grid) {
        PopulationSpec spec = cfg.population;
        spec.mean_dg = mean;
        const auto pop = build_population(spec);
        std::vector<std::string> ids;
        for (const auto& p : pop.fleet) ids.push_back(p.id);
        const auto scen = generate_scenarios(cfg.scenarios, cfg.lmp, pop.dg, ids, cfg.seed);
        for (AccessAxis axis : cfg.axes) {
            BenefitOptions opt = cfg.benefit;
            opt.axis = axis;
            opt.grid = cfg.access_kwh_grid;
            curves.push_back(benefit_curve(pop.fleet, scen, cfg.tariff, opt));
            tags.push_back(mean);
        }
    }
    {
        auto f = out.open("benefit_curve.csv");
        write_benefit_csv(f, curves, tags);
    }
    {
        auto f = out.open("access_bid.csv");
        write_bid_csv(f, curves, tags);
    }
    write_manifest(out, cfg);
    return out.report;
}

RunReport run(const ExperimentConfig& cfg) {
    const auto& ex = cfg.experiment;
    if (ex == "pareto" || ex == "adoption_sweep" || ex == "access_sweep") return run_sweep(cfg);
    if (ex == "benefit_curve") return run_benefit(cfg);
    if (ex == "equilibrium_single") return run_single(cfg);
    if (ex == "equilibrium_multi") return run_multi(cfg);
    if (ex == "clear_once") return run_clear(cfg);
    if (ex == "aggregate_once") return run_aggregate(cfg);
    throw ConfigError(fmt::format("unknown experiment '{}'", ex));
}

}  // namespace derasim
