#include "derasim/prosumer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/core.h>
#include <json.hpp>

#include "derasim/errors.hpp"

namespace derasim {

QuadraticUtility::QuadraticUtility(double a, double b) : alpha(a), beta(b) {
    if (!(alpha > 0.0) || !(beta > 0.0) || !std::isfinite(alpha) || !std::isfinite(beta))
        throw DomainError(fmt::format("utility needs alpha > 0 and beta > 0 (got {}, {})", alpha, beta));
}

double QuadraticUtility::value(double x) const {
    if (x < 0.0) throw DomainError(fmt::format("utility evaluated at negative consumption {}", x));
    if (x >= satiation()) return alpha * alpha / (2.0 * beta);
    return alpha * x - 0.5 * beta * x * x;
}

double QuadraticUtility::marginal(double x) const {
    if (x < 0.0) throw DomainError(fmt::format("marginal utility at negative consumption {}", x));
    if (x >= satiation()) return 0.0;
    return alpha - beta * x;
}

double QuadraticUtility::inverse_marginal(double pi) const {
    if (pi < 0.0) throw DomainError(fmt::format("inverse marginal at negative price {}", pi));
    if (pi >= alpha) return 0.0;
    return std::clamp((alpha - pi) / beta, 0.0, satiation());
}

void PoAAccess::validate() const {
    if (std::isnan(c_inj) || c_inj < 0.0) throw DomainError(fmt::format("injection limit must be >= 0 (got {})", c_inj));
    if (std::isnan(c_wd) || c_wd < 0.0) throw DomainError(fmt::format("withdrawal limit must be >= 0 (got {})", c_wd));
}

void Prosumer::validate() const {
    if (!(d_min >= 0.0) || !(d_min <= d_max))
        throw DomainError(fmt::format("prosumer {}: need 0 <= d_min <= d_max (got {}, {})", id, d_min, d_max));
    access.validate();
}

double Prosumer::inverse_demand(double pi) const {
    return std::min(d_max, std::max(utility.inverse_marginal(pi), d_min));
}

double utility_value(const QuadraticUtility& u, double x) { return u.value(x); }
double marginal_utility(const QuadraticUtility& u, double x) { return u.marginal(x); }
double inverse_marginal(const QuadraticUtility& u, double pi) { return u.inverse_marginal(pi); }
double inverse_demand(const Prosumer& p, double pi) { return p.inverse_demand(pi); }

namespace {

double limit_or_unlimited(const nlohmann::json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key) || obj.at(key).is_null()) return kUnlimited;
    const auto& v = obj.at(key);
    if (!v.is_number()) throw ConfigError(fmt::format("'{}' must be a number or null", key), where);
    return v.get<double>();
}

double required_number(const nlohmann::json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key) || !obj.at(key).is_number())
        throw ConfigError(fmt::format("missing numeric field '{}'", key), where);
    return obj.at(key).get<double>();
}

}  // namespace

std::vector<Prosumer> prosumers_from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(e.what());
    }
    if (!doc.is_array()) throw ConfigError("prosumer document must be a JSON array");

    std::vector<Prosumer> out;
    out.reserve(doc.size());
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const auto& rec = doc[i];
        const std::string where = fmt::format("[{}]", i);
        if (!rec.is_object()) throw ConfigError("prosumer record must be an object", where);
        Prosumer p;
        if (rec.contains("id")) {
            p.id = rec["id"].is_string() ? rec["id"].get<std::string>() : rec["id"].dump();
        } else {
            p.id = std::to_string(i);
        }
        p.poa = rec.value("poa", 0);
        try {
            p.utility = QuadraticUtility(required_number(rec, "alpha", where), required_number(rec, "beta", where));
        } catch (const DomainError& e) {
            throw ConfigError(e.what(), where);
        }
        p.d_min = rec.contains("d_min") ? required_number(rec, "d_min", where) : 0.0;
        p.d_max = limit_or_unlimited(rec, "d_max", where);
        const std::string behavior = rec.value("behavior", std::string("active"));
        if (behavior == "active" || behavior == "Active") {
            p.behavior = Behavior::Active;
        } else if (behavior == "passive" || behavior == "Passive") {
            p.behavior = Behavior::Passive;
        } else {
            throw ConfigError(fmt::format("unknown behavior '{}'", behavior), where);
        }
        p.access.c_inj = limit_or_unlimited(rec, "c_inj", where);
        p.access.c_wd = limit_or_unlimited(rec, "c_wd", where);
        try {
            p.validate();
        } catch (const DomainError& e) {
            throw ConfigError(e.what(), where);
        }
        out.push_back(std::move(p));
    }
    return out;
}

std::vector<Prosumer> load_prosumers(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open prosumer file", path);
    std::stringstream ss;
    ss << in.rdbuf();
    return prosumers_from_json(ss.str());
}

}  // namespace derasim
