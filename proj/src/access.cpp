#include "derasim/access.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/core.h>

#include "derasim/errors.hpp"
#include "derasim/parallel.hpp"

namespace derasim {

BenefitSample benefit_sample(const Prosumer& p, const PoAAccess& a, double g, double pi, double k) {
    feasible_box(p, a, g);
    const double v_inv = p.utility.inverse_marginal(pi);
    BenefitSample s;
    s.k = k;
    s.q_plus = -a.c_wd + std::min(v_inv, p.d_max);
    s.q_minus = a.c_inj + std::max(v_inv, p.d_min);
    const auto& u = p.utility;
    if (g <= s.q_plus) {
        s.branch = AccessBranch::Withdrawal;
        s.phi_wd = u.value(g + a.c_wd) - pi * a.c_wd;
    } else if (s.q_minus <= g) {
        s.branch = AccessBranch::Injection;
        s.phi_inj = u.value(g - a.c_inj) + pi * a.c_inj;
    } else {
        s.branch = AccessBranch::Interior;
        const double d_hat = p.inverse_demand(pi);
        s.h = u.value(d_hat) - pi * (d_hat - g);
    }
    return s;
}

const char* to_string(AccessAxis axis) {
    switch (axis) {
        case AccessAxis::Injection: return "injection";
        case AccessAxis::Withdrawal: return "withdrawal";
        case AccessAxis::Symmetric: return "symmetric";
    }
    return "?";
}

AccessAxis access_axis_from_string(const std::string& s) {
    if (s == "injection") return AccessAxis::Injection;
    if (s == "withdrawal") return AccessAxis::Withdrawal;
    if (s == "symmetric") return AccessAxis::Symmetric;
    throw ConfigError(fmt::format("unknown access axis '{}'", s));
}

PoAAccess access_at(const BenefitOptions& opt, double c) {
    switch (opt.axis) {
        case AccessAxis::Injection: return {c, opt.other_limit};
        case AccessAxis::Withdrawal: return {opt.other_limit, c};
        case AccessAxis::Symmetric: return {c, c};
    }
    return {};
}

BenefitCurve benefit_curve(const std::vector<Prosumer>& fleet, const ScenarioSet& scenarios, const NemTariff& tariff,
                           const BenefitOptions& opt) {
    const std::size_t S = scenarios.count();
    if (S == 0) throw DomainError("benefit_curve: empty scenario set");
    if (opt.grid.empty()) throw DomainError("benefit_curve: empty grid");
    for (std::size_t i = 1; i < opt.grid.size(); ++i)
        if (!(opt.grid[i - 1] < opt.grid[i])) throw DomainError("benefit_curve: grid must be strictly ascending");
    opt.competition.validate();

    const std::size_t G = opt.grid.size();
    std::vector<PoAAccess> access(G);
    for (std::size_t j = 0; j < G; ++j) access[j] = access_at(opt, opt.grid[j]);

    // per_scenario[s][j] = fleet profit in scenario s at grid point j
    const auto per_scenario = parallel_map<std::vector<double>>(S, [&](std::size_t s) {
        const double pi = scenarios.lmp[s];
        NemTariff t = tariff;
        if (opt.pi_minus_tracks_lmp) t.pi_minus = pi;
        std::vector<double> row(G, 0.0);
        for (std::size_t n = 0; n < fleet.size(); ++n) {
            const double g = scenarios.dg[s][n];
            const double k = benchmark_K(opt.competition, fleet[n], t, opt.benchmark_access, g);
            for (std::size_t j = 0; j < G; ++j) row[j] += benefit_sample(fleet[n], access[j], g, pi, k).contribution();
        }
        return row;
    });

    BenefitCurve curve;
    curve.axis = opt.axis;
    curve.grid = opt.grid;
    curve.mc_count = S;
    curve.seed = scenarios.seed;
    curve.phi.assign(G, 0.0);
    curve.phi_stderr.assign(G, 0.0);
    for (std::size_t j = 0; j < G; ++j) {
        double sum = 0.0;
        for (std::size_t s = 0; s < S; ++s) sum += per_scenario[s][j];
        const double mean = sum / static_cast<double>(S);
        double ss = 0.0;
        for (std::size_t s = 0; s < S; ++s) ss += (per_scenario[s][j] - mean) * (per_scenario[s][j] - mean);
        curve.phi[j] = mean;
        curve.phi_stderr[j] = S > 1 ? std::sqrt(ss / static_cast<double>(S - 1) / static_cast<double>(S)) : 0.0;
    }
    return curve;
}

std::vector<double> isotonic_nonincreasing(const std::vector<double>& y, const std::vector<double>& w) {
    if (y.size() != w.size()) throw DomainError("isotonic fit: size mismatch");
    struct Block {
        double value;
        double weight;
        std::size_t count;
    };
    std::vector<Block> blocks;
    for (std::size_t i = 0; i < y.size(); ++i) {
        blocks.push_back({y[i], w[i], 1});
        while (blocks.size() > 1 && blocks[blocks.size() - 2].value < blocks.back().value) {
            const Block b = blocks.back();
            blocks.pop_back();
            auto& a = blocks.back();
            const double wt = a.weight + b.weight;
            a.value = (a.value * a.weight + b.value * b.weight) / wt;
            a.weight = wt;
            a.count += b.count;
        }
    }
    std::vector<double> out;
    out.reserve(y.size());
    for (const auto& b : blocks) out.insert(out.end(), b.count, b.value);
    return out;
}

std::vector<BidStep> access_bid(const BenefitCurve& curve) {
    const auto& c = curve.grid;
    const auto& phi = curve.phi;
    if (c.size() < 2 || phi.size() != c.size()) throw DomainError("access_bid needs at least two grid points");
    std::vector<double> slope;
    std::vector<double> width;
    for (std::size_t i = 0; i + 1 < c.size(); ++i) {
        if (!std::isfinite(c[i + 1]) || !std::isfinite(phi[i]) || !std::isfinite(phi[i + 1]))
            throw DomainError("access_bid: non-finite grid or benefit value");
        const double dc = c[i + 1] - c[i];
        if (!(dc > 0.0)) throw DomainError("access_bid: grid must be strictly ascending");
        slope.push_back((phi[i + 1] - phi[i]) / dc);
        width.push_back(dc);
    }
    const auto fitted = isotonic_nonincreasing(slope, width);
    std::vector<BidStep> bid;
    for (std::size_t i = 0; i < fitted.size(); ++i) bid.push_back({c[i], c[i + 1], fitted[i]});
    return bid;
}

}  // namespace derasim
