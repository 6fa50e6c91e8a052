#include "derasim/market.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/core.h>
#include <json.hpp>

#include "derasim/errors.hpp"
#include "derasim/nem.hpp"
#include "derasim/qp.hpp"

namespace derasim {

SupplyCurve::SupplyCurve(const std::vector<Prosumer>& fleet, const std::vector<PoAAccess>& access,
                         const std::vector<double>& g) {
    if (fleet.size() != access.size() || fleet.size() != g.size()) throw DomainError("supply curve: size mismatch");
    double lo_sum = 0.0;
    double hi_sum = 0.0;
    double alpha_max = 0.0;
    std::vector<double> prices{0.0};
    for (std::size_t n = 0; n < fleet.size(); ++n) {
        const auto box = feasible_box(fleet[n], access[n], g[n]);
        const auto& u = fleet[n].utility;
        pieces_.push_back({u.alpha, u.beta, box.lo, box.hi});
        g_total_ += g[n];
        lo_sum += box.lo;
        hi_sum += box.hi;
        alpha_max = std::max(alpha_max, u.alpha);
        for (double x : {box.lo, box.hi}) {
            const double pi = u.alpha - u.beta * x;
            if (std::isfinite(pi) && pi > 0.0) prices.push_back(pi);
        }
    }
    prices.push_back(alpha_max);
    std::sort(prices.begin(), prices.end());
    prices.erase(std::unique(prices.begin(), prices.end()), prices.end());
    for (double pi : prices)
        if (pi <= alpha_max) knots_.emplace_back(pi, (*this)(pi));
    q_min_ = g_total_ - hi_sum;
    q_max_ = g_total_ - lo_sum;
}

double SupplyCurve::operator()(double pi) const {
    if (pi < 0.0) throw DomainError(fmt::format("supply curve evaluated at negative price {}", pi));
    double d = 0.0;
    for (const auto& pc : pieces_) d += std::max(pc.lo, std::min((pc.alpha - pi) / pc.beta, pc.hi));
    return g_total_ - d;
}

SupplyCurve build_supply_curve(const std::vector<Prosumer>& fleet, const std::vector<PoAAccess>& access,
                               const std::vector<double>& g) {
    return SupplyCurve(fleet, access, g);
}

double invert_supply(const SupplyCurve& curve, double q) {
    const double slack = 1e-12 * (1.0 + std::abs(q));
    if (q < curve.q_min() - slack || q > curve.q_max() + slack)
        throw DomainError(fmt::format("quantity {} outside supply range [{}, {}]", q, curve.q_min(), curve.q_max()));
    const auto& k = curve.breakpoints();
    if (q <= k.front().second) return 0.0;
    for (std::size_t i = 1; i < k.size(); ++i) {
        if (k[i].second >= q) {
            const auto [p0, f0] = k[i - 1];
            const auto [p1, f1] = k[i];
            return p0 + (q - f0) / (f1 - f0) * (p1 - p0);
        }
    }
    return k.back().first;
}

void TransmissionNetwork::validate() const {
    const std::size_t m = buses();
    if (m == 0) throw DomainError("network has no buses");
    if (demand.size() != m) throw DomainError("network: one demand bid per bus required");
    if (shift.size() != lines()) throw DomainError("network: shift matrix needs one row per line");
    for (const auto& row : shift)
        if (row.size() != m) throw DomainError("network: shift matrix row length != bus count");
    for (double f : line_limits)
        if (!(f > 0.0)) throw DomainError(fmt::format("line limit must be > 0 (got {})", f));
    for (const auto& gbid : gen)
        if (!(gbid.c2 >= 0.0) || !(gbid.pmax >= 0.0) || !std::isfinite(gbid.pmax))
            throw DomainError("generator offer needs c2 >= 0 and finite pmax >= 0");
    for (const auto& dbid : demand)
        if (!(dbid.e2 <= 0.0) || !(dbid.dmax >= 0.0) || !std::isfinite(dbid.dmax))
            throw DomainError("demand bid needs e2 <= 0 and finite dmax >= 0");
}

namespace {

struct Segment {
    double len;
    double m0;     // marginal value at the segment start
    double slope;  // drop in marginal value per unit withdrawal
};

// A participant as a nonincreasing marginal-value curve in net withdrawal w.
struct Bidder {
    std::size_t bus;
    double w0;
    std::vector<Segment> segs;
    std::size_t first_var = 0;
};

double effective_hi(const Prosumer& p, const ConsumptionBox& box) {
    return std::isfinite(box.hi) ? box.hi : std::max(box.lo, p.utility.satiation());
}

void push(std::vector<Segment>& segs, double len, double m0, double slope) {
    if (len > 0.0) segs.push_back({len, m0, slope});
}

Bidder prosumer_bidder(std::size_t bus, const Prosumer& p, const PoAAccess& a, double g) {
    const auto box = feasible_box(p, a, g);
    const double hi = effective_hi(p, box);
    const double sat = p.utility.satiation();
    const double q_end = std::min(hi, std::max(box.lo, sat));
    Bidder b{bus, box.lo - g, {}};
    push(b.segs, q_end - box.lo, std::max(p.utility.alpha - p.utility.beta * box.lo, 0.0), p.utility.beta);
    push(b.segs, hi - q_end, 0.0, 0.0);
    return b;
}

Bidder dera_bidder(std::size_t bus, const BusFleet& fleet) {
    const SupplyCurve curve(fleet.prosumers, fleet.access, fleet.g);
    const auto& k = curve.breakpoints();
    Bidder b{bus, -k.back().second, {}};
    for (std::size_t i = k.size() - 1; i > 0; --i) {
        const double len = k[i].second - k[i - 1].second;
        if (len > 0.0) push(b.segs, len, k[i].first, (k[i].first - k[i - 1].first) / len);
    }
    double hi_sum = 0.0;
    for (std::size_t n = 0; n < fleet.prosumers.size(); ++n)
        hi_sum += effective_hi(fleet.prosumers[n], feasible_box(fleet.prosumers[n], fleet.access[n], fleet.g[n]));
    push(b.segs, hi_sum - curve.g_total() + k.front().second, 0.0, 0.0);
    return b;
}

double bidder_withdrawal(const Bidder& b, const Eigen::VectorXd& x) {
    double w = b.w0;
    for (std::size_t j = 0; j < b.segs.size(); ++j) w += x[b.first_var + j];
    return w;
}

// Aggregated dispatch split back to prosumers at the bus price.
std::vector<double> disaggregate(const BusFleet& fleet, double lmp, double withdrawal) {
    const double pi = std::max(lmp, 0.0);
    std::vector<double> d(fleet.prosumers.size());
    std::vector<double> headroom(d.size());
    double placed = 0.0;
    double room = 0.0;
    for (std::size_t n = 0; n < d.size(); ++n) {
        const auto& p = fleet.prosumers[n];
        const auto box = feasible_box(p, fleet.access[n], fleet.g[n]);
        d[n] = std::max(box.lo, std::min((p.utility.alpha - pi) / p.utility.beta, box.hi));
        headroom[n] = effective_hi(p, box) - d[n];
        placed += d[n];
        room += headroom[n];
    }
    const double target = withdrawal + std::accumulate(fleet.g.begin(), fleet.g.end(), 0.0);
    const double extra = target - placed;
    if (lmp <= 1e-7 && extra > 1e-9 && room > 0.0) {
        const double share = std::min(1.0, extra / room);
        for (std::size_t n = 0; n < d.size(); ++n) d[n] += share * headroom[n];
    }
    return d;
}

}  // namespace

ClearingOutcome clear(const TransmissionNetwork& net, const std::vector<BusFleet>& fleets, ClearingMode mode) {
    net.validate();
    const std::size_t M = net.buses();
    const std::size_t L = net.lines();
    if (fleets.size() != M) throw DomainError("clear: one fleet entry per bus required");
    for (const auto& f : fleets)
        if (f.prosumers.size() != f.access.size() || f.prosumers.size() != f.g.size())
            throw DomainError("clear: fleet size mismatch");

    std::vector<Bidder> bidders;
    std::vector<int> gen_idx(M, -1), dem_idx(M, -1), dera_idx(M, -1);
    std::vector<std::vector<int>> pro_idx(M);
    for (std::size_t i = 0; i < M; ++i) {
        const auto& gbid = net.gen[i];
        if (gbid.pmax > 0.0) {
            gen_idx[i] = static_cast<int>(bidders.size());
            bidders.push_back({i, -gbid.pmax, {{gbid.pmax, gbid.c1 + gbid.c2 * gbid.pmax, gbid.c2}}});
        }
        const auto& dbid = net.demand[i];
        if (dbid.dmax > 0.0) {
            dem_idx[i] = static_cast<int>(bidders.size());
            bidders.push_back({i, 0.0, {{dbid.dmax, dbid.e1, -dbid.e2}}});
        }
        if (fleets[i].prosumers.empty()) continue;
        if (mode == ClearingMode::Direct) {
            for (std::size_t n = 0; n < fleets[i].prosumers.size(); ++n) {
                pro_idx[i].push_back(static_cast<int>(bidders.size()));
                bidders.push_back(prosumer_bidder(i, fleets[i].prosumers[n], fleets[i].access[n], fleets[i].g[n]));
            }
        } else {
            dera_idx[i] = static_cast<int>(bidders.size());
            bidders.push_back(dera_bidder(i, fleets[i]));
        }
    }

    std::size_t nvar = 0;
    double w_min = 0.0;
    double w_max = 0.0;
    std::vector<double> w0_bus(M, 0.0);
    for (auto& b : bidders) {
        b.first_var = nvar;
        nvar += b.segs.size();
        w_min += b.w0;
        w_max += b.w0;
        for (const auto& s : b.segs) w_max += s.len;
        w0_bus[b.bus] += b.w0;
    }
    if (w_min > 1e-12 || w_max < -1e-12)
        throw FeasibilityError(fmt::format("no balanced dispatch: net withdrawal range [{}, {}]", w_min, w_max),
                               "sum of minimum withdrawals > 0 or sum of maximum withdrawals < 0");

    const auto n = static_cast<Eigen::Index>(nvar);
    QpProblem qp;
    qp.q.resize(n);
    qp.c.resize(n);
    qp.A = Eigen::MatrixXd::Ones(1, n);
    qp.b = Eigen::VectorXd::Constant(1, -w_min);
    qp.C = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(L + 2 * nvar), n);
    qp.d = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(L + 2 * nvar));
    for (std::size_t l = 0; l < L; ++l) {
        double rhs = net.line_limits[l];
        for (std::size_t i = 0; i < M; ++i) rhs += net.shift[l][i] * w0_bus[i];
        qp.d[static_cast<Eigen::Index>(l)] = rhs;
    }
    for (const auto& b : bidders) {
        for (std::size_t j = 0; j < b.segs.size(); ++j) {
            const auto v = static_cast<Eigen::Index>(b.first_var + j);
            qp.q[v] = b.segs[j].slope;
            qp.c[v] = -b.segs[j].m0;
            for (std::size_t l = 0; l < L; ++l) qp.C(static_cast<Eigen::Index>(l), v) = -net.shift[l][b.bus];
            const auto r = static_cast<Eigen::Index>(L + 2 * (b.first_var + j));
            qp.C(r, v) = 1.0;
            qp.d[r] = b.segs[j].len;
            qp.C(r + 1, v) = -1.0;
        }
    }

    const auto sol = solve_qp(qp);

    ClearingOutcome out;
    out.iterations = sol.iterations;
    out.lambda = sol.y[0];
    out.mu.resize(L);
    for (std::size_t l = 0; l < L; ++l) out.mu[l] = sol.z[static_cast<Eigen::Index>(l)];
    out.lmp.assign(M, out.lambda);
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t l = 0; l < L; ++l) out.lmp[i] -= net.shift[l][i] * out.mu[l];

    out.p.assign(M, 0.0);
    out.dd.assign(M, 0.0);
    out.d.resize(M);
    std::vector<double> w_bus(M, 0.0);
    for (std::size_t i = 0; i < M; ++i) {
        if (gen_idx[i] >= 0) out.p[i] = std::clamp(-bidder_withdrawal(bidders[gen_idx[i]], sol.x), 0.0, net.gen[i].pmax);
        if (dem_idx[i] >= 0) out.dd[i] = std::clamp(bidder_withdrawal(bidders[dem_idx[i]], sol.x), 0.0, net.demand[i].dmax);
        const auto& fl = fleets[i];
        if (mode == ClearingMode::Direct) {
            for (std::size_t k = 0; k < fl.prosumers.size(); ++k) {
                const auto box = feasible_box(fl.prosumers[k], fl.access[k], fl.g[k]);
                const double d = fl.g[k] + bidder_withdrawal(bidders[pro_idx[i][k]], sol.x);
                out.d[i].push_back(std::clamp(d, box.lo, box.hi));
            }
        } else if (dera_idx[i] >= 0) {
            out.d[i] = disaggregate(fl, out.lmp[i], bidder_withdrawal(bidders[dera_idx[i]], sol.x));
        }
        w_bus[i] = out.dd[i] - out.p[i];
        for (std::size_t k = 0; k < out.d[i].size(); ++k) w_bus[i] += out.d[i][k] - fl.g[k];
    }

    double sw = 0.0;
    for (std::size_t i = 0; i < M; ++i) {
        const auto& gb = net.gen[i];
        const auto& db = net.demand[i];
        sw += db.e1 * out.dd[i] + 0.5 * db.e2 * out.dd[i] * out.dd[i];
        sw -= gb.c1 * out.p[i] + 0.5 * gb.c2 * out.p[i] * out.p[i];
        for (std::size_t k = 0; k < out.d[i].size(); ++k) sw += fleets[i].prosumers[k].utility.value(out.d[i][k]);
    }
    out.sw = sw;
    out.balance_residual = std::abs(std::accumulate(w_bus.begin(), w_bus.end(), 0.0));
    for (std::size_t l = 0; l < L; ++l) {
        double flow = 0.0;
        for (std::size_t i = 0; i < M; ++i) flow -= net.shift[l][i] * w_bus[i];
        out.complementarity_residual =
            std::max(out.complementarity_residual, out.mu[l] * std::abs(net.line_limits[l] - flow));
    }
    return out;
}

double surplus_split(const ClearingOutcome& out, const std::vector<BusFleet>& fleets) {
    double s = 0.0;
    for (std::size_t i = 0; i < fleets.size(); ++i)
        for (std::size_t n = 0; n < fleets[i].prosumers.size(); ++n)
            s += fleets[i].prosumers[n].utility.value(out.d[i][n]) - out.lmp[i] * (out.d[i][n] - fleets[i].g[n]);
    return s;
}

double stationarity_residual(const ClearingOutcome& out, const std::vector<BusFleet>& fleets, double bound_tol) {
    double worst = 0.0;
    for (std::size_t i = 0; i < fleets.size(); ++i) {
        for (std::size_t n = 0; n < fleets[i].prosumers.size(); ++n) {
            const auto& p = fleets[i].prosumers[n];
            const auto box = feasible_box(p, fleets[i].access[n], fleets[i].g[n]);
            const double d = out.d[i][n];
            const double v = p.utility.marginal(d);
            const double pi = out.lmp[i];
            const bool at_lo = d <= box.lo + bound_tol;
            // Unlimited consumption is capped where utility saturates, as in the clearing problem.
            const bool at_hi = d >= effective_hi(p, box) - bound_tol;
            double r;
            if (at_lo && at_hi) {
                r = 0.0;
            } else if (at_hi) {
                r = std::max(0.0, pi - v);
            } else if (at_lo) {
                r = std::max(0.0, v - pi);
            } else {
                r = std::abs(v - pi);
            }
            worst = std::max(worst, r);
        }
    }
    return worst;
}

EquivalenceReport equivalence_report(const TransmissionNetwork& net, const std::vector<BusFleet>& fleets) {
    EquivalenceReport r;
    r.direct = clear(net, fleets, ClearingMode::Direct);
    r.aggregated = clear(net, fleets, ClearingMode::Aggregated);
    r.d_sw = std::abs(r.direct.sw - r.aggregated.sw);
    for (std::size_t i = 0; i < r.direct.lmp.size(); ++i)
        r.d_lmp = std::max(r.d_lmp, std::abs(r.direct.lmp[i] - r.aggregated.lmp[i]));
    r.d_surplus = std::abs(surplus_split(r.direct, fleets) - surplus_split(r.aggregated, fleets));
    r.kkt_residual = std::max(stationarity_residual(r.direct, fleets), stationarity_residual(r.aggregated, fleets));
    return r;
}

namespace {

double num(const nlohmann::json& obj, const char* key, const std::string& where, double fallback) {
    if (!obj.contains(key)) return fallback;
    const auto& v = obj.at(key);
    if (v.is_null()) return kUnlimited;
    if (!v.is_number()) throw ConfigError(fmt::format("'{}' must be a number", key), where);
    return v.get<double>();
}

}  // namespace

NetworkCase network_from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(e.what());
    }
    if (!doc.is_object() || !doc.contains("buses") || !doc["buses"].is_array())
        throw ConfigError("network document needs a 'buses' array");

    NetworkCase nc;
    const auto& buses = doc["buses"];
    for (std::size_t i = 0; i < buses.size(); ++i) {
        const std::string where = fmt::format("buses[{}]", i);
        const auto& b = buses[i];
        GeneratorOffer g;
        DemandBid d;
        if (b.contains("gen")) {
            g = {num(b["gen"], "c1", where + ".gen", 0.0), num(b["gen"], "c2", where + ".gen", 0.0),
                 num(b["gen"], "pmax", where + ".gen", 0.0)};
        }
        if (b.contains("demand")) {
            d = {num(b["demand"], "e1", where + ".demand", 0.0), num(b["demand"], "e2", where + ".demand", 0.0),
                 num(b["demand"], "dmax", where + ".demand", 0.0)};
        }
        nc.net.gen.push_back(g);
        nc.net.demand.push_back(d);
    }
    if (doc.contains("lines")) {
        for (std::size_t l = 0; l < doc["lines"].size(); ++l)
            nc.net.line_limits.push_back(num(doc["lines"][l], "limit", fmt::format("lines[{}]", l), 0.0));
    }
    if (doc.contains("shift")) {
        try {
            nc.net.shift = doc["shift"].get<std::vector<std::vector<double>>>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(e.what(), "shift");
        }
    }
    nc.fleets.resize(nc.net.buses());
    if (doc.contains("prosumers")) {
        const auto& ps = doc["prosumers"];
        for (std::size_t k = 0; k < ps.size(); ++k) {
            const std::string where = fmt::format("prosumers[{}]", k);
            const auto& r = ps[k];
            const int bus = r.value("bus", 0);
            if (bus < 0 || static_cast<std::size_t>(bus) >= nc.fleets.size())
                throw ConfigError(fmt::format("bus index {} out of range", bus), where);
            Prosumer p;
            p.id = !r.contains("id") ? std::to_string(k) : r["id"].is_string() ? r["id"].get<std::string>() : r["id"].dump();
            p.poa = bus;
            try {
                p.utility = QuadraticUtility(num(r, "alpha", where, 0.0), num(r, "beta", where, 0.0));
            } catch (const DomainError& e) {
                throw ConfigError(e.what(), where);
            }
            p.d_min = num(r, "d_min", where, 0.0);
            p.d_max = num(r, "d_max", where, kUnlimited);
            p.access = {num(r, "c_inj", where, kUnlimited), num(r, "c_wd", where, kUnlimited)};
            auto& fleet = nc.fleets[static_cast<std::size_t>(bus)];
            fleet.g.push_back(num(r, "g", where, 0.0));
            fleet.access.push_back(p.access);
            fleet.prosumers.push_back(std::move(p));
        }
    }
    try {
        nc.net.validate();
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }
    return nc;
}

NetworkCase load_network(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open network file", path);
    std::stringstream ss;
    ss << in.rdbuf();
    return network_from_json(ss.str());
}

std::string clearing_to_json(const ClearingOutcome& out, int indent) {
    nlohmann::json j;
    j["p"] = out.p;
    j["dd"] = out.dd;
    j["d"] = out.d;
    j["lambda"] = out.lambda;
    j["mu"] = out.mu;
    j["lmp"] = out.lmp;
    j["sw"] = out.sw;
    j["balance_residual"] = out.balance_residual;
    j["complementarity_residual"] = out.complementarity_residual;
    j["iterations"] = out.iterations;
    return j.dump(indent);
}

}  // namespace derasim
