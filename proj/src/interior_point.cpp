#include <algorithm>
#include <cmath>
#include <vector>

#include <fmt/core.h>

#include "derasim/errors.hpp"
#include "derasim/qp.hpp"

namespace derasim {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double max_step(const VectorXd& v, const VectorXd& dv) {
    double a = 1.0;
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (dv[i] < 0.0) a = std::min(a, -v[i] / dv[i]);
    return a;
}

constexpr double kNeighborhood = 1e-3;
constexpr double kShortStep = 0.1;
constexpr double kCentering = 0.5;

double inf_norm(const VectorXd& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

// Re-solves the problem with the inequalities the interior point found active held as equalities,
// which lands bound-active variables exactly on their bounds. Rejected unless the result is optimal.
bool polish(const QpProblem& p, const VectorXd& s, QpSolution& sol) {
    // Curvature-free variables get a weak pull toward the interior-point value and the constraint block a
    // small negative diagonal, so dependent active rows do not make the factorization singular.
    constexpr double kProximal = 1e-7;
    constexpr double kDualReg = 1e-10;
    constexpr int kRefinements = 5;
    constexpr int kSwaps = 20;
    const Eigen::Index n = p.c.size();
    const Eigen::Index me = p.A.rows();
    const Eigen::Index mi = p.C.rows();
    const double dual_tol = 1e-9 * (1.0 + inf_norm(p.c));
    const double primal_tol = 1e-9 * (1.0 + std::max(inf_norm(p.b), inf_norm(p.d)));

    std::vector<Eigen::Index> active;
    for (Eigen::Index i = 0; i < mi; ++i)
        if (sol.z[i] > s[i]) active.push_back(i);
    VectorXd prox = VectorXd::Zero(n);
    for (Eigen::Index j = 0; j < n; ++j)
        if (p.q[j] == 0.0) prox[j] = kProximal;

    for (int swap = 0; swap <= kSwaps; ++swap) {
        const auto na = static_cast<Eigen::Index>(active.size());
        const Eigen::Index m = n + me + na;
        MatrixXd K = MatrixXd::Zero(m, m);
        VectorXd rhs(m);
        K.topLeftCorner(n, n).diagonal() = p.q + prox;
        K.block(0, n, n, me) = p.A.transpose();
        K.block(n, 0, me, n) = p.A;
        rhs.head(n) = prox.cwiseProduct(sol.x) - p.c;
        rhs.segment(n, me) = p.b;
        for (Eigen::Index k = 0; k < na; ++k) {
            K.block(0, n + me + k, n, 1) = p.C.row(active[k]).transpose();
            K.block(n + me + k, 0, 1, n) = p.C.row(active[k]);
            rhs[n + me + k] = p.d[active[k]];
        }
        MatrixXd K_reg = K;
        K_reg.bottomRightCorner(me + na, me + na).diagonal().setConstant(-kDualReg);
        const Eigen::PartialPivLU<MatrixXd> lu(K_reg);
        VectorXd v = lu.solve(rhs);
        for (int r = 0; r < kRefinements; ++r) v += lu.solve(rhs - K * v);

        const VectorXd x = v.head(n);
        const VectorXd r = K * v - rhs;
        if (inf_norm(r.head(n)) > dual_tol || inf_norm(r.tail(me + na)) > primal_tol) return false;
        if (inf_norm(prox.cwiseProduct(x - sol.x)) > dual_tol) return false;

        // One swap per pass: drop the most negative multiplier, else add the most violated row.
        Eigen::Index worst = -1;
        double worst_z = -dual_tol;
        for (Eigen::Index k = 0; k < na; ++k)
            if (v[n + me + k] < worst_z) worst_z = v[n + me + k], worst = k;
        if (worst >= 0) {
            active.erase(active.begin() + worst);
            continue;
        }
        const VectorXd slack = p.d - p.C * x;
        Eigen::Index violated = -1;
        double worst_slack = -primal_tol;
        for (Eigen::Index i = 0; i < mi; ++i)
            if (slack[i] < worst_slack) worst_slack = slack[i], violated = i;
        if (violated >= 0) {
            active.push_back(violated);
            continue;
        }

        sol.x = x;
        sol.y = v.segment(n, me);
        sol.z = VectorXd::Zero(mi);
        for (Eigen::Index k = 0; k < na; ++k) sol.z[active[k]] = std::max(v[n + me + k], 0.0);
        sol.polished = true;
        return true;
    }
    return false;
}

}  // namespace

QpSolution solve_qp(const QpProblem& p, const QpOptions& opt) {
    const Eigen::Index n = p.c.size();
    const Eigen::Index me = p.A.rows();
    const Eigen::Index mi = p.C.rows();
    if (p.q.size() != n || p.A.cols() != n || p.b.size() != me || p.C.cols() != n || p.d.size() != mi)
        throw DomainError("solve_qp: inconsistent dimensions");

    VectorXd x = VectorXd::Zero(n);
    VectorXd y = VectorXd::Zero(me);
    VectorXd s = p.d - p.C * x;
    for (Eigen::Index i = 0; i < mi; ++i) s[i] = std::max(s[i], 1.0);
    VectorXd z = VectorXd::Ones(mi);

    const double scale_c = 1.0 + inf_norm(p.c);
    const double scale_b = 1.0 + std::max(inf_norm(p.b), inf_norm(p.d));

    MatrixXd K(n + me, n + me);
    VectorXd rhs(n + me);
    QpSolution sol;

    bool warm = false;
    for (int it = 0; it <= opt.max_iter; ++it) {
        const VectorXd r_d = p.q.cwiseProduct(x) + p.c + p.A.transpose() * y + p.C.transpose() * z;
        const VectorXd r_p = p.A * x - p.b;
        const VectorXd r_i = p.C * x + s - p.d;
        const double mu = mi ? s.dot(z) / static_cast<double>(mi) : 0.0;

        sol.dual_residual = inf_norm(r_d) / scale_c;
        sol.primal_residual = std::max(inf_norm(r_p), inf_norm(r_i)) / scale_b;
        sol.gap = mu;
        sol.iterations = it;
        if (sol.dual_residual <= opt.tol && sol.primal_residual <= opt.tol && mu <= opt.tol) break;
        if (it == opt.max_iter) {
            if (sol.dual_residual <= opt.accept_tol && sol.primal_residual <= opt.accept_tol && mu <= opt.accept_tol)
                break;
            sol.x = x;
            sol.y = y;
            sol.z = z;
            if (polish(p, s, sol)) return sol;
            throw ConvergenceError(fmt::format("interior point stopped after {} iterations", it),
                                   {sol.primal_residual, sol.dual_residual, mu});
        }

        const VectorXd w = z.cwiseQuotient(s);
        K.setZero();
        K.topLeftCorner(n, n) = p.C.transpose() * w.asDiagonal() * p.C;
        K.topLeftCorner(n, n).diagonal() += p.q;
        K.topRightCorner(n, me) = p.A.transpose();
        K.bottomLeftCorner(me, n) = p.A;
        const Eigen::PartialPivLU<MatrixXd> lu(K);

        auto direction = [&](const VectorXd& r_c, VectorXd& dx, VectorXd& dy, VectorXd& ds, VectorXd& dz) {
            rhs.head(n) = -r_d - p.C.transpose() * (z.cwiseProduct(r_i) - r_c).cwiseQuotient(s);
            rhs.tail(me) = -r_p;
            const VectorXd sol_xy = lu.solve(rhs);
            dx = sol_xy.head(n);
            dy = sol_xy.tail(me);
            ds = -r_i - p.C * dx;
            dz = (-r_c + z.cwiseProduct(r_i) + z.cwiseProduct(p.C * dx)).cwiseQuotient(s);
        };

        VectorXd dx, dy, ds, dz;
        direction(s.cwiseProduct(z), dx, dy, ds, dz);
        if (!warm) {
            // Starting point: one full affine step, then push slacks and multipliers away from zero.
            warm = true;
            x += dx;
            y += dy;
            s = (s + ds).cwiseAbs().cwiseMax(1.0);
            z = (z + dz).cwiseAbs().cwiseMax(1.0);
            continue;
        }
        const double a_aff = std::min(max_step(s, ds), max_step(z, dz));
        const double mu_aff = mi ? (s + a_aff * ds).dot(z + a_aff * dz) / static_cast<double>(mi) : 0.0;
        const double sigma = mu > 0.0 ? std::pow(mu_aff / mu, 3) : 0.0;

        // Keeps every complementarity product within a fixed factor of the mean, which stops the
        // iterates from cycling between bounds on degenerate problems.
        auto neighborhood_step = [&](const VectorXd& dsv, const VectorXd& dzv) {
            double a = std::min(1.0, 0.995 * std::min(max_step(s, dsv), max_step(z, dzv)));
            for (int k = 0; k < 60 && mi > 0; ++k, a *= 0.8) {
                const VectorXd prod = (s + a * dsv).cwiseProduct(z + a * dzv);
                if (prod.minCoeff() >= kNeighborhood * prod.mean()) return a;
            }
            return mi > 0 ? 0.0 : a;
        };

        const VectorXd r_c = s.cwiseProduct(z) + ds.cwiseProduct(dz) - VectorXd::Constant(mi, sigma * mu);
        direction(r_c, dx, dy, ds, dz);
        double a = neighborhood_step(ds, dz);
        if (a < kShortStep) {
            VectorXd cx, cy, cs, cz;
            direction(s.cwiseProduct(z) - VectorXd::Constant(mi, std::max(sigma, kCentering) * mu), cx, cy, cs, cz);
            double ac = neighborhood_step(cs, cz);
            if (ac == 0.0) ac = std::min(1.0, 0.995 * std::min(max_step(s, cs), max_step(z, cz)));
            if (ac > a) {
                a = ac;
                dx = cx;
                dy = cy;
                ds = cs;
                dz = cz;
            }
        }
        x += a * dx;
        y += a * dy;
        s += a * ds;
        z += a * dz;
        if (!x.allFinite() || !z.allFinite())
            throw ConvergenceError("interior point diverged", {sol.primal_residual, sol.dual_residual, mu});
    }
    sol.x = x;
    sol.y = y;
    sol.z = z;
    polish(p, s, sol);
    return sol;
}

}  // namespace derasim
