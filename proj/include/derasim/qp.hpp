#pragma once

#include <Eigen/Dense>

namespace derasim {

// min 0.5 x'diag(q)x + c'x  s.t.  A x = b,  C x <= d
struct QpProblem {
    Eigen::VectorXd q;
    Eigen::VectorXd c;
    Eigen::MatrixXd A;
    Eigen::VectorXd b;
    Eigen::MatrixXd C;
    Eigen::VectorXd d;
};

struct QpOptions {
    double tol = 1e-11;
    double accept_tol = 1e-8;  // accepted if the iteration cap is hit below this
    int max_iter = 200;
};

struct QpSolution {
    Eigen::VectorXd x;
    Eigen::VectorXd y;  // equality multipliers
    Eigen::VectorXd z;  // inequality multipliers, >= 0
    int iterations = 0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    double gap = 0.0;
    bool polished = false;  // x, y, z re-solved on the identified active set
};

/// Mehrotra predictor-corrector primal-dual interior point. Throws ConvergenceError.
QpSolution solve_qp(const QpProblem& prob, const QpOptions& opt = {});

}  // namespace derasim
