#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace gridcut {

/// min 1/2 x'Hx + q'x  s.t.  A x = b,  C x <= d.  H must be positive definite.
struct QpProblem {
  Eigen::MatrixXd hessian;
  Eigen::VectorXd linear;
  Eigen::MatrixXd eq_matrix;
  Eigen::VectorXd eq_rhs;
  Eigen::MatrixXd ineq_matrix;
  Eigen::VectorXd ineq_rhs;

  Eigen::Index variables() const { return linear.size(); }
  double objective(const Eigen::VectorXd& x) const { return 0.5 * x.dot(hessian * x) + linear.dot(x); }
};

enum class QpStatus { Optimal, Infeasible, IterationLimit };

std::string to_string(QpStatus s);

struct QpResult {
  QpStatus status = QpStatus::Infeasible;
  Eigen::VectorXd x;
  Eigen::VectorXd eq_multipliers;    // nu:     Hx + q + A'nu + C'lambda = 0
  Eigen::VectorXd ineq_multipliers;  // lambda >= 0
  double objective = 0.0;
  int iterations = 0;
  /// When infeasible: the inequality row that could not be satisfied, or -1
  /// when the equalities are inconsistent.
  std::optional<Eigen::Index> blocking_row;
  std::vector<Eigen::Index> active_inequalities;
};

struct QpOptions {
  int max_iterations = 0;          // 0 picks 10 * (n + rows)
  double feasibility_tol = 1e-9;   // accepted row violation
};

/// Dual active-set method of Goldfarb and Idnani with Givens updates of the
/// factor J = L^-T and the triangular R of the active constraints.
QpResult solve_qp(const QpProblem& problem, const QpOptions& options = {});

struct KktResiduals {
  double stationarity = 0.0;     // |Hx + q + A'nu + C'lambda|_inf / (1 + |q|_inf)
  double primal = 0.0;           // worst equality or inequality violation
  double dual = 0.0;             // worst negative lambda
  double complementarity = 0.0;  // max |lambda_i * slack_i| / (1 + |q|_inf)

  double worst() const;
};

/// Recomputes the KKT conditions from the problem data.
KktResiduals kkt_residuals(const QpProblem& problem, const QpResult& result);

}  // namespace gridcut
