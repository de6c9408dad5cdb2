#include "gridcut/qp_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Cholesky>
#include <Eigen/LU>

namespace gridcut {

std::string to_string(QpStatus s) {
  switch (s) {
    case QpStatus::Optimal: return "optimal";
    case QpStatus::Infeasible: return "infeasible";
    case QpStatus::IterationLimit: return "iteration-limit";
  }
  return "unknown";
}

double KktResiduals::worst() const { return std::max({stationarity, primal, dual, complementarity}); }

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kDependentRatio = 1e-12;

// Working state of the dual method. Constraints are held as normals n_i with
// n_i'x >= b_i (equalities: n_i'x = b_i); equalities come first.
struct DualActiveSet {
  Eigen::Index n = 0;
  Eigen::MatrixXd J;  // L^-T rotated by the Givens sequence
  Eigen::MatrixXd R;  // upper triangular, first iq columns used
  Eigen::VectorXd d;
  std::vector<Eigen::Index> active;
  Eigen::VectorXd u;  // multipliers of `active`, plus the one being added
  Eigen::Index iq = 0;
  double r_norm = 1.0;

  // Rotates d = J'np so that only its first iq+1 entries are non-zero, then
  // appends the new column of R. False when the normal is dependent.
  bool add_constraint() {
    for (Eigen::Index j = n - 1; j >= iq + 1; --j) {
      double cc = d(j - 1), ss = d(j);
      const double h = std::hypot(cc, ss);
      if (h == 0.0) continue;
      d(j) = 0.0;
      ss /= h;
      cc /= h;
      if (cc < 0.0) {
        cc = -cc;
        ss = -ss;
        d(j - 1) = -h;
      } else {
        d(j - 1) = h;
      }
      const double xny = ss / (1.0 + cc);
      for (Eigen::Index k = 0; k < n; ++k) {
        const double t1 = J(k, j - 1), t2 = J(k, j);
        J(k, j - 1) = t1 * cc + t2 * ss;
        J(k, j) = xny * (t1 + J(k, j - 1)) - t2;
      }
    }
    ++iq;
    R.col(iq - 1).head(iq) = d.head(iq);
    if (std::abs(d(iq - 1)) <= std::numeric_limits<double>::epsilon() * r_norm) return false;
    r_norm = std::max(r_norm, std::abs(d(iq - 1)));
    return true;
  }

  void delete_constraint(Eigen::Index constraint, Eigen::Index first_ineq) {
    Eigen::Index qq = -1;
    for (Eigen::Index i = first_ineq; i < iq; ++i) {
      if (active[static_cast<std::size_t>(i)] == constraint) {
        qq = i;
        break;
      }
    }
    if (qq < 0) throw std::logic_error("constraint to drop is not active");
    for (Eigen::Index i = qq; i < iq - 1; ++i) {
      active[static_cast<std::size_t>(i)] = active[static_cast<std::size_t>(i + 1)];
      u(i) = u(i + 1);
      R.col(i) = R.col(i + 1);
    }
    active[static_cast<std::size_t>(iq - 1)] = active[static_cast<std::size_t>(iq)];
    u(iq - 1) = u(iq);
    active[static_cast<std::size_t>(iq)] = -1;
    u(iq) = 0.0;
    R.col(iq - 1).setZero();
    --iq;
    if (iq == 0) return;
    for (Eigen::Index j = qq; j < iq; ++j) {
      double cc = R(j, j), ss = R(j + 1, j);
      const double h = std::hypot(cc, ss);
      if (h == 0.0) continue;
      cc /= h;
      ss /= h;
      R(j + 1, j) = 0.0;
      if (cc < 0.0) {
        R(j, j) = -h;
        cc = -cc;
        ss = -ss;
      } else {
        R(j, j) = h;
      }
      const double xny = ss / (1.0 + cc);
      for (Eigen::Index k = j + 1; k < iq; ++k) {
        const double t1 = R(j, k), t2 = R(j + 1, k);
        R(j, k) = t1 * cc + t2 * ss;
        R(j + 1, k) = xny * (t1 + R(j, k)) - t2;
      }
      for (Eigen::Index k = 0; k < n; ++k) {
        const double t1 = J(k, j), t2 = J(k, j + 1);
        J(k, j) = t1 * cc + t2 * ss;
        J(k, j + 1) = xny * (J(k, j) + t1) - t2;
      }
    }
  }

  // z = J2 d2 (primal step direction), r = R^-1 d1 (change of multipliers).
  // A normal in the span of the active ones leaves only rounding in d2; z is
  // then exactly zero so the step is a dual one.
  void directions(const Eigen::VectorXd& np, Eigen::VectorXd& z, Eigen::VectorXd& r) {
    d.noalias() = J.transpose() * np;
    if (d.tail(n - iq).norm() <= kDependentRatio * d.norm())
      z.setZero();
    else
      z.noalias() = J.rightCols(n - iq) * d.tail(n - iq);
    r.resize(iq);
    for (Eigen::Index i = iq - 1; i >= 0; --i) {
      double sum = d(i);
      for (Eigen::Index j = i + 1; j < iq; ++j) sum -= R(i, j) * r(j);
      r(i) = sum / R(i, i);
    }
  }
};

/// Re-solves the KKT system of the final working set in one factorization.
/// The Givens updates drift by ~1e-7 on badly scaled problems; the refined
/// point is kept only when it is still feasible, dual feasible and better.
void polish(const QpProblem& pr, QpResult& res, double tol) {
  const Eigen::Index n = pr.variables();
  const Eigen::Index p = pr.eq_rhs.size();
  const auto k = static_cast<Eigen::Index>(res.active_inequalities.size());
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + p + k, n + p + k);
  Eigen::VectorXd rhs(n + p + k);
  K.topLeftCorner(n, n) = pr.hessian;
  rhs.head(n) = -pr.linear;
  for (Eigen::Index i = 0; i < p; ++i) {
    K.block(n + i, 0, 1, n) = pr.eq_matrix.row(i);
    rhs(n + i) = pr.eq_rhs(i);
  }
  for (Eigen::Index i = 0; i < k; ++i) {
    const Eigen::Index c = res.active_inequalities[static_cast<std::size_t>(i)];
    K.block(n + p + i, 0, 1, n) = pr.ineq_matrix.row(c);
    rhs(n + p + i) = pr.ineq_rhs(c);
  }
  K.topRightCorner(n, p + k) = K.bottomLeftCorner(p + k, n).transpose();
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
  if (!lu.isInvertible()) return;
  const Eigen::VectorXd sol = lu.solve(rhs);

  QpResult cand = res;
  cand.x = sol.head(n);
  cand.eq_multipliers = sol.segment(n, p);
  cand.ineq_multipliers.setZero();
  for (Eigen::Index i = 0; i < k; ++i) {
    const double lambda = sol(n + p + i);
    if (lambda < -tol) return;
    cand.ineq_multipliers(res.active_inequalities[static_cast<std::size_t>(i)]) = std::max(0.0, lambda);
  }
  if (pr.ineq_rhs.size() > 0) {
    const Eigen::VectorXd slack = pr.ineq_rhs - pr.ineq_matrix * cand.x;
    for (Eigen::Index i = 0; i < slack.size(); ++i)
      if (slack(i) < -tol * (1.0 + std::abs(pr.ineq_rhs(i)))) return;
  }
  if (kkt_residuals(pr, cand).worst() >= kkt_residuals(pr, res).worst()) return;
  cand.objective = pr.objective(cand.x);
  res = std::move(cand);
}

}  // namespace

QpResult solve_qp(const QpProblem& problem, const QpOptions& options) {
  const Eigen::Index n = problem.variables();
  const Eigen::Index p = problem.eq_rhs.size();
  const Eigen::Index m = problem.ineq_rhs.size();
  if (problem.hessian.rows() != n || problem.hessian.cols() != n) throw std::invalid_argument("hessian shape");
  if (p > 0 && (problem.eq_matrix.rows() != p || problem.eq_matrix.cols() != n))
    throw std::invalid_argument("equality matrix shape");
  if (m > 0 && (problem.ineq_matrix.rows() != m || problem.ineq_matrix.cols() != n))
    throw std::invalid_argument("inequality matrix shape");

  // Normals as columns: equalities then inequalities (C x <= d becomes -C x >= -d).
  Eigen::MatrixXd N(n, p + m);
  Eigen::VectorXd b(p + m);
  if (p > 0) {
    N.leftCols(p) = problem.eq_matrix.transpose();
    b.head(p) = problem.eq_rhs;
  }
  if (m > 0) {
    N.rightCols(m) = -problem.ineq_matrix.transpose();
    b.tail(m) = -problem.ineq_rhs;
  }

  QpResult result;
  result.eq_multipliers = Eigen::VectorXd::Zero(p);
  result.ineq_multipliers = Eigen::VectorXd::Zero(m);

  Eigen::LLT<Eigen::MatrixXd> llt(problem.hessian);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("hessian is not positive definite");

  DualActiveSet ws;
  ws.n = n;
  const Eigen::MatrixXd J0 = llt.matrixU().solve(Eigen::MatrixXd::Identity(n, n));  // L^-T
  ws.J = J0;
  ws.R = Eigen::MatrixXd::Zero(n, n);
  ws.d = Eigen::VectorXd::Zero(n);
  ws.active.assign(static_cast<std::size_t>(n + 1), -1);
  ws.u = Eigen::VectorXd::Zero(n + 1);

  Eigen::VectorXd x = -llt.solve(problem.linear);
  Eigen::VectorXd z(n), r, np(n);

  const auto finish = [&](QpStatus status) {
    result.status = status;
    result.x = x;
    result.objective = problem.objective(x);
    for (Eigen::Index i = 0; i < ws.iq; ++i) {
      const Eigen::Index c = ws.active[static_cast<std::size_t>(i)];
      if (c < p) {
        result.eq_multipliers(c) = -ws.u(i);
      } else {
        result.ineq_multipliers(c - p) = ws.u(i);
        result.active_inequalities.push_back(c - p);
      }
    }
    std::sort(result.active_inequalities.begin(), result.active_inequalities.end());
    if (status == QpStatus::Optimal) polish(problem, result, options.feasibility_tol);
    return result;
  };

  for (Eigen::Index i = 0; i < p; ++i) {
    np = N.col(i);
    ws.directions(np, z, r);
    double t2 = 0.0;
    if (z.squaredNorm() > 1e-28 * np.squaredNorm()) t2 = (b(i) - np.dot(x)) / z.dot(np);
    x += t2 * z;
    ws.u(ws.iq) = t2;
    ws.u.head(ws.iq) -= t2 * r;
    ws.active[static_cast<std::size_t>(ws.iq)] = i;
    if (!ws.add_constraint()) {
      result.blocking_row = -1;
      return finish(QpStatus::Infeasible);
    }
  }

  const int max_iter = options.max_iterations > 0 ? options.max_iterations : static_cast<int>(10 * (n + p + m) + 100);
  std::vector<bool> inactive(static_cast<std::size_t>(m), true);
  std::vector<bool> excluded(static_cast<std::size_t>(m), false);
  std::vector<Eigen::Index> active_old;
  Eigen::VectorXd u_old, x_old;

  for (;;) {
    if (++result.iterations > max_iter) return finish(QpStatus::IterationLimit);
    for (Eigen::Index i = p; i < ws.iq; ++i) inactive[static_cast<std::size_t>(ws.active[static_cast<std::size_t>(i)] - p)] = false;

    // Most violated inactive inequality.
    Eigen::Index ip = -1;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (!inactive[static_cast<std::size_t>(i)] || excluded[static_cast<std::size_t>(i)]) continue;
      const double s = N.col(p + i).dot(x) - b(p + i);
      const double tol = options.feasibility_tol * (1.0 + std::abs(b(p + i)));
      if (s < -tol && s < worst) {
        worst = s;
        ip = i;
      }
    }
    if (ip < 0) {
      // A row dropped as dependent must still hold; never call a point that
      // violates it optimal.
      for (Eigen::Index i = 0; i < m; ++i) {
        if (!excluded[static_cast<std::size_t>(i)]) continue;
        if (N.col(p + i).dot(x) - b(p + i) < -options.feasibility_tol * (1.0 + std::abs(b(p + i)))) {
          result.blocking_row = i;
          return finish(QpStatus::Infeasible);
        }
      }
      return finish(QpStatus::Optimal);
    }

    active_old.assign(ws.active.begin(), ws.active.begin() + ws.iq);
    u_old = ws.u.head(ws.iq);
    x_old = x;
    const Eigen::Index iq_old = ws.iq;

    np = N.col(p + ip);
    ws.u(ws.iq) = 0.0;
    ws.active[static_cast<std::size_t>(ws.iq)] = p + ip;
    double s = np.dot(x) - b(p + ip);

    for (;;) {
      if (++result.iterations > max_iter) return finish(QpStatus::IterationLimit);
      ws.directions(np, z, r);

      // Partial step: largest step keeping active inequality multipliers >= 0.
      Eigen::Index l = -1;
      double t1 = kInf;
      for (Eigen::Index k = p; k < ws.iq; ++k) {
        if (r(k) > 0.0) {
          const double ratio = ws.u(k) / r(k);
          if (ratio < t1) {
            t1 = ratio;
            l = ws.active[static_cast<std::size_t>(k)];
          }
        }
      }
      // Full step: makes the chosen constraint hold with equality.
      const double zn = z.dot(np);
      const double t2 = (z.squaredNorm() > 1e-28 * np.squaredNorm() && zn > 0.0) ? -s / zn : kInf;
      const double t = std::min(t1, t2);

      if (t >= kInf) {
        result.blocking_row = ip;
        return finish(QpStatus::Infeasible);
      }
      if (t2 >= kInf) {
        // Dual step only.
        ws.u.head(ws.iq) -= t * r;
        ws.u(ws.iq) += t;
        inactive[static_cast<std::size_t>(l - p)] = true;
        ws.delete_constraint(l, p);
        continue;
      }

      x += t * z;
      ws.u.head(ws.iq) -= t * r;
      ws.u(ws.iq) += t;

      if (t == t2) {
        if (!ws.add_constraint()) {
          // Numerically dependent: restore the previous working set, refactor
          // it from scratch and stop considering this row.
          excluded[static_cast<std::size_t>(ip)] = true;
          ws.J = J0;
          ws.R.setZero();
          ws.r_norm = 1.0;
          ws.iq = 0;
          for (Eigen::Index i = 0; i < iq_old; ++i) {
            const Eigen::Index c = active_old[static_cast<std::size_t>(i)];
            ws.active[static_cast<std::size_t>(i)] = c;
            ws.d.noalias() = ws.J.transpose() * N.col(c);
            ws.add_constraint();
          }
          ws.u.setZero();
          ws.u.head(iq_old) = u_old;
          for (Eigen::Index i = 0; i < m; ++i) inactive[static_cast<std::size_t>(i)] = true;
          x = x_old;
        } else {
          inactive[static_cast<std::size_t>(ip)] = false;
        }
        break;
      }

      inactive[static_cast<std::size_t>(l - p)] = true;
      ws.delete_constraint(l, p);
      s = np.dot(x) - b(p + ip);
    }
  }
}

KktResiduals kkt_residuals(const QpProblem& problem, const QpResult& result) {
  KktResiduals k;
  const Eigen::VectorXd& x = result.x;
  const double scale = 1.0 + problem.linear.cwiseAbs().maxCoeff();
  Eigen::VectorXd grad = problem.hessian * x + problem.linear;
  if (problem.eq_rhs.size() > 0) {
    grad += problem.eq_matrix.transpose() * result.eq_multipliers;
    k.primal = (problem.eq_matrix * x - problem.eq_rhs).cwiseAbs().maxCoeff();
  }
  if (problem.ineq_rhs.size() > 0) {
    grad += problem.ineq_matrix.transpose() * result.ineq_multipliers;
    const Eigen::VectorXd slack = problem.ineq_rhs - problem.ineq_matrix * x;
    k.primal = std::max(k.primal, std::max(0.0, -slack.minCoeff()));
    k.dual = std::max(0.0, -result.ineq_multipliers.minCoeff());
    k.complementarity = (result.ineq_multipliers.cwiseProduct(slack)).cwiseAbs().maxCoeff() / scale;
  }
  k.stationarity = grad.cwiseAbs().maxCoeff() / scale;
  return k;
}

}  // namespace gridcut
