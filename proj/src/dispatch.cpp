#include "gridcut/dispatch.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <limits>

namespace gridcut {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kRowTolerance = 1e-8;  // MW; rows violated by more are added

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double row_limit_scale(const Network& net, const NetworkRow& row) {
  if (row.monitored >= 0) return net.branch(row.monitored).rating;
  return std::max(std::abs(row.upper - row.base), 1.0);
}

}  // namespace

std::string_view to_string(DispatchMode mode) {
  switch (mode) {
    case DispatchMode::ICA: return "ica";
    case DispatchMode::RCA: return "rca";
    case DispatchMode::SCED: return "sced";
    case DispatchMode::DCOPF: return "dcopf";
  }
  return "?";
}

DispatchMode parse_mode(std::string_view text) {
  std::string s(text);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s == "ica") return DispatchMode::ICA;
  if (s == "rca") return DispatchMode::RCA;
  if (s == "sced") return DispatchMode::SCED;
  if (s == "dcopf") return DispatchMode::DCOPF;
  throw Error("unknown dispatch mode '" + std::string(text) + "' (expected ica, rca, sced or dcopf)");
}

bool has_contingency_rows(DispatchMode mode) { return mode == DispatchMode::ICA || mode == DispatchMode::SCED; }
bool has_cut_rows(DispatchMode mode) { return mode == DispatchMode::ICA || mode == DispatchMode::RCA; }

std::string_view to_string(RowBlock block) {
  switch (block) {
    case RowBlock::BaseFlow: return "base-flow";
    case RowBlock::GenBounds: return "generator-bounds";
    case RowBlock::ShedBounds: return "shed-bounds";
    case RowBlock::PostContingency: return "post-contingency";
    case RowBlock::CutTransfer: return "cut-transfer";
    case RowBlock::Balance: return "balance";
  }
  return "?";
}

std::string_view to_string(DispatchStatus s) {
  switch (s) {
    case DispatchStatus::Optimal: return "optimal";
    case DispatchStatus::Infeasible: return "infeasible";
    case DispatchStatus::IterationLimit: return "iteration-limit";
  }
  return "?";
}

std::vector<CutConstraint> cut_constraints(const SpecialAssetSet& special) {
  std::vector<CutConstraint> out;
  for (const auto& [id, r] : special) {
    if (!r.is_special || !r.transfer_margin) continue;
    out.push_back({id, r.sending_side, r.k_crit, *r.transfer_margin});
  }
  return out;
}

CutConstraint cut_constraint(const SaturatedCut& cut) {
  return {std::nullopt, cut.sending_side, cut.branches, cut.capacity - cut.transfer};
}

DispatchOptions default_options(const Network& net) {
  DispatchOptions o;
  o.sparsify = net.bus_count() > 500;
  return o;
}

DispatchProblem build_problem(DispatchMode mode, std::shared_ptr<const Network> net_ptr, std::vector<double> flows,
                              std::shared_ptr<const PtdfMatrix> ptdf, std::shared_ptr<const LodfMatrix> lodf,
                              std::vector<BranchId> contingencies, std::vector<CutConstraint> cuts,
                              const DispatchOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  const Network& net = *net_ptr;
  const auto nb = static_cast<Eigen::Index>(net.bus_count());
  const auto nl = net.branch_count();
  if (flows.size() != nl || ptdf->values.rows() != static_cast<Eigen::Index>(nl) || ptdf->values.cols() != nb ||
      lodf->values.rows() != static_cast<Eigen::Index>(nl))
    throw Error("dispatch inputs do not describe the same snapshot (dimension mismatch)");
  for (BranchId k : contingencies)
    if (k < 0 || static_cast<std::size_t>(k) >= nl || !net.branch(k).in_service)
      throw Error("contingency " + std::to_string(k) + " is not an in-service branch of this snapshot");
  for (const auto& c : cuts) {
    for (BusId b : c.sending_side)
      if (b < 0 || b >= nb) throw Error("cut refers to unknown bus " + std::to_string(b));
    for (BranchId l : c.branches)
      if (l < 0 || static_cast<std::size_t>(l) >= nl || !net.branch(l).in_service)
        throw Error("cut refers to branch " + std::to_string(l) + " which is not in service");
  }

  DispatchProblem p;
  p.mode = mode;
  p.net = net_ptr;
  p.flows = std::move(flows);
  p.ptdf = ptdf;
  p.lodf = lodf;
  p.contingencies = has_contingency_rows(mode) ? std::move(contingencies) : std::vector<BranchId>{};
  p.cuts = has_cut_rows(mode) ? std::move(cuts) : std::vector<CutConstraint>{};
  p.options = options;

  const auto ng = net.generators().size(), nd = net.loads().size();
  const auto nv = static_cast<Eigen::Index>(ng + nd);
  p.variable_bus.reserve(ng + nd);
  p.lower.resize(nv);
  p.upper.resize(nv);
  p.quadratic.resize(nv);
  p.linear.resize(nv);
  Eigen::Index v = 0;
  for (const auto& g : net.generators()) {
    p.variable_bus.push_back(g.bus);
    p.lower(v) = g.p_min - g.output;
    p.upper(v) = g.p_max - g.output;
    p.quadratic(v) = 2.0 * std::max(g.cost_c, options.shed_curvature);
    p.linear(v) = 2.0 * g.cost_c * g.output + g.cost_b;
    ++v;
  }
  for (const auto& ld : net.loads()) {
    p.variable_bus.push_back(ld.bus);
    p.lower(v) = 0.0;
    p.upper(v) = std::max(0.0, ld.demand - ld.d_min);
    p.quadratic(v) = 2.0 * options.shed_curvature;
    p.linear(v) = ld.shed_cost;
    ++v;
  }

  const auto in_service = net.in_service_branches();
  const std::size_t post = p.contingencies.size() * in_service.size();
  p.post_rows_before_pruning = post;
  p.cut_rows = p.cuts.size();
  const std::size_t total = in_service.size() + post + p.cuts.size();
  p.rows.reserve(total);
  p.coefficients.resize(static_cast<Eigen::Index>(total), nb);

  const Eigen::MatrixXd& raw = ptdf->values;
  const PtdfMatrix sparse = options.sparsify && options.sparsify_threshold > 0.0 && !p.contingencies.empty()
                                ? sparsify(*ptdf, options.sparsify_threshold)
                                : PtdfMatrix{};
  const Eigen::MatrixXd& post_ptdf = sparse.values.size() ? sparse.values : raw;

  Eigen::Index r = 0;
  for (BranchId l : in_service) {
    const double rating = net.branch(l).rating;
    p.rows.push_back({RowBlock::BaseFlow, l, -1, -1, p.flows[static_cast<std::size_t>(l)], -rating, rating});
    p.coefficients.row(r++) = raw.row(l);
  }
  for (BranchId k : p.contingencies) {
    const double fk = p.flows[static_cast<std::size_t>(k)];
    for (BranchId l : in_service) {
      const double rating = net.branch(l).rating;
      if (l == k) {
        p.rows.push_back({RowBlock::PostContingency, l, k, -1, 0.0, -rating, rating});
        p.coefficients.row(r++).setZero();
        continue;
      }
      const double d = (*lodf)(l, k);
      p.rows.push_back(
          {RowBlock::PostContingency, l, k, -1, p.flows[static_cast<std::size_t>(l)] + d * fk, -rating, rating});
      p.coefficients.row(r++) = post_ptdf.row(l) + d * post_ptdf.row(k);
    }
  }
  std::vector<char> on_side(static_cast<std::size_t>(nb));
  for (std::size_t c = 0; c < p.cuts.size(); ++c) {
    const auto& cut = p.cuts[c];
    std::fill(on_side.begin(), on_side.end(), 0);
    for (BusId b : cut.sending_side) on_side[static_cast<std::size_t>(b)] = 1;
    Eigen::RowVectorXd coeff = Eigen::RowVectorXd::Zero(nb);
    double transfer = 0.0;
    for (BranchId l : cut.branches) {
      const auto& br = net.branch(l);
      const double sigma = on_side[static_cast<std::size_t>(br.from)] ? 1.0 : -1.0;
      coeff += sigma * raw.row(l);
      transfer += sigma * p.flows[static_cast<std::size_t>(l)];
    }
    p.rows.push_back({RowBlock::CutTransfer, -1, cut.outage.value_or(-1), static_cast<int>(c), transfer, -kInf,
                      transfer + cut.margin});
    p.coefficients.row(r++) = coeff;
  }
  p.build_seconds = seconds_since(t0);
  return p;
}

DispatchProblem build_problem(DispatchMode mode, const Network& net, const ViolationList& violations,
                              const SpecialAssetSet& special, const DispatchOptions& options) {
  auto net_ptr = std::make_shared<const Network>(net);
  auto ptdf = std::make_shared<const PtdfMatrix>(compute_ptdf(net));
  auto lodf = std::make_shared<const LodfMatrix>(compute_lodf(net, *ptdf));
  auto flows = dc_power_flow(net, net.injections());
  return build_problem(mode, net_ptr, std::move(flows), ptdf, lodf, violations.outages(), cut_constraints(special),
                       options);
}

namespace {

Eigen::VectorXd to_bus_space(const DispatchProblem& p, const Eigen::VectorXd& x) {
  Eigen::VectorXd d = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.net->bus_count()));
  for (std::size_t v = 0; v < p.variable_bus.size(); ++v)
    d(p.variable_bus[v]) += x(static_cast<Eigen::Index>(v));
  return d;
}

struct Side {
  Eigen::Index row;
  bool upper;
};

}  // namespace

DispatchSolution solve(const DispatchProblem& p) {
  const auto t0 = std::chrono::steady_clock::now();
  const Network& net = *p.net;
  const auto nv = static_cast<Eigen::Index>(p.variable_count());
  const auto ng = p.generator_count();

  DispatchSolution sol;
  sol.mode = p.mode;

  std::vector<Side> working;
  std::vector<char> in_set(p.rows.size() * 2, 0);
  auto add = [&](Eigen::Index r, bool upper) {
    char& flag = in_set[static_cast<std::size_t>(r) * 2 + (upper ? 1 : 0)];
    if (flag) return false;
    flag = 1;
    working.push_back({r, upper});
    return true;
  };
  for (std::size_t i = 0; i < p.rows.size(); ++i) {
    const auto& row = p.rows[i];
    const double band = p.options.row_margin * row_limit_scale(net, row);
    const auto r = static_cast<Eigen::Index>(i);
    if (row.block == RowBlock::CutTransfer) {
      add(r, true);
      continue;
    }
    if (p.coefficients.row(r).isZero(0.0)) continue;
    if (row.upper - row.base < band) add(r, true);
    if (row.base - row.lower < band) add(r, false);
  }

  // Variable bounds and balance never change between rounds.
  std::vector<std::pair<Eigen::Index, bool>> bounds;
  for (Eigen::Index v = 0; v < nv; ++v) {
    if (std::isfinite(p.upper(v))) bounds.emplace_back(v, true);
    if (std::isfinite(p.lower(v))) bounds.emplace_back(v, false);
  }

  QpProblem qp;
  qp.hessian = p.quadratic.asDiagonal();
  qp.linear = p.linear;
  qp.eq_matrix = Eigen::MatrixXd::Ones(1, nv);
  qp.eq_rhs = Eigen::VectorXd::Zero(1);

  QpResult res;
  for (int round = 1;; ++round) {
    const auto m = static_cast<Eigen::Index>(bounds.size() + working.size());
    qp.ineq_matrix.setZero(m, nv);
    qp.ineq_rhs.resize(m);
    Eigen::Index i = 0;
    for (const auto& [v, up] : bounds) {
      qp.ineq_matrix(i, v) = up ? 1.0 : -1.0;
      qp.ineq_rhs(i++) = up ? p.upper(v) : -p.lower(v);
    }
    for (const auto& s : working) {
      const auto& row = p.rows[static_cast<std::size_t>(s.row)];
      const double sign = s.upper ? 1.0 : -1.0;
      for (Eigen::Index v = 0; v < nv; ++v)
        qp.ineq_matrix(i, v) = sign * p.coefficients(s.row, p.variable_bus[static_cast<std::size_t>(v)]);
      qp.ineq_rhs(i++) = s.upper ? row.upper - row.base : row.base - row.lower;
    }
    res = solve_qp(qp, p.options.qp);
    sol.iterations += res.iterations;
    sol.row_rounds = round;
    if (res.status != QpStatus::Optimal) break;

    const Eigen::VectorXd change = p.coefficients * to_bus_space(p, res.x);
    bool added = false;
    for (std::size_t r = 0; r < p.rows.size(); ++r) {
      const auto& row = p.rows[r];
      const double value = row.base + change(static_cast<Eigen::Index>(r));
      if (value > row.upper + kRowTolerance) added |= add(static_cast<Eigen::Index>(r), true);
      if (value < row.lower - kRowTolerance) added |= add(static_cast<Eigen::Index>(r), false);
    }
    if (!added) break;
    if (round >= p.options.max_row_rounds) {
      res.status = QpStatus::IterationLimit;
      break;
    }
  }

  sol.rows_used = working.size();
  sol.solve_seconds = seconds_since(t0);
  if (res.status == QpStatus::Infeasible) {
    sol.status = DispatchStatus::Infeasible;
    if (res.blocking_row) {
      const Eigen::Index b = *res.blocking_row;
      if (b < 0) {
        sol.infeasible_block = std::string(to_string(RowBlock::Balance));
      } else if (static_cast<std::size_t>(b) < bounds.size()) {
        const auto v = static_cast<std::size_t>(bounds[static_cast<std::size_t>(b)].first);
        sol.infeasible_block = std::string(to_string(v < ng ? RowBlock::GenBounds : RowBlock::ShedBounds));
      } else {
        const auto& s = working[static_cast<std::size_t>(b) - bounds.size()];
        sol.infeasible_block = std::string(to_string(p.rows[static_cast<std::size_t>(s.row)].block));
      }
    }
    return sol;
  }
  sol.status = res.status == QpStatus::Optimal ? DispatchStatus::Optimal : DispatchStatus::IterationLimit;

  sol.delta_gen.assign(res.x.data(), res.x.data() + ng);
  sol.delta_shed.assign(res.x.data() + ng, res.x.data() + nv);
  sol.objective = res.objective;
  sol.kkt_residual = kkt_residuals(qp, res).worst();
  for (std::size_t g = 0; g < ng; ++g) {
    const auto& gen = net.generators()[g];
    const double d = sol.delta_gen[g];
    sol.redispatch_cost += gen.cost_c * d * d + p.linear(static_cast<Eigen::Index>(g)) * d;
    sol.generation_cost += gen.cost(gen.output + d);
  }
  for (std::size_t j = 0; j < sol.delta_shed.size(); ++j) {
    sol.redispatch_cost += net.loads()[j].shed_cost * sol.delta_shed[j];
    sol.shed_total += sol.delta_shed[j];
  }
  return sol;
}

double VerificationReport::residual(RowBlock block) const {
  for (const auto& b : blocks)
    if (b.block == block) return b.worst;
  return 0.0;
}

std::vector<double> injection_change(const DispatchProblem& p, const DispatchSolution& s) {
  std::vector<double> d(p.net->bus_count(), 0.0);
  const auto ng = p.generator_count();
  for (std::size_t g = 0; g < s.delta_gen.size(); ++g) d[static_cast<std::size_t>(p.variable_bus[g])] += s.delta_gen[g];
  for (std::size_t j = 0; j < s.delta_shed.size(); ++j)
    d[static_cast<std::size_t>(p.variable_bus[ng + j])] += s.delta_shed[j];
  return d;
}

VerificationReport verify_solution(const DispatchProblem& p, const DispatchSolution& s) {
  const Network& net = *p.net;
  const auto delta = injection_change(p, s);
  const Eigen::Map<const Eigen::VectorXd> d(delta.data(), static_cast<Eigen::Index>(delta.size()));
  const Eigen::VectorXd base_change = p.ptdf->values * d;

  VerificationReport rep;
  auto over = [](double value, double lo, double hi) { return std::max({0.0, value - hi, lo - value}); };

  BlockResidual gen{RowBlock::GenBounds, 0.0, s.delta_gen.size()};
  for (std::size_t g = 0; g < s.delta_gen.size(); ++g) {
    const auto i = static_cast<Eigen::Index>(g);
    gen.worst = std::max(gen.worst, over(s.delta_gen[g], p.lower(i), p.upper(i)));
  }
  BlockResidual shed{RowBlock::ShedBounds, 0.0, s.delta_shed.size()};
  for (std::size_t j = 0; j < s.delta_shed.size(); ++j) {
    const auto i = static_cast<Eigen::Index>(p.generator_count() + j);
    shed.worst = std::max(shed.worst, over(s.delta_shed[j], p.lower(i), p.upper(i)));
  }
  double sum = 0.0;
  for (double x : delta) sum += x;
  BlockResidual balance{RowBlock::Balance, std::abs(sum), 1};

  BlockResidual base{RowBlock::BaseFlow, 0.0, 0};
  const auto in_service = net.in_service_branches();
  for (BranchId l : in_service) {
    const double rating = net.branch(l).rating;
    base.worst = std::max(base.worst, over(p.flows[static_cast<std::size_t>(l)] + base_change(l), -rating, rating));
    ++base.rows;
  }

  BlockResidual post{RowBlock::PostContingency, 0.0, 0};
  for (BranchId k : p.contingencies) {
    const double fk = p.flows[static_cast<std::size_t>(k)] + base_change(k);
    bool any = false;
    for (BranchId l : in_service) {
      if (l == k) continue;
      ++post.rows;
      const double rating = net.branch(l).rating;
      const double value = p.flows[static_cast<std::size_t>(l)] + base_change(l) + (*p.lodf)(l, k) * fk;
      const double r = over(value, -rating, rating);
      post.worst = std::max(post.worst, r);
      if (r > 1e-6) {
        rep.remaining_overloads.push_back({l, value, rating});
        any = true;
      }
    }
    if (any) rep.remaining_overload_outages.push_back(k);
  }

  BlockResidual cut{RowBlock::CutTransfer, 0.0, p.cuts.size()};
  for (std::size_t r = 0; r < p.rows.size(); ++r) {
    const auto& row = p.rows[r];
    if (row.block != RowBlock::CutTransfer) continue;
    const auto& c = p.cuts[static_cast<std::size_t>(row.cut)];
    // Transfer change out of the sending side is its net injection change.
    double change = 0.0;
    for (BusId b : c.sending_side) change += delta[static_cast<std::size_t>(b)];
    cut.worst = std::max(cut.worst, change - c.margin);
  }

  rep.blocks = {base, gen, shed, post, cut, balance};
  rep.worst_modelled = std::max({base.worst, gen.worst, shed.worst, balance.worst});
  if (has_contingency_rows(p.mode)) rep.worst_modelled = std::max(rep.worst_modelled, post.worst);
  if (has_cut_rows(p.mode)) rep.worst_modelled = std::max(rep.worst_modelled, cut.worst);
  return rep;
}

std::pair<Network, InjectionDelta> apply_dispatch(const Network& net, const DispatchSolution& s) {
  if (s.status != DispatchStatus::Optimal) throw Error("cannot apply a dispatch that is not optimal");
  if (s.delta_gen.size() != net.generators().size() || s.delta_shed.size() != net.loads().size())
    throw Error("dispatch solution does not match the network");
  constexpr double slack = 1e-6;
  std::vector<double> out(net.generators().size()), demand(net.loads().size());
  std::vector<double> change(net.bus_count(), 0.0);
  for (std::size_t g = 0; g < out.size(); ++g) {
    const auto& gen = net.generators()[g];
    double p = gen.output + s.delta_gen[g];
    if (p > gen.p_max + slack || p < gen.p_min - slack)
      throw Error("dispatch drives generator " + std::to_string(g) + " outside its limits");
    p = std::clamp(p, gen.p_min, gen.p_max);
    change[static_cast<std::size_t>(gen.bus)] += p - gen.output;
    out[g] = p;
  }
  for (std::size_t j = 0; j < demand.size(); ++j) {
    const auto& ld = net.loads()[j];
    double d = ld.demand - s.delta_shed[j];
    if (d < ld.d_min - slack || d > ld.demand + slack)
      throw Error("dispatch sheds load " + std::to_string(j) + " outside its limits");
    d = std::clamp(d, ld.d_min, ld.demand);
    change[static_cast<std::size_t>(ld.bus)] += ld.demand - d;
    demand[j] = d;
  }
  // The solver balances to its own tolerance; close the gap on generators
  // with room so repeated commits do not drift.
  double err = 0.0;
  for (double d : demand) err += d;
  for (double p : out) err -= p;
  for (std::size_t g = 0; g < out.size() && std::abs(err) > 0.0; ++g) {
    const auto& gen = net.generators()[g];
    const double room = err > 0.0 ? gen.p_max - out[g] : gen.p_min - out[g];
    const double step = err > 0.0 ? std::min(err, room) : std::max(err, room);
    out[g] += step;
    change[static_cast<std::size_t>(gen.bus)] += step;
    err -= step;
  }
  return {net.with_dispatch(out, demand), InjectionDelta::from_changes(change)};
}

}  // namespace gridcut
