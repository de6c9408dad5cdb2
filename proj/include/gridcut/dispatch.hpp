#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gridcut/cutset_screening.hpp"
#include "gridcut/flow_graph.hpp"
#include "gridcut/network.hpp"
#include "gridcut/qp_solver.hpp"
#include "gridcut/rtca.hpp"
#include "gridcut/sensitivity.hpp"

namespace gridcut {

enum class DispatchMode { ICA, RCA, SCED, DCOPF };

std::string_view to_string(DispatchMode mode);
/// Accepts ica, rca, sced, dcopf (any case). Throws Error otherwise.
DispatchMode parse_mode(std::string_view text);

bool has_contingency_rows(DispatchMode mode);
bool has_cut_rows(DispatchMode mode);

/// Constraint blocks of the redispatch problem.
enum class RowBlock { BaseFlow, GenBounds, ShedBounds, PostContingency, CutTransfer, Balance };
std::string_view to_string(RowBlock block);

/// Transfer limit on a cut. After the outage of `outage` the transfer out of
/// `sending_side` must change by at most `margin` (negative: must drop).
/// Without an outage the cut is already saturated in the current state.
struct CutConstraint {
  std::optional<BranchId> outage;
  std::vector<BusId> sending_side;
  std::vector<BranchId> branches;  // crossing branches, the outage included
  double margin = 0.0;             // MW
};

std::vector<CutConstraint> cut_constraints(const SpecialAssetSet& special);
/// Constraint that undoes a flow infeasibility found while building a flow state.
CutConstraint cut_constraint(const SaturatedCut& cut);

struct DispatchOptions {
  double row_margin = 0.20;          // instantiate rows with slack below this share of rating
  double sparsify_threshold = 0.02;  // PTDF rounding for post-contingency rows; 0 disables
  bool sparsify = false;             // default on above 500 buses
  double shed_curvature = 1e-4;      // $/MW^2 on shed and on linear-cost generators
  int max_row_rounds = 50;
  QpOptions qp;
};

/// Options with sparsification switched on for large cases.
DispatchOptions default_options(const Network& net);

/// One network row: lower <= base + coeff . delta_inj <= upper, with
/// coefficients per bus.
struct NetworkRow {
  RowBlock block = RowBlock::BaseFlow;
  BranchId monitored = -1;  // -1 for cut rows
  BranchId outage = -1;     // -1 for base rows and saturated-cut rows
  int cut = -1;             // index into cuts, cut rows only
  double base = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

struct DispatchProblem {
  DispatchMode mode = DispatchMode::DCOPF;
  std::shared_ptr<const Network> net;
  std::vector<double> flows;
  std::shared_ptr<const PtdfMatrix> ptdf;  // raw
  std::shared_ptr<const LodfMatrix> lodf;
  std::vector<BranchId> contingencies;  // E_v
  std::vector<CutConstraint> cuts;
  DispatchOptions options;

  // Variables: one per generator, then one shed variable per load.
  std::vector<BusId> variable_bus;
  Eigen::VectorXd lower, upper;  // Delta bounds
  Eigen::VectorXd quadratic;     // diagonal of the Hessian, regularised
  Eigen::VectorXd linear;

  std::vector<NetworkRow> rows;
  Eigen::MatrixXd coefficients;  // rows x buses, as assembled (maybe sparsified)

  std::size_t post_rows_before_pruning = 0;  // |E_v| x |E|
  std::size_t cut_rows = 0;
  double build_seconds = 0.0;

  std::size_t generator_count() const { return net->generators().size(); }
  std::size_t load_count() const { return net->loads().size(); }
  std::size_t variable_count() const { return variable_bus.size(); }
};

/// Sets up all candidate rows for `mode`. Post-contingency rows exist for
/// every (k in violations, l in service) pair; cut rows for every entry of
/// `cuts`. Throws Error when the inputs do not describe the same snapshot.
DispatchProblem build_problem(DispatchMode mode, std::shared_ptr<const Network> net, std::vector<double> flows,
                              std::shared_ptr<const PtdfMatrix> ptdf, std::shared_ptr<const LodfMatrix> lodf,
                              std::vector<BranchId> contingencies, std::vector<CutConstraint> cuts,
                              const DispatchOptions& options = {});

DispatchProblem build_problem(DispatchMode mode, const Network& net, const ViolationList& violations,
                              const SpecialAssetSet& special, const DispatchOptions& options = {});

enum class DispatchStatus { Optimal, Infeasible, IterationLimit };
std::string_view to_string(DispatchStatus s);

struct DispatchSolution {
  DispatchMode mode = DispatchMode::DCOPF;
  DispatchStatus status = DispatchStatus::Infeasible;
  std::vector<double> delta_gen;   // MW per generator
  std::vector<double> delta_shed;  // MW shed per load
  double objective = 0.0;          // minimised value, $
  double redispatch_cost = 0.0;    // the same without the shed/linear-cost curvature
  double generation_cost = 0.0;    // total cost after redispatch, $
  double shed_total = 0.0;         // MW
  double kkt_residual = 0.0;
  int iterations = 0;
  int row_rounds = 0;
  std::size_t rows_used = 0;
  double solve_seconds = 0.0;
  std::optional<std::string> infeasible_block;
};

/// Solves with row generation: starts from rows close to binding and adds
/// violated rows until none remain.
DispatchSolution solve(const DispatchProblem& problem);

struct BlockResidual {
  RowBlock block;
  double worst = 0.0;  // MW beyond the limit, 0 when satisfied
  std::size_t rows = 0;
};

struct VerificationReport {
  std::vector<BlockResidual> blocks;
  std::vector<Violation> remaining_overloads;  // post-contingency, for E_v outages
  std::vector<BranchId> remaining_overload_outages;
  /// Worst residual over the blocks the mode models.
  double worst_modelled = 0.0;
  double residual(RowBlock block) const;
  bool passed(double tol = 1e-6) const { return worst_modelled <= tol; }
};

/// Re-evaluates every row of every block from unsparsified sensitivities.
VerificationReport verify_solution(const DispatchProblem& problem, const DispatchSolution& solution);

/// Per-bus net-injection change of a solution.
std::vector<double> injection_change(const DispatchProblem& problem, const DispatchSolution& solution);

/// New snapshot with G + dG and L - dL, plus the per-bus delta for M-UPS.
std::pair<Network, InjectionDelta> apply_dispatch(const Network& net, const DispatchSolution& solution);

}  // namespace gridcut
