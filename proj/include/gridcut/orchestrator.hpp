#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gridcut/cascade.hpp"
#include "gridcut/cutset_screening.hpp"
#include "gridcut/dispatch.hpp"
#include "gridcut/flow_graph.hpp"
#include "gridcut/network.hpp"
#include "gridcut/rtca.hpp"
#include "gridcut/sensitivity.hpp"

namespace gridcut {

/// Everything known about one network state: sensitivities, the flow graph,
/// FT verdicts and RTCA violations.
struct Snapshot {
  std::shared_ptr<const Network> net;
  std::vector<double> flows;  // DC
  std::shared_ptr<const PtdfMatrix> ptdf;
  std::shared_ptr<const LodfMatrix> lodf;
  std::vector<BranchId> screened;  // in service and not a bridge
  std::optional<FlowState> flow_state;
  std::optional<SaturatedCut> infeasible;  // when no flow state exists
  ScreeningState screening;
  ViolationList violations;

  SpecialAssetSet special() const { return screening.special(); }
  std::vector<BranchId> special_ids() const;
};

/// From-scratch analysis: DC flows, PTDF/LODF, flow graph, FT on every
/// screened branch, RTCA.
Snapshot analyse(const Network& net, double top_fraction = 0.30);

/// Non-bridge in-service branches: the outages FT, RTCA and cascade checks consider.
std::vector<BranchId> screened_branches(const Network& net);

struct CorrectiveOptions {
  DispatchOptions dispatch;
  int max_cut_rounds = 10;
};

struct CorrectiveResult {
  DispatchMode mode = DispatchMode::DCOPF;
  DispatchSolution solution;
  VerificationReport verification;
  std::size_t post_rows_before_pruning = 0;  // first round
  std::size_t cut_rows = 0;                  // first round
  int cut_rounds = 0;
  double seconds = 0.0;                    // wall time, all rounds
  double solve_seconds = 0.0;              // first round: build + QP only
  std::vector<BranchId> remaining_special;  // after the last round
  std::optional<Network> net_after;         // when optimal
  bool available() const { return solution.status == DispatchStatus::Optimal && net_after.has_value(); }
};

/// Solves `mode` on the snapshot. For modes with cut rows the result is
/// re-screened with FT and any new saturated cut is added before solving
/// again, up to max_cut_rounds.
CorrectiveResult corrective_action(const Snapshot& snap, DispatchMode mode, const CorrectiveOptions& options = {});

enum class Committed { ICA, RCA, None };
std::string_view to_string(Committed c);

struct Choice {
  Committed committed = Committed::None;
  int deadline = 0;        // 0: first deadline, 1: the next one, ...
  double commit_time = 0;  // seconds after the outage
  bool deferred() const { return deadline > 0; }
};

/// Deadline rule. `t_d` is the time from the outage to the first deadline,
/// `interval` the spacing of later deadlines. Unavailable solutions pass
/// std::nullopt. At each deadline: iCA if ready, else rCA if ready.
Choice choose_solution(std::optional<double> t_i, std::optional<double> t_r, double t_d, double interval);

enum class TimeSource { WallClock, Simulated };

struct OutageEvent {
  double t = 0.0;
  BranchId branch = 0;
};

struct ScenarioConfig {
  std::vector<OutageEvent> events;
  double redispatch_interval = 600.0;
  double top_fraction = 0.30;
  std::string policy = "deadline";  // deadline | ica | rca | sced | dcopf | none
  TimeSource time_source = TimeSource::WallClock;
  std::vector<std::pair<double, double>> simulated_times;  // (t_i, t_r) per step
  bool cascade_check = true;
  bool verify_incremental = true;
  bool halt_on_unresolvable = false;
  CorrectiveOptions corrective;
};

/// Reads {events:[{t, branch}], redispatch_interval_s, top_fraction, policy,
/// time_source, simulated_times}. Branches are names or ids.
ScenarioConfig parse_scenario(const std::string& json_text, const Network& net);

struct SolutionSummary {
  DispatchMode mode = DispatchMode::DCOPF;
  std::string status;
  double seconds = 0.0;
  double solve_seconds = 0.0;
  double objective = 0.0;
  double generation_cost = 0.0;
  double shed = 0.0;
  double kkt_residual = 0.0;
  int cut_rounds = 0;
  std::size_t post_rows_before_pruning = 0;
  std::size_t cut_rows = 0;
  std::size_t rows_used = 0;
  double verification = 0.0;
  std::vector<BranchId> remaining_special;
  std::vector<BranchId> remaining_overload_outages;
};

SolutionSummary summarise(const CorrectiveResult& r);

struct SpecialEntry {
  BranchId branch = 0;
  double transfer_margin = 0.0;
  std::vector<BranchId> k_crit;
};

struct StepRecord {
  int index = 0;
  double t = 0.0;
  BranchId outage = 0;
  std::string flow_update;  // ups | rebuild | infeasible
  std::vector<SpecialEntry> special;
  std::vector<BranchId> violations;
  std::vector<BranchId> islanding;
  std::map<std::string, SolutionSummary> solutions;  // by mode name
  double deadline = 0.0;
  Committed committed = Committed::None;
  int deferred_deadlines = 0;
  double commit_time = 0.0;
  std::vector<BranchId> triggers_before;
  std::vector<BranchId> triggers_after;
  std::vector<BranchId> special_after;
  double generation_cost = 0.0;
  double shed = 0.0;
  bool incremental_matches_rebuild = true;
  bool unresolvable = false;
};

struct ScenarioReport {
  std::string case_name;
  std::vector<StepRecord> steps;
  bool halted = false;
};

/// Single-writer session over an evolving network; backs both the batch
/// runner and the HTTP API.
class Session {
 public:
  explicit Session(Network net, double top_fraction = 0.30, CorrectiveOptions options = {});

  const Network& base() const { return base_; }
  const Snapshot& snapshot() const { return *snap_; }
  std::shared_ptr<const Snapshot> snapshot_ptr() const { return snap_; }
  int step() const { return step_; }
  const std::vector<BranchId>& outages() const { return outages_; }
  const std::map<DispatchMode, CorrectiveResult>& solutions() const { return solutions_; }

  /// Applies an outage and re-analyses with UPS and SA. Returns how the flow
  /// graph was updated. Throws Error for unknown or out-of-service branches.
  std::string outage(BranchId id);
  const CorrectiveResult& solve(DispatchMode mode);
  /// Solves iCA and rCA concurrently.
  void solve_pair();
  void store(CorrectiveResult r);
  /// Applies a stored solution and re-verifies with M-UPS and M-SA. Throws
  /// Error when no available solution exists for `mode`.
  void commit(DispatchMode mode);
  void reset();

  /// Last outage or commit kept the incremental FT verdicts equal to a rebuild.
  bool incremental_matches_rebuild() const { return incremental_ok_; }
  void set_verify_incremental(bool on) { verify_incremental_ = on; }

 private:
  void check_incremental();

  Network base_;
  double top_fraction_;
  CorrectiveOptions options_;
  std::shared_ptr<const Snapshot> snap_;
  std::map<DispatchMode, CorrectiveResult> solutions_;
  std::vector<BranchId> outages_;
  int step_ = 0;
  bool incremental_ok_ = true;
  bool verify_incremental_ = true;
};

ScenarioReport run_scenario(const Network& net, const ScenarioConfig& cfg);

std::string report_to_json(const ScenarioReport& report, const Network& net, int indent = 2);
std::string report_to_csv(const ScenarioReport& report, const Network& net);
std::string step_to_json(const StepRecord& step, const Network& net, int indent = -1);
std::string solution_to_json(const SolutionSummary& s, const Network& net, int indent = -1);

/// Random multi-outage scenarios whose outages keep the network connected.
std::vector<ScenarioConfig> generate_scenarios(const Network& net, int count, int outages_per_scenario,
                                               unsigned seed);

}  // namespace gridcut
