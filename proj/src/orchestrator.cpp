#include "gridcut/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <numeric>
#include <random>
#include <set>
#include <tuple>
#include <sstream>

#include <json.hpp>

namespace gridcut {

using nlohmann::json;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<BranchId> keys_of(const SpecialAssetSet& s) {
  std::vector<BranchId> out;
  for (const auto& [id, r] : s) out.push_back(id);
  return out;
}

/// Re-expresses a cut found on a redispatched state as a limit on the
/// change from the snapshot the problem was built on.
CutConstraint rebase(CutConstraint c, std::span<const double> inj_now, std::span<const double> inj_snapshot) {
  for (BusId b : c.sending_side)
    c.margin += inj_now[static_cast<std::size_t>(b)] - inj_snapshot[static_cast<std::size_t>(b)];
  return c;
}

void drop_unscreened(ScreeningState& s, const std::vector<BranchId>& screened) {
  std::erase_if(s.results, [&](const auto& kv) { return !std::binary_search(screened.begin(), screened.end(), kv.first); });
}

bool same_special(const SpecialAssetSet& a, const SpecialAssetSet& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [id, r] : a) {
    const auto it = b.find(id);
    if (it == b.end() || std::abs(*r.transfer_margin - *it->second.transfer_margin) > 1e-6) return false;
  }
  return true;
}

}  // namespace

std::vector<BranchId> Snapshot::special_ids() const { return keys_of(special()); }

std::vector<BranchId> screened_branches(const Network& net) {
  const auto bridges = find_bridges(net);
  std::vector<BranchId> out;
  for (BranchId l : net.in_service_branches())
    if (!bridges[static_cast<std::size_t>(l)]) out.push_back(l);
  return out;
}

Snapshot analyse(const Network& net, double top_fraction) {
  Snapshot s;
  s.net = std::make_shared<const Network>(net);
  const auto inj = net.injections();
  s.flows = dc_power_flow(net, inj);
  s.ptdf = std::make_shared<const PtdfMatrix>(compute_ptdf(net));
  s.lodf = std::make_shared<const LodfMatrix>(compute_lodf(net, *s.ptdf));
  s.screened = screened_branches(net);
  try {
    s.flow_state = build_flow_state(net, inj);
    s.screening = screen_all(*s.flow_state, s.screened);
  } catch (const InfeasibleFlowError& e) {
    s.infeasible = e.cut();
  }
  s.violations = run_rtca(net, s.flows, *s.lodf, top_fraction);
  return s;
}

CorrectiveResult corrective_action(const Snapshot& snap, DispatchMode mode, const CorrectiveOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  CorrectiveResult out;
  out.mode = mode;
  std::vector<CutConstraint> cuts;
  if (has_cut_rows(mode)) {
    cuts = cut_constraints(snap.special());
    if (snap.infeasible) cuts.push_back(cut_constraint(*snap.infeasible));
  }
  const auto ev = has_contingency_rows(mode) ? snap.violations.outages() : std::vector<BranchId>{};
  const auto inj0 = snap.net->injections();

  for (int round = 1; round <= std::max(1, options.max_cut_rounds); ++round) {
    const auto problem = build_problem(mode, snap.net, snap.flows, snap.ptdf, snap.lodf, ev, cuts, options.dispatch);
    if (round == 1) {
      out.post_rows_before_pruning = problem.post_rows_before_pruning;
      out.cut_rows = problem.cut_rows;
    }
    out.cut_rounds = round;
    out.solution = solve(problem);
    if (round == 1) out.solve_seconds = problem.build_seconds + out.solution.solve_seconds;
    out.net_after.reset();
    if (out.solution.status != DispatchStatus::Optimal) break;
    out.verification = verify_solution(problem, out.solution);
    out.net_after = apply_dispatch(*snap.net, out.solution).first;
    if (!has_cut_rows(mode)) break;

    // FT re-verification of the redispatched state.
    const auto inj = out.net_after->injections();
    std::vector<CutConstraint> fresh;
    try {
      const auto fs = build_flow_state(*out.net_after, inj);
      const auto special = screen_all(fs, snap.screened).special();
      out.remaining_special = keys_of(special);
      for (auto& c : cut_constraints(special)) fresh.push_back(rebase(std::move(c), inj, inj0));
    } catch (const InfeasibleFlowError& e) {
      out.remaining_special.clear();
      fresh.push_back(rebase(cut_constraint(e.cut()), inj, inj0));
    }
    if (fresh.empty()) break;
    for (auto& c : fresh) {
      auto same = std::find_if(cuts.begin(), cuts.end(), [&](const CutConstraint& o) {
        return o.outage == c.outage && o.sending_side == c.sending_side;
      });
      if (same == cuts.end())
        cuts.push_back(std::move(c));
      else
        same->margin = std::min(same->margin, c.margin);
    }
  }
  out.seconds = seconds_since(t0);
  return out;
}

std::string_view to_string(Committed c) {
  switch (c) {
    case Committed::ICA: return "ica";
    case Committed::RCA: return "rca";
    case Committed::None: return "none";
  }
  return "?";
}

Choice choose_solution(std::optional<double> t_i, std::optional<double> t_r, double t_d, double interval) {
  if (t_d < 0.0 || interval <= 0.0) throw Error("deadline and interval must be positive");
  if ((t_i && *t_i < 0.0) || (t_r && *t_r < 0.0)) throw Error("solve times must be non-negative");
  Choice c;
  if (!t_i && !t_r) return c;
  for (int d = 0;; ++d) {
    const double deadline = t_d + d * interval;
    if (t_i && *t_i < deadline) return {Committed::ICA, d, deadline};
    if (t_r && *t_r < deadline) return {Committed::RCA, d, deadline};
  }
}

SolutionSummary summarise(const CorrectiveResult& r) {
  SolutionSummary s;
  s.mode = r.mode;
  s.status = std::string(to_string(r.solution.status));
  s.seconds = r.seconds;
  s.solve_seconds = r.solve_seconds;
  s.objective = r.solution.objective;
  s.generation_cost = r.solution.generation_cost;
  s.shed = r.solution.shed_total;
  s.kkt_residual = r.solution.kkt_residual;
  s.cut_rounds = r.cut_rounds;
  s.post_rows_before_pruning = r.post_rows_before_pruning;
  s.cut_rows = r.cut_rows;
  s.rows_used = r.solution.rows_used;
  s.verification = r.verification.worst_modelled;
  s.remaining_special = r.remaining_special;
  s.remaining_overload_outages = r.verification.remaining_overload_outages;
  return s;
}

// ---------------------------------------------------------------- session

Session::Session(Network net, double top_fraction, CorrectiveOptions options)
    : base_(std::move(net)), top_fraction_(top_fraction), options_(std::move(options)) {
  if (!(top_fraction_ > 0.0 && top_fraction_ <= 1.0)) throw Error("top fraction must lie in (0, 1]");
  snap_ = std::make_shared<const Snapshot>(analyse(base_, top_fraction_));
}

std::string Session::outage(BranchId id) {
  const Snapshot& old = *snap_;
  const Network& cur = *old.net;
  if (id < 0 || static_cast<std::size_t>(id) >= cur.branch_count()) throw Error("unknown branch " + std::to_string(id));
  if (!cur.branch(id).in_service) throw Error("branch " + cur.branch(id).name + " is already out of service");
  if (!std::binary_search(old.screened.begin(), old.screened.end(), id))
    throw Error("outage of " + cur.branch(id).name + " would island the network");

  Snapshot s;
  s.net = std::make_shared<const Network>(apply_outage(cur, id));
  s.flows = dc_power_flow(*s.net, s.net->injections());
  s.ptdf = std::make_shared<const PtdfMatrix>(compute_ptdf(*s.net));
  s.lodf = std::make_shared<const LodfMatrix>(compute_lodf(*s.net, *s.ptdf));
  s.screened = screened_branches(*s.net);

  std::string how = "ups";
  bool built = false;
  if (old.flow_state) {
    try {
      auto up = update_after_outage(*old.flow_state, id);
      auto shortlist = shortlist_after_outage(old.screening, id, up.touched);
      std::erase_if(shortlist, [&](BranchId l) { return !std::binary_search(s.screened.begin(), s.screened.end(), l); });
      s.screening = rescreen(up.state, old.screening, shortlist);
      drop_unscreened(s.screening, s.screened);
      s.flow_state = std::move(up.state);
      built = true;
    } catch (const InfeasibleFlowError&) {
      how = "rebuild";
    }
  } else {
    how = "rebuild";
  }
  if (!built) {
    try {
      s.flow_state = build_flow_state(*s.net, s.net->injections());
      s.screening = screen_all(*s.flow_state, s.screened);
    } catch (const InfeasibleFlowError& e) {
      s.infeasible = e.cut();
      how = "infeasible";
    }
  }
  s.violations = run_rtca(*s.net, s.flows, *s.lodf, top_fraction_);
  snap_ = std::make_shared<const Snapshot>(std::move(s));
  solutions_.clear();
  outages_.push_back(id);
  ++step_;
  incremental_ok_ = true;
  check_incremental();
  return how;
}

void Session::check_incremental() {
  if (!verify_incremental_ || !snap_->flow_state) return;
  try {
    const auto full = screen_all(build_flow_state(*snap_->net, snap_->net->injections()), snap_->screened);
    incremental_ok_ = incremental_ok_ && same_special(full.special(), snap_->special());
  } catch (const InfeasibleFlowError&) {
    incremental_ok_ = false;
  }
}

const CorrectiveResult& Session::solve(DispatchMode mode) {
  store(corrective_action(*snap_, mode, options_));
  return solutions_.at(mode);
}

void Session::solve_pair() {
  auto snap = snap_;
  auto opts = options_;
  auto fi = std::async(std::launch::async, [snap, opts] { return corrective_action(*snap, DispatchMode::ICA, opts); });
  auto fr = std::async(std::launch::async, [snap, opts] { return corrective_action(*snap, DispatchMode::RCA, opts); });
  store(fi.get());
  store(fr.get());
}

void Session::store(CorrectiveResult r) { solutions_.insert_or_assign(r.mode, std::move(r)); }

void Session::commit(DispatchMode mode) {
  const auto it = solutions_.find(mode);
  if (it == solutions_.end() || !it->second.available())
    throw Error("no available " + std::string(to_string(mode)) + " solution for the current state");
  const Snapshot& old = *snap_;
  const Network& next = *it->second.net_after;

  const auto inj_old = old.net->injections();
  const auto inj_new = next.injections();
  std::vector<double> change(inj_new.size());
  for (std::size_t b = 0; b < change.size(); ++b) change[b] = inj_new[b] - inj_old[b];

  Snapshot s;
  s.net = std::make_shared<const Network>(next);
  s.flows = dc_power_flow(next, inj_new);
  s.ptdf = old.ptdf;
  s.lodf = old.lodf;
  s.screened = old.screened;
  bool built = false;
  if (old.flow_state) {
    try {
      auto up = update_after_redispatch(*old.flow_state, InjectionDelta::from_changes(change));
      auto shortlist = shortlist_after_redispatch(old.screening, up.touched);
      std::erase_if(shortlist, [&](BranchId l) { return !std::binary_search(s.screened.begin(), s.screened.end(), l); });
      s.screening = rescreen(up.state, old.screening, shortlist);
      drop_unscreened(s.screening, s.screened);
      s.flow_state = std::move(up.state);
      built = true;
    } catch (const InfeasibleFlowError&) {
    }
  }
  if (!built) {
    try {
      s.flow_state = build_flow_state(next, inj_new);
      s.screening = screen_all(*s.flow_state, s.screened);
    } catch (const InfeasibleFlowError& e) {
      s.infeasible = e.cut();
    }
  }
  s.violations = run_rtca(next, s.flows, *s.lodf, top_fraction_);
  snap_ = std::make_shared<const Snapshot>(std::move(s));
  solutions_.clear();
  check_incremental();
}

void Session::reset() {
  snap_ = std::make_shared<const Snapshot>(analyse(base_, top_fraction_));
  solutions_.clear();
  outages_.clear();
  step_ = 0;
  incremental_ok_ = true;
}

// ---------------------------------------------------------------- scenarios

ScenarioConfig parse_scenario(const std::string& text, const Network& net) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(std::string("scenario is not valid JSON: ") + e.what());
  }
  ScenarioConfig cfg;
  try {
    for (const auto& ev : doc.at("events")) {
      OutageEvent e;
      e.t = ev.at("t").get<double>();
      const auto& b = ev.at("branch");
      e.branch = b.is_number_integer() ? b.get<BranchId>() : net.resolve_branch(b.get<std::string>());
      cfg.events.push_back(e);
    }
    cfg.redispatch_interval = doc.value("redispatch_interval_s", cfg.redispatch_interval);
    cfg.top_fraction = doc.value("top_fraction", cfg.top_fraction);
    cfg.policy = doc.value("policy", cfg.policy);
    const std::string ts = doc.value("time_source", std::string("wall-clock"));
    if (ts == "simulated")
      cfg.time_source = TimeSource::Simulated;
    else if (ts != "wall-clock")
      throw Error("time_source must be wall-clock or simulated");
    if (doc.contains("simulated_times"))
      for (const auto& p : doc["simulated_times"]) cfg.simulated_times.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
    cfg.cascade_check = doc.value("cascade_check", cfg.cascade_check);
  } catch (const json::exception& e) {
    throw Error(std::string("bad scenario field: ") + e.what());
  }
  for (std::size_t i = 1; i < cfg.events.size(); ++i)
    if (!(cfg.events[i].t > cfg.events[i - 1].t)) throw Error("event times must be strictly increasing");
  if (!(cfg.redispatch_interval > 0.0)) throw Error("redispatch_interval_s must be positive");
  if (!(cfg.top_fraction > 0.0 && cfg.top_fraction <= 1.0)) throw Error("top_fraction must lie in (0, 1]");
  static const std::set<std::string> policies{"deadline", "ica", "rca", "sced", "dcopf", "none"};
  if (!policies.contains(cfg.policy)) throw Error("unknown policy '" + cfg.policy + "'");
  if (cfg.time_source == TimeSource::Simulated && cfg.simulated_times.size() < cfg.events.size())
    throw Error("simulated time needs one (t_i, t_r) pair per event");
  return cfg;
}

ScenarioReport run_scenario(const Network& net, const ScenarioConfig& cfg) {
  if (!validate(net).ok) throw Error("network does not validate");
  ScenarioReport report;
  Session session(net, cfg.top_fraction, cfg.corrective);
  session.set_verify_incremental(cfg.verify_incremental);
  const double demand0 = net.total_demand();

  for (std::size_t i = 0; i < cfg.events.size(); ++i) {
    const auto& ev = cfg.events[i];
    StepRecord rec;
    rec.index = static_cast<int>(i);
    rec.t = ev.t;
    rec.outage = ev.branch;
    rec.flow_update = session.outage(ev.branch);
    bool incremental = session.incremental_matches_rebuild();
    {
      const Snapshot& s = session.snapshot();
      for (const auto& [id, r] : s.special()) rec.special.push_back({id, *r.transfer_margin, r.k_crit});
      rec.violations = s.violations.outages();
      rec.islanding = s.violations.islanding;
      if (cfg.cascade_check) rec.triggers_before = find_cascade_triggers(*s.net, s.screened, s.lodf.get());
    }
    double t_d = std::ceil(ev.t / cfg.redispatch_interval) * cfg.redispatch_interval - ev.t;
    if (t_d <= 1e-9) t_d += cfg.redispatch_interval;
    rec.deadline = t_d;

    std::optional<DispatchMode> to_commit;
    if (cfg.policy == "deadline") {
      session.solve_pair();
      const auto& ica = session.solutions().at(DispatchMode::ICA);
      const auto& rca = session.solutions().at(DispatchMode::RCA);
      double t_i = ica.seconds, t_r = rca.seconds;
      if (cfg.time_source == TimeSource::Simulated) std::tie(t_i, t_r) = cfg.simulated_times[i];
      const auto choice = choose_solution(ica.available() ? std::optional(t_i) : std::nullopt,
                                          rca.available() ? std::optional(t_r) : std::nullopt, t_d,
                                          cfg.redispatch_interval);
      rec.committed = choice.committed;
      rec.deferred_deadlines = choice.deadline;
      rec.commit_time = choice.commit_time;
      if (choice.committed == Committed::ICA) to_commit = DispatchMode::ICA;
      if (choice.committed == Committed::RCA) to_commit = DispatchMode::RCA;
    } else if (cfg.policy != "none") {
      const auto mode = parse_mode(cfg.policy);
      const auto& r = session.solve(mode);
      if (r.available()) {
        to_commit = mode;
        rec.committed = mode == DispatchMode::ICA ? Committed::ICA : mode == DispatchMode::RCA ? Committed::RCA : Committed::None;
        rec.commit_time = t_d;
      }
    }
    for (const auto& [mode, r] : session.solutions()) {
      auto sum = summarise(r);
      if (cfg.time_source == TimeSource::Simulated) {
        if (mode == DispatchMode::ICA) sum.seconds = cfg.simulated_times[i].first;
        else if (mode == DispatchMode::RCA) sum.seconds = cfg.simulated_times[i].second;
        else sum.seconds = 0.0;
        sum.solve_seconds = sum.seconds;
      }
      rec.solutions.emplace(std::string(to_string(mode)), std::move(sum));
    }
    if (to_commit) {
      session.commit(*to_commit);
      incremental = incremental && session.incremental_matches_rebuild();
    } else if (cfg.policy != "none") {
      rec.unresolvable = true;
    }
    {
      const Snapshot& s = session.snapshot();
      rec.special_after = s.special_ids();
      if (cfg.cascade_check) rec.triggers_after = find_cascade_triggers(*s.net, s.screened, s.lodf.get());
      rec.generation_cost = s.net->generation_cost();
      rec.shed = demand0 - s.net->total_demand();
    }
    rec.incremental_matches_rebuild = incremental;
    const bool halt = rec.unresolvable && cfg.halt_on_unresolvable;
    report.steps.push_back(std::move(rec));
    if (halt) {
      report.halted = true;
      break;
    }
  }
  return report;
}

// ---------------------------------------------------------------- reports

namespace {

json names(const Network& net, const std::vector<BranchId>& ids) {
  json a = json::array();
  for (BranchId l : ids) a.push_back(net.branch(l).name);
  return a;
}

json solution_json(const SolutionSummary& s, const Network& net) {
  return {{"mode", to_string(s.mode)},
          {"status", s.status},
          {"seconds", s.seconds},
          {"solve_seconds", s.solve_seconds},
          {"objective", s.objective},
          {"generation_cost", s.generation_cost},
          {"shed_mw", s.shed},
          {"kkt_residual", s.kkt_residual},
          {"cut_rounds", s.cut_rounds},
          {"post_contingency_rows", s.post_rows_before_pruning},
          {"cut_rows", s.cut_rows},
          {"rows_used", s.rows_used},
          {"verification_residual", s.verification},
          {"remaining_special", names(net, s.remaining_special)},
          {"remaining_overload_outages", names(net, s.remaining_overload_outages)}};
}

json step_json(const StepRecord& r, const Network& net) {
  json special = json::array();
  for (const auto& e : r.special)
    special.push_back({{"branch", net.branch(e.branch).name}, {"transfer_margin", e.transfer_margin}, {"k_crit", names(net, e.k_crit)}});
  json sols = json::object();
  for (const auto& [k, s] : r.solutions) sols[k] = solution_json(s, net);
  return {{"index", r.index},
          {"t", r.t},
          {"outage", net.branch(r.outage).name},
          {"flow_update", r.flow_update},
          {"special", special},
          {"violations", names(net, r.violations)},
          {"islanding", names(net, r.islanding)},
          {"solutions", sols},
          {"deadline", r.deadline},
          {"committed", to_string(r.committed)},
          {"deferred_deadlines", r.deferred_deadlines},
          {"commit_time", r.commit_time},
          {"triggers_before", names(net, r.triggers_before)},
          {"triggers_after", names(net, r.triggers_after)},
          {"special_after", names(net, r.special_after)},
          {"generation_cost", r.generation_cost},
          {"shed_mw", r.shed},
          {"incremental_matches_rebuild", r.incremental_matches_rebuild},
          {"unresolvable", r.unresolvable}};
}

}  // namespace

std::string solution_to_json(const SolutionSummary& s, const Network& net, int indent) {
  return solution_json(s, net).dump(indent);
}

std::string step_to_json(const StepRecord& step, const Network& net, int indent) {
  return step_json(step, net).dump(indent);
}

std::string report_to_json(const ScenarioReport& report, const Network& net, int indent) {
  json steps = json::array();
  json before = json::array(), after = json::array();
  for (const auto& s : report.steps) {
    steps.push_back(step_json(s, net));
    before.push_back(s.triggers_before.size());
    after.push_back(s.triggers_after.size());
  }
  json doc = {{"case", report.case_name},
              {"halted", report.halted},
              {"steps", steps},
              {"summary", {{"trigger_counts_before", before}, {"trigger_counts_after", after}}}};
  return doc.dump(indent);
}

std::string report_to_csv(const ScenarioReport& report, const Network& net) {
  std::ostringstream out;
  out << "step,t,outage,flow_update,special,violations,committed,deferred,t_ica,t_rca,generation_cost,shed_mw,"
         "triggers_before,triggers_after\n";
  auto join = [&](const std::vector<BranchId>& ids) {
    std::string s;
    for (BranchId l : ids) s += (s.empty() ? "" : " ") + net.branch(l).name;
    return s;
  };
  auto seconds = [&](const StepRecord& r, const char* m) {
    const auto it = r.solutions.find(m);
    return it == r.solutions.end() ? std::string() : std::to_string(it->second.seconds);
  };
  for (const auto& r : report.steps) {
    std::vector<BranchId> special;
    for (const auto& e : r.special) special.push_back(e.branch);
    out << r.index << ',' << r.t << ',' << net.branch(r.outage).name << ',' << r.flow_update << ",\"" << join(special)
        << "\",\"" << join(r.violations) << "\"," << to_string(r.committed) << ',' << r.deferred_deadlines << ','
        << seconds(r, "ica") << ',' << seconds(r, "rca") << ',' << r.generation_cost << ',' << r.shed << ','
        << r.triggers_before.size() << ',' << r.triggers_after.size() << '\n';
  }
  return out.str();
}

std::vector<ScenarioConfig> generate_scenarios(const Network& net, int count, int outages_per_scenario, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::vector<ScenarioConfig> out;
  for (int s = 0; s < count; ++s) {
    ScenarioConfig cfg;
    Network cur = net;
    for (int k = 0; k < outages_per_scenario; ++k) {
      const auto cand = screened_branches(cur);
      if (cand.empty()) break;
      // Favour the more heavily loaded half of the candidates.
      const auto flows = dc_power_flow(cur, cur.injections());
      std::vector<BranchId> ranked = cand;
      std::stable_sort(ranked.begin(), ranked.end(), [&](BranchId a, BranchId b) {
        return std::abs(flows[static_cast<std::size_t>(a)]) / cur.branch(a).rating >
               std::abs(flows[static_cast<std::size_t>(b)]) / cur.branch(b).rating;
      });
      ranked.resize(std::max<std::size_t>(1, ranked.size() / 2));
      const BranchId pick = ranked[std::uniform_int_distribution<std::size_t>(0, ranked.size() - 1)(rng)];
      cfg.events.push_back({120.0 + 300.0 * k, pick});
      cur = apply_outage(cur, pick);
    }
    out.push_back(std::move(cfg));
  }
  return out;
}

}  // namespace gridcut
