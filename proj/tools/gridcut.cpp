// gridcut command line: case validation, FT screening, RTCA, redispatch,
// cascade checks, scenario runs and the HTTP API.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "gridcut/api_server.hpp"
#include "gridcut/case_io.hpp"
#include "gridcut/orchestrator.hpp"

#include <CLI11.hpp>
#include <json.hpp>

using json = nlohmann::json;
using namespace gridcut;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_output(const std::string& text, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << text << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << text << '\n';
}

json names(const Network& net, const std::vector<BranchId>& ids) {
  json a = json::array();
  for (BranchId l : ids) a.push_back(net.branch(l).name);
  return a;
}

json bus_names(const Network& net, const std::vector<BusId>& ids) {
  json a = json::array();
  for (BusId b : ids) a.push_back(net.bus(b).name);
  return a;
}

BranchId branch_ref(const Network& net, const json& v) {
  if (v.is_number_integer()) return net.resolve_branch(std::to_string(v.get<long long>()));
  if (v.is_string()) return net.resolve_branch(v.get<std::string>());
  throw Error("branch references must be names or ids");
}

BusId bus_ref(const Network& net, const json& v) {
  const std::string s = v.is_string() ? v.get<std::string>() : v.dump();
  if (auto b = net.find_bus(s)) return *b;
  throw Error("unknown bus " + s);
}

/// Case with `outages` applied in order.
Network load_with_outages(const std::string& path, const std::vector<std::string>& outages) {
  Network net = load_case(path);
  for (const auto& o : outages) net = apply_outage(net, net.resolve_branch(o));
  return net;
}

/// Re-ingests the case with one shed cost on every load; the floor check applies.
Network with_shed_cost(const Network& net, double cost) {
  auto loads = net.loads();
  for (auto& l : loads) l.shed_cost = cost;
  std::optional<BusId> ref;
  if (net.reference_overridden()) ref = net.reference_bus();
  return ingest(net.mva_base(), net.buses(), net.branches(), net.generators(), loads, ref);
}

json ft_json(const Network& net, const FtResult& r) {
  json j = {{"branch", net.branch(r.branch).name},
            {"special", r.is_special},
            {"flow", r.flow},
            {"indirect_capacity", r.indirect_capacity}};
  if (r.is_special) {
    j["transfer_margin"] = *r.transfer_margin;
    j["k_crit"] = names(net, r.k_crit);
    j["sending_side"] = bus_names(net, r.sending_side);
  }
  return j;
}

json cut_json(const Network& net, const SaturatedCut& c) {
  return {{"branches", names(net, c.branches)},
          {"sending_side", bus_names(net, c.sending_side)},
          {"transfer", c.transfer},
          {"capacity", c.capacity}};
}

json violations_json(const Network& net, const ViolationList& v) {
  json out = json::array();
  for (const auto& c : v.contingencies) {
    json over = json::array();
    for (const auto& x : c.violations)
      over.push_back({{"branch", net.branch(x.monitored).name}, {"post_flow", x.post_flow}, {"rating", x.rating}});
    out.push_back({{"outage", net.branch(c.outage).name}, {"overloads", over}});
  }
  return out;
}

void write_matrix_csv(const std::filesystem::path& path, const Eigen::MatrixXd& m, const std::vector<std::string>& rows,
                      const std::vector<std::string>& cols) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(17);
  out << "branch";
  for (const auto& c : cols) out << ',' << c;
  out << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out << rows[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << ',' << m(i, j);
    out << '\n';
  }
}

// validate ----------------------------------------------------------------

int cmd_validate(const std::string& case_path) {
  const Network net = load_case(case_path);
  const auto r = validate(net);
  json islands = json::array();
  for (const auto& isl : r.islands) islands.push_back(bus_names(net, isl));
  const json out = {{"ok", r.ok},
                    {"buses", net.bus_count()},
                    {"branches", net.branch_count()},
                    {"generators", net.generators().size()},
                    {"loads", net.loads().size()},
                    {"components", r.components},
                    {"islands", islands},
                    {"total_generation", r.total_generation},
                    {"total_demand", r.total_demand},
                    {"imbalance", r.imbalance},
                    {"generation_scale", r.generation_scale},
                    {"reference_bus", net.bus(net.reference_bus()).name},
                    {"findings", r.findings},
                    {"warnings", r.warnings}};
  std::cout << out.dump(2) << '\n';
  return r.ok ? 0 : 1;
}

// ft ----------------------------------------------------------------------

struct FtArgs {
  std::string case_path, flow_graph, out;
  std::vector<std::string> outages, branches;
  bool all = false, table = false;
};

void print_ft_table(const json& out) {
  std::printf("%-12s %-8s %12s %12s %12s  %s\n", "branch", "special", "flow", "indirect", "T_m", "K_crit");
  const json& rows = out.contains("results") ? out["results"] : out["special"];
  for (const auto& r : rows) {
    std::string k;
    if (r.contains("k_crit"))
      for (const auto& b : r["k_crit"]) k += (k.empty() ? "" : ",") + b.get<std::string>();
    std::printf("%-12s %-8s %12.3f %12.3f %12s  %s\n", r["branch"].get<std::string>().c_str(),
                r["special"].get<bool>() ? "yes" : "no", r["flow"].get<double>(), r["indirect_capacity"].get<double>(),
                r.contains("transfer_margin") ? std::to_string(r["transfer_margin"].get<double>()).c_str() : "-",
                k.c_str());
  }
}

int cmd_ft(const FtArgs& a) {
  const Network net = load_with_outages(a.case_path, a.outages);
  const Snapshot snap = analyse(net);
  json out = {{"case", a.case_path}, {"outages", a.outages}};
  if (!snap.flow_state) {
    out["infeasible"] = cut_json(net, *snap.infeasible);
    write_output(out.dump(2), a.out);
    return 1;
  }
  if (!a.flow_graph.empty()) {
    std::ofstream csv(a.flow_graph);
    if (!csv) throw Error("cannot write " + a.flow_graph);
    write_edge_list_csv(csv, net, *snap.flow_state);
  }
  std::vector<BranchId> wanted;
  for (const auto& b : a.branches) wanted.push_back(net.resolve_branch(b));
  json special = json::array(), results = json::array();
  if (!wanted.empty()) {
    for (BranchId id : wanted) results.push_back(ft_json(net, feasibility_test(*snap.flow_state, id)));
  } else {
    for (const auto& [id, r] : snap.screening.results) {
      if (r.is_special) special.push_back(ft_json(net, r));
      if (a.all) results.push_back(ft_json(net, r));
    }
  }
  out["screened"] = snap.screened.size();
  out["special"] = special;
  if (!results.empty()) out["results"] = results;
  if (a.table)
    print_ft_table(out);
  else
    write_output(out.dump(2), a.out);
  return 0;
}

// rtca --------------------------------------------------------------------

struct RtcaArgs {
  std::string case_path, dump_dir, out;
  std::vector<std::string> outages;
  double top_fraction = 0.30;
};

int cmd_rtca(const RtcaArgs& a) {
  const Network net = load_with_outages(a.case_path, a.outages);
  const auto ptdf = compute_ptdf(net);
  const auto lodf = compute_lodf(net, ptdf);
  const auto flows = dc_power_flow(net, net.injections());
  const auto ranked = rank_contingencies(net, flows, lodf);
  const auto top = select_top_fraction(ranked, a.top_fraction);
  std::vector<BranchId> selected;
  for (const auto& r : top)
    if (!r.islanding) selected.push_back(r.branch);
  std::sort(selected.begin(), selected.end());
  const auto v = screen_post_contingency(net, flows, lodf, selected);

  json ranking = json::array();
  for (const auto& r : top)
    ranking.push_back({{"branch", net.branch(r.branch).name}, {"severity", r.severity}, {"islanding", r.islanding}});
  json base = json::array();
  for (const auto& br : net.branches())
    if (br.in_service) base.push_back({{"branch", br.name}, {"flow", flows[static_cast<std::size_t>(br.id)]}, {"rating", br.rating}});
  const json out = {{"case", a.case_path},
                    {"outages", a.outages},
                    {"top_fraction", a.top_fraction},
                    {"base_flows", base},
                    {"ranking", ranking},
                    {"violations", violations_json(net, v)},
                    {"islanding", names(net, v.islanding)}};
  if (!a.dump_dir.empty()) {
    std::filesystem::create_directories(a.dump_dir);
    std::vector<std::string> br, bu;
    for (const auto& b : net.branches()) br.push_back(b.name);
    for (const auto& b : net.buses()) bu.push_back(b.name);
    write_matrix_csv(std::filesystem::path(a.dump_dir) / "ptdf.csv", ptdf.values, br, bu);
    write_matrix_csv(std::filesystem::path(a.dump_dir) / "lodf.csv", lodf.values, br, br);
  }
  write_output(out.dump(2), a.out);
  return 0;
}

// dispatch ----------------------------------------------------------------

struct DispatchArgs {
  std::string case_path, mode = "rca", violations, cutsets, out;
  std::vector<std::string> outages;
  std::optional<double> shed_cost;
  double sparsify_threshold = 0.02;
  bool sparsify = false;
  double row_margin = 0.20;
};

/// Outage branches of an rtca report (or a bare array of outages).
std::vector<BranchId> read_violations(const Network& net, const std::string& path) {
  const json doc = json::parse(read_file(path));
  const json& list = doc.is_array() ? doc : doc.at("violations");
  std::vector<BranchId> out;
  for (const auto& c : list) out.push_back(branch_ref(net, c.is_object() ? c.at("outage") : c));
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// Cut rows from an ft report: one per special entry, plus the saturated cut
/// when the report says no flow state exists.
std::vector<CutConstraint> read_cutsets(const Network& net, const std::string& path) {
  const json doc = json::parse(read_file(path));
  std::vector<CutConstraint> out;
  const json& list = doc.is_array() ? doc : doc.at("special");
  for (const auto& e : list) {
    CutConstraint c;
    c.outage = branch_ref(net, e.at("branch"));
    for (const auto& b : e.at("k_crit")) c.branches.push_back(branch_ref(net, b));
    for (const auto& b : e.at("sending_side")) c.sending_side.push_back(bus_ref(net, b));
    c.margin = e.at("transfer_margin").get<double>();
    out.push_back(std::move(c));
  }
  if (doc.is_object() && doc.contains("infeasible")) {
    const json& e = doc["infeasible"];
    CutConstraint c;
    for (const auto& b : e.at("branches")) c.branches.push_back(branch_ref(net, b));
    for (const auto& b : e.at("sending_side")) c.sending_side.push_back(bus_ref(net, b));
    c.margin = e.at("capacity").get<double>() - e.at("transfer").get<double>();
    out.push_back(std::move(c));
  }
  return out;
}

int cmd_dispatch(const DispatchArgs& a) {
  Network net = load_with_outages(a.case_path, a.outages);
  if (a.shed_cost) net = with_shed_cost(net, *a.shed_cost);
  const DispatchMode mode = parse_mode(a.mode);

  DispatchOptions opt = default_options(net);
  opt.row_margin = a.row_margin;
  opt.sparsify_threshold = a.sparsify_threshold;
  opt.sparsify = opt.sparsify || a.sparsify;

  const Snapshot snap = analyse(net);
  std::vector<BranchId> contingencies =
      a.violations.empty() ? snap.violations.outages() : read_violations(net, a.violations);
  std::vector<CutConstraint> cuts;
  if (a.cutsets.empty()) {
    cuts = cut_constraints(snap.special());
    if (snap.infeasible) cuts.push_back(cut_constraint(*snap.infeasible));
  } else {
    cuts = read_cutsets(net, a.cutsets);
  }
  const auto net_ptr = std::make_shared<const Network>(net);
  const auto p = build_problem(mode, net_ptr, snap.flows, snap.ptdf, snap.lodf, contingencies, cuts, opt);
  const auto s = solve(p);
  const auto v = verify_solution(p, s);

  json gens = json::array(), shed = json::array();
  for (std::size_t g = 0; g < s.delta_gen.size(); ++g) {
    const auto& gen = net.generators()[g];
    gens.push_back({{"bus", net.bus(gen.bus).name}, {"output", gen.output}, {"delta", s.delta_gen[g]}});
  }
  for (std::size_t l = 0; l < s.delta_shed.size(); ++l) {
    if (std::abs(s.delta_shed[l]) <= 1e-9) continue;
    shed.push_back({{"bus", net.bus(net.loads()[l].bus).name}, {"shed", s.delta_shed[l]}});
  }
  json blocks = json::array();
  for (const auto& b : v.blocks)
    blocks.push_back({{"block", to_string(b.block)}, {"rows", b.rows}, {"worst_residual", b.worst}});
  json out = {{"mode", to_string(mode)},
              {"status", to_string(s.status)},
              {"objective", s.objective},
              {"redispatch_cost", s.redispatch_cost},
              {"generation_cost", s.generation_cost},
              {"shed_total", s.shed_total},
              {"kkt_residual", s.kkt_residual},
              {"iterations", s.iterations},
              {"row_rounds", s.row_rounds},
              {"rows_used", s.rows_used},
              {"post_rows_before_pruning", p.post_rows_before_pruning},
              {"cut_rows", p.cut_rows},
              {"contingencies", names(net, contingencies)},
              {"build_seconds", p.build_seconds},
              {"solve_seconds", s.solve_seconds},
              {"generators", gens},
              {"shed", shed},
              {"verification", {{"passed", v.passed()}, {"worst_modelled", v.worst_modelled}, {"blocks", blocks}}}};
  if (s.infeasible_block) out["infeasible_block"] = *s.infeasible_block;
  write_output(out.dump(2), a.out);
  return s.status == DispatchStatus::Optimal ? 0 : 1;
}

// cascade -----------------------------------------------------------------

struct CascadeArgs {
  std::string case_path, contingencies = "all", out;
  std::vector<std::string> outages;
  bool triggers_only = false;
};

int cmd_cascade(const CascadeArgs& a) {
  const Network net = load_with_outages(a.case_path, a.outages);
  std::vector<BranchId> list;
  if (a.contingencies == "all") {
    list = screened_branches(net);
  } else {
    const json doc = json::parse(read_file(a.contingencies));
    if (!doc.is_array()) throw Error("contingency list must be a JSON array of branch names or ids");
    for (const auto& b : doc) list.push_back(branch_ref(net, b));
  }
  json out = json::array();
  for (const auto& r : simulate_cascades(net, list)) {
    if (a.triggers_only && !r.is_trigger) continue;
    json rounds = json::array();
    for (const auto& rd : r.rounds)
      rounds.push_back({{"tripped", names(net, rd.tripped)}, {"islands", rd.islands}, {"island_shed", rd.island_shed}});
    out.push_back({{"initiating", net.branch(r.initiating).name},
                   {"is_trigger", r.is_trigger},
                   {"dependent_trips", r.dependent_trips},
                   {"final_unserved", r.final_unserved},
                   {"rounds", rounds}});
  }
  write_output(out.dump(2), a.out);
  return 0;
}

// run ---------------------------------------------------------------------

struct RunArgs {
  std::string case_path, scenario, out, csv;
};

int cmd_run(const RunArgs& a) {
  const Network net = load_case(a.case_path);
  const auto cfg = parse_scenario(read_file(a.scenario), net);
  const auto report = run_scenario(net, cfg);
  write_output(report_to_json(report, net), a.out);
  if (!a.csv.empty()) write_output(report_to_csv(report, net), a.csv);
  return report.halted ? 1 : 0;
}

// serve -------------------------------------------------------------------

int cmd_serve(const std::string& case_path, const std::string& host, int port, double top_fraction) {
  ApiServer server(load_case(case_path), top_fraction);
  std::cerr << "gridcut: serving " << case_path << " on http://" << host << ':' << port << '\n';
  if (!server.listen(host, port)) {
    std::cerr << "gridcut: cannot listen on " << host << ':' << port << '\n';
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Saturated cut-set screening and corrective redispatch for DC power networks"};
  app.require_subcommand(1);

  std::string case_path;
  auto add_case = [&](CLI::App* sub) { sub->add_option("case", case_path, "case file (.m or .json)")->required()->check(CLI::ExistingFile); };

  auto* validate_cmd = app.add_subcommand("validate", "check a case and report its summary");
  add_case(validate_cmd);

  FtArgs ft;
  auto* ft_cmd = app.add_subcommand("ft", "feasibility test on every screened branch");
  add_case(ft_cmd);
  ft_cmd->add_option("--after-outage,--outage", ft.outages, "take branches out first, in order")->delimiter(',');
  ft_cmd->add_option("--branch", ft.branches, "test only these branches")->delimiter(',');
  ft_cmd->add_flag("--all", ft.all, "include non-special verdicts");
  ft_cmd->add_flag("--table", ft.table, "print a table instead of JSON");
  ft_cmd->add_option("--flow-graph", ft.flow_graph, "write the flow graph edge list as CSV");
  ft_cmd->add_option("-o,--out", ft.out, "output file (default stdout)");

  RtcaArgs rtca;
  auto* rtca_cmd = app.add_subcommand("rtca", "contingency ranking and post-contingency overloads");
  add_case(rtca_cmd);
  rtca_cmd->add_option("--after-outage,--outage", rtca.outages, "take branches out first, in order")->delimiter(',');
  rtca_cmd->add_option("--top,--top-fraction", rtca.top_fraction, "share of ranked outages to screen")->check(CLI::Range(1e-9, 1.0));
  rtca_cmd->add_option("--dump-sensitivities", rtca.dump_dir, "write ptdf.csv and lodf.csv into this directory");
  rtca_cmd->add_option("-o,--out", rtca.out, "output file (default stdout)");

  DispatchArgs disp;
  auto* dispatch_cmd = app.add_subcommand("dispatch", "solve one redispatch problem");
  add_case(dispatch_cmd);
  dispatch_cmd->add_option("--mode", disp.mode, "ica, rca, sced or dcopf");
  dispatch_cmd->add_option("--violations", disp.violations, "rtca output (default: run rtca)")->check(CLI::ExistingFile);
  dispatch_cmd->add_option("--cutsets", disp.cutsets, "ft output (default: run ft)")->check(CLI::ExistingFile);
  dispatch_cmd->add_option("--after-outage,--outage", disp.outages, "take branches out first, in order")->delimiter(',');
  dispatch_cmd->add_option("--shed-cost", disp.shed_cost, "load-shed cost for every load, $/MW");
  dispatch_cmd->add_option("--sparsify-threshold", disp.sparsify_threshold, "PTDF rounding for post-contingency rows");
  dispatch_cmd->add_flag("--sparsify", disp.sparsify, "sparsify even on small cases");
  dispatch_cmd->add_option("--row-margin", disp.row_margin, "start with rows whose slack is below this share of rating")
      ->check(CLI::Range(0.0, 10.0));
  dispatch_cmd->add_option("-o,--out", disp.out, "output file (default stdout)");

  CascadeArgs casc;
  auto* cascade_cmd = app.add_subcommand("cascade", "cascade-triggering contingencies");
  add_case(cascade_cmd);
  cascade_cmd->add_option("--after-outage,--outage", casc.outages, "take branches out first, in order")->delimiter(',');
  cascade_cmd->add_option("--contingencies", casc.contingencies, "all (every non-bridge branch) or a JSON list file");
  cascade_cmd->add_flag("--triggers-only", casc.triggers_only, "keep only triggering contingencies");
  cascade_cmd->add_option("-o,--out", casc.out, "output file (default stdout)");

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "run an outage scenario");
  add_case(run_cmd);
  run_cmd->add_option("scenario", run.scenario, "scenario JSON")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("-o,--out", run.out, "report file (default stdout)");
  run_cmd->add_option("--csv", run.csv, "also write a per-step CSV summary");

  std::string host = "127.0.0.1";
  int port = 8080;
  double serve_fraction = 0.30;
  auto* serve_cmd = app.add_subcommand("serve", "serve the JSON API");
  add_case(serve_cmd);
  serve_cmd->add_option("--host", host, "bind address");
  serve_cmd->add_option("--port", port, "port")->check(CLI::Range(1, 65535));
  serve_cmd->add_option("--top-fraction", serve_fraction, "share of ranked outages to screen")->check(CLI::Range(1e-9, 1.0));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*validate_cmd) return cmd_validate(case_path);
    if (*ft_cmd) return ft.case_path = case_path, cmd_ft(ft);
    if (*rtca_cmd) return rtca.case_path = case_path, cmd_rtca(rtca);
    if (*dispatch_cmd) return disp.case_path = case_path, cmd_dispatch(disp);
    if (*cascade_cmd) return casc.case_path = case_path, cmd_cascade(casc);
    if (*run_cmd) return run.case_path = case_path, cmd_run(run);
    if (*serve_cmd) return cmd_serve(case_path, host, port, serve_fraction);
  } catch (const ParseError& e) {
    std::cerr << "gridcut: " << case_path << ": line " << e.line() << ", field " << e.field() << ": " << e.what() << '\n';
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "gridcut: bad JSON input: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "gridcut: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
