#include "gridcut/api_server.hpp"

#include <optional>
#include <thread>
#include <variant>

#include <httplib.h>
#include <json.hpp>

#include "gridcut/cascade.hpp"

namespace gridcut {

using json = nlohmann::json;

struct ApiServer::Http {
  httplib::Server server;
  std::thread worker;
};

namespace {

ApiResponse reply(int status, const json& body) { return {status, body.dump()}; }
ApiResponse error(int status, const std::string& message) { return reply(status, {{"error", message}}); }

json names(const Network& net, const std::vector<BranchId>& ids) {
  json a = json::array();
  for (BranchId l : ids) a.push_back(net.branch(l).name);
  return a;
}

/// Parsed body, or a 422 response.
std::variant<json, ApiResponse> parse_body(std::string_view body) {
  if (body.empty()) return json::object();
  try {
    json doc = json::parse(body);
    if (!doc.is_object()) return error(422, "request body must be a JSON object");
    return doc;
  } catch (const json::exception&) {
    return error(422, "request body is not valid JSON");
  }
}

struct Mutation {
  std::unique_lock<std::shared_mutex> lock;
  json doc;
  std::optional<ApiResponse> rejected;
};

/// Takes the mutation lock (409 when busy), parses the body (422) and checks
/// expected_step (409).
Mutation begin_mutation(std::shared_mutex& mutex, std::string_view body, const Session& session) {
  Mutation m{std::unique_lock(mutex, std::try_to_lock), json::object(), std::nullopt};
  if (!m.lock.owns_lock()) {
    m.rejected = error(409, "another mutation is in progress");
    return m;
  }
  auto parsed = parse_body(body);
  if (auto* bad = std::get_if<ApiResponse>(&parsed)) {
    m.rejected = *bad;
    return m;
  }
  m.doc = std::get<json>(std::move(parsed));
  const int step = session.step();
  if (m.doc.contains("expected_step")) {
    if (!m.doc["expected_step"].is_number_integer())
      m.rejected = error(422, "expected_step must be an integer");
    else if (m.doc["expected_step"].get<int>() != step)
      m.rejected = error(409, "session is at step " + std::to_string(step));
  }
  return m;
}

}  // namespace

ApiServer::ApiServer(Network net, double top_fraction)
    : session_(std::move(net), top_fraction), http_(std::make_unique<Http>()) {
  auto route = [this](const httplib::Request& req, httplib::Response& res) {
    const auto r = handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  http_->server.Get(R"(/.*)", route);
  http_->server.Post(R"(/.*)", route);
}

ApiServer::~ApiServer() { stop(); }

bool ApiServer::listen(const std::string& host, int port) { return http_->server.listen(host, port); }

int ApiServer::start_background(const std::string& host) {
  const int port = http_->server.bind_to_any_port(host);
  if (port <= 0) throw Error("could not bind a port on " + host);
  http_->worker = std::thread([this] { http_->server.listen_after_bind(); });
  http_->server.wait_until_ready();
  return port;
}

void ApiServer::stop() {
  if (!http_) return;
  http_->server.stop();
  if (http_->worker.joinable()) http_->worker.join();
}

std::unique_lock<std::shared_mutex> ApiServer::hold_mutations() { return std::unique_lock(mutex_); }

ApiResponse ApiServer::handle(std::string_view method, std::string_view path, std::string_view body) {
  const bool get = method == "GET", post = method == "POST";
  try {
    if (get && path == "/state") return state();
    if (get && path == "/solutions") return solutions();
    if (get && path == "/cascade") return cascade();
    if (post && path == "/outage") return outage(body);
    if (post && path == "/solve") return solve(body);
    if (post && path == "/commit") return commit(body);
    if (post && path == "/reset") return reset(body);
  } catch (const std::exception& e) {
    return error(500, e.what());
  }
  for (const char* known : {"/state", "/solutions", "/cascade", "/outage", "/solve", "/commit", "/reset"})
    if (path == known) return error(405, "method not allowed");
  return error(404, "no such endpoint");
}

ApiResponse ApiServer::state() const {
  std::shared_lock lock(mutex_);
  const Snapshot& s = session_.snapshot();
  const Network& net = *s.net;
  json branches = json::array();
  for (const auto& br : net.branches()) {
    const double f = br.in_service ? s.flows[static_cast<std::size_t>(br.id)] : 0.0;
    branches.push_back({{"name", br.name},
                        {"from", net.bus(br.from).name},
                        {"to", net.bus(br.to).name},
                        {"in_service", br.in_service},
                        {"flow", f},
                        {"rating", br.rating},
                        {"loading", std::abs(f) / br.rating}});
  }
  json special = json::array();
  for (const auto& [id, r] : s.special())
    special.push_back({{"branch", net.branch(id).name}, {"transfer_margin", *r.transfer_margin}, {"k_crit", names(net, r.k_crit)}});
  json violations = json::array();
  for (const auto& c : s.violations.contingencies) {
    json over = json::array();
    for (const auto& v : c.violations)
      over.push_back({{"branch", net.branch(v.monitored).name}, {"post_flow", v.post_flow}, {"rating", v.rating}});
    violations.push_back({{"outage", net.branch(c.outage).name}, {"overloads", over}});
  }
  json infeasible = nullptr;
  if (s.infeasible) infeasible = {{"cut", names(net, s.infeasible->branches)}};
  return reply(200, {{"step", session_.step()},
                     {"outages", names(net, session_.outages())},
                     {"branches", branches},
                     {"special", special},
                     {"violations", violations},
                     {"islanding", names(net, s.violations.islanding)},
                     {"infeasible", infeasible},
                     {"generation_cost", net.generation_cost()},
                     {"demand_mw", net.total_demand()},
                     {"shed_mw", session_.base().total_demand() - net.total_demand()},
                     {"incremental_matches_rebuild", session_.incremental_matches_rebuild()}});
}

ApiResponse ApiServer::outage(std::string_view body) {
  auto m = begin_mutation(mutex_, body, session_);
  if (m.rejected) return *m.rejected;
  const json& doc = m.doc;
  if (!doc.contains("branch")) return error(422, "missing field 'branch'");
  const Network& net = *session_.snapshot().net;
  BranchId id = -1;
  const auto& b = doc["branch"];
  try {
    if (b.is_number_integer())
      id = b.get<BranchId>();
    else if (b.is_string())
      id = net.resolve_branch(b.get<std::string>());
    else
      return error(422, "branch must be a name or an id");
  } catch (const Error& e) {
    return error(422, e.what());
  }
  if (id >= 0 && static_cast<std::size_t>(id) < net.branch_count() && !net.branch(id).in_service)
    return error(409, "branch " + net.branch(id).name + " is already out of service");
  std::string how;
  try {
    how = session_.outage(id);
  } catch (const Error& e) {
    return error(422, e.what());
  }
  const Snapshot& s = session_.snapshot();
  return reply(200, {{"step", session_.step()},
                     {"outage", s.net->branch(id).name},
                     {"flow_update", how},
                     {"special", names(*s.net, s.special_ids())},
                     {"violations", names(*s.net, s.violations.outages())},
                     {"incremental_matches_rebuild", session_.incremental_matches_rebuild()}});
}

ApiResponse ApiServer::solve(std::string_view body) {
  auto m = begin_mutation(mutex_, body, session_);
  if (m.rejected) return *m.rejected;
  const json& doc = m.doc;
  std::vector<DispatchMode> modes;
  if (doc.contains("modes")) {
    if (!doc["modes"].is_array() || doc["modes"].empty()) return error(422, "modes must be a non-empty array");
    try {
      for (const auto& m : doc["modes"]) {
        if (!m.is_string()) return error(422, "modes must be strings");
        modes.push_back(parse_mode(m.get<std::string>()));
      }
    } catch (const Error& e) {
      return error(422, e.what());
    }
  }
  if (modes.empty()) {
    session_.solve_pair();
  } else {
    for (DispatchMode m : modes) session_.solve(m);
  }
  m.lock.unlock();
  return solutions();
}

ApiResponse ApiServer::solutions() const {
  std::shared_lock lock(mutex_);
  const Network& net = *session_.snapshot().net;
  json out = json::object();
  for (const auto& [mode, r] : session_.solutions()) {
    json s = json::parse(solution_to_json(summarise(r), net));
    s["available"] = r.available();
    out[std::string(to_string(mode))] = s;
  }
  return reply(200, {{"step", session_.step()}, {"solutions", out}});
}

ApiResponse ApiServer::commit(std::string_view body) {
  auto m = begin_mutation(mutex_, body, session_);
  if (m.rejected) return *m.rejected;
  const json& doc = m.doc;
  if (!doc.contains("mode") || !doc["mode"].is_string()) return error(422, "missing string field 'mode'");
  DispatchMode mode;
  try {
    mode = parse_mode(doc["mode"].get<std::string>());
  } catch (const Error& e) {
    return error(422, e.what());
  }
  const auto it = session_.solutions().find(mode);
  if (it == session_.solutions().end() || !it->second.available())
    return error(409, "no available " + std::string(to_string(mode)) + " solution for step " + std::to_string(session_.step()));
  session_.commit(mode);
  const Snapshot& s = session_.snapshot();
  return reply(200, {{"step", session_.step()},
                     {"committed", to_string(mode)},
                     {"special", names(*s.net, s.special_ids())},
                     {"violations", names(*s.net, s.violations.outages())},
                     {"generation_cost", s.net->generation_cost()},
                     {"incremental_matches_rebuild", session_.incremental_matches_rebuild()}});
}

ApiResponse ApiServer::cascade() const {
  std::shared_lock lock(mutex_);
  const Snapshot& s = session_.snapshot();
  json triggers = json::array();
  for (const auto& r : simulate_cascades(*s.net, s.screened)) {
    if (!r.is_trigger) continue;
    triggers.push_back({{"branch", s.net->branch(r.initiating).name},
                        {"dependent_trips", r.dependent_trips},
                        {"rounds", r.rounds.size()},
                        {"unserved_mw", r.final_unserved}});
  }
  return reply(200, {{"step", session_.step()}, {"checked", s.screened.size()}, {"triggers", triggers}});
}

ApiResponse ApiServer::reset(std::string_view body) {
  auto m = begin_mutation(mutex_, body, session_);
  if (m.rejected) return *m.rejected;
  session_.reset();
  return reply(200, {{"step", session_.step()}});
}

}  // namespace gridcut
