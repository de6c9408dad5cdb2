#include "gridcut/network.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

namespace gridcut {

ParseError::ParseError(std::size_t line, std::string field, const std::string& what)
    : Error([&] {
        std::ostringstream os;
        if (line > 0) os << "line " << line << ", ";
        if (!field.empty()) os << "field '" << field << "': ";
        os << what;
        return os.str();
      }()),
      line_(line),
      field_(std::move(field)) {}

std::string_view to_string(BusKind kind) {
  switch (kind) {
    case BusKind::Transit: return "transit";
    case BusKind::Generator: return "generator";
    case BusKind::Load: return "load";
    case BusKind::Both: return "both";
  }
  return "transit";
}

Network::Network(double mva_base, std::vector<Bus> buses, std::vector<Branch> branches,
                 std::vector<Generator> generators, std::vector<Load> loads,
                 std::optional<BusId> reference_bus)
    : mva_base_(mva_base),
      buses_(std::move(buses)),
      branches_(std::move(branches)),
      generators_(std::move(generators)),
      loads_(std::move(loads)) {
  const auto n = static_cast<BusId>(buses_.size());
  for (std::size_t i = 0; i < buses_.size(); ++i) {
    if (buses_[i].id != static_cast<BusId>(i)) throw ValidationError("bus ids must be contiguous from 0");
  }
  for (std::size_t i = 0; i < branches_.size(); ++i) {
    auto& br = branches_[i];
    br.id = static_cast<BranchId>(i);
    if (br.from < 0 || br.from >= n || br.to < 0 || br.to >= n) {
      throw ValidationError("branch '" + br.name + "' references an unknown bus");
    }
  }
  for (const auto& g : generators_) {
    if (g.bus < 0 || g.bus >= n) throw ValidationError("generator references an unknown bus");
  }
  for (const auto& l : loads_) {
    if (l.bus < 0 || l.bus >= n) throw ValidationError("load references an unknown bus");
  }
  derive_kinds();
  if (reference_bus) {
    if (*reference_bus < 0 || *reference_bus >= n) throw ValidationError("reference bus out of range");
    reference_bus_ = *reference_bus;
    reference_overridden_ = true;
  } else {
    BusId ref = n > 0 ? n : 0;
    for (const auto& g : generators_) ref = std::min(ref, g.bus);
    reference_bus_ = (ref == n) ? 0 : ref;
  }
}

void Network::derive_kinds() {
  std::vector<bool> has_gen(buses_.size(), false), has_load(buses_.size(), false);
  for (const auto& g : generators_) has_gen[static_cast<std::size_t>(g.bus)] = true;
  for (const auto& l : loads_) has_load[static_cast<std::size_t>(l.bus)] = true;
  for (std::size_t i = 0; i < buses_.size(); ++i) {
    if (has_gen[i] && has_load[i]) buses_[i].kind = BusKind::Both;
    else if (has_gen[i]) buses_[i].kind = BusKind::Generator;
    else if (has_load[i]) buses_[i].kind = BusKind::Load;
    else buses_[i].kind = BusKind::Transit;
  }
}

std::vector<BranchId> Network::in_service_branches() const {
  std::vector<BranchId> out;
  for (const auto& br : branches_)
    if (br.in_service) out.push_back(br.id);
  return out;
}

std::size_t Network::in_service_count() const {
  return static_cast<std::size_t>(
      std::count_if(branches_.begin(), branches_.end(), [](const Branch& b) { return b.in_service; }));
}

std::vector<double> Network::injections() const {
  std::vector<double> inj(buses_.size(), 0.0);
  for (const auto& g : generators_) inj[static_cast<std::size_t>(g.bus)] += g.output;
  for (const auto& l : loads_) inj[static_cast<std::size_t>(l.bus)] -= l.demand;
  return inj;
}

double Network::total_generation() const {
  double s = 0.0;
  for (const auto& g : generators_) s += g.output;
  return s;
}

double Network::total_demand() const {
  double s = 0.0;
  for (const auto& l : loads_) s += l.demand;
  return s;
}

double Network::generation_cost() const {
  double s = 0.0;
  for (const auto& g : generators_) s += g.cost(g.output);
  return s;
}

std::optional<BranchId> Network::find_branch(std::string_view name) const {
  for (const auto& br : branches_)
    if (br.name == name) return br.id;
  return std::nullopt;
}

std::optional<BusId> Network::find_bus(std::string_view name) const {
  for (const auto& b : buses_)
    if (b.name == name) return b.id;
  return std::nullopt;
}

BranchId Network::resolve_branch(std::string_view name_or_id) const {
  if (auto id = find_branch(name_or_id)) return *id;
  int value = 0;
  const auto* end = name_or_id.data() + name_or_id.size();
  auto [ptr, ec] = std::from_chars(name_or_id.data(), end, value);
  if (ec == std::errc{} && ptr == end && value >= 0 && static_cast<std::size_t>(value) < branches_.size()) {
    return value;
  }
  throw Error("unknown branch '" + std::string(name_or_id) + "'");
}

Network Network::with_outage(BranchId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= branches_.size()) {
    throw Error("unknown branch id " + std::to_string(id));
  }
  if (!branches_[static_cast<std::size_t>(id)].in_service) {
    throw Error("branch '" + branches_[static_cast<std::size_t>(id)].name + "' is already out of service");
  }
  Network next = *this;
  next.branches_[static_cast<std::size_t>(id)].in_service = false;
  return next;
}

Network Network::with_dispatch(std::span<const double> gen_output, std::span<const double> demand) const {
  if (gen_output.size() != generators_.size() || demand.size() != loads_.size()) {
    throw Error("dispatch vector sizes do not match the network");
  }
  Network next = *this;
  for (std::size_t i = 0; i < gen_output.size(); ++i) next.generators_[i].output = gen_output[i];
  for (std::size_t j = 0; j < demand.size(); ++j) next.loads_[j].demand = demand[j];
  return next;
}

Network Network::with_reference_bus(BusId bus) const {
  if (bus < 0 || static_cast<std::size_t>(bus) >= buses_.size()) throw Error("reference bus out of range");
  Network next = *this;
  next.reference_bus_ = bus;
  next.reference_overridden_ = true;
  return next;
}

Network Network::with_generation_scale(double scale) const {
  Network next = *this;
  next.generation_scale_ = scale;
  return next;
}

Network apply_outage(const Network& net, BranchId id) { return net.with_outage(id); }

std::vector<int> connected_components(const Network& net, int* count) {
  const std::size_t n = net.bus_count();
  std::vector<std::vector<BusId>> adj(n);
  for (const auto& br : net.branches()) {
    if (!br.in_service) continue;
    adj[static_cast<std::size_t>(br.from)].push_back(br.to);
    adj[static_cast<std::size_t>(br.to)].push_back(br.from);
  }
  std::vector<int> comp(n, -1);
  int c = 0;
  std::vector<BusId> stack;
  for (std::size_t s = 0; s < n; ++s) {
    if (comp[s] >= 0) continue;
    comp[s] = c;
    stack.assign(1, static_cast<BusId>(s));
    while (!stack.empty()) {
      const BusId u = stack.back();
      stack.pop_back();
      for (BusId v : adj[static_cast<std::size_t>(u)]) {
        if (comp[static_cast<std::size_t>(v)] < 0) {
          comp[static_cast<std::size_t>(v)] = c;
          stack.push_back(v);
        }
      }
    }
    ++c;
  }
  if (count) *count = c;
  return comp;
}

ValidationReport validate(const Network& net) {
  ValidationReport rep;
  int count = 0;
  const auto comp = connected_components(net, &count);
  rep.components = static_cast<std::size_t>(count);
  if (count > 1) {
    rep.ok = false;
    rep.islands.resize(static_cast<std::size_t>(count));
    for (std::size_t b = 0; b < comp.size(); ++b) rep.islands[static_cast<std::size_t>(comp[b])].push_back(static_cast<BusId>(b));
    rep.findings.push_back("in-service network has " + std::to_string(count) + " connected components");
  }
  if (net.branch_count() == 0) {
    rep.ok = false;
    rep.findings.push_back("no branches");
  }
  rep.total_generation = net.total_generation();
  rep.total_demand = net.total_demand();
  rep.imbalance = rep.total_generation - rep.total_demand;
  rep.generation_scale = net.generation_scale();
  if (std::abs(rep.imbalance) > kBalanceTolerance) {
    rep.ok = false;
    rep.findings.push_back("generation/demand imbalance of " + std::to_string(rep.imbalance) + " MW");
  }
  if (net.generation_scale() != 1.0) {
    rep.warnings.push_back("generator outputs scaled by " + std::to_string(net.generation_scale()) +
                           " at ingestion to match demand");
  }
  for (const auto& g : net.generators()) {
    if (g.output < g.p_min - kBalanceTolerance || g.output > g.p_max + kBalanceTolerance) {
      rep.ok = false;
      rep.findings.push_back("generator at bus " + net.bus(g.bus).name + " outside [p_min, p_max]");
    }
  }
  for (const auto& l : net.loads()) {
    if (l.demand < l.d_min - kBalanceTolerance || l.demand > l.d_max + kBalanceTolerance) {
      rep.ok = false;
      rep.findings.push_back("load at bus " + net.bus(l.bus).name + " outside [d_min, d_max]");
    }
  }
  return rep;
}

Network ingest(double mva_base, std::vector<Bus> buses, std::vector<Branch> branches,
               std::vector<Generator> generators, std::vector<Load> loads, std::optional<BusId> reference_bus) {
  if (branches.empty()) throw ValidationError("no branches");
  if (buses.empty()) throw ValidationError("no buses");
  if (!(mva_base > 0.0)) throw ValidationError("mva_base must be positive");
  for (const auto& br : branches) {
    if (!(br.rating > 0.0)) throw ValidationError("branch '" + br.name + "' has no positive rating");
    if (br.from == br.to) throw ValidationError("branch '" + br.name + "' connects a bus to itself");
    if (!(br.susceptance > 0.0) || !std::isfinite(br.susceptance)) {
      throw ValidationError("branch '" + br.name + "' has a non-positive susceptance");
    }
  }
  double max_marginal = 0.0;
  for (const auto& g : generators) {
    if (g.cost_c < 0.0) throw ValidationError("generator cost must be convex (cost_c >= 0)");
    if (g.p_min > g.p_max) throw ValidationError("generator p_min exceeds p_max");
    max_marginal = std::max(max_marginal, g.marginal_cost(g.p_max));
  }
  for (const auto& l : loads) {
    if (l.d_min < 0.0 || l.d_min > l.demand + kBalanceTolerance || l.demand > l.d_max + kBalanceTolerance) {
      throw ValidationError("load limits must satisfy 0 <= d_min <= demand <= d_max");
    }
    if (l.shed_cost < 2.0 * max_marginal) {
      std::ostringstream os;
      os << "load-shed cost " << l.shed_cost << " $/MW is below twice the highest generator marginal cost; "
         << "use at least " << std::ceil(2.0 * max_marginal) << " $/MW";
      throw ValidationError(os.str());
    }
  }

  double gen = 0.0, dem = 0.0;
  for (const auto& g : generators) gen += g.output;
  for (const auto& l : loads) dem += l.demand;
  double scale = 1.0;
  if (std::abs(gen - dem) > kBalanceTolerance) {
    if (!(gen > 0.0)) throw ValidationError("cannot balance: total generation is zero");
    scale = dem / gen;
    for (auto& g : generators) g.output *= scale;
    // Close the residual rounding on the largest unit.
    double after = 0.0;
    for (const auto& g : generators) after += g.output;
    auto big = std::max_element(generators.begin(), generators.end(),
                                [](const Generator& a, const Generator& b) { return a.output < b.output; });
    big->output += dem - after;
  }
  for (const auto& g : generators) {
    if (g.output < g.p_min - kBalanceTolerance || g.output > g.p_max + kBalanceTolerance) {
      throw ValidationError("generator output outside its limits after balancing");
    }
  }
  Network net(mva_base, std::move(buses), std::move(branches), std::move(generators), std::move(loads),
              reference_bus);
  return scale == 1.0 ? net : net.with_generation_scale(scale);
}

}  // namespace gridcut
