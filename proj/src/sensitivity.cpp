#include "gridcut/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Cholesky>

namespace gridcut {
namespace {

void require_balanced(std::span<const double> inj) {
  double sum = 0.0, mag = 0.0;
  for (double v : inj) {
    sum += v;
    mag = std::max(mag, std::abs(v));
  }
  if (std::abs(sum) > kBalanceTolerance * std::max(1.0, mag / 1e3)) {
    throw Error("injections do not balance (sum " + std::to_string(sum) + " MW)");
  }
}

// Reduced nodal susceptance matrix over `buses` (the slack removed),
// factorised once. Index maps bus id -> row, -1 for buses outside.
struct ReducedSystem {
  std::vector<int> row;
  std::vector<BusId> buses;
  Eigen::LLT<Eigen::MatrixXd> llt;
  int size = 0;
};

ReducedSystem factorise(const Network& net, std::span<const BusId> island, BusId slack) {
  ReducedSystem sys;
  sys.row.assign(net.bus_count(), -1);
  for (BusId b : island) {
    if (b == slack) continue;
    sys.row[static_cast<std::size_t>(b)] = sys.size++;
    sys.buses.push_back(b);
  }
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(sys.size, sys.size);
  for (const auto& br : net.branches()) {
    if (!br.in_service) continue;
    const int i = sys.row[static_cast<std::size_t>(br.from)];
    const int j = sys.row[static_cast<std::size_t>(br.to)];
    if (i >= 0) B(i, i) += br.susceptance;
    if (j >= 0) B(j, j) += br.susceptance;
    if (i >= 0 && j >= 0) {
      B(i, j) -= br.susceptance;
      B(j, i) -= br.susceptance;
    }
  }
  if (sys.size > 0) {
    sys.llt.compute(B);
    if (sys.llt.info() != Eigen::Success) throw SingularSystemError("reduced susceptance matrix is singular");
  }
  return sys;
}

void require_connected(const Network& net) {
  int count = 0;
  connected_components(net, &count);
  if (count > 1) throw IslandedNetworkError("in-service network is split into " + std::to_string(count) + " islands");
}

}  // namespace

BranchFlows dc_power_flow(const Network& net, std::span<const double> inj) {
  if (inj.size() != net.bus_count()) throw Error("injection vector size does not match bus count");
  require_connected(net);
  require_balanced(inj);
  std::vector<BusId> all(net.bus_count());
  std::iota(all.begin(), all.end(), 0);
  const auto sys = factorise(net, all, net.reference_bus());
  Eigen::VectorXd p(sys.size);
  for (int r = 0; r < sys.size; ++r) p(r) = inj[static_cast<std::size_t>(sys.buses[static_cast<std::size_t>(r)])];
  Eigen::VectorXd theta_r = sys.size > 0 ? Eigen::VectorXd(sys.llt.solve(p)) : Eigen::VectorXd();
  std::vector<double> theta(net.bus_count(), 0.0);
  for (int r = 0; r < sys.size; ++r) theta[static_cast<std::size_t>(sys.buses[static_cast<std::size_t>(r)])] = theta_r(r);
  BranchFlows flows(net.branch_count(), 0.0);
  for (const auto& br : net.branches()) {
    if (!br.in_service) continue;
    flows[static_cast<std::size_t>(br.id)] =
        br.susceptance * (theta[static_cast<std::size_t>(br.from)] - theta[static_cast<std::size_t>(br.to)]);
  }
  return flows;
}

BranchFlows dc_power_flow_islands(const Network& net, std::span<const double> inj) {
  if (inj.size() != net.bus_count()) throw Error("injection vector size does not match bus count");
  int count = 0;
  const auto comp = connected_components(net, &count);
  std::vector<std::vector<BusId>> islands(static_cast<std::size_t>(count));
  for (std::size_t b = 0; b < comp.size(); ++b) islands[static_cast<std::size_t>(comp[b])].push_back(static_cast<BusId>(b));
  std::vector<bool> has_gen(net.bus_count(), false);
  for (const auto& g : net.generators()) has_gen[static_cast<std::size_t>(g.bus)] = true;

  std::vector<double> theta(net.bus_count(), 0.0);
  for (const auto& island : islands) {
    if (island.size() < 2) continue;
    std::vector<double> sub;
    for (BusId b : island) sub.push_back(inj[static_cast<std::size_t>(b)]);
    require_balanced(sub);
    BusId slack = island.front();
    for (BusId b : island) {
      if (has_gen[static_cast<std::size_t>(b)]) {
        slack = b;
        break;
      }
    }
    const auto sys = factorise(net, island, slack);
    Eigen::VectorXd p(sys.size);
    for (int r = 0; r < sys.size; ++r) p(r) = inj[static_cast<std::size_t>(sys.buses[static_cast<std::size_t>(r)])];
    const Eigen::VectorXd t = sys.llt.solve(p);
    for (int r = 0; r < sys.size; ++r) theta[static_cast<std::size_t>(sys.buses[static_cast<std::size_t>(r)])] = t(r);
  }
  BranchFlows flows(net.branch_count(), 0.0);
  for (const auto& br : net.branches()) {
    if (!br.in_service) continue;
    flows[static_cast<std::size_t>(br.id)] =
        br.susceptance * (theta[static_cast<std::size_t>(br.from)] - theta[static_cast<std::size_t>(br.to)]);
  }
  return flows;
}

double nodal_balance_residual(const Network& net, std::span<const double> flows, std::span<const double> inj) {
  std::vector<double> out(net.bus_count(), 0.0);
  for (const auto& br : net.branches()) {
    if (!br.in_service) continue;
    const double f = flows[static_cast<std::size_t>(br.id)];
    out[static_cast<std::size_t>(br.from)] += f;
    out[static_cast<std::size_t>(br.to)] -= f;
  }
  double worst = 0.0;
  for (std::size_t b = 0; b < out.size(); ++b) worst = std::max(worst, std::abs(inj[b] - out[b]));
  return worst;
}

PtdfMatrix compute_ptdf(const Network& net) {
  require_connected(net);
  std::vector<BusId> all(net.bus_count());
  std::iota(all.begin(), all.end(), 0);
  const auto sys = factorise(net, all, net.reference_bus());
  // X = B^-1 on the reduced buses, padded with a zero row/column for the slack.
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(net.bus_count()),
                                            static_cast<Eigen::Index>(net.bus_count()));
  if (sys.size > 0) {
    const Eigen::MatrixXd inv = sys.llt.solve(Eigen::MatrixXd::Identity(sys.size, sys.size));
    for (int r = 0; r < sys.size; ++r)
      for (int c = 0; c < sys.size; ++c) X(sys.buses[static_cast<std::size_t>(r)], sys.buses[static_cast<std::size_t>(c)]) = inv(r, c);
  }
  PtdfMatrix ptdf;
  ptdf.reference_bus = net.reference_bus();
  ptdf.values = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(net.branch_count()),
                                      static_cast<Eigen::Index>(net.bus_count()));
  for (const auto& br : net.branches()) {
    if (!br.in_service) continue;
    ptdf.values.row(br.id) = br.susceptance * (X.row(br.from) - X.row(br.to));
  }
  return ptdf;
}

PtdfMatrix sparsify(PtdfMatrix ptdf, double threshold) {
  ptdf.values = ptdf.values.unaryExpr([threshold](double v) { return std::abs(v) < threshold ? 0.0 : v; });
  ptdf.sparsify_threshold = threshold;
  return ptdf;
}

LodfMatrix compute_lodf(const Network& net, const PtdfMatrix& ptdf) {
  const auto m = static_cast<Eigen::Index>(net.branch_count());
  LodfMatrix lodf;
  lodf.values = Eigen::MatrixXd::Zero(m, m);
  lodf.islanding = find_bridges(net);
  for (const auto& k : net.branches()) {
    if (!k.in_service) continue;
    if (lodf.islanding[static_cast<std::size_t>(k.id)]) {
      lodf.undefined_outages.push_back(k.id);
      continue;
    }
    const Eigen::VectorXd transfer = ptdf.values.col(k.from) - ptdf.values.col(k.to);
    const double denom = 1.0 - transfer(k.id);
    lodf.values.col(k.id) = transfer / denom;
    lodf.values(k.id, k.id) = -1.0;
  }
  for (const auto& l : net.branches())
    if (!l.in_service) lodf.values.row(l.id).setZero();
  return lodf;
}

BranchFlows post_contingency_flows(std::span<const double> flows, const LodfMatrix& lodf, BranchId k) {
  if (lodf.is_islanding(k)) throw IslandedNetworkError("outage of branch " + std::to_string(k) + " islands the network");
  const double fk = flows[static_cast<std::size_t>(k)];
  BranchFlows out(flows.begin(), flows.end());
  for (std::size_t l = 0; l < out.size(); ++l) out[l] += lodf.values(static_cast<Eigen::Index>(l), k) * fk;
  out[static_cast<std::size_t>(k)] = 0.0;
  return out;
}

std::vector<bool> find_bridges(const Network& net) {
  const std::size_t n = net.bus_count();
  std::vector<std::vector<std::pair<BusId, BranchId>>> adj(n);
  for (const auto& br : net.branches()) {
    if (!br.in_service) continue;
    adj[static_cast<std::size_t>(br.from)].emplace_back(br.to, br.id);
    adj[static_cast<std::size_t>(br.to)].emplace_back(br.from, br.id);
  }
  std::vector<bool> bridge(net.branch_count(), false);
  std::vector<int> disc(n, -1), low(n, 0);
  int timer = 0;
  struct Frame {
    BusId bus;
    BranchId via;
    std::size_t next;
  };
  std::vector<Frame> stack;
  for (std::size_t s = 0; s < n; ++s) {
    if (disc[s] >= 0) continue;
    disc[s] = low[s] = timer++;
    stack.push_back({static_cast<BusId>(s), -1, 0});
    while (!stack.empty()) {
      auto& fr = stack.back();
      const auto u = static_cast<std::size_t>(fr.bus);
      if (fr.next < adj[u].size()) {
        const auto [v, e] = adj[u][fr.next++];
        if (e == fr.via) continue;
        const auto vi = static_cast<std::size_t>(v);
        if (disc[vi] < 0) {
          disc[vi] = low[vi] = timer++;
          stack.push_back({v, e, 0});
        } else {
          low[u] = std::min(low[u], disc[vi]);
        }
      } else {
        const BranchId via = fr.via;
        stack.pop_back();
        if (!stack.empty()) {
          const auto p = static_cast<std::size_t>(stack.back().bus);
          low[p] = std::min(low[p], low[u]);
          if (low[u] > disc[p]) bridge[static_cast<std::size_t>(via)] = true;
        }
      }
    }
  }
  return bridge;
}

BranchFlows flow_change(const PtdfMatrix& ptdf, std::span<const double> delta_inj) {
  const Eigen::Map<const Eigen::VectorXd> d(delta_inj.data(), static_cast<Eigen::Index>(delta_inj.size()));
  const Eigen::VectorXd df = ptdf.values * d;
  return BranchFlows(df.data(), df.data() + df.size());
}

}  // namespace gridcut
