#include "gridcut/case_io.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <vector>

#include <json.hpp>

namespace gridcut {
namespace {

using nlohmann::json;

std::string label_of(const json& v, std::string_view field) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number()) {
    const double d = v.get<double>();
    if (std::floor(d) == d) return std::to_string(static_cast<long long>(d));
  }
  throw ParseError(0, std::string(field), "expected a bus label (string or integer)");
}

double number_of(const json& obj, const char* key, std::string_view ctx) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_number()) {
    throw ParseError(0, std::string(ctx) + "." + key, "missing or non-numeric value");
  }
  return it->get<double>();
}

double number_or(const json& obj, const char* key, double fallback, std::string_view ctx) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  if (!it->is_number()) throw ParseError(0, std::string(ctx) + "." + key, "non-numeric value");
  return it->get<double>();
}

Network parse_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    // nlohmann reports a byte offset; convert it to a line number.
    std::size_t line = 1;
    for (std::size_t i = 0; i < std::min<std::size_t>(e.byte, text.size()); ++i)
      if (text[i] == '\n') ++line;
    throw ParseError(line, "", e.what());
  }
  if (!doc.is_object()) throw ParseError(1, "", "top-level value must be an object");

  const double mva_base = number_or(doc, "mva_base", 100.0, "case");
  std::vector<Bus> buses;
  std::map<std::string, BusId> bus_ids;
  if (!doc.contains("buses") || !doc["buses"].is_array()) throw ParseError(0, "buses", "missing array");
  for (const auto& b : doc["buses"]) {
    const std::string name = b.is_object() ? label_of(b.at("id"), "buses[].id") : label_of(b, "buses[]");
    if (bus_ids.count(name)) throw ParseError(0, "buses[].id", "duplicate bus '" + name + "'");
    const auto id = static_cast<BusId>(buses.size());
    bus_ids.emplace(name, id);
    buses.push_back(Bus{id, name, BusKind::Transit});
  }
  auto bus_ref = [&](const json& v, const char* field) {
    const std::string name = label_of(v, field);
    auto it = bus_ids.find(name);
    if (it == bus_ids.end()) throw ParseError(0, field, "unknown bus '" + name + "'");
    return it->second;
  };

  if (!doc.contains("branches") || !doc["branches"].is_array() || doc["branches"].empty()) {
    throw ValidationError("no branches");
  }
  std::vector<Branch> branches;
  for (const auto& b : doc["branches"]) {
    Branch br;
    br.id = static_cast<BranchId>(branches.size());
    br.from = bus_ref(b.at("from"), "branches[].from");
    br.to = bus_ref(b.at("to"), "branches[].to");
    br.name = b.contains("name") ? b["name"].get<std::string>()
                                 : buses[static_cast<std::size_t>(br.from)].name + "-" +
                                       buses[static_cast<std::size_t>(br.to)].name;
    if (b.contains("susceptance")) {
      br.susceptance = number_of(b, "susceptance", "branches[" + br.name + "]");
    } else if (b.contains("x")) {
      const double x = number_of(b, "x", "branches[" + br.name + "]");
      if (x == 0.0) throw ParseError(0, "branches[" + br.name + "].x", "zero reactance");
      br.susceptance = 1.0 / x;
    } else {
      throw ParseError(0, "branches[" + br.name + "].x", "missing reactance or susceptance");
    }
    if (!b.contains("rating")) throw ParseError(0, "branches[" + br.name + "].rating", "missing rating");
    br.rating = number_of(b, "rating", "branches[" + br.name + "]");
    br.in_service = b.value("in_service", true);
    branches.push_back(std::move(br));
  }

  std::vector<Generator> gens;
  for (const auto& g : doc.value("generators", json::array())) {
    Generator gen;
    gen.bus = bus_ref(g.at("bus"), "generators[].bus");
    gen.output = number_of(g, "p", "generators[]");
    gen.p_min = number_or(g, "p_min", 0.0, "generators[]");
    gen.p_max = number_of(g, "p_max", "generators[]");
    if (g.contains("cost")) {
      const auto& c = g["cost"];
      if (!c.is_array() || c.size() != 3) throw ParseError(0, "generators[].cost", "expected [a, b, c]");
      gen.cost_a = c[0].get<double>();
      gen.cost_b = c[1].get<double>();
      gen.cost_c = c[2].get<double>();
    }
    gens.push_back(gen);
  }

  std::vector<Load> loads;
  for (const auto& l : doc.value("loads", json::array())) {
    Load load;
    load.bus = bus_ref(l.at("bus"), "loads[].bus");
    load.demand = number_of(l, "p", "loads[]");
    load.d_min = number_or(l, "p_min", 0.0, "loads[]");
    load.d_max = number_or(l, "p_max", load.demand, "loads[]");
    load.shed_cost = number_or(l, "shed_cost", kDefaultShedCost, "loads[]");
    loads.push_back(load);
  }

  std::optional<BusId> ref;
  if (doc.contains("reference_bus") && !doc["reference_bus"].is_null()) {
    ref = bus_ref(doc["reference_bus"], "reference_bus");
  }
  return ingest(mva_base, std::move(buses), std::move(branches), std::move(gens), std::move(loads), ref);
}

struct MatRow {
  std::size_t line;
  std::vector<double> values;
};

// Extracts `mpc.<name> = [ ... ];` as numeric rows with source line numbers.
std::optional<std::vector<MatRow>> matpower_matrix(std::string_view text, std::string_view name) {
  const std::string key = "mpc." + std::string(name);
  std::size_t pos = 0;
  while ((pos = text.find(key, pos)) != std::string_view::npos) {
    const std::size_t after = pos + key.size();
    if (after < text.size() && (std::isalnum(static_cast<unsigned char>(text[after])) || text[after] == '_')) {
      pos = after;
      continue;
    }
    break;
  }
  if (pos == std::string_view::npos) return std::nullopt;
  std::size_t line = 1;
  for (std::size_t i = 0; i < pos; ++i)
    if (text[i] == '\n') ++line;
  std::size_t open = text.find('[', pos);
  if (open == std::string_view::npos) throw ParseError(line, std::string(name), "expected '['");
  for (std::size_t i = pos; i < open; ++i)
    if (text[i] == '\n') ++line;

  std::vector<MatRow> rows;
  MatRow cur{line, {}};
  std::size_t i = open + 1;
  while (i < text.size()) {
    const char c = text[i];
    if (c == ']') {
      if (!cur.values.empty()) rows.push_back(cur);
      return rows;
    }
    if (c == '%') {
      while (i < text.size() && text[i] != '\n') ++i;
      continue;
    }
    if (c == '\n' || c == ';') {
      if (!cur.values.empty()) rows.push_back(cur);
      cur.values.clear();
      if (c == '\n') ++line;
      cur.line = line;
      ++i;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c)) || c == ',') {
      ++i;
      continue;
    }
    std::size_t end = i;
    while (end < text.size() && !std::isspace(static_cast<unsigned char>(text[end])) && text[end] != ',' &&
           text[end] != ';' && text[end] != ']' && text[end] != '%')
      ++end;
    const std::string token(text.substr(i, end - i));
    try {
      std::size_t used = 0;
      const double v = std::stod(token, &used);
      if (used != token.size()) throw std::invalid_argument(token);
      cur.values.push_back(v);
    } catch (const std::exception&) {
      throw ParseError(line, std::string(name), "cannot read number '" + token + "'");
    }
    i = end;
  }
  throw ParseError(line, std::string(name), "unterminated matrix");
}

double matpower_scalar(std::string_view text, std::string_view name, double fallback) {
  const std::string key = "mpc." + std::string(name);
  const auto pos = text.find(key);
  if (pos == std::string_view::npos) return fallback;
  const auto eq = text.find('=', pos);
  const auto semi = text.find(';', eq);
  if (eq == std::string_view::npos || semi == std::string_view::npos) return fallback;
  return std::stod(std::string(text.substr(eq + 1, semi - eq - 1)));
}

void require_columns(const MatRow& row, std::size_t n, std::string_view name) {
  if (row.values.size() < n) {
    throw ParseError(row.line, std::string(name),
                     "expected at least " + std::to_string(n) + " columns, found " + std::to_string(row.values.size()));
  }
}

std::string fmt_label(double v) {
  std::ostringstream os;
  if (std::floor(v) == v) os << static_cast<long long>(v);
  else os << v;
  return os.str();
}

Network parse_matpower(std::string_view text) {
  const double mva_base = matpower_scalar(text, "baseMVA", 100.0);
  const auto bus_rows = matpower_matrix(text, "bus");
  if (!bus_rows || bus_rows->empty()) throw ParseError(0, "bus", "missing bus matrix");
  const auto branch_rows = matpower_matrix(text, "branch");
  if (!branch_rows || branch_rows->empty()) throw ValidationError("no branches");
  const auto gen_rows = matpower_matrix(text, "gen").value_or(std::vector<MatRow>{});
  const auto cost_rows = matpower_matrix(text, "gencost").value_or(std::vector<MatRow>{});

  std::vector<Bus> buses;
  std::vector<Load> loads;
  std::map<long long, BusId> ids;
  for (const auto& row : *bus_rows) {
    require_columns(row, 3, "bus");
    const auto label = static_cast<long long>(row.values[0]);
    if (ids.count(label)) throw ParseError(row.line, "bus", "duplicate bus " + std::to_string(label));
    const auto id = static_cast<BusId>(buses.size());
    ids.emplace(label, id);
    buses.push_back(Bus{id, fmt_label(row.values[0]), BusKind::Transit});
    const double pd = row.values[2];
    if (pd < 0.0) throw ParseError(row.line, "bus.Pd", "negative demand is not supported");
    if (pd > 0.0) loads.push_back(Load{id, pd, 0.0, pd, kDefaultShedCost});
  }
  auto bus_of = [&](double label, const MatRow& row, const char* field) {
    auto it = ids.find(static_cast<long long>(label));
    if (it == ids.end()) throw ParseError(row.line, field, "unknown bus " + fmt_label(label));
    return it->second;
  };

  std::vector<Branch> branches;
  std::map<std::string, int> name_count;
  for (const auto& row : *branch_rows) {
    require_columns(row, 11, "branch");
    Branch br;
    br.id = static_cast<BranchId>(branches.size());
    br.from = bus_of(row.values[0], row, "branch.fbus");
    br.to = bus_of(row.values[1], row, "branch.tbus");
    const double x = row.values[3];
    const double tap = row.values[8] == 0.0 ? 1.0 : row.values[8];
    if (x == 0.0) throw ParseError(row.line, "branch.x", "zero reactance");
    br.susceptance = 1.0 / (x * tap);
    br.rating = row.values[5];
    if (!(br.rating > 0.0)) throw ParseError(row.line, "branch.rateA", "missing rating (rateA must be positive)");
    br.in_service = row.values[10] > 0.0;
    std::string base = fmt_label(row.values[0]) + "-" + fmt_label(row.values[1]);
    const int k = ++name_count[base];
    br.name = k == 1 ? base : base + "#" + std::to_string(k);
    branches.push_back(std::move(br));
  }

  std::vector<Generator> gens;
  for (std::size_t gi = 0; gi < gen_rows.size(); ++gi) {
    const auto& row = gen_rows[gi];
    require_columns(row, 10, "gen");
    if (row.values[7] <= 0.0) continue;
    Generator g;
    g.bus = bus_of(row.values[0], row, "gen.bus");
    g.output = row.values[1];
    g.p_max = row.values[8];
    g.p_min = row.values[9];
    if (gi < cost_rows.size()) {
      const auto& c = cost_rows[gi];
      require_columns(c, 4, "gencost");
      if (c.values[0] != 2.0) throw ParseError(c.line, "gencost.model", "only polynomial cost (model 2) is supported");
      const auto n = static_cast<std::size_t>(c.values[3]);
      require_columns(c, 4 + n, "gencost");
      std::vector<double> coeff(c.values.begin() + 4, c.values.begin() + 4 + static_cast<long>(n));
      // MATPOWER lists the highest order first.
      double a = 0, b = 0, cc = 0;
      if (n >= 1) a = coeff[n - 1];
      if (n >= 2) b = coeff[n - 2];
      if (n >= 3) cc = coeff[n - 3];
      if (n > 3) throw ParseError(c.line, "gencost.n", "cost polynomials above quadratic are not supported");
      g.cost_a = a;
      g.cost_b = b;
      g.cost_c = cc;
    }
    gens.push_back(g);
  }
  return ingest(mva_base, std::move(buses), std::move(branches), std::move(gens), std::move(loads));
}

}  // namespace

Network parse_case(std::string_view text, CaseFormat format) {
  if (format == CaseFormat::Matpower) return parse_matpower(text);
  try {
    return parse_json(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(0, "", e.what());
  }
}

Network load_case(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open case file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const auto format = path.extension() == ".json" ? CaseFormat::NativeJson : CaseFormat::Matpower;
  return parse_case(ss.str(), format);
}

std::string serialize_case(const Network& net) {
  json doc;
  doc["mva_base"] = net.mva_base();
  if (net.reference_overridden()) doc["reference_bus"] = net.bus(net.reference_bus()).name;
  json buses = json::array();
  for (const auto& b : net.buses()) buses.push_back({{"id", b.name}});
  doc["buses"] = buses;
  json branches = json::array();
  for (const auto& br : net.branches()) {
    branches.push_back({{"name", br.name},
                        {"from", net.bus(br.from).name},
                        {"to", net.bus(br.to).name},
                        {"susceptance", br.susceptance},
                        {"rating", br.rating},
                        {"in_service", br.in_service}});
  }
  doc["branches"] = branches;
  json gens = json::array();
  for (const auto& g : net.generators()) {
    gens.push_back({{"bus", net.bus(g.bus).name},
                    {"p", g.output},
                    {"p_min", g.p_min},
                    {"p_max", g.p_max},
                    {"cost", {g.cost_a, g.cost_b, g.cost_c}}});
  }
  doc["generators"] = gens;
  json loads = json::array();
  for (const auto& l : net.loads()) {
    loads.push_back({{"bus", net.bus(l.bus).name},
                     {"p", l.demand},
                     {"p_min", l.d_min},
                     {"p_max", l.d_max},
                     {"shed_cost", l.shed_cost}});
  }
  doc["loads"] = loads;
  return doc.dump(2);
}

}  // namespace gridcut
