#include "gridstate/case_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gridstate/error.hpp"

namespace gridstate {

using json = nlohmann::json;

std::string_view to_string(BusKind kind) {
  switch (kind) {
    case BusKind::Slack: return "Slack";
    case BusKind::PV: return "PV";
    case BusKind::PQ: return "PQ";
  }
  return "?";
}

std::string_view to_string(BranchStatus status) {
  return status == BranchStatus::In ? "In" : "Out";
}

namespace {

std::string bus_path(std::size_t i) {
  return "buses[" + std::to_string(i) + "]";
}

std::string branch_path(std::size_t k) {
  return "branches[" + std::to_string(k) + "]";
}

// Union-find over dense bus indices.
class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) { parent_[find(a)] = find(b); }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace

NetworkCase NetworkCase::create(double base_mva, std::vector<Bus> buses,
                                std::vector<Branch> branches) {
  if (!(base_mva > 0.0) || !std::isfinite(base_mva)) {
    throw CaseError("base_mva", "must be a positive number");
  }
  if (buses.empty()) throw CaseError("buses", "case has no buses");

  NetworkCase c;
  c.base_mva_ = base_mva;

  std::size_t slack_count = 0;
  for (std::size_t i = 0; i < buses.size(); ++i) {
    const Bus& b = buses[i];
    if (b.id <= 0) throw CaseError(bus_path(i) + ".id", "must be a positive integer");
    if (!c.index_.emplace(b.id, i).second) {
      throw CaseError(bus_path(i) + ".id",
                      "duplicate bus id " + std::to_string(b.id));
    }
    if (b.kind == BusKind::Slack) {
      ++slack_count;
      c.slack_index_ = i;
    }
    if (b.kind != BusKind::PQ && !b.v_setpoint) {
      throw CaseError(bus_path(i) + ".v_setpoint",
                      "required for " + std::string(to_string(b.kind)) + " buses");
    }
    if (b.v_setpoint && !(*b.v_setpoint > 0.0)) {
      throw CaseError(bus_path(i) + ".v_setpoint", "must be > 0");
    }
  }
  if (slack_count == 0) throw CaseError("buses", "missing slack bus");
  if (slack_count > 1) throw CaseError("buses", "multiple slack buses");

  DisjointSets sets(buses.size());
  for (std::size_t k = 0; k < branches.size(); ++k) {
    const Branch& br = branches[k];
    const auto f = c.index_.find(br.from_bus);
    const auto t = c.index_.find(br.to_bus);
    if (f == c.index_.end()) {
      throw CaseError(branch_path(k) + ".from",
                      "dangling branch endpoint: no bus " + std::to_string(br.from_bus));
    }
    if (t == c.index_.end()) {
      throw CaseError(branch_path(k) + ".to",
                      "dangling branch endpoint: no bus " + std::to_string(br.to_bus));
    }
    if (br.from_bus == br.to_bus) {
      throw CaseError(branch_path(k), "branch connects bus " +
                                          std::to_string(br.from_bus) + " to itself");
    }
    if (br.r < 0.0) throw CaseError(branch_path(k) + ".r_pu", "must be >= 0");
    if (!(br.tap > 0.0)) throw CaseError(branch_path(k) + ".tap", "must be > 0");
    if (br.status == BranchStatus::In) sets.unite(f->second, t->second);
  }

  const std::size_t root = sets.find(c.slack_index_);
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (sets.find(i) != root) {
      throw CaseError("branches", "disconnected network: bus " +
                                      std::to_string(buses[i].id) +
                                      " is not connected to the slack bus");
    }
  }

  c.buses_ = std::move(buses);
  c.branches_ = std::move(branches);
  return c;
}

std::size_t NetworkCase::index_of(int id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw CaseError("", "no bus with id " + std::to_string(id));
  return it->second;
}

std::optional<std::size_t> NetworkCase::find_index(int id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> NetworkCase::find_branch(int from_id, int to_id) const {
  for (std::size_t k = 0; k < branches_.size(); ++k) {
    const Branch& br = branches_[k];
    if (br.status == BranchStatus::In && br.from_bus == from_id && br.to_bus == to_id) {
      return k;
    }
  }
  return std::nullopt;
}

NetworkCase NetworkCase::with_branch_status(std::size_t k, BranchStatus status) const {
  auto branches = branches_;
  branches.at(k).status = status;
  return create(base_mva_, buses_, std::move(branches));
}

// ---------------------------------------------------------------------------
// JSON parsing

namespace {

std::string line_column(std::string_view text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

const json& field(const json& obj, const std::string& path, const char* name) {
  const auto it = obj.find(name);
  if (it == obj.end()) throw CaseError(path + "." + name, "missing field");
  return *it;
}

double number(const json& obj, const std::string& path, const char* name) {
  const json& v = field(obj, path, name);
  if (!v.is_number()) throw CaseError(path + "." + name, "expected a number");
  return v.get<double>();
}

double number_or(const json& obj, const std::string& path, const char* name,
                 double fallback) {
  const auto it = obj.find(name);
  if (it == obj.end() || it->is_null()) return fallback;
  if (!it->is_number()) throw CaseError(path + "." + name, "expected a number");
  return it->get<double>();
}

int integer(const json& obj, const std::string& path, const char* name) {
  const json& v = field(obj, path, name);
  if (!v.is_number_integer()) throw CaseError(path + "." + name, "expected an integer");
  return v.get<int>();
}

std::string text_field(const json& obj, const std::string& path, const char* name) {
  const json& v = field(obj, path, name);
  if (!v.is_string()) throw CaseError(path + "." + name, "expected a string");
  return v.get<std::string>();
}

BusKind parse_kind(const std::string& s, const std::string& path) {
  if (s == "Slack") return BusKind::Slack;
  if (s == "PV") return BusKind::PV;
  if (s == "PQ") return BusKind::PQ;
  throw CaseError(path + ".kind", "expected one of Slack, PV, PQ; got \"" + s + "\"");
}

BranchStatus parse_status(const std::string& s, const std::string& path) {
  if (s == "In") return BranchStatus::In;
  if (s == "Out") return BranchStatus::Out;
  throw CaseError(path + ".status", "expected In or Out; got \"" + s + "\"");
}

}  // namespace

NetworkCase parse_case(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw CaseError(line_column(text, e.byte > 0 ? e.byte - 1 : 0),
                    "syntax error in case file");
  }
  if (!doc.is_object()) throw CaseError("", "case file must be a JSON object");

  const double base_mva = number(doc, "", "base_mva");
  const json& jbuses = field(doc, "", "buses");
  const json& jbranches = field(doc, "", "branches");
  if (!jbuses.is_array()) throw CaseError("buses", "expected an array");
  if (!jbranches.is_array()) throw CaseError("branches", "expected an array");

  std::vector<Bus> buses;
  buses.reserve(jbuses.size());
  for (std::size_t i = 0; i < jbuses.size(); ++i) {
    const json& jb = jbuses[i];
    const std::string path = bus_path(i);
    if (!jb.is_object()) throw CaseError(path, "expected an object");
    Bus b;
    b.id = integer(jb, path, "id");
    b.kind = parse_kind(text_field(jb, path, "kind"), path);
    b.p_load_mw = number(jb, path, "p_load_mw");
    b.q_load_mvar = number(jb, path, "q_load_mvar");
    b.gs_mw = number(jb, path, "gs_mw");
    b.bs_mvar = number(jb, path, "bs_mvar");
    const json& vs = field(jb, path, "v_setpoint");
    if (!vs.is_null()) {
      if (!vs.is_number()) throw CaseError(path + ".v_setpoint", "expected a number or null");
      b.v_setpoint = vs.get<double>();
    }
    b.base_kv = number(jb, path, "base_kv");
    b.p_gen_mw = number_or(jb, path, "p_gen_mw", 0.0);
    b.q_gen_mvar = number_or(jb, path, "q_gen_mvar", 0.0);
    buses.push_back(b);
  }

  std::vector<Branch> branches;
  branches.reserve(jbranches.size());
  for (std::size_t k = 0; k < jbranches.size(); ++k) {
    const json& jr = jbranches[k];
    const std::string path = branch_path(k);
    if (!jr.is_object()) throw CaseError(path, "expected an object");
    Branch br;
    br.from_bus = integer(jr, path, "from");
    br.to_bus = integer(jr, path, "to");
    br.r = number(jr, path, "r_pu");
    br.x = number(jr, path, "x_pu");
    br.b_charging = number(jr, path, "b_pu");
    br.tap = number(jr, path, "tap");
    br.shift = number(jr, path, "shift_rad");
    br.status = parse_status(text_field(jr, path, "status"), path);
    branches.push_back(br);
  }

  return NetworkCase::create(base_mva, std::move(buses), std::move(branches));
}

NetworkCase load_case(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw CaseError(path.string(), "cannot open case file");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_case(ss.str());
  } catch (const CaseError& e) {
    const std::string where =
        e.location().empty() ? path.string() : path.string() + ": " + e.location();
    throw CaseError(where, e.message());
  }
}

std::string serialize_case(const NetworkCase& network) {
  json doc;
  doc["base_mva"] = network.base_mva();
  json buses = json::array();
  for (const Bus& b : network.buses()) {
    json jb;
    jb["id"] = b.id;
    jb["kind"] = std::string(to_string(b.kind));
    jb["p_load_mw"] = b.p_load_mw;
    jb["q_load_mvar"] = b.q_load_mvar;
    jb["gs_mw"] = b.gs_mw;
    jb["bs_mvar"] = b.bs_mvar;
    jb["v_setpoint"] = b.v_setpoint ? json(*b.v_setpoint) : json(nullptr);
    jb["base_kv"] = b.base_kv;
    jb["p_gen_mw"] = b.p_gen_mw;
    jb["q_gen_mvar"] = b.q_gen_mvar;
    buses.push_back(std::move(jb));
  }
  doc["buses"] = std::move(buses);
  json branches = json::array();
  for (const Branch& br : network.branches()) {
    json jr;
    jr["from"] = br.from_bus;
    jr["to"] = br.to_bus;
    jr["r_pu"] = br.r;
    jr["x_pu"] = br.x;
    jr["b_pu"] = br.b_charging;
    jr["tap"] = br.tap;
    jr["shift_rad"] = br.shift;
    jr["status"] = std::string(to_string(br.status));
    branches.push_back(std::move(jr));
  }
  doc["branches"] = std::move(branches);
  return doc.dump(1) + "\n";
}

// ---------------------------------------------------------------------------
// Admittance matrix

AdmittanceMatrix build_ybus(const NetworkCase& network) {
  using Complex = AdmittanceMatrix::Complex;
  const std::size_t n = network.bus_count();

  AdmittanceMatrix y;
  y.n = n;
  std::vector<Eigen::Triplet<Complex>> triplets;
  triplets.reserve(n + 4 * network.branch_count());

  const auto buses = network.buses();
  for (std::size_t i = 0; i < n; ++i) {
    // always store the diagonal so every row has its structural entry
    const Complex shunt(buses[i].gs_mw / network.base_mva(),
                        buses[i].bs_mvar / network.base_mva());
    triplets.emplace_back(static_cast<int>(i), static_cast<int>(i), shunt);
  }

  const auto branches = network.branches();
  y.branch_admittances.reserve(branches.size());
  for (std::size_t k = 0; k < branches.size(); ++k) {
    const Branch& br = branches[k];
    BranchAdmittance a;
    a.from = network.index_of(br.from_bus);
    a.to = network.index_of(br.to_bus);
    a.in_service = br.status == BranchStatus::In;
    if (a.in_service) {
      if (br.r == 0.0 && br.x == 0.0) {
        throw CaseError(branch_path(k), "zero-impedance branch (r = x = 0)");
      }
      a.y_series = Complex(1.0, 0.0) / Complex(br.r, br.x);
      a.y_shunt_from = Complex(0.0, br.b_charging / 2.0);
      a.y_shunt_to = a.y_shunt_from;
      const Complex t = std::polar(br.tap, br.shift);
      a.ytt = a.y_series + a.y_shunt_to;
      a.yff = (a.y_series + a.y_shunt_from) / (br.tap * br.tap);
      a.yft = -a.y_series / std::conj(t);
      a.ytf = -a.y_series / t;

      const int f = static_cast<int>(a.from);
      const int to = static_cast<int>(a.to);
      triplets.emplace_back(f, f, a.yff);
      triplets.emplace_back(f, to, a.yft);
      triplets.emplace_back(to, f, a.ytf);
      triplets.emplace_back(to, to, a.ytt);
    }
    y.branch_admittances.push_back(a);
  }

  y.entries.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  y.entries.setFromTriplets(triplets.begin(), triplets.end());
  y.entries.makeCompressed();

  y.rows.assign(n, {});
  for (Eigen::Index col = 0; col < y.entries.outerSize(); ++col) {
    for (Eigen::SparseMatrix<Complex>::InnerIterator it(y.entries, col); it; ++it) {
      y.rows[static_cast<std::size_t>(it.row())].emplace_back(
          static_cast<std::size_t>(col), it.value());
    }
  }
  return y;
}

}  // namespace gridstate
