#include "gridstate/measurement.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include <nlohmann/json.hpp>

#include "gridstate/error.hpp"
#include "gridstate/rng.hpp"

namespace gridstate {

using json = nlohmann::json;

std::string_view to_string(MeasurementKind kind) {
  switch (kind) {
    case MeasurementKind::Vmag: return "Vmag";
    case MeasurementKind::Vang: return "Vang";
    case MeasurementKind::Pinj: return "Pinj";
    case MeasurementKind::Qinj: return "Qinj";
    case MeasurementKind::Pflow: return "Pflow";
    case MeasurementKind::Qflow: return "Qflow";
  }
  return "?";
}

MeasurementKind parse_measurement_kind(std::string_view s) {
  for (auto k : {MeasurementKind::Vmag, MeasurementKind::Vang, MeasurementKind::Pinj,
                 MeasurementKind::Qinj, MeasurementKind::Pflow, MeasurementKind::Qflow}) {
    if (to_string(k) == s) return k;
  }
  throw Error("unknown measurement kind \"" + std::string(s) + "\"");
}

// ---------------------------------------------------------------------------
// Plan

MeasurementPlan MeasurementPlan::create(std::vector<MeasurementSpec> specs,
                                        const NetworkCase& network) {
  MeasurementPlan plan;
  plan.n_ = network.bus_count();
  plan.slack_ = network.slack_index();
  plan.locations_.reserve(specs.size());
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const MeasurementSpec& s = specs[k];
    const std::string where = "measurements[" + std::to_string(k) + "]";
    if (!(s.sigma > 0.0) || !std::isfinite(s.sigma)) throw CaseError(where + ".sigma", "must be > 0");
    if (s.is_flow()) {
      if (s.branch >= network.branch_count()) {
        throw CaseError(where + ".branch", "no branch " + std::to_string(s.branch));
      }
      const Branch& br = network.branches()[s.branch];
      if (br.status != BranchStatus::In) {
        throw CaseError(where + ".branch", "branch " + std::to_string(s.branch) + " is out of service");
      }
      const int end = s.direction == FlowDirection::FromTo ? br.from_bus : br.to_bus;
      plan.locations_.push_back(network.index_of(end));
    } else {
      const auto idx = network.find_index(s.bus);
      if (!idx) throw CaseError(where + ".bus", "no bus " + std::to_string(s.bus));
      plan.locations_.push_back(*idx);
    }
  }
  plan.specs_ = std::move(specs);
  return plan;
}

Eigen::VectorXd MeasurementPlan::sigmas() const {
  Eigen::VectorXd s(static_cast<Eigen::Index>(specs_.size()));
  for (std::size_t k = 0; k < specs_.size(); ++k) s[static_cast<Eigen::Index>(k)] = specs_[k].sigma;
  return s;
}

std::string MeasurementPlan::label(std::size_t k, const NetworkCase& network) const {
  const MeasurementSpec& s = specs_[k];
  std::string out(to_string(s.kind));
  if (s.is_flow()) {
    const Branch& br = network.branches()[s.branch];
    const bool fwd = s.direction == FlowDirection::FromTo;
    out += "(" + std::to_string(fwd ? br.from_bus : br.to_bus) + "->" +
           std::to_string(fwd ? br.to_bus : br.from_bus) + ")";
  } else {
    out += "(" + std::to_string(s.bus) + ")";
  }
  return out;
}

std::string plan_to_json(const MeasurementPlan& plan) {
  json arr = json::array();
  for (const MeasurementSpec& s : plan.specs()) {
    json j;
    j["kind"] = std::string(to_string(s.kind));
    if (s.is_flow()) {
      j["branch"] = s.branch;
      j["direction"] = s.direction == FlowDirection::FromTo ? "from_to" : "to_from";
    } else {
      j["bus"] = s.bus;
    }
    j["sigma"] = s.sigma;
    arr.push_back(std::move(j));
  }
  json doc;
  doc["format"] = "gridstate-plan";
  doc["version"] = 1;
  doc["measurements"] = std::move(arr);
  return doc.dump(1) + "\n";
}

MeasurementPlan plan_from_json(std::string_view text, const NetworkCase& network) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw CaseError("plan", std::string("syntax error: ") + e.what());
  }
  std::vector<MeasurementSpec> specs;
  try {
    for (const json& j : doc.at("measurements")) {
      MeasurementSpec s;
      s.kind = parse_measurement_kind(j.at("kind").get<std::string>());
      if (s.is_flow()) {
        s.branch = j.at("branch").get<std::size_t>();
        const std::string dir = j.at("direction").get<std::string>();
        if (dir != "from_to" && dir != "to_from") throw CaseError("plan", "bad direction " + dir);
        s.direction = dir == "from_to" ? FlowDirection::FromTo : FlowDirection::ToFrom;
      } else {
        s.bus = j.at("bus").get<int>();
      }
      s.sigma = j.at("sigma").get<double>();
      specs.push_back(s);
    }
  } catch (const json::exception& e) {
    throw CaseError("plan", e.what());
  }
  return MeasurementPlan::create(std::move(specs), network);
}

bool MeasurementVector::fully_available() const {
  return std::all_of(mask.begin(), mask.end(), [](bool b) { return b; });
}

std::size_t MeasurementVector::missing_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), false));
}

// ---------------------------------------------------------------------------
// h(x) and H(x)

namespace {

struct FlowEnds {
  std::size_t near, far;
  std::complex<double> y_self, y_mutual;  // I_near = y_self V_near + y_mutual V_far
};

FlowEnds flow_ends(const MeasurementSpec& s, const AdmittanceMatrix& ybus) {
  const BranchAdmittance& a = ybus.branch_admittances.at(s.branch);
  if (s.direction == FlowDirection::FromTo) return {a.from, a.to, a.yff, a.yft};
  return {a.to, a.from, a.ytt, a.ytf};
}

struct FlowValue {
  double p, q;
};

// S_near = V_near conj(I_near)
//   P = V_n^2 g_s + V_n V_f (g_m cos t + b_m sin t)
//   Q = -V_n^2 b_s + V_n V_f (g_m sin t - b_m cos t),  t = theta_n - theta_f
FlowValue flow_value(const FlowEnds& e, const StateVector& x) {
  const auto n = static_cast<Eigen::Index>(e.near), f = static_cast<Eigen::Index>(e.far);
  const double vn = x.v[n], vf = x.v[f];
  const double t = x.theta[n] - x.theta[f];
  const double c = std::cos(t), s = std::sin(t);
  const double gs = e.y_self.real(), bs = e.y_self.imag();
  const double gm = e.y_mutual.real(), bm = e.y_mutual.imag();
  return {vn * vn * gs + vn * vf * (gm * c + bm * s), -vn * vn * bs + vn * vf * (gm * s - bm * c)};
}

}  // namespace

Eigen::VectorXd evaluate_h(const StateVector& state, const MeasurementPlan& plan,
                           const AdmittanceMatrix& ybus) {
  const auto m = static_cast<Eigen::Index>(plan.size());
  Eigen::VectorXd h(m);

  bool need_injections = false;
  for (const auto& s : plan.specs()) {
    need_injections |= s.kind == MeasurementKind::Pinj || s.kind == MeasurementKind::Qinj;
  }
  const BusInjections inj = need_injections ? injected_power(state, ybus) : BusInjections{};

  for (Eigen::Index k = 0; k < m; ++k) {
    const MeasurementSpec& s = plan[static_cast<std::size_t>(k)];
    const auto i = static_cast<Eigen::Index>(plan.location_index(static_cast<std::size_t>(k)));
    switch (s.kind) {
      case MeasurementKind::Vmag: h[k] = state.v[i]; break;
      case MeasurementKind::Vang: h[k] = state.theta[i]; break;
      case MeasurementKind::Pinj: h[k] = inj.p[i]; break;
      case MeasurementKind::Qinj: h[k] = inj.q[i]; break;
      case MeasurementKind::Pflow: h[k] = flow_value(flow_ends(s, ybus), state).p; break;
      case MeasurementKind::Qflow: h[k] = flow_value(flow_ends(s, ybus), state).q; break;
    }
  }
  return h;
}

Eigen::MatrixXd evaluate_H(const StateVector& state, const MeasurementPlan& plan,
                           const AdmittanceMatrix& ybus) {
  const auto m = static_cast<Eigen::Index>(plan.size());
  const auto n = static_cast<Eigen::Index>(plan.bus_count());
  const auto slack = static_cast<Eigen::Index>(plan.slack_index());
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(m, 2 * n - 1);

  // column of d/dtheta_i (or -1 for the slack) and of d/dV_i
  auto acol = [&](Eigen::Index i) -> Eigen::Index {
    return i == slack ? -1 : (i < slack ? i : i - 1);
  };
  auto vcol = [&](Eigen::Index i) { return n - 1 + i; };

  bool need_injections = false;
  for (const auto& s : plan.specs()) {
    need_injections |= s.kind == MeasurementKind::Pinj || s.kind == MeasurementKind::Qinj;
  }
  const BusInjections inj = need_injections ? injected_power(state, ybus) : BusInjections{};

  for (Eigen::Index k = 0; k < m; ++k) {
    const MeasurementSpec& s = plan[static_cast<std::size_t>(k)];
    const auto i = static_cast<Eigen::Index>(plan.location_index(static_cast<std::size_t>(k)));
    switch (s.kind) {
      case MeasurementKind::Vmag:
        jac(k, vcol(i)) = 1.0;
        break;
      case MeasurementKind::Vang:
        if (acol(i) >= 0) jac(k, acol(i)) = 1.0;
        break;
      case MeasurementKind::Pinj:
      case MeasurementKind::Qinj: {
        const bool is_p = s.kind == MeasurementKind::Pinj;
        const double vi = state.v[i];
        for (const auto& [jj, y] : ybus.rows[static_cast<std::size_t>(i)]) {
          const auto j = static_cast<Eigen::Index>(jj);
          const double g = y.real(), b = y.imag();
          double d_theta, d_v;
          if (j == i) {
            d_theta = is_p ? -inj.q[i] - b * vi * vi : inj.p[i] - g * vi * vi;
            d_v = is_p ? inj.p[i] / vi + g * vi : inj.q[i] / vi - b * vi;
          } else {
            const double t = state.theta[i] - state.theta[j];
            const double c = std::cos(t), sn = std::sin(t);
            const double vj = state.v[j];
            d_theta = is_p ? vi * vj * (g * sn - b * c) : -vi * vj * (g * c + b * sn);
            d_v = is_p ? vi * (g * c + b * sn) : vi * (g * sn - b * c);
          }
          if (acol(j) >= 0) jac(k, acol(j)) += d_theta;
          jac(k, vcol(j)) += d_v;
        }
        break;
      }
      case MeasurementKind::Pflow:
      case MeasurementKind::Qflow: {
        const FlowEnds e = flow_ends(s, ybus);
        const auto a = static_cast<Eigen::Index>(e.near), f = static_cast<Eigen::Index>(e.far);
        const double vn = state.v[a], vf = state.v[f];
        const double t = state.theta[a] - state.theta[f];
        const double c = std::cos(t), sn = std::sin(t);
        const double gs = e.y_self.real(), bs = e.y_self.imag();
        const double gm = e.y_mutual.real(), bm = e.y_mutual.imag();
        double d_tn, d_vn, d_vf;
        if (s.kind == MeasurementKind::Pflow) {
          d_tn = vn * vf * (-gm * sn + bm * c);
          d_vn = 2.0 * vn * gs + vf * (gm * c + bm * sn);
          d_vf = vn * (gm * c + bm * sn);
        } else {
          d_tn = vn * vf * (gm * c + bm * sn);
          d_vn = -2.0 * vn * bs + vf * (gm * sn - bm * c);
          d_vf = vn * (gm * sn - bm * c);
        }
        if (acol(a) >= 0) jac(k, acol(a)) += d_tn;
        if (acol(f) >= 0) jac(k, acol(f)) -= d_tn;
        jac(k, vcol(a)) += d_vn;
        jac(k, vcol(f)) += d_vf;
        break;
      }
    }
  }
  return jac;
}

Eigen::VectorXd to_estimation_coordinates(const StateVector& state, std::size_t slack) {
  const auto n = static_cast<Eigen::Index>(state.size());
  const auto sl = static_cast<Eigen::Index>(slack);
  Eigen::VectorXd x(2 * n - 1);
  for (Eigen::Index i = 0, c = 0; i < n; ++i) {
    if (i != sl) x[c++] = state.theta[i];
  }
  x.tail(n) = state.v;
  return x;
}

StateVector from_estimation_coordinates(const Eigen::VectorXd& x, std::size_t slack) {
  const Eigen::Index n = (x.size() + 1) / 2;
  const auto sl = static_cast<Eigen::Index>(slack);
  StateVector s{x.tail(n), Eigen::VectorXd::Zero(n)};
  for (Eigen::Index i = 0, c = 0; i < n; ++i) {
    if (i != sl) s.theta[i] = x[c++];
  }
  return s;
}

// ---------------------------------------------------------------------------
// Noise

MeasurementVector add_gaussian_noise(const MeasurementVector& clean, double snr_db,
                                     std::uint64_t seed) {
  MeasurementVector out = clean;
  if (std::isinf(snr_db) && snr_db > 0) return out;

  double power = 0.0;
  std::size_t count = 0;
  for (Eigen::Index k = 0; k < clean.values.size(); ++k) {
    if (!clean.mask[static_cast<std::size_t>(k)]) continue;
    power += clean.values[k] * clean.values[k];
    ++count;
  }
  if (count == 0) return out;
  power /= static_cast<double>(count);
  const double stddev = std::sqrt(power / std::pow(10.0, snr_db / 10.0));

  Rng rng(seed);
  for (Eigen::Index k = 0; k < out.values.size(); ++k) {
    const double e = stddev * rng.normal();  // drawn for every entry so masks do not shift the stream
    if (out.mask[static_cast<std::size_t>(k)]) out.values[k] += e;
  }
  return out;
}

MeasurementVector add_bounded_percent_noise(const MeasurementVector& clean, double max_pct,
                                            std::uint64_t seed) {
  if (!(max_pct >= 0.0 && max_pct <= 1.0)) throw Error("max_pct must lie in [0, 1]");
  MeasurementVector out = clean;
  const Eigen::Index m = out.values.size();
  const Eigen::Index first_half = (m + 1) / 2;
  Rng rng(seed);
  for (Eigen::Index k = 0; k < m; ++k) {
    const double e = rng.uniform() * max_pct * std::abs(clean.values[k]);
    if (!out.mask[static_cast<std::size_t>(k)]) continue;
    out.values[k] += k < first_half ? e : -e;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Presets

PlanPreset parse_plan_preset(std::string_view name) {
  for (auto p : {PlanPreset::Minimal14, PlanPreset::Full14, PlanPreset::Bench30,
                 PlanPreset::Bench57, PlanPreset::Bench69, PlanPreset::Bench118}) {
    if (to_string(p) == name) return p;
  }
  throw Error("unknown plan preset \"" + std::string(name) + "\"");
}

std::string_view to_string(PlanPreset preset) {
  switch (preset) {
    case PlanPreset::Minimal14: return "minimal14";
    case PlanPreset::Full14: return "full14";
    case PlanPreset::Bench30: return "bench30";
    case PlanPreset::Bench57: return "bench57";
    case PlanPreset::Bench69: return "bench69";
    case PlanPreset::Bench118: return "bench118";
  }
  return "?";
}

namespace {

std::size_t preset_bus_count(PlanPreset p) {
  switch (p) {
    case PlanPreset::Minimal14:
    case PlanPreset::Full14: return 14;
    case PlanPreset::Bench30: return 30;
    case PlanPreset::Bench57: return 57;
    case PlanPreset::Bench69: return 69;
    case PlanPreset::Bench118: return 118;
  }
  return 0;
}

std::size_t preset_size(PlanPreset p) {
  switch (p) {
    case PlanPreset::Minimal14: return 32;
    case PlanPreset::Full14: return 64;
    case PlanPreset::Bench30: return 110;
    case PlanPreset::Bench57: return 216;
    case PlanPreset::Bench69: return 210;
    case PlanPreset::Bench118: return 562;
  }
  return 0;
}

MeasurementSpec bus_spec(MeasurementKind kind, int bus, double s) {
  MeasurementSpec spec;
  spec.kind = kind;
  spec.bus = bus;
  spec.sigma = s;
  return spec;
}

MeasurementSpec flow_spec(MeasurementKind kind, std::size_t branch, FlowDirection dir) {
  MeasurementSpec spec;
  spec.kind = kind;
  spec.branch = branch;
  spec.direction = dir;
  spec.sigma = sigma::kFlow;
  return spec;
}

MeasurementPlan minimal14(const NetworkCase& network) {
  std::vector<MeasurementSpec> specs;
  for (int bus : {2, 4, 8, 10, 11, 12, 14}) {
    specs.push_back(bus_spec(MeasurementKind::Pinj, bus, sigma::kInjection));
    specs.push_back(bus_spec(MeasurementKind::Qinj, bus, sigma::kInjection));
  }
  specs.push_back(bus_spec(MeasurementKind::Vmag, 1, sigma::kVoltageMagnitude));
  specs.push_back(bus_spec(MeasurementKind::Vang, 1, sigma::kVoltageAngle));
  const std::pair<int, int> flows[] = {{1, 2}, {2, 3}, {2, 5}, {5, 6},
                                       {4, 7}, {6, 11}, {6, 13}, {12, 13}};
  for (const auto& [f, t] : flows) {
    const auto k = network.find_branch(f, t);
    if (!k) {
      throw CaseError("preset minimal14", "case has no in-service branch " + std::to_string(f) +
                                              "-" + std::to_string(t));
    }
    specs.push_back(flow_spec(MeasurementKind::Pflow, *k, FlowDirection::FromTo));
    specs.push_back(flow_spec(MeasurementKind::Qflow, *k, FlowDirection::FromTo));
  }
  return MeasurementPlan::create(std::move(specs), network);
}

std::vector<std::size_t> spanning_tree_branches(const NetworkCase& network) {
  const std::size_t n = network.bus_count();
  std::vector<std::vector<std::size_t>> incident(n);
  const auto branches = network.branches();
  for (std::size_t k = 0; k < branches.size(); ++k) {
    if (branches[k].status != BranchStatus::In) continue;
    incident[network.index_of(branches[k].from_bus)].push_back(k);
    incident[network.index_of(branches[k].to_bus)].push_back(k);
  }
  std::vector<bool> seen(n, false);
  std::vector<std::size_t> tree;
  std::deque<std::size_t> queue{network.slack_index()};
  seen[network.slack_index()] = true;
  while (!queue.empty()) {
    const std::size_t i = queue.front();
    queue.pop_front();
    for (std::size_t k : incident[i]) {
      const std::size_t a = network.index_of(branches[k].from_bus);
      const std::size_t b = network.index_of(branches[k].to_bus);
      const std::size_t other = a == i ? b : a;
      if (seen[other]) continue;
      seen[other] = true;
      tree.push_back(k);
      queue.push_back(other);
    }
  }
  return tree;
}

MeasurementPlan filled_plan(const NetworkCase& network, std::size_t target) {
  const auto buses = network.buses();
  const auto branches = network.branches();
  const int slack_id = buses[network.slack_index()].id;

  // each group is added whole; groups of two are skipped when only one slot remains
  std::vector<std::vector<MeasurementSpec>> groups;
  groups.push_back({bus_spec(MeasurementKind::Vmag, slack_id, sigma::kVoltageMagnitude),
                    bus_spec(MeasurementKind::Vang, slack_id, sigma::kVoltageAngle)});

  bool take = true;
  for (const Bus& b : buses) {
    if (b.kind == BusKind::Slack || (b.p_load_mw == 0.0 && b.q_load_mvar == 0.0)) continue;
    if (take) {
      groups.push_back({bus_spec(MeasurementKind::Pinj, b.id, sigma::kInjection),
                        bus_spec(MeasurementKind::Qinj, b.id, sigma::kInjection)});
    }
    take = !take;
  }

  const std::vector<std::size_t> tree = spanning_tree_branches(network);
  std::vector<bool> in_tree(branches.size(), false);
  auto add_flow_pair = [&](std::size_t k, FlowDirection dir) {
    groups.push_back({flow_spec(MeasurementKind::Pflow, k, dir),
                      flow_spec(MeasurementKind::Qflow, k, dir)});
  };
  for (std::size_t k : tree) {
    in_tree[k] = true;
    add_flow_pair(k, FlowDirection::FromTo);
  }
  for (std::size_t k = 0; k < branches.size(); ++k) {
    if (!in_tree[k] && branches[k].status == BranchStatus::In) add_flow_pair(k, FlowDirection::FromTo);
  }
  for (std::size_t k = 0; k < branches.size(); ++k) {
    if (branches[k].status == BranchStatus::In) add_flow_pair(k, FlowDirection::ToFrom);
  }
  for (const Bus& b : buses) {
    if (b.kind != BusKind::Slack) {
      groups.push_back({bus_spec(MeasurementKind::Vmag, b.id, sigma::kVoltageMagnitude)});
    }
  }

  std::vector<MeasurementSpec> specs;
  for (const auto& g : groups) {
    if (specs.size() == target) break;
    if (specs.size() + g.size() > target) continue;
    specs.insert(specs.end(), g.begin(), g.end());
  }
  if (specs.size() != target) {
    throw CaseError("preset", "case cannot supply " + std::to_string(target) + " measurements");
  }
  return MeasurementPlan::create(std::move(specs), network);
}

}  // namespace

MeasurementPlan default_plan(const NetworkCase& network, PlanPreset preset) {
  if (network.bus_count() != preset_bus_count(preset)) {
    throw CaseError("preset " + std::string(to_string(preset)),
                    "expects a " + std::to_string(preset_bus_count(preset)) + "-bus case, got " +
                        std::to_string(network.bus_count()) + " buses");
  }
  if (preset == PlanPreset::Minimal14) return minimal14(network);
  return filled_plan(network, preset_size(preset));
}

std::size_t observability_rank(const MeasurementPlan& plan, const AdmittanceMatrix& ybus) {
  const auto n = static_cast<Eigen::Index>(plan.bus_count());
  const StateVector flat{Eigen::VectorXd::Ones(n), Eigen::VectorXd::Zero(n)};
  const Eigen::MatrixXd h = evaluate_H(flat, plan, ybus);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(h);
  qr.setThreshold(1e-9);
  return static_cast<std::size_t>(qr.rank());
}

}  // namespace gridstate
