#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gridstate/case_model.hpp"
#include "gridstate/measurement.hpp"
#include "gridstate/powerflow.hpp"
#include "gridstate/rng.hpp"

namespace gridstate::test {

inline std::filesystem::path data_dir() { return GRIDSTATE_TEST_DATA; }

inline NetworkCase fixture(const std::string& name) {
  return load_case(data_dir() / "cases" / (name + ".json"));
}

inline const std::vector<std::string>& fixture_names() {
  static const std::vector<std::string> names{"ieee14", "ieee30", "ieee57", "ieee118", "case69"};
  return names;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("gridstate_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline Bus make_bus(int id, BusKind kind, double p_mw = 0.0, double q_mvar = 0.0) {
  Bus b;
  b.id = id;
  b.kind = kind;
  b.p_load_mw = p_mw;
  b.q_load_mvar = q_mvar;
  if (kind != BusKind::PQ) b.v_setpoint = 1.0;
  return b;
}

inline Branch make_branch(int from, int to, double r, double x, double b = 0.0) {
  Branch br;
  br.from_bus = from;
  br.to_bus = to;
  br.r = r;
  br.x = x;
  br.b_charging = b;
  return br;
}

// Random connected network: a random spanning tree plus extra chords, random
// line constants, taps, phase shifters and shunts. Bus ids are shuffled so
// that dense order differs from id order.
inline NetworkCase random_case(Rng& rng, int n, bool transformers = true) {
  std::vector<int> ids(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = 10 + 3 * i;
  rng.shuffle(ids.begin(), ids.end());

  std::vector<Bus> buses;
  const auto slack = rng.below(static_cast<std::uint64_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto kind = static_cast<std::uint64_t>(i) == slack ? BusKind::Slack
                      : rng.uniform() < 0.2                  ? BusKind::PV
                                                             : BusKind::PQ;
    Bus b = make_bus(ids[static_cast<std::size_t>(i)], kind, rng.uniform(0.0, 40.0),
                     rng.uniform(-5.0, 15.0));
    if (rng.uniform() < 0.2) b.bs_mvar = rng.uniform(-10.0, 20.0);
    if (rng.uniform() < 0.1) b.gs_mw = rng.uniform(0.0, 5.0);
    buses.push_back(b);
  }

  auto line = [&](int f, int t) {
    Branch br = make_branch(f, t, rng.uniform(0.0, 0.08), rng.uniform(0.05, 0.3),
                            rng.uniform(0.0, 0.05));
    if (transformers && rng.uniform() < 0.25) {
      br.tap = rng.uniform(0.9, 1.1);
      if (rng.uniform() < 0.5) br.shift = rng.uniform(-0.1, 0.1);
    }
    return br;
  };
  std::vector<Branch> branches;
  for (int i = 1; i < n; ++i) {
    const auto j = rng.below(static_cast<std::uint64_t>(i));
    branches.push_back(line(ids[j], ids[static_cast<std::size_t>(i)]));
  }
  const int chords = n / 2;
  for (int c = 0; c < chords; ++c) {
    const auto a = rng.below(static_cast<std::uint64_t>(n));
    const auto b = rng.below(static_cast<std::uint64_t>(n));
    if (a != b) branches.push_back(line(ids[a], ids[b]));
  }
  return NetworkCase::create(100.0, std::move(buses), std::move(branches));
}

// A plausible operating point: magnitudes near 1, small angles, slack angle 0.
inline StateVector random_state(Rng& rng, const NetworkCase& network, double spread = 0.1) {
  const auto n = static_cast<Eigen::Index>(network.bus_count());
  StateVector s;
  s.v.resize(n);
  s.theta.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    s.v(i) = rng.uniform(0.9, 1.1);
    s.theta(i) = rng.uniform(-spread * 3.0, spread * 3.0);
  }
  s.theta(static_cast<Eigen::Index>(network.slack_index())) = 0.0;
  return s;
}

inline Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols,
                                     double lo = -1.0, double hi = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(lo, hi);
  return m;
}

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1.0});
}

// Noiseless measurement/state pairs from power flows of `network` under
// random per-bus load scalings; columns are samples.
struct Samples {
  Eigen::MatrixXd z;
  Eigen::MatrixXd x;
};

inline Samples power_flow_samples(const NetworkCase& network, const MeasurementPlan& plan,
                                  int count, std::uint64_t seed) {
  const auto ybus = build_ybus(network);
  const auto n = network.bus_count();
  Rng rng(seed);
  Samples s{Eigen::MatrixXd(static_cast<Eigen::Index>(plan.size()), count),
            Eigen::MatrixXd(static_cast<Eigen::Index>(2 * n), count)};
  for (int k = 0; k < count;) {
    LoadScenario scenario = LoadScenario::uniform(n, rng.uniform(0.4, 1.0));
    for (Eigen::Index i = 0; i < scenario.scale.size(); ++i) scenario.scale(i) *= rng.uniform(0.9, 1.1);
    const auto pf = solve_power_flow(network, ybus, scenario);
    if (!pf.converged) continue;
    s.z.col(k) = evaluate_h(pf.state, plan, ybus);
    s.x.col(k) = pf.state.stacked();
    ++k;
  }
  return s;
}

}  // namespace gridstate::test
