#include <cmath>

#include <gtest/gtest.h>

#include "gridstate/error.hpp"
#include "gridstate/measurement.hpp"
#include "support.hpp"

namespace gridstate {
namespace {

MeasurementSpec bus_spec(MeasurementKind kind, int bus) {
  MeasurementSpec s;
  s.kind = kind;
  s.bus = bus;
  return s;
}

MeasurementSpec flow_spec(MeasurementKind kind, std::size_t branch, FlowDirection dir) {
  MeasurementSpec s;
  s.kind = kind;
  s.branch = branch;
  s.direction = dir;
  return s;
}

// Every injection and both ends of every in-service flow.
MeasurementPlan exhaustive_plan(const NetworkCase& c) {
  std::vector<MeasurementSpec> specs;
  for (const auto& b : c.buses()) {
    specs.push_back(bus_spec(MeasurementKind::Vmag, b.id));
    specs.push_back(bus_spec(MeasurementKind::Vang, b.id));
    specs.push_back(bus_spec(MeasurementKind::Pinj, b.id));
    specs.push_back(bus_spec(MeasurementKind::Qinj, b.id));
  }
  for (std::size_t k = 0; k < c.branch_count(); ++k) {
    if (c.branches()[k].status == BranchStatus::Out) continue;
    for (auto dir : {FlowDirection::FromTo, FlowDirection::ToFrom}) {
      specs.push_back(flow_spec(MeasurementKind::Pflow, k, dir));
      specs.push_back(flow_spec(MeasurementKind::Qflow, k, dir));
    }
  }
  return MeasurementPlan::create(specs, c);
}

double max_relative_jacobian_error(const StateVector& s, const MeasurementPlan& plan,
                                   const AdmittanceMatrix& ybus, double step) {
  const auto slack = plan.slack_index();
  const Eigen::MatrixXd H = evaluate_H(s, plan, ybus);
  const Eigen::VectorXd x = to_estimation_coordinates(s, slack);
  double worst = 0.0;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    Eigen::VectorXd xp = x, xm = x;
    xp(j) += step;
    xm(j) -= step;
    const Eigen::VectorXd fd = (evaluate_h(from_estimation_coordinates(xp, slack), plan, ybus) -
                                evaluate_h(from_estimation_coordinates(xm, slack), plan, ybus)) /
                               (2.0 * step);
    for (Eigen::Index i = 0; i < fd.size(); ++i)
      worst = std::max(worst, test::relative_error(H(i, j), fd(i)));
  }
  return worst;
}

TEST(MeasurementFunction, MatchesStateForVoltageChannels) {
  const auto c = test::fixture("ieee14");
  const auto ybus = build_ybus(c);
  Rng rng(31);
  const auto s = test::random_state(rng, c);
  const auto plan = MeasurementPlan::create(
      {bus_spec(MeasurementKind::Vmag, 5), bus_spec(MeasurementKind::Vang, 9)}, c);
  const auto z = evaluate_h(s, plan, ybus);
  EXPECT_EQ(z(0), s.v(c.index_of(5)));
  EXPECT_EQ(z(1), s.theta(c.index_of(9)));
}

TEST(MeasurementFunction, InjectionsMatchPowerFlowInjections) {
  Rng rng(32);
  for (int trial = 0; trial < 10; ++trial) {
    const auto c = test::random_case(rng, 3 + static_cast<int>(rng.below(20)));
    const auto ybus = build_ybus(c);
    const auto s = test::random_state(rng, c);
    const auto plan = exhaustive_plan(c);
    const auto z = evaluate_h(s, plan, ybus);
    const auto inj = injected_power(s, ybus);
    for (std::size_t i = 0; i < c.bus_count(); ++i) {
      EXPECT_NEAR(z(static_cast<Eigen::Index>(4 * i + 2)), inj.p(static_cast<Eigen::Index>(i)), 1e-12);
      EXPECT_NEAR(z(static_cast<Eigen::Index>(4 * i + 3)), inj.q(static_cast<Eigen::Index>(i)), 1e-12);
    }
  }
}

// Kirchhoff: a bus injection equals the sum of the terminal flows leaving it
// plus the power drawn by its shunt.
TEST(MeasurementFunction, FlowsBalanceInjections) {
  Rng rng(33);
  for (int trial = 0; trial < 20; ++trial) {
    const auto c = trial == 0 ? test::fixture("ieee14")
                              : test::random_case(rng, 3 + static_cast<int>(rng.below(25)));
    const auto ybus = build_ybus(c);
    const auto s = test::random_state(rng, c);
    const auto plan = exhaustive_plan(c);
    const auto z = evaluate_h(s, plan, ybus);
    const auto n = c.bus_count();
    Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    Eigen::VectorXd q = p;
    Eigen::Index k = static_cast<Eigen::Index>(4 * n);
    for (std::size_t b = 0; b < c.branch_count(); ++b) {
      const auto& br = c.branches()[b];
      if (br.status == BranchStatus::Out) continue;
      const auto f = static_cast<Eigen::Index>(c.index_of(br.from_bus));
      const auto t = static_cast<Eigen::Index>(c.index_of(br.to_bus));
      p(f) += z(k++);
      q(f) += z(k++);
      p(t) += z(k++);
      q(t) += z(k++);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      const double v2 = s.v(ii) * s.v(ii);
      const auto& bus = c.buses()[i];
      EXPECT_NEAR(z(static_cast<Eigen::Index>(4 * i + 2)), p(ii) + bus.gs_mw / c.base_mva() * v2, 1e-10);
      EXPECT_NEAR(z(static_cast<Eigen::Index>(4 * i + 3)), q(ii) - bus.bs_mvar / c.base_mva() * v2, 1e-10);
    }
  }
}

TEST(MeasurementJacobian, MatchesCentralDifferencesOnFixtures) {
  Rng rng(34);
  for (const auto& name : test::fixture_names()) {
    const auto c = test::fixture(name);
    const auto ybus = build_ybus(c);
    const auto plan = exhaustive_plan(c);
    for (int probe = 0; probe < 4; ++probe) {
      const auto s = test::random_state(rng, c);
      EXPECT_LT(max_relative_jacobian_error(s, plan, ybus, 1e-6), 1e-6) << name;
    }
  }
}

TEST(MeasurementJacobian, MatchesCentralDifferencesOnRandomCases) {
  Rng rng(35);
  for (int probe = 0; probe < 100; ++probe) {
    const auto c = test::random_case(rng, 2 + static_cast<int>(rng.below(20)));
    const auto ybus = build_ybus(c);
    const auto s = test::random_state(rng, c);
    EXPECT_LT(max_relative_jacobian_error(s, exhaustive_plan(c), ybus, 1e-6), 1e-6) << probe;
  }
}

TEST(MeasurementJacobian, HasNoSlackAngleColumn) {
  const auto c = test::fixture("ieee14");
  const auto plan = default_plan(c, PlanPreset::Full14);
  const auto H = evaluate_H(StateVector::flat(c), plan, build_ybus(c));
  EXPECT_EQ(H.rows(), 64);
  EXPECT_EQ(H.cols(), 27);
}

TEST(EstimationCoordinates, RoundTrip) {
  const auto c = test::fixture("ieee57");
  Rng rng(36);
  const auto s = test::random_state(rng, c);
  const auto x = to_estimation_coordinates(s, c.slack_index());
  EXPECT_EQ(x.size(), 113);
  EXPECT_EQ(from_estimation_coordinates(x, c.slack_index()), s);
}

TEST(Plans, PresetSizesAndObservability) {
  const std::vector<std::tuple<std::string, PlanPreset, std::size_t>> presets{
      {"ieee14", PlanPreset::Minimal14, 32}, {"ieee14", PlanPreset::Full14, 64},
      {"ieee30", PlanPreset::Bench30, 110},  {"ieee57", PlanPreset::Bench57, 216},
      {"case69", PlanPreset::Bench69, 210},  {"ieee118", PlanPreset::Bench118, 562}};
  for (const auto& [name, preset, size] : presets) {
    const auto c = test::fixture(name);
    const auto plan = default_plan(c, preset);
    EXPECT_EQ(plan.size(), size) << to_string(preset);
    EXPECT_EQ(observability_rank(plan, build_ybus(c)), 2 * c.bus_count() - 1) << to_string(preset);
    EXPECT_EQ(parse_plan_preset(to_string(preset)), preset);
  }
}

TEST(Plans, Minimal14Placement) {
  const auto c = test::fixture("ieee14");
  const auto plan = default_plan(c, PlanPreset::Minimal14);
  int pinj = 0, flows = 0;
  for (const auto& s : plan.specs()) {
    if (s.kind == MeasurementKind::Pinj) ++pinj;
    if (s.is_flow()) ++flows;
  }
  EXPECT_EQ(pinj, 7);
  EXPECT_EQ(flows, 16);
}

TEST(Plans, JsonRoundTripAndValidation) {
  const auto c = test::fixture("ieee30");
  const auto plan = default_plan(c, PlanPreset::Bench30);
  const auto back = plan_from_json(plan_to_json(plan), c);
  EXPECT_EQ(back.specs(), plan.specs());
  EXPECT_THROW(MeasurementPlan::create({bus_spec(MeasurementKind::Vmag, 999)}, c), CaseError);
  auto bad = bus_spec(MeasurementKind::Vmag, 1);
  bad.sigma = 0.0;
  EXPECT_THROW(MeasurementPlan::create({bad}, c), CaseError);
  EXPECT_THROW(MeasurementPlan::create({flow_spec(MeasurementKind::Pflow, 500, FlowDirection::FromTo)}, c),
               CaseError);
}

TEST(Plans, LabelsNameTheLocation) {
  const auto c = test::fixture("ieee14");
  const auto plan = MeasurementPlan::create(
      {flow_spec(MeasurementKind::Pflow, *c.find_branch(2, 3), FlowDirection::FromTo)}, c);
  EXPECT_EQ(plan.label(0, c), "Pflow(2->3)");
}

MeasurementVector clean_vector(const std::string& name, PlanPreset preset, std::uint64_t seed) {
  const auto c = test::fixture(name);
  Rng rng(seed);
  return MeasurementVector::complete(
      evaluate_h(test::random_state(rng, c), default_plan(c, preset), build_ybus(c)));
}

TEST(Noise, GaussianMatchesRequestedSnr) {
  const auto clean = clean_vector("ieee118", PlanPreset::Bench118, 41);
  const double power = clean.values.squaredNorm() / static_cast<double>(clean.size());
  for (double snr : {20.0, 35.0, 50.0}) {
    double noise = 0.0;
    std::size_t count = 0;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      const auto noisy = add_gaussian_noise(clean, snr, seed);
      noise += (noisy.values - clean.values).squaredNorm();
      count += clean.size();
    }
    const double measured = 10.0 * std::log10(power / (noise / static_cast<double>(count)));
    EXPECT_NEAR(measured, snr, 0.5);
  }
}

TEST(Noise, GaussianIsDeterministicAndRespectsMask) {
  auto clean = clean_vector("ieee14", PlanPreset::Full14, 42);
  EXPECT_EQ(add_gaussian_noise(clean, 20.0, 5).values, add_gaussian_noise(clean, 20.0, 5).values);
  EXPECT_NE(add_gaussian_noise(clean, 20.0, 5).values, add_gaussian_noise(clean, 20.0, 6).values);
  EXPECT_EQ(add_gaussian_noise(clean, kNoNoise, 5).values, clean.values);

  const auto full = add_gaussian_noise(clean, 20.0, 9);
  clean.mask[3] = false;
  const auto masked = add_gaussian_noise(clean, 20.0, 9);
  EXPECT_EQ(masked.values(3), clean.values(3));
  EXPECT_FALSE(masked.mask[3]);
  EXPECT_EQ(masked.missing_count(), 1u);
  // the mask changes the signal power, so the other entries scale but keep their sign
  for (Eigen::Index k = 0; k < 10; ++k) {
    if (k == 3) continue;
    EXPECT_EQ(std::signbit(masked.values(k) - clean.values(k)), std::signbit(full.values(k) - clean.values(k)));
  }
}

TEST(Noise, BoundedPercentSignPatternAndBound) {
  Rng rng(43);
  for (int trial = 0; trial < 20; ++trial) {
    const auto clean = clean_vector("ieee30", PlanPreset::Bench30, 100 + static_cast<std::uint64_t>(trial));
    const double pct = rng.uniform(0.0, 0.1);
    const auto noisy = add_bounded_percent_noise(clean, pct, rng.below(1000));
    const auto m = static_cast<Eigen::Index>(clean.size());
    for (Eigen::Index k = 0; k < m; ++k) {
      const double e = noisy.values(k) - clean.values(k);
      const double bound = pct * std::abs(clean.values(k)) * (1.0 + 1e-12) + 1e-15;
      EXPECT_LE(std::abs(e), bound);
      if (k < (m + 1) / 2) EXPECT_GE(e, 0.0);
      else EXPECT_LE(e, 0.0);
    }
  }
  const auto clean = clean_vector("ieee14", PlanPreset::Full14, 44);
  EXPECT_EQ(add_bounded_percent_noise(clean, 0.0, 1).values, clean.values);
  EXPECT_THROW(add_bounded_percent_noise(clean, 1.5, 1), Error);
}

}  // namespace
}  // namespace gridstate
