#include <gtest/gtest.h>

#include "gridstate/error.hpp"
#include "gridstate/wls.hpp"
#include "support.hpp"

namespace gridstate {
namespace {

struct Fixture {
  std::string name;
  PlanPreset preset;
};

const std::vector<Fixture> kBenchmarks{{"ieee14", PlanPreset::Full14},
                                       {"ieee30", PlanPreset::Bench30},
                                       {"ieee57", PlanPreset::Bench57},
                                       {"ieee118", PlanPreset::Bench118},
                                       {"case69", PlanPreset::Bench69}};

TEST(Wls, RecoversPowerFlowStateFromNoiselessMeasurements) {
  for (const auto& f : kBenchmarks) {
    const auto c = test::fixture(f.name);
    const auto ybus = build_ybus(c);
    const auto plan = default_plan(c, f.preset);
    for (double factor : {0.6, 1.0}) {
      const auto pf = solve_power_flow(c, ybus, LoadScenario::uniform(c.bus_count(), factor));
      ASSERT_TRUE(pf.converged) << f.name;
      const auto z = MeasurementVector::complete(evaluate_h(pf.state, plan, ybus));
      const auto est = estimate_wls(z, plan, ybus);
      EXPECT_TRUE(est.converged) << f.name;
      EXPECT_LE(est.iterations, 10) << f.name;
      EXPECT_LT((est.state.v - pf.state.v).cwiseAbs().maxCoeff(), 1e-6) << f.name;
      EXPECT_LT((est.state.theta - pf.state.theta).cwiseAbs().maxCoeff(), 1e-6) << f.name;
      EXPECT_LT(est.objective, 1e-10) << f.name;
    }
  }
}

TEST(Wls, ObjectiveHistoryNeverIncreases) {
  const auto c = test::fixture("ieee30");
  const auto ybus = build_ybus(c);
  const auto plan = default_plan(c, PlanPreset::Bench30);
  const auto pf = solve_power_flow(c, ybus, LoadScenario::uniform(c.bus_count(), 0.9));
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto z = add_gaussian_noise(MeasurementVector::complete(evaluate_h(pf.state, plan, ybus)), 30.0, seed);
    const auto est = estimate_wls(z, plan, ybus);
    ASSERT_TRUE(est.converged);
    ASSERT_GE(est.objective_history.size(), 2u);
    for (std::size_t k = 1; k < est.objective_history.size(); ++k)
      EXPECT_LE(est.objective_history[k], est.objective_history[k - 1] * (1.0 + 1e-12));
    EXPECT_DOUBLE_EQ(est.objective, est.objective_history.back());
    EXPECT_NEAR(est.objective, objective(z.values, est.state, plan, ybus, WeightMatrix::from_plan(plan)),
                1e-9 * std::max(1.0, est.objective));
  }
}

// With noise drawn from the plan's own standard errors, 2 J at the optimum is
// chi-square with m - (2n - 1) degrees of freedom.
TEST(Wls, ObjectiveFollowsChiSquareUnderPlanNoise) {
  const auto c = test::fixture("ieee14");
  const auto ybus = build_ybus(c);
  const auto plan = default_plan(c, PlanPreset::Full14);
  const auto pf = solve_power_flow(c, ybus, LoadScenario::uniform(c.bus_count(), 1.0));
  const Eigen::VectorXd clean = evaluate_h(pf.state, plan, ybus);
  const Eigen::VectorXd sigma = plan.sigmas();
  const double dof = static_cast<double>(plan.size() - plan.state_dimension());
  Rng rng(51);
  const int trials = 60;
  double total = 0.0;
  for (int t = 0; t < trials; ++t) {
    Eigen::VectorXd z = clean;
    for (Eigen::Index k = 0; k < z.size(); ++k) z(k) += sigma(k) * rng.normal();
    const auto est = estimate_wls(MeasurementVector::complete(z), plan, ybus);
    ASSERT_TRUE(est.converged);
    total += 2.0 * est.objective;
  }
  // the sample mean has standard deviation sqrt(2 dof / trials)
  EXPECT_NEAR(total / trials, dof, 4.0 * std::sqrt(2.0 * dof / trials));
}

TEST(Wls, WeightsAreInverseVariances) {
  const auto c = test::fixture("ieee14");
  const auto plan = default_plan(c, PlanPreset::Minimal14);
  const auto w = WeightMatrix::from_plan(plan);
  for (std::size_t k = 0; k < plan.size(); ++k)
    EXPECT_DOUBLE_EQ(w.diagonal(static_cast<Eigen::Index>(k)), 1.0 / (plan[k].sigma * plan[k].sigma));
}

TEST(Wls, RejectsMaskedMeasurements) {
  const auto c = test::fixture("ieee14");
  const auto ybus = build_ybus(c);
  const auto plan = default_plan(c, PlanPreset::Full14);
  auto z = MeasurementVector::complete(evaluate_h(StateVector::flat(c), plan, ybus));
  z.mask[10] = false;
  EXPECT_THROW(estimate_wls(z, plan, ybus), MaskedMeasurementError);
}

TEST(Wls, RejectsUnobservablePlan) {
  const auto c = test::fixture("ieee14");
  const auto ybus = build_ybus(c);
  std::vector<MeasurementSpec> specs;
  for (const auto& b : c.buses()) {
    MeasurementSpec s;
    s.kind = MeasurementKind::Vmag;
    s.bus = b.id;
    specs.push_back(s);
  }
  const auto plan = MeasurementPlan::create(specs, c);
  const auto z = MeasurementVector::complete(evaluate_h(StateVector::flat(c), plan, ybus));
  EXPECT_THROW(estimate_wls(z, plan, ybus), SingularMatrixError);
  EXPECT_LT(observability_rank(plan, ybus), 2 * c.bus_count() - 1);
}

TEST(Wls, RecoversRandomStatesOnRandomNetworks) {
  Rng rng(52);
  int checked = 0;
  for (int trial = 0; trial < 30; ++trial) {
    const auto c = test::random_case(rng, 3 + static_cast<int>(rng.below(20)));
    const auto ybus = build_ybus(c);
    std::vector<MeasurementSpec> specs;
    for (const auto& b : c.buses()) {
      for (auto kind : {MeasurementKind::Vmag, MeasurementKind::Pinj, MeasurementKind::Qinj}) {
        MeasurementSpec s;
        s.kind = kind;
        s.bus = b.id;
        specs.push_back(s);
      }
    }
    for (std::size_t k = 0; k < c.branch_count(); ++k) {
      for (auto kind : {MeasurementKind::Pflow, MeasurementKind::Qflow}) {
        MeasurementSpec s;
        s.kind = kind;
        s.branch = k;
        specs.push_back(s);
      }
    }
    const auto plan = MeasurementPlan::create(specs, c);
    const auto truth = test::random_state(rng, c, 0.03);
    const auto est = estimate_wls(MeasurementVector::complete(evaluate_h(truth, plan, ybus)), plan, ybus);
    if (!est.converged) continue;
    ++checked;
    EXPECT_LT((est.state.stacked() - truth.stacked()).cwiseAbs().maxCoeff(), 1e-6);
  }
  EXPECT_GE(checked, 27);
}

}  // namespace
}  // namespace gridstate
