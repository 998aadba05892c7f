#include <filesystem>
#include <string>

#include <benchmark/benchmark.h>

#include "gridstate/ensemble.hpp"
#include "gridstate/forecaster.hpp"
#include "gridstate/measurement.hpp"
#include "gridstate/neural.hpp"
#include "gridstate/powerflow.hpp"
#include "gridstate/wls.hpp"

namespace {

using namespace gridstate;

struct System {
  const char* file;
  PlanPreset preset;
};

const System kSystems[] = {{"ieee14", PlanPreset::Full14},
                           {"ieee30", PlanPreset::Bench30},
                           {"ieee57", PlanPreset::Bench57},
                           {"ieee118", PlanPreset::Bench118}};

NetworkCase load(std::int64_t which) {
  return load_case(std::filesystem::path(GRIDSTATE_BENCH_DATA) / "cases" /
                   (std::string(kSystems[which].file) + ".json"));
}

void BM_BuildYbus(benchmark::State& state) {
  const auto c = load(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(build_ybus(c));
  state.SetLabel(kSystems[state.range(0)].file);
}
BENCHMARK(BM_BuildYbus)->DenseRange(0, 3);

void BM_PowerFlow(benchmark::State& state) {
  const auto c = load(state.range(0));
  const auto ybus = build_ybus(c);
  const auto scenario = LoadScenario::uniform(c.bus_count(), 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(solve_power_flow(c, ybus, scenario));
  state.SetLabel(kSystems[state.range(0)].file);
}
BENCHMARK(BM_PowerFlow)->DenseRange(0, 3)->Unit(benchmark::kMicrosecond);

void BM_MeasurementJacobian(benchmark::State& state) {
  const auto c = load(state.range(0));
  const auto ybus = build_ybus(c);
  const auto plan = default_plan(c, kSystems[state.range(0)].preset);
  const auto s = solve_power_flow(c, ybus, LoadScenario::uniform(c.bus_count(), 1.0)).state;
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_H(s, plan, ybus));
  state.SetLabel(kSystems[state.range(0)].file);
}
BENCHMARK(BM_MeasurementJacobian)->DenseRange(0, 3)->Unit(benchmark::kMicrosecond);

void BM_Wls(benchmark::State& state) {
  const auto c = load(state.range(0));
  const auto ybus = build_ybus(c);
  const auto plan = default_plan(c, kSystems[state.range(0)].preset);
  const auto s = solve_power_flow(c, ybus, LoadScenario::uniform(c.bus_count(), 1.0)).state;
  const auto z = add_gaussian_noise(MeasurementVector::complete(evaluate_h(s, plan, ybus)), 50.0, 1);
  for (auto _ : state) benchmark::DoNotOptimize(estimate_wls(z, plan, ybus));
  state.SetLabel(kSystems[state.range(0)].file);
}
BENCHMARK(BM_Wls)->DenseRange(0, 3)->Unit(benchmark::kMicrosecond);

void BM_BackwardBatch64(benchmark::State& state) {
  const auto m = static_cast<int>(state.range(0));
  const auto arch = nn::Architecture::for_system(m, m / 4);
  const auto net = nn::ResNetD::he_uniform(arch, 1);
  const Eigen::MatrixXd z = Eigen::MatrixXd::Random(m, 64);
  const Eigen::MatrixXd y = Eigen::MatrixXd::Random(arch.output_width, 64).cwiseAbs();
  for (auto _ : state) benchmark::DoNotOptimize(nn::backward(net, z, y, 1.0));
}
BENCHMARK(BM_BackwardBatch64)->Arg(64)->Arg(216)->Unit(benchmark::kMicrosecond);

// Inference cost does not depend on parameter values, so an untrained
// ensemble with the production architecture stands in for a trained one.
EnsembleModel untrained_ensemble(const NetworkCase& c, const MeasurementPlan& plan) {
  const auto m = static_cast<int>(plan.size());
  const auto n = static_cast<int>(c.bus_count());
  std::vector<ResNetDEstimator> learners;
  for (int k = 0; k < 6; ++k)
    learners.push_back(ResNetDEstimator::untrained(nn::Architecture::for_system(m, n), static_cast<std::uint64_t>(k)));
  Eigen::MatrixXd meta = Eigen::MatrixXd::Random(2 * n, 6 * 2 * n + 1);
  return EnsembleModel(std::move(learners), std::move(meta), SplitSpec{}, c.slack_index());
}

void BM_EnsembleEstimate(benchmark::State& state) {
  const auto c = load(state.range(0));
  const auto plan = default_plan(c, kSystems[state.range(0)].preset);
  const auto model = untrained_ensemble(c, plan);
  const auto ybus = build_ybus(c);
  const auto s = solve_power_flow(c, ybus, LoadScenario::uniform(c.bus_count(), 1.0)).state;
  const auto z = MeasurementVector::complete(evaluate_h(s, plan, ybus));
  for (auto _ : state) benchmark::DoNotOptimize(model.estimate(z));
  state.SetLabel(kSystems[state.range(0)].file);
}
BENCHMARK(BM_EnsembleEstimate)->DenseRange(0, 3)->Unit(benchmark::kMicrosecond);

void BM_ForecastFit(benchmark::State& state) {
  const auto c = load(0);
  const auto ybus = build_ybus(c);
  std::vector<StateVector> history;
  for (int t = 0; t < 1600; ++t) {
    const double f = 0.7 + 0.2 * std::sin(t * 0.2618);
    history.push_back(solve_power_flow(c, ybus, LoadScenario::uniform(c.bus_count(), f)).state);
  }
  for (auto _ : state) benchmark::DoNotOptimize(fit_forecaster(history));
}
BENCHMARK(BM_ForecastFit)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
