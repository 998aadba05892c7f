#include <cstdlib>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "gridstate/error.hpp"
#include "gridstate/experiment.hpp"
#include "support.hpp"

namespace gridstate {
namespace {

std::string small_config(const std::filesystem::path& out) {
  std::ostringstream s;
  s << "seed = 5\nthreads = 2\n"
    << "[case]\nfile = \"" << (test::data_dir() / "cases" / "ieee14.json").string() << "\"\nplan = \"full14\"\n"
    << "[profile]\nhours = 240\n"
    << "[noise]\nmode = \"gaussian\"\ntrain_snr_db = 50.0\ntest_snr_db = 20.0\n"
    << "[training]\nlearners = 2\nepochs = 3\nbatch_size = 32\n"
    << "[forecast]\nlags = 24\nmissing_fraction = 0.1\n"
    << "[output]\ndir = \"" << out.string() << "\"\n";
  return s.str();
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

template <typename F>
std::string stage_of(F&& f) {
  try {
    f();
  } catch (const StageError& e) {
    return e.stage();
  }
  return "none";
}

TEST(Config, ParsesEverySection) {
  const auto c = parse_experiment_config(small_config("/tmp/x"), "/");
  EXPECT_EQ(c.seed, 5u);
  EXPECT_EQ(c.threads, 2u);
  EXPECT_EQ(c.plan, "full14");
  EXPECT_EQ(c.hours, 240u);
  EXPECT_EQ(c.ensemble.learners, 2);
  EXPECT_EQ(c.ensemble.training.epochs, 3);
  EXPECT_EQ(c.test_noise().snr_db, 20.0);
  EXPECT_EQ(c.train_noise().snr_db, 50.0);
  EXPECT_EQ(c.forecast_lags, 24);
  EXPECT_EQ(c.output_dir, "/tmp/x");
}

TEST(Config, ShippedDeskConfigLoads) {
  const auto c = load_experiment_config(test::data_dir().parent_path() / "configs" / "desk14.toml");
  EXPECT_EQ(c.hours, 4000u);
  EXPECT_EQ(c.ensemble.learners, 6);
  EXPECT_EQ(c.ensemble.training.epochs, 200);
  EXPECT_EQ(c.ensemble.input_scaling, InputScaling::None);
  EXPECT_TRUE(std::filesystem::exists(c.case_file));
}

TEST(Config, RelativePathsResolveAgainstConfigDirectory) {
  const auto c = parse_experiment_config("[case]\nfile = \"cases/x.json\"\n", "/data/base");
  EXPECT_EQ(c.case_file, std::filesystem::path("/data/base/cases/x.json"));
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_EQ(stage_of([] { parse_experiment_config("[case]\nfile = \"a\"\ncolour = 1\n", "/"); }), "config");
  EXPECT_EQ(stage_of([] { parse_experiment_config("[case]\nfile = \"a\"\n[extra]\n", "/"); }), "config");
  EXPECT_EQ(stage_of([] { parse_experiment_config("[case]\nfile = \"a\"\n[noise]\nmode = \"pink\"\n", "/"); }), "config");
  EXPECT_EQ(stage_of([] { parse_experiment_config("[case]\nfile = \"a\"\n[profile]\nhours = 10\n", "/"); }), "config");
  EXPECT_EQ(stage_of([] { parse_experiment_config("seed = -1\n[case]\nfile = \"a\"\n", "/"); }), "config");
  EXPECT_EQ(stage_of([] { parse_experiment_config("[case\n", "/"); }), "config");
  EXPECT_EQ(stage_of([] { parse_experiment_config("seed = 1\n", "/"); }), "config");
}

TEST(Config, SeedOverrideFromEnvironment) {
  auto c = parse_experiment_config(small_config("/tmp/x"), "/");
  ::setenv("GRIDSTATE_SEED", "991", 1);
  apply_seed_override(c);
  EXPECT_EQ(c.seed, 991u);
  ::setenv("GRIDSTATE_SEED", "12abc", 1);
  EXPECT_EQ(stage_of([&] { apply_seed_override(c); }), "config");
  ::unsetenv("GRIDSTATE_SEED");
  apply_seed_override(c);
  EXPECT_EQ(c.seed, 991u);
}

TEST(Config, CanonicalJsonExcludesPaths) {
  const auto a = parse_experiment_config(small_config("/tmp/a"), "/");
  const auto b = parse_experiment_config(small_config("/tmp/b"), "/");
  EXPECT_EQ(a.canonical_json(), b.canonical_json());
  auto c = a;
  c.ensemble.training.learning_rate = 0.01;
  EXPECT_NE(a.canonical_json(), c.canonical_json());
}

TEST(Experiment, MissingCaseFileIsAttributedToCaseStage) {
  auto c = parse_experiment_config(small_config(test::scratch_dir("exp_missing")), "/");
  c.case_file = "/nonexistent/case.json";
  EXPECT_EQ(stage_of([&] { run_experiment(c); }), "case");
}

TEST(Experiment, UnknownPlanIsAttributedToPlanStage) {
  auto c = parse_experiment_config(small_config(test::scratch_dir("exp_plan")), "/");
  c.plan = "bench999";
  EXPECT_EQ(stage_of([&] { run_experiment(c); }), "plan");
}

TEST(Experiment, SmallRunWritesEveryArtifactDeterministically) {
  const auto dir_a = test::scratch_dir("exp_a");
  const auto dir_b = test::scratch_dir("exp_b");
  const auto a = run_experiment(parse_experiment_config(small_config(dir_a), "/"));
  for (const char* f : {"profile.csv", "plan.json", "dataset.csv", "dataset.truth.csv", "model/meta.json",
                        "model/split.json", "model/learner_0.json", "model/learner_1.json", "forecast.json",
                        "metrics.csv", "report.md", "manifest.json"})
    EXPECT_TRUE(std::filesystem::exists(dir_a / f)) << f;

  EXPECT_EQ(a.samples, 240u);
  EXPECT_EQ(a.test_samples, 240u - 96u - 86u);
  EXPECT_EQ(a.base.size(), 2u);
  EXPECT_LE(a.meta_in_sample_rmse, a.uniform_in_sample_rmse);
  EXPECT_GT(a.missing.masked_channels, 0u);
  EXPECT_GT(a.latency_ms, 0.0);

  const auto metrics = read_file(dir_a / "metrics.csv");
  EXPECT_EQ(metrics.rfind("# manifest=" + a.manifest.hash() + "\nmetric,value\n", 0), 0u);
  EXPECT_NE(metrics.find("\nensemble_v_rmse_pct,"), std::string::npos);
  EXPECT_NE(metrics.find("\nmissing_pseudo_theta_rmse_deg,"), std::string::npos);
  EXPECT_EQ(metrics, metrics_to_csv(a));

  const auto b = run_experiment(parse_experiment_config(small_config(dir_b), "/"));
  EXPECT_EQ(b.manifest.hash(), a.manifest.hash());
  for (const char* f : {"metrics.csv", "model/meta.json", "model/learner_0.json", "model/learner_1.json",
                        "model/split.json", "forecast.json", "dataset.csv", "profile.csv"})
    EXPECT_EQ(read_file(dir_a / f), read_file(dir_b / f)) << f;

  const auto model = EnsembleModel::load(dir_a / "model");
  EXPECT_EQ(model.learner_count(), 2u);
  EXPECT_NE(report_markdown(a).find("| stacked ensemble |"), std::string::npos);
  std::filesystem::remove_all(dir_a);
  std::filesystem::remove_all(dir_b);
}

TEST(Experiment, ResolvePlanAcceptsPresetOrFile) {
  const auto c = test::fixture("ieee14");
  EXPECT_EQ(resolve_plan("minimal14", c).size(), 32u);
  const auto dir = test::scratch_dir("plan_file");
  {
    std::ofstream out(dir / "p.json");
    out << plan_to_json(default_plan(c, PlanPreset::Minimal14));
  }
  EXPECT_EQ(resolve_plan((dir / "p.json").string(), c).size(), 32u);
  EXPECT_THROW(resolve_plan((dir / "q.json").string(), c), Error);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace gridstate
