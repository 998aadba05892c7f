#include <gtest/gtest.h>

#include "gridstate/dataset.hpp"
#include "gridstate/error.hpp"
#include "support.hpp"

namespace gridstate {
namespace {

struct Small {
  NetworkCase network = test::fixture("ieee14");
  MeasurementPlan plan = default_plan(network, PlanPreset::Full14);
  LoadProfile profile = synth_profile(48, 3);
};

DatasetConfig config_with(double snr_db, unsigned threads = 0) {
  DatasetConfig c;
  c.noise.snr_db = snr_db;
  c.seed = 77;
  c.threads = threads;
  return c;
}

TEST(Dataset, GeneratesOneRowPerHour) {
  const Small s;
  const auto d = generate_dataset(s.network, s.plan, s.profile, config_with(50.0));
  ASSERT_EQ(d.rows.size(), 48u);
  EXPECT_TRUE(d.skipped.empty());
  EXPECT_EQ(d.measurements, 64u);
  EXPECT_EQ(d.buses, 14u);
  for (std::size_t t = 0; t < d.rows.size(); ++t) EXPECT_EQ(d.rows[t].t, static_cast<std::int64_t>(t));
  EXPECT_EQ(d.noisy().cols(), 48);
  EXPECT_EQ(d.labels().rows(), 28);
  const auto ybus = build_ybus(s.network);
  EXPECT_EQ(d.rows[5].z_clean, evaluate_h(d.rows[5].x_true, s.plan, ybus));
  EXPECT_NE(d.rows[5].z_noisy, d.rows[5].z_clean);
}

TEST(Dataset, NoiselessLabelsMatchPowerFlow) {
  const Small s;
  const auto d = generate_dataset(s.network, s.plan, s.profile, config_with(kNoNoise));
  for (const auto& row : d.rows) {
    EXPECT_EQ(row.z_noisy, row.z_clean);
    EXPECT_LT((row.x_wls.stacked() - row.x_true.stacked()).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(Dataset, LoadFollowsProfile) {
  const Small s;
  const auto d = generate_dataset(s.network, s.plan, s.profile, config_with(kNoNoise));
  // the slack angle is the reference, so heavier load means larger angle spread
  std::size_t peak = 0, trough = 0;
  for (std::size_t t = 0; t < 48; ++t) {
    if (s.profile.values[t] > s.profile.values[peak]) peak = t;
    if (s.profile.values[t] < s.profile.values[trough]) trough = t;
  }
  EXPECT_LT(d.rows[peak].x_true.theta.minCoeff(), d.rows[trough].x_true.theta.minCoeff());
}

TEST(Dataset, IndependentOfThreadCount) {
  const Small s;
  const auto a = generate_dataset(s.network, s.plan, s.profile, config_with(30.0, 1));
  const auto b = generate_dataset(s.network, s.plan, s.profile, config_with(30.0, 4));
  EXPECT_EQ(dataset_to_csv(a, false), dataset_to_csv(b, false));
  EXPECT_EQ(dataset_to_csv(a, true), dataset_to_csv(b, true));
}

TEST(Dataset, BoundedNoiseMode) {
  const Small s;
  auto cfg = config_with(0.0);
  cfg.noise.mode = NoiseMode::BoundedPercent;
  cfg.noise.max_pct = 0.02;
  const auto d = generate_dataset(s.network, s.plan, s.profile, cfg);
  for (const auto& row : d.rows)
    EXPECT_LE(((row.z_noisy - row.z_clean).cwiseAbs() - 0.02 * row.z_clean.cwiseAbs()).maxCoeff(), 1e-15);
  EXPECT_EQ(parse_noise_mode("bounded"), NoiseMode::BoundedPercent);
  EXPECT_EQ(to_string(NoiseMode::Gaussian), "gaussian");
  EXPECT_THROW(parse_noise_mode("uniform"), Error);
}

TEST(Dataset, TooManyFailedHoursIsAStageError) {
  const Small s;
  LoadProfile heavy = s.profile;
  for (auto& v : heavy.values) v *= 40.0;  // far beyond the network's transfer limits
  try {
    generate_dataset(s.network, s.plan, heavy, config_with(50.0));
    FAIL() << "expected StageError";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "dataset");
  }
}

TEST(DatasetCsv, RoundTripIsLossless) {
  const Small s;
  const auto d = generate_dataset(s.network, s.plan, s.profile, config_with(40.0));
  const auto dir = test::scratch_dir("dataset_csv");
  write_dataset(d, dir / "data.csv", "cafe");
  EXPECT_TRUE(std::filesystem::exists(dir / "data.truth.csv"));
  EXPECT_EQ(truth_path(dir / "data.csv"), dir / "data.truth.csv");
  const auto back = read_dataset(dir / "data.csv");
  ASSERT_EQ(back.rows.size(), d.rows.size());
  EXPECT_EQ(back.noisy(), d.noisy());
  EXPECT_EQ(back.clean(), d.clean());
  EXPECT_EQ(back.labels(), d.labels());
  EXPECT_EQ(back.truth(), d.truth());
  EXPECT_EQ(dataset_to_csv(back, false, "cafe"), dataset_to_csv(d, false, "cafe"));
  std::filesystem::remove_all(dir);
}

TEST(DatasetCsv, HeaderLayout) {
  const Small s;
  const auto d = generate_dataset(s.network, s.plan, s.profile, config_with(40.0));
  const auto text = dataset_to_csv(d, false, "abc");
  EXPECT_EQ(text.rfind("# manifest=abc\nt,z_1,", 0), 0u);
  const auto table = parse_csv(text);
  EXPECT_EQ(table.header.size(), 1u + 64u + 28u);
  EXPECT_EQ(table.column("v_1"), 65);
  EXPECT_EQ(table.column("theta_14"), 92);
  EXPECT_EQ(table.column("nope"), -1);
}

TEST(DatasetCsv, NanCellsBecomeMaskedChannels) {
  const auto table = parse_csv("t,z_1,z_2,z_3\n0,1.5,,2\n1,nan,3,4\n");
  const auto z = measurements_from_table(table);
  ASSERT_EQ(z.size(), 2u);
  EXPECT_EQ(z[0].mask, (std::vector<bool>{true, false, true}));
  EXPECT_EQ(z[1].mask, (std::vector<bool>{false, true, true}));
  EXPECT_EQ(z[1].timestamp, 1);
  EXPECT_EQ(z[0].values(0), 1.5);
}

TEST(DatasetCsv, StatesFromTable) {
  const auto table = parse_csv("v_1,v_2,theta_1,theta_2\n1.0,0.98,0,-0.1\n");
  const auto states = states_from_table(table);
  ASSERT_EQ(states.size(), 1u);
  EXPECT_EQ(states[0].v(1), 0.98);
  EXPECT_EQ(states[0].theta(1), -0.1);
  EXPECT_THROW(states_from_table(parse_csv("z_1\n1\n")), Error);
}

TEST(DatasetCsv, MalformedInputNamesTheLine) {
  try {
    parse_csv("a,b\n1,2\n3\n", "bad.csv");
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("bad.csv"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_csv("a,b\n1,x\n"), Error);
}

}  // namespace
}  // namespace gridstate
