#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gridstate/dataset.hpp"
#include "gridstate/ensemble.hpp"
#include "gridstate/manifest.hpp"
#include "gridstate/profile.hpp"

namespace gridstate {

struct ExperimentConfig {
  std::uint64_t seed = 1;
  unsigned threads = 0;

  std::filesystem::path case_file;
  std::string plan = "full14";  // preset name or path to a plan JSON

  std::size_t hours = 4000;
  std::optional<std::filesystem::path> profile_file;
  ProfileParams profile;

  NoiseMode noise_mode = NoiseMode::Gaussian;
  double train_snr_db = 50.0;
  double test_snr_db = 20.0;
  double max_pct = 0.03;

  EnsembleConfig ensemble;  // training.seed is derived from `seed`

  int forecast_lags = 24;
  double missing_fraction = 0.10;

  std::filesystem::path output_dir = "run";

  NoiseConfig train_noise() const;
  NoiseConfig test_noise() const;
  /// Canonical JSON of every setting that affects results (paths excluded;
  /// input files enter the manifest by content hash).
  std::string canonical_json() const;
};

/// Parses TOML. Relative paths resolve against `base_dir`. Unknown keys are
/// rejected. Errors carry the "config" stage.
ExperimentConfig parse_experiment_config(std::string_view toml_text, const std::filesystem::path& base_dir,
                                         std::string_view source = "config");
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Replaces the seed with the value of GRIDSTATE_SEED when it is set.
void apply_seed_override(ExperimentConfig& config);

struct MissingPathMetrics {
  ErrorMetrics with_pseudo;  // masked channels replaced by forecast pseudo-measurements
  ErrorMetrics full;         // same samples, every channel available
  std::size_t masked_channels = 0;
};

struct ExperimentResult {
  ErrorMetrics ensemble;
  ErrorMetrics uniform;
  std::vector<ErrorMetrics> base;
  double meta_in_sample_rmse = 0.0;
  double uniform_in_sample_rmse = 0.0;
  bool meta_ridge = false;
  MissingPathMetrics missing;
  std::size_t samples = 0;
  std::size_t test_samples = 0;
  std::size_t skipped_hours = 0;
  double latency_ms = 0.0;
  RunManifest manifest;

  ErrorMetrics best_base() const;  // per-quantity minimum over base learners
};

/// Generates the dataset, trains the ensemble, evaluates on the test split
/// with test-time noise, fits the forecaster and runs the masked-channel
/// path, then writes every artifact into config.output_dir:
///   profile.csv, plan.json, dataset.csv, dataset.truth.csv, model/,
///   forecast.json, metrics.csv, report.md, manifest.json
/// Failures are rethrown as StageError naming the stage.
ExperimentResult run_experiment(const ExperimentConfig& config);

std::string metrics_to_csv(const ExperimentResult& result);
std::string report_markdown(const ExperimentResult& result);

/// Loads a plan given as a preset name or a JSON file path.
MeasurementPlan resolve_plan(std::string_view plan, const NetworkCase& network);

}  // namespace gridstate
