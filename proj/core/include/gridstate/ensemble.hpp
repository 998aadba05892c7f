#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gridstate/measurement.hpp"
#include "gridstate/powerflow.hpp"
#include "gridstate/resnetd_estimator.hpp"

namespace gridstate {

/// Partition of sample indices into base-learner training (40%), meta
/// training (36%) and test (24%) by a seeded shuffle.
struct SplitSpec {
  std::uint64_t seed = 0;
  std::vector<std::size_t> base_train;
  std::vector<std::size_t> meta_train;
  std::vector<std::size_t> test;

  static SplitSpec make(std::size_t count, std::uint64_t seed);
  std::size_t size() const noexcept { return base_train.size() + meta_train.size() + test.size(); }
  bool operator==(const SplitSpec&) const = default;
};

struct EnsembleConfig {
  int learners = 6;
  nn::TrainingConfig training;  // training.seed is the ensemble master seed
  int hidden_width = 0;         // 0: number of measurements
  InputScaling input_scaling = InputScaling::None;
  double ridge = 1e-8;
  unsigned threads = 0;         // 0: hardware concurrency
};

struct MetaFit {
  /// outputs x (features + 1); column 0 is the intercept.
  Eigen::MatrixXd coefficients;
  std::size_t rank = 0;
  bool ridge = false;
};

/// Least squares of `targets` (outputs x N) on [1; features] (features x N)
/// by column-pivoted QR. Falls back to ridge regression with `lambda` when
/// the design matrix is rank deficient.
MetaFit fit_meta(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets, double lambda);

/// RMSE and MAE with magnitudes in percent and angles in degrees.
struct ErrorMetrics {
  double v_rmse_pct = 0.0;
  double v_mae_pct = 0.0;
  double theta_rmse_deg = 0.0;
  double theta_mae_deg = 0.0;
  std::size_t samples = 0;
};

/// `predicted` and `truth` hold stacked states [v; theta] per column.
ErrorMetrics evaluate_states(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& truth);

/// Root mean square over every entry of the difference.
double rmse(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& truth);

/// Meta-learner fit statistics on the meta split.
struct EnsembleDiagnostics {
  double meta_in_sample_rmse = 0.0;
  double uniform_in_sample_rmse = 0.0;
  std::size_t meta_rank = 0;
  bool ridge = false;
};

/// Stacked ResNetD base learners combined by a linear meta-learner.
class EnsembleModel {
 public:
  using Diagnostics = EnsembleDiagnostics;

  EnsembleModel(std::vector<ResNetDEstimator> base, Eigen::MatrixXd meta, SplitSpec split,
                std::size_t slack, Diagnostics diagnostics = {});

  std::size_t learner_count() const noexcept { return base_.size(); }
  std::size_t measurement_count() const noexcept { return static_cast<std::size_t>(base_.front().input_width()); }
  std::size_t bus_count() const noexcept { return static_cast<std::size_t>(base_.front().output_width() / 2); }
  std::size_t slack_index() const noexcept { return slack_; }
  const std::vector<ResNetDEstimator>& base_learners() const noexcept { return base_; }
  const Eigen::MatrixXd& meta() const noexcept { return meta_; }
  const SplitSpec& split() const noexcept { return split_; }
  const Diagnostics& diagnostics() const noexcept { return diagnostics_; }

  /// Concatenated base-learner outputs, (learners * 2n) x N.
  Eigen::MatrixXd base_features(const Eigen::MatrixXd& z) const;
  /// Meta-learner output with the slack angle pinned to zero, 2n x N.
  Eigen::MatrixXd predict(const Eigen::MatrixXd& z) const;
  Eigen::MatrixXd predict_base(std::size_t learner, const Eigen::MatrixXd& z) const;
  Eigen::MatrixXd predict_uniform(const Eigen::MatrixXd& z) const;

  /// Throws MaskedMeasurementError if any channel is unavailable; substitute
  /// forecast pseudo-measurements first.
  StateVector estimate(const MeasurementVector& z) const;

  /// Writes learner_<k>.json, meta.json and split.json into `dir`.
  void save(const std::filesystem::path& dir, std::string_view manifest = {}) const;
  static EnsembleModel load(const std::filesystem::path& dir);

 private:
  Eigen::MatrixXd combine(const Eigen::MatrixXd& features) const;

  std::vector<ResNetDEstimator> base_;
  Eigen::MatrixXd meta_;
  SplitSpec split_;
  std::size_t slack_ = 0;
  Diagnostics diagnostics_;
};

/// Trains `config.learners` base learners on the base split (same data,
/// seeds derived per learner) in parallel, then fits the meta-learner on
/// the meta split. `z` is m x N, `x` is 2n x N; `split` indexes columns.
EnsembleModel train_ensemble(const Eigen::MatrixXd& z, const Eigen::MatrixXd& x,
                             std::size_t slack, const SplitSpec& split,
                             const EnsembleConfig& config);

/// Evaluates the ensemble on the given samples.
ErrorMetrics evaluate(const EnsembleModel& model, const Eigen::MatrixXd& z, const Eigen::MatrixXd& x);

/// Columns of `m` at `indices`.
Eigen::MatrixXd select_columns(const Eigen::MatrixXd& m, const std::vector<std::size_t>& indices);

}  // namespace gridstate
