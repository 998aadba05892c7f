#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gridstate/neural.hpp"

namespace gridstate {

enum class InputScaling {
  None,    // measurements enter the network as they are (pu / rad)
  ZScore,  // per-feature training mean and standard deviation
};

std::string_view to_string(InputScaling s);
InputScaling parse_input_scaling(std::string_view s);

/// Affine input map (z - mean) / scale, per feature. Features with zero
/// spread keep scale 1.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  /// Statistics over the columns of `samples`.
  static Standardizer fit(const Eigen::MatrixXd& samples);
  static Standardizer identity(Eigen::Index width);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& samples) const;
  bool operator==(const Standardizer& o) const { return mean == o.mean && scale == o.scale; }
};

/// One ResNetD base learner with its input scaling and angle shift.
///
/// Inputs are measurement vectors (one per column); outputs are stacked
/// states [v; theta] in pu and rad. The network itself predicts
/// [v; theta - angle_offset], which is nonnegative whenever
/// angle_offset <= min(theta).
class ResNetDEstimator {
 public:
  ResNetDEstimator(nn::ResNetD network, Standardizer inputs, double angle_offset,
                   std::vector<double> loss_history = {});

  /// Trains on measurements `z` (m x N) against states `x` (2n x N). The
  /// hidden width defaults to m. The head starts at zero weights with its
  /// bias at the mean shifted target; every other layer is He-uniform.
  static ResNetDEstimator train(const Eigen::MatrixXd& z, const Eigen::MatrixXd& x,
                                const nn::TrainingConfig& config, int hidden_width = 0,
                                InputScaling scaling = InputScaling::None);

  /// He-uniform network with identity scaling and no training.
  static ResNetDEstimator untrained(const nn::Architecture& arch, std::uint64_t seed);

  Eigen::MatrixXd predict(const Eigen::MatrixXd& z) const;
  Eigen::VectorXd predict(const Eigen::VectorXd& z) const;

  const nn::ResNetD& network() const noexcept { return network_; }
  const Standardizer& standardizer() const noexcept { return inputs_; }
  double angle_offset() const noexcept { return angle_offset_; }
  const std::vector<double>& loss_history() const noexcept { return loss_history_; }
  int input_width() const noexcept { return network_.architecture().input_width; }
  int output_width() const noexcept { return network_.architecture().output_width; }

  /// Versioned JSON document; `manifest` is recorded verbatim when nonempty.
  std::string to_json(std::string_view manifest = {}) const;
  static ResNetDEstimator from_json(std::string_view text);

  bool operator==(const ResNetDEstimator& o) const;

 private:
  nn::ResNetD network_;
  Standardizer inputs_;
  double angle_offset_ = 0.0;
  std::vector<double> loss_history_;
};

}  // namespace gridstate
