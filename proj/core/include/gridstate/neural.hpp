#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace gridstate::nn {

enum class Activation { ReLU, Identity };

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd biases;   // out
  Activation activation = Activation::ReLU;

  Eigen::Index inputs() const noexcept { return weights.cols(); }
  Eigen::Index outputs() const noexcept { return weights.rows(); }
};

/// Shape of a dense residual network (ResNetD).
///
///   h_0     = relu(W_in z + b_in)
///   u       = relu(W_{b,K} ... relu(W_{b,1} h_b + b_{b,1}) ... + b_{b,K})
///   p       = relu(P_b z + c_b)                         (input projection)
///   h_{b+1} = u + h_b + p                               (merge by sum)
///   x       = relu(W_out h_B + b_out)
///
/// Input and hidden layers are `hidden_width` wide; the output is
/// `output_width` (2n states).
struct Architecture {
  int input_width = 0;
  int hidden_width = 0;
  int output_width = 0;
  int blocks = 3;
  int layers_per_block = 2;

  /// Default configuration for m measurements and n buses: hidden width m.
  static Architecture for_system(int measurements, int buses) {
    return {measurements, measurements, 2 * buses, 3, 2};
  }

  std::size_t layer_count() const noexcept {
    return 2 + static_cast<std::size_t>(blocks) * static_cast<std::size_t>(layers_per_block + 1);
  }
  std::size_t parameter_count() const noexcept;
  bool operator==(const Architecture&) const = default;
};

/// Reverse-mode gradient with the same layout as the network's layers.
struct Gradient {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

class ResNetD {
 public:
  /// All-zero parameters, ReLU everywhere.
  explicit ResNetD(const Architecture& arch);

  /// He-uniform weights (U(+-sqrt(6/fan_in))), zero biases.
  static ResNetD he_uniform(const Architecture& arch, std::uint64_t seed);

  const Architecture& architecture() const noexcept { return arch_; }

  // Layer order: input layer, then per block the K path layers followed by
  // the input projection, then the output head. Flat parameter arrays
  // follow the same order, each layer contributing its weights row-major
  // followed by its biases.
  std::vector<DenseLayer>& layers() noexcept { return layers_; }
  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  DenseLayer& input_layer() { return layers_.front(); }
  DenseLayer& path(int block, int i) { return layers_[path_index(block, i)]; }
  DenseLayer& projection(int block) { return layers_[projection_index(block)]; }
  DenseLayer& head() { return layers_.back(); }
  std::size_t path_index(int block, int i) const {
    return 1 + static_cast<std::size_t>(block * (arch_.layers_per_block + 1) + i);
  }
  std::size_t projection_index(int block) const { return path_index(block, arch_.layers_per_block); }

  /// Single sample; throws ShapeError on width mismatch.
  Eigen::VectorXd forward(const Eigen::VectorXd& z) const;
  /// Batch with one sample per column.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& batch) const;

  std::size_t parameter_count() const noexcept { return arch_.parameter_count(); }
  std::vector<double> flat_parameters() const;
  void set_flat_parameters(std::span<const double> values);

  /// Applies params -= step (used by optimizers and finite-difference tests).
  void apply_update(const Gradient& step);

  Gradient zero_gradient() const;

  bool operator==(const ResNetD& other) const;

 private:
  Architecture arch_;
  std::vector<DenseLayer> layers_;
};

/// Huber loss: r^2/2 for |r| <= delta, delta (|r| - delta/2) otherwise.
double huber(double r, double delta) noexcept;

/// Mean over samples (columns) of the Huber loss summed over outputs.
double loss(const ResNetD& net, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
            double delta);

struct LossGradient {
  double loss = 0.0;
  Gradient gradient;
};

/// Loss and its gradient with respect to every parameter for one batch
/// (one sample per column). Throws ShapeError on mismatched widths or an
/// empty batch.
LossGradient backward(const ResNetD& net, const Eigen::MatrixXd& inputs,
                      const Eigen::MatrixXd& targets, double delta);

struct TrainingConfig {
  int epochs = 200;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double huber_delta = 1.0;
  std::uint64_t seed = 0;
};

struct TrainingResult {
  ResNetD network;
  /// Mean training loss over the batches of each epoch.
  std::vector<double> loss_history;
};

/// Mini-batch Adam. Batches are drawn from a fresh seeded permutation each
/// epoch; the result is a pure function of the inputs and `config.seed`.
/// Throws DivergenceError if the loss becomes non-finite.
TrainingResult train(ResNetD network, const Eigen::MatrixXd& inputs,
                     const Eigen::MatrixXd& targets, const TrainingConfig& config);

}  // namespace gridstate::nn
