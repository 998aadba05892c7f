#include "gridstate/neural.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "gridstate/error.hpp"
#include "gridstate/rng.hpp"

namespace gridstate::nn {

std::size_t Architecture::parameter_count() const noexcept {
  const auto m = static_cast<std::size_t>(input_width);
  const auto h = static_cast<std::size_t>(hidden_width);
  const auto o = static_cast<std::size_t>(output_width);
  const std::size_t per_block =
      static_cast<std::size_t>(layers_per_block) * (h * h + h) + (h * m + h);
  return (h * m + h) + static_cast<std::size_t>(blocks) * per_block + (o * h + o);
}

namespace {

DenseLayer zero_layer(int out, int in) {
  return {Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out), Activation::ReLU};
}

void apply_activation(Activation a, Eigen::MatrixXd& x) {
  if (a == Activation::ReLU) x = x.cwiseMax(0.0);
}

Eigen::MatrixXd affine(const DenseLayer& layer, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd pre = layer.weights * x;
  pre.colwise() += layer.biases;
  return pre;
}

Eigen::MatrixXd activate(const DenseLayer& layer, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd y = affine(layer, x);
  apply_activation(layer.activation, y);
  return y;
}

// Multiplies an upstream gradient by the activation derivative at `pre`.
void through_activation(Activation a, const Eigen::MatrixXd& pre, Eigen::MatrixXd& grad) {
  if (a == Activation::ReLU) grad = (pre.array() > 0.0).select(grad, 0.0);
}

void check_architecture(const Architecture& a) {
  if (a.input_width <= 0 || a.hidden_width <= 0 || a.output_width <= 0 || a.blocks < 0 ||
      a.layers_per_block < 0) {
    throw ShapeError("architecture widths must be positive");
  }
}

}  // namespace

ResNetD::ResNetD(const Architecture& arch) : arch_(arch) {
  check_architecture(arch);
  layers_.reserve(arch.layer_count());
  layers_.push_back(zero_layer(arch.hidden_width, arch.input_width));
  for (int b = 0; b < arch.blocks; ++b) {
    for (int i = 0; i < arch.layers_per_block; ++i) {
      layers_.push_back(zero_layer(arch.hidden_width, arch.hidden_width));
    }
    layers_.push_back(zero_layer(arch.hidden_width, arch.input_width));
  }
  layers_.push_back(zero_layer(arch.output_width, arch.hidden_width));
}

ResNetD ResNetD::he_uniform(const Architecture& arch, std::uint64_t seed) {
  ResNetD net(arch);
  Rng rng(seed);
  for (DenseLayer& layer : net.layers_) {
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.inputs()));
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
        layer.weights(r, c) = rng.uniform(-limit, limit);
      }
    }
  }
  return net;
}

Eigen::MatrixXd ResNetD::forward(const Eigen::MatrixXd& batch) const {
  if (batch.rows() != arch_.input_width) {
    throw ShapeError("input width " + std::to_string(batch.rows()) + " does not match network input " +
                     std::to_string(arch_.input_width));
  }
  Eigen::MatrixXd h = activate(layers_.front(), batch);
  for (int b = 0; b < arch_.blocks; ++b) {
    Eigen::MatrixXd u = h;
    for (int i = 0; i < arch_.layers_per_block; ++i) u = activate(layers_[path_index(b, i)], u);
    h += u + activate(layers_[projection_index(b)], batch);
  }
  return activate(layers_.back(), h);
}

Eigen::VectorXd ResNetD::forward(const Eigen::VectorXd& z) const {
  return forward(Eigen::MatrixXd(z)).col(0);
}

std::vector<double> ResNetD::flat_parameters() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const DenseLayer& layer : layers_) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) out.push_back(layer.weights(r, c));
    }
    for (Eigen::Index r = 0; r < layer.biases.size(); ++r) out.push_back(layer.biases[r]);
  }
  return out;
}

void ResNetD::set_flat_parameters(std::span<const double> values) {
  if (values.size() != parameter_count()) {
    throw ShapeError("expected " + std::to_string(parameter_count()) + " parameters, got " +
                     std::to_string(values.size()));
  }
  std::size_t k = 0;
  for (DenseLayer& layer : layers_) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = values[k++];
    }
    for (Eigen::Index r = 0; r < layer.biases.size(); ++r) layer.biases[r] = values[k++];
  }
}

void ResNetD::apply_update(const Gradient& step) {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    layers_[l].weights -= step.weights[l];
    layers_[l].biases -= step.biases[l];
  }
}

Gradient ResNetD::zero_gradient() const {
  Gradient g;
  g.weights.reserve(layers_.size());
  g.biases.reserve(layers_.size());
  for (const DenseLayer& layer : layers_) {
    g.weights.push_back(Eigen::MatrixXd::Zero(layer.weights.rows(), layer.weights.cols()));
    g.biases.push_back(Eigen::VectorXd::Zero(layer.biases.size()));
  }
  return g;
}

bool ResNetD::operator==(const ResNetD& other) const {
  if (!(arch_ == other.arch_)) return false;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const DenseLayer& a = layers_[l];
    const DenseLayer& b = other.layers_[l];
    if (a.activation != b.activation || a.weights != b.weights || a.biases != b.biases) return false;
  }
  return true;
}

double huber(double r, double delta) noexcept {
  const double a = std::abs(r);
  return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
}

double loss(const ResNetD& net, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
            double delta) {
  const Eigen::MatrixXd y = net.forward(inputs);
  if (y.rows() != targets.rows() || y.cols() != targets.cols()) throw ShapeError("target shape mismatch");
  double total = 0.0;
  for (Eigen::Index c = 0; c < y.cols(); ++c) {
    for (Eigen::Index r = 0; r < y.rows(); ++r) total += huber(y(r, c) - targets(r, c), delta);
  }
  return total / static_cast<double>(y.cols());
}

LossGradient backward(const ResNetD& net, const Eigen::MatrixXd& inputs,
                      const Eigen::MatrixXd& targets, double delta) {
  const Architecture& arch = net.architecture();
  const auto& layers = net.layers();
  if (inputs.cols() == 0) throw ShapeError("empty batch");
  if (inputs.rows() != arch.input_width) throw ShapeError("input width mismatch");
  if (targets.rows() != arch.output_width || targets.cols() != inputs.cols()) {
    throw ShapeError("target shape mismatch");
  }
  const double inv_n = 1.0 / static_cast<double>(inputs.cols());

  // forward pass, caching each layer's input and pre-activation
  std::vector<Eigen::MatrixXd> layer_in(layers.size()), pre(layers.size());
  auto run = [&](std::size_t l, const Eigen::MatrixXd& x) {
    layer_in[l] = x;
    pre[l] = affine(layers[l], x);
    Eigen::MatrixXd y = pre[l];
    apply_activation(layers[l].activation, y);
    return y;
  };
  Eigen::MatrixXd h = run(0, inputs);
  for (int b = 0; b < arch.blocks; ++b) {
    Eigen::MatrixXd u = h;
    for (int i = 0; i < arch.layers_per_block; ++i) u = run(net.path_index(b, i), u);
    h += u + run(net.projection_index(b), inputs);
  }
  const std::size_t head = layers.size() - 1;
  const Eigen::MatrixXd y = run(head, h);

  LossGradient out;
  out.gradient = net.zero_gradient();
  Eigen::MatrixXd dy(y.rows(), y.cols());
  double total = 0.0;
  for (Eigen::Index c = 0; c < y.cols(); ++c) {
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double res = y(r, c) - targets(r, c);
      total += huber(res, delta);
      dy(r, c) = (std::abs(res) <= delta ? res : (res > 0 ? delta : -delta)) * inv_n;
    }
  }
  out.loss = total * inv_n;

  // Gradient w.r.t. the layer's output -> parameter gradients; returns the
  // gradient w.r.t. the layer's input.
  auto back = [&](std::size_t l, Eigen::MatrixXd grad) {
    through_activation(layers[l].activation, pre[l], grad);
    out.gradient.weights[l].noalias() += grad * layer_in[l].transpose();
    out.gradient.biases[l] += grad.rowwise().sum();
    return Eigen::MatrixXd(layers[l].weights.transpose() * grad);
  };

  Eigen::MatrixXd dh = back(head, dy);
  for (int b = arch.blocks - 1; b >= 0; --b) {
    back(net.projection_index(b), dh);  // input gradient not needed
    Eigen::MatrixXd du = dh;
    for (int i = arch.layers_per_block - 1; i >= 0; --i) du = back(net.path_index(b, i), du);
    dh += du;
  }
  back(0, dh);
  return out;
}

TrainingResult train(ResNetD network, const Eigen::MatrixXd& inputs,
                     const Eigen::MatrixXd& targets, const TrainingConfig& config) {
  if (config.epochs < 0 || config.batch_size <= 0) throw Error("invalid training configuration");
  if (!(config.huber_delta > 0.0)) throw Error("huber delta must be > 0");
  const Eigen::Index samples = inputs.cols();
  if (targets.cols() != samples) throw ShapeError("inputs and targets differ in sample count");

  TrainingResult result{std::move(network), {}};
  if (config.epochs == 0 || samples == 0) return result;
  ResNetD& net = result.network;

  Gradient first = net.zero_gradient();
  Gradient second = net.zero_gradient();
  Gradient step = net.zero_gradient();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(samples));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  Eigen::MatrixXd batch_in, batch_out;
  std::int64_t t = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng rng(derive_seed(config.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order.begin(), order.end());

    double epoch_loss = 0.0;
    for (Eigen::Index start = 0; start < samples; start += config.batch_size) {
      const Eigen::Index size = std::min<Eigen::Index>(config.batch_size, samples - start);
      batch_in.resize(inputs.rows(), size);
      batch_out.resize(targets.rows(), size);
      for (Eigen::Index c = 0; c < size; ++c) {
        const Eigen::Index src = order[static_cast<std::size_t>(start + c)];
        batch_in.col(c) = inputs.col(src);
        batch_out.col(c) = targets.col(src);
      }

      const LossGradient lg = backward(net, batch_in, batch_out, config.huber_delta);
      if (!std::isfinite(lg.loss)) {
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) +
                              " (loss is not finite)");
      }
      epoch_loss += lg.loss * static_cast<double>(size);

      ++t;
      const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
      const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
      const double lr = config.learning_rate;
      auto adam = [&](auto& m, auto& v, const auto& g, auto& s) {
        m = config.beta1 * m + (1.0 - config.beta1) * g;
        v = config.beta2 * v + (1.0 - config.beta2) * g.cwiseAbs2();
        s = lr * (m / c1).array() / ((v / c2).array().sqrt() + config.epsilon);
      };
      for (std::size_t l = 0; l < net.layers().size(); ++l) {
        adam(first.weights[l], second.weights[l], lg.gradient.weights[l], step.weights[l]);
        adam(first.biases[l], second.biases[l], lg.gradient.biases[l], step.biases[l]);
      }
      net.apply_update(step);
    }
    result.loss_history.push_back(epoch_loss / static_cast<double>(samples));
  }
  return result;
}

}  // namespace gridstate::nn
