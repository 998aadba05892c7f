#include "gridstate/resnetd_estimator.hpp"

#include <cmath>

#include "gridstate/error.hpp"
#include "gridstate/rng.hpp"
#include "json_io.hpp"

namespace gridstate {

using detail::json;

namespace {

constexpr const char* kFormat = "gridstate-resnetd";
constexpr int kVersion = 1;

}  // namespace

std::string_view to_string(InputScaling s) { return s == InputScaling::None ? "none" : "zscore"; }

InputScaling parse_input_scaling(std::string_view s) {
  if (s == "none") return InputScaling::None;
  if (s == "zscore") return InputScaling::ZScore;
  throw Error("unknown input scaling \"" + std::string(s) + "\" (expected none or zscore)");
}

Standardizer Standardizer::identity(Eigen::Index width) {
  return {Eigen::VectorXd::Zero(width), Eigen::VectorXd::Ones(width)};
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& samples) {
  Standardizer s;
  const Eigen::Index rows = samples.rows();
  const auto count = static_cast<double>(samples.cols());
  s.mean = Eigen::VectorXd::Zero(rows);
  s.scale = Eigen::VectorXd::Ones(rows);
  if (samples.cols() == 0) return s;
  s.mean = samples.rowwise().sum() / count;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double var = (samples.row(r).array() - s.mean[r]).square().sum() / count;
    const double sd = std::sqrt(var);
    if (sd > 1e-12 * std::max(1.0, std::abs(s.mean[r]))) s.scale[r] = sd;
  }
  return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::MatrixXd& samples) const {
  if (samples.rows() != mean.size()) throw ShapeError("standardizer width mismatch");
  return ((samples.colwise() - mean).array().colwise() / scale.array()).matrix();
}

ResNetDEstimator::ResNetDEstimator(nn::ResNetD network, Standardizer inputs, double angle_offset,
                                   std::vector<double> loss_history)
    : network_(std::move(network)),
      inputs_(std::move(inputs)),
      angle_offset_(angle_offset),
      loss_history_(std::move(loss_history)) {
  const auto& a = network_.architecture();
  if (inputs_.mean.size() != a.input_width || inputs_.scale.size() != a.input_width) {
    throw ShapeError("standardizer width does not match network input");
  }
  if (a.output_width % 2 != 0) throw ShapeError("output width must be 2n");
}

ResNetDEstimator ResNetDEstimator::train(const Eigen::MatrixXd& z, const Eigen::MatrixXd& x,
                                         const nn::TrainingConfig& config, int hidden_width,
                                         InputScaling input_scaling) {
  if (z.cols() != x.cols()) throw ShapeError("measurement and state sample counts differ");
  if (z.cols() == 0) throw ShapeError("empty training set");
  if (x.rows() % 2 != 0) throw ShapeError("state rows must be 2n");
  const Eigen::Index n = x.rows() / 2;

  Standardizer scaling =
      input_scaling == InputScaling::ZScore ? Standardizer::fit(z) : Standardizer::identity(z.rows());
  const double offset = std::floor(x.bottomRows(n).minCoeff());
  Eigen::MatrixXd targets = x;
  targets.bottomRows(n).array() -= offset;

  nn::Architecture arch{static_cast<int>(z.rows()),
                        hidden_width > 0 ? hidden_width : static_cast<int>(z.rows()),
                        static_cast<int>(x.rows()), 3, 2};
  nn::ResNetD net = nn::ResNetD::he_uniform(arch, derive_seed(config.seed, "init"));
  net.head().weights.setZero();
  net.head().biases = targets.rowwise().mean();

  nn::TrainingResult trained = nn::train(std::move(net), scaling.apply(z), targets, config);
  return {std::move(trained.network), std::move(scaling), offset, std::move(trained.loss_history)};
}

ResNetDEstimator ResNetDEstimator::untrained(const nn::Architecture& arch, std::uint64_t seed) {
  return {nn::ResNetD::he_uniform(arch, seed), Standardizer::identity(arch.input_width), 0.0};
}

Eigen::MatrixXd ResNetDEstimator::predict(const Eigen::MatrixXd& z) const {
  Eigen::MatrixXd out = network_.forward(inputs_.apply(z));
  const Eigen::Index n = out.rows() / 2;
  out.bottomRows(n).array() += angle_offset_;
  return out;
}

Eigen::VectorXd ResNetDEstimator::predict(const Eigen::VectorXd& z) const {
  return predict(Eigen::MatrixXd(z)).col(0);
}

std::string ResNetDEstimator::to_json(std::string_view manifest) const {
  const nn::Architecture& a = network_.architecture();
  json doc;
  doc["format"] = kFormat;
  doc["version"] = kVersion;
  if (!manifest.empty()) doc["manifest"] = std::string(manifest);
  doc["architecture"] = {{"input_width", a.input_width},
                         {"hidden_width", a.hidden_width},
                         {"output_width", a.output_width},
                         {"blocks", a.blocks},
                         {"layers_per_block", a.layers_per_block}};
  json activations = json::array();
  for (const auto& layer : network_.layers()) {
    activations.push_back(layer.activation == nn::Activation::ReLU ? "relu" : "identity");
  }
  doc["activations"] = activations;
  doc["input_mean"] = detail::to_json(inputs_.mean);
  doc["input_scale"] = detail::to_json(inputs_.scale);
  doc["angle_offset"] = angle_offset_;
  doc["parameter_order"] =
      "input layer; per block: path layers then input projection; head. "
      "Each layer: weights row-major (out x in), then biases.";
  doc["parameters"] = network_.flat_parameters();
  doc["loss_history"] = loss_history_;
  return detail::dump(doc);
}

ResNetDEstimator ResNetDEstimator::from_json(std::string_view text) {
  const json doc = detail::parse_json(text, "resnetd model");
  const std::string ctx = "resnetd model";
  if (detail::field(doc, "format", ctx) != kFormat) throw Error(ctx + ": unexpected format tag");
  if (detail::field(doc, "version", ctx) != kVersion) throw Error(ctx + ": unsupported version");
  const json& aj = detail::field(doc, "architecture", ctx);
  nn::Architecture arch{detail::field(aj, "input_width", ctx).get<int>(),
                        detail::field(aj, "hidden_width", ctx).get<int>(),
                        detail::field(aj, "output_width", ctx).get<int>(),
                        detail::field(aj, "blocks", ctx).get<int>(),
                        detail::field(aj, "layers_per_block", ctx).get<int>()};
  nn::ResNetD net(arch);
  const json& acts = detail::field(doc, "activations", ctx);
  if (!acts.is_array() || acts.size() != net.layers().size()) {
    throw Error(ctx + ": activations do not match the architecture");
  }
  for (std::size_t l = 0; l < acts.size(); ++l) {
    const std::string name = acts[l].get<std::string>();
    if (name == "relu") {
      net.layers()[l].activation = nn::Activation::ReLU;
    } else if (name == "identity") {
      net.layers()[l].activation = nn::Activation::Identity;
    } else {
      throw Error(ctx + ": unknown activation \"" + name + "\"");
    }
  }
  const Eigen::VectorXd params = detail::vector_from_json(detail::field(doc, "parameters", ctx), "parameters");
  net.set_flat_parameters(std::span<const double>(params.data(), static_cast<std::size_t>(params.size())));
  Standardizer scaling{detail::vector_from_json(detail::field(doc, "input_mean", ctx), "input_mean"),
                       detail::vector_from_json(detail::field(doc, "input_scale", ctx), "input_scale")};
  std::vector<double> history;
  if (doc.contains("loss_history")) history = doc["loss_history"].get<std::vector<double>>();
  return {std::move(net), std::move(scaling), detail::field(doc, "angle_offset", ctx).get<double>(),
          std::move(history)};
}

bool ResNetDEstimator::operator==(const ResNetDEstimator& o) const {
  return network_ == o.network_ && inputs_ == o.inputs_ && angle_offset_ == o.angle_offset_ &&
         loss_history_ == o.loss_history_;
}

}  // namespace gridstate
