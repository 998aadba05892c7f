#include "gridstate/ensemble.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>

#include <spdlog/spdlog.h>

#include "gridstate/error.hpp"
#include "gridstate/rng.hpp"
#include "json_io.hpp"
#include "parallel.hpp"

namespace gridstate {

using detail::json;

SplitSpec SplitSpec::make(std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "split"));
  rng.shuffle(order.begin(), order.end());

  const std::size_t base = count * 40 / 100;
  const std::size_t meta = count * 36 / 100;
  SplitSpec s;
  s.seed = seed;
  s.base_train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(base));
  s.meta_train.assign(order.begin() + static_cast<std::ptrdiff_t>(base),
                      order.begin() + static_cast<std::ptrdiff_t>(base + meta));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(base + meta), order.end());
  for (auto* part : {&s.base_train, &s.meta_train, &s.test}) std::sort(part->begin(), part->end());
  return s;
}

MetaFit fit_meta(const Eigen::MatrixXd& features, const Eigen::MatrixXd& targets, double lambda) {
  if (features.cols() != targets.cols()) throw ShapeError("meta features and targets differ in sample count");
  const Eigen::Index samples = features.cols();
  const Eigen::Index cols = features.rows() + 1;
  Eigen::MatrixXd design(samples, cols);
  design.col(0).setOnes();
  design.rightCols(cols - 1) = features.transpose();
  const Eigen::MatrixXd rhs = targets.transpose();

  MetaFit fit;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  fit.rank = static_cast<std::size_t>(qr.rank());
  if (qr.rank() == cols) {
    fit.coefficients = qr.solve(rhs).transpose();
    return fit;
  }
  spdlog::warn("meta design matrix is rank deficient (rank {} of {}); using ridge lambda={}",
               qr.rank(), cols, lambda);
  Eigen::MatrixXd gram = design.transpose() * design;
  gram.diagonal().array() += lambda;
  fit.coefficients = gram.ldlt().solve(design.transpose() * rhs).transpose();
  fit.ridge = true;
  return fit;
}

double rmse(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& truth) {
  if (predicted.rows() != truth.rows() || predicted.cols() != truth.cols()) {
    throw ShapeError("prediction and truth shapes differ");
  }
  if (predicted.size() == 0) return 0.0;
  return std::sqrt((predicted - truth).squaredNorm() / static_cast<double>(predicted.size()));
}

ErrorMetrics evaluate_states(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& truth) {
  if (predicted.rows() != truth.rows() || predicted.cols() != truth.cols()) {
    throw ShapeError("prediction and truth shapes differ");
  }
  if (predicted.rows() % 2 != 0) throw ShapeError("state rows must be 2n");
  ErrorMetrics m;
  m.samples = static_cast<std::size_t>(predicted.cols());
  if (predicted.cols() == 0) return m;
  const Eigen::Index n = predicted.rows() / 2;
  const double count = static_cast<double>(n * predicted.cols());
  const Eigen::ArrayXXd dv = (predicted.topRows(n) - truth.topRows(n)).array() * 100.0;
  const Eigen::ArrayXXd dt = (predicted.bottomRows(n) - truth.bottomRows(n)).array() * (180.0 / std::numbers::pi);
  m.v_rmse_pct = std::sqrt(dv.square().sum() / count);
  m.v_mae_pct = dv.abs().sum() / count;
  m.theta_rmse_deg = std::sqrt(dt.square().sum() / count);
  m.theta_mae_deg = dt.abs().sum() / count;
  return m;
}

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& m, const std::vector<std::size_t>& indices) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(indices.size()));
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= static_cast<std::size_t>(m.cols())) throw ShapeError("column index out of range");
    out.col(static_cast<Eigen::Index>(k)) = m.col(static_cast<Eigen::Index>(indices[k]));
  }
  return out;
}

EnsembleModel::EnsembleModel(std::vector<ResNetDEstimator> base, Eigen::MatrixXd meta,
                             SplitSpec split, std::size_t slack, Diagnostics diagnostics)
    : base_(std::move(base)),
      meta_(std::move(meta)),
      split_(std::move(split)),
      slack_(slack),
      diagnostics_(diagnostics) {
  if (base_.empty()) throw ShapeError("ensemble needs at least one base learner");
  const int m = base_.front().input_width();
  const int out = base_.front().output_width();
  for (const auto& b : base_) {
    if (b.input_width() != m || b.output_width() != out) throw ShapeError("base learners disagree on widths");
  }
  if (meta_.rows() != out || meta_.cols() != static_cast<Eigen::Index>(base_.size()) * out + 1) {
    throw ShapeError("meta coefficient matrix must be 2n x (learners * 2n + 1)");
  }
  if (slack_ >= static_cast<std::size_t>(out / 2)) throw ShapeError("slack index out of range");
}

Eigen::MatrixXd EnsembleModel::base_features(const Eigen::MatrixXd& z) const {
  const Eigen::Index out = base_.front().output_width();
  Eigen::MatrixXd f(out * static_cast<Eigen::Index>(base_.size()), z.cols());
  for (std::size_t k = 0; k < base_.size(); ++k) {
    f.middleRows(static_cast<Eigen::Index>(k) * out, out) = base_[k].predict(z);
  }
  return f;
}

Eigen::MatrixXd EnsembleModel::combine(const Eigen::MatrixXd& features) const {
  Eigen::MatrixXd x = meta_.rightCols(meta_.cols() - 1) * features;
  x.colwise() += meta_.col(0);
  x.row(static_cast<Eigen::Index>(bus_count() + slack_)).setZero();
  return x;
}

Eigen::MatrixXd EnsembleModel::predict(const Eigen::MatrixXd& z) const { return combine(base_features(z)); }

Eigen::MatrixXd EnsembleModel::predict_base(std::size_t learner, const Eigen::MatrixXd& z) const {
  Eigen::MatrixXd x = base_.at(learner).predict(z);
  x.row(static_cast<Eigen::Index>(bus_count() + slack_)).setZero();
  return x;
}

Eigen::MatrixXd EnsembleModel::predict_uniform(const Eigen::MatrixXd& z) const {
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(base_.front().output_width(), z.cols());
  for (const auto& b : base_) sum += b.predict(z);
  sum /= static_cast<double>(base_.size());
  sum.row(static_cast<Eigen::Index>(bus_count() + slack_)).setZero();
  return sum;
}

StateVector EnsembleModel::estimate(const MeasurementVector& z) const {
  if (z.size() != measurement_count()) {
    throw ShapeError("measurement vector has " + std::to_string(z.size()) + " entries, model expects " +
                     std::to_string(measurement_count()));
  }
  if (!z.fully_available()) {
    throw MaskedMeasurementError(std::to_string(z.missing_count()) +
                                 " channel(s) unavailable; substitute forecast pseudo-measurements first");
  }
  return StateVector::from_stacked(predict(Eigen::MatrixXd(z.values)).col(0));
}

namespace {

json split_to_json(const SplitSpec& s) {
  return {{"seed", std::to_string(s.seed)},
          {"fractions", {0.40, 0.36, 0.24}},
          {"base_train", s.base_train},
          {"meta_train", s.meta_train},
          {"test", s.test}};
}

SplitSpec split_from_json(const json& j) {
  SplitSpec s;
  s.seed = std::stoull(detail::field(j, "seed", "split").get<std::string>());
  s.base_train = detail::field(j, "base_train", "split").get<std::vector<std::size_t>>();
  s.meta_train = detail::field(j, "meta_train", "split").get<std::vector<std::size_t>>();
  s.test = detail::field(j, "test", "split").get<std::vector<std::size_t>>();
  return s;
}

}  // namespace

void EnsembleModel::save(const std::filesystem::path& dir, std::string_view manifest) const {
  std::filesystem::create_directories(dir);
  for (std::size_t k = 0; k < base_.size(); ++k) {
    detail::write_text_file(dir / ("learner_" + std::to_string(k) + ".json"), base_[k].to_json(manifest));
  }
  json meta;
  meta["format"] = "gridstate-meta";
  meta["version"] = 1;
  if (!manifest.empty()) meta["manifest"] = std::string(manifest);
  meta["learners"] = base_.size();
  meta["buses"] = bus_count();
  meta["measurements"] = measurement_count();
  meta["slack_index"] = slack_;
  meta["layout"] = "rows: outputs [v; theta]; column 0: intercept; then learner-major base outputs";
  meta["coefficients"] = detail::to_json(meta_);
  meta["diagnostics"] = {{"meta_in_sample_rmse", diagnostics_.meta_in_sample_rmse},
                         {"uniform_in_sample_rmse", diagnostics_.uniform_in_sample_rmse},
                         {"rank", diagnostics_.meta_rank},
                         {"ridge", diagnostics_.ridge}};
  detail::write_text_file(dir / "meta.json", detail::dump(meta));

  json split = split_to_json(split_);
  split["format"] = "gridstate-split";
  split["version"] = 1;
  if (!manifest.empty()) split["manifest"] = std::string(manifest);
  detail::write_text_file(dir / "split.json", detail::dump(split));
}

EnsembleModel EnsembleModel::load(const std::filesystem::path& dir) {
  const json meta = detail::parse_json(detail::read_text_file(dir / "meta.json"), (dir / "meta.json").string());
  const std::string ctx = (dir / "meta.json").string();
  if (detail::field(meta, "format", ctx) != "gridstate-meta") throw Error(ctx + ": unexpected format tag");
  if (detail::field(meta, "version", ctx) != 1) throw Error(ctx + ": unsupported version");
  const auto learners = detail::field(meta, "learners", ctx).get<std::size_t>();
  std::vector<ResNetDEstimator> base;
  base.reserve(learners);
  for (std::size_t k = 0; k < learners; ++k) {
    const auto path = dir / ("learner_" + std::to_string(k) + ".json");
    try {
      base.push_back(ResNetDEstimator::from_json(detail::read_text_file(path)));
    } catch (const Error& e) {
      throw Error(path.string() + ": " + e.what());
    }
  }
  Diagnostics diag;
  if (meta.contains("diagnostics")) {
    const json& d = meta["diagnostics"];
    diag.meta_in_sample_rmse = d.value("meta_in_sample_rmse", 0.0);
    diag.uniform_in_sample_rmse = d.value("uniform_in_sample_rmse", 0.0);
    diag.meta_rank = d.value("rank", std::size_t{0});
    diag.ridge = d.value("ridge", false);
  }
  const json split = detail::parse_json(detail::read_text_file(dir / "split.json"), (dir / "split.json").string());
  return {std::move(base), detail::matrix_from_json(detail::field(meta, "coefficients", ctx), "coefficients"),
          split_from_json(split), detail::field(meta, "slack_index", ctx).get<std::size_t>(), diag};
}

EnsembleModel train_ensemble(const Eigen::MatrixXd& z, const Eigen::MatrixXd& x, std::size_t slack,
                             const SplitSpec& split, const EnsembleConfig& config) {
  if (config.learners <= 0) throw Error("ensemble needs at least one learner");
  if (z.cols() != x.cols()) throw ShapeError("measurement and state sample counts differ");
  if (split.size() != static_cast<std::size_t>(z.cols())) throw ShapeError("split does not cover the dataset");
  const auto features = static_cast<std::size_t>(config.learners) * static_cast<std::size_t>(x.rows());
  if (split.meta_train.size() < features + 1) {
    throw Error("meta split has " + std::to_string(split.meta_train.size()) + " samples; at least " +
                std::to_string(features + 1) + " are needed");
  }

  const Eigen::MatrixXd z_base = select_columns(z, split.base_train);
  const Eigen::MatrixXd x_base = select_columns(x, split.base_train);
  std::vector<std::optional<ResNetDEstimator>> trained(static_cast<std::size_t>(config.learners));
  detail::parallel_for(trained.size(), config.threads, [&](std::size_t k) {
    nn::TrainingConfig tc = config.training;
    tc.seed = derive_seed(config.training.seed, "learner", k);
    trained[k].emplace(ResNetDEstimator::train(z_base, x_base, tc, config.hidden_width, config.input_scaling));
    spdlog::info("base learner {} trained, final loss {:.3e}", k, trained[k]->loss_history().empty()
                                                                     ? 0.0
                                                                     : trained[k]->loss_history().back());
  });
  std::vector<ResNetDEstimator> base;
  for (auto& t : trained) base.push_back(std::move(*t));

  // meta-learner on the held-out meta split only
  const Eigen::MatrixXd z_meta = select_columns(z, split.meta_train);
  Eigen::MatrixXd x_meta = select_columns(x, split.meta_train);
  const Eigen::Index n = x.rows() / 2;
  Eigen::MatrixXd f(static_cast<Eigen::Index>(features), z_meta.cols());
  for (std::size_t k = 0; k < base.size(); ++k) {
    f.middleRows(static_cast<Eigen::Index>(k) * x.rows(), x.rows()) = base[k].predict(z_meta);
  }
  MetaFit fit = fit_meta(f, x_meta, config.ridge);

  EnsembleModel::Diagnostics diag;
  diag.meta_rank = fit.rank;
  diag.ridge = fit.ridge;
  EnsembleModel model(std::move(base), std::move(fit.coefficients), split, slack, diag);
  x_meta.row(n + static_cast<Eigen::Index>(slack)).setZero();
  diag.meta_in_sample_rmse = rmse(model.predict(z_meta), x_meta);
  diag.uniform_in_sample_rmse = rmse(model.predict_uniform(z_meta), x_meta);
  return {std::vector<ResNetDEstimator>(model.base_learners()), model.meta(), split, slack, diag};
}

ErrorMetrics evaluate(const EnsembleModel& model, const Eigen::MatrixXd& z, const Eigen::MatrixXd& x) {
  return evaluate_states(model.predict(z), x);
}

}  // namespace gridstate
