#include "gridstate/forecaster.hpp"

#include <cmath>

#include <spdlog/spdlog.h>

#include "gridstate/error.hpp"
#include "json_io.hpp"

namespace gridstate {

using detail::json;

namespace {

constexpr double kDependenceTolerance = 1e-9;

struct SeriesFit {
  Eigen::VectorXd coefficients;
  double rmse = 0.0;
  int active = 0;
};

// design: rows are windows, columns [1, x_t, x_{t-1}, ...].
SeriesFit fit_series(const Eigen::MatrixXd& design, const Eigen::VectorXd& target) {
  const Eigen::Index rows = design.rows();
  const Eigen::Index cols = design.cols();

  // modified Gram-Schmidt with one reorthogonalization pass
  std::vector<Eigen::Index> keep;
  Eigen::MatrixXd basis(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    Eigen::VectorXd v = design.col(c);
    const double norm0 = v.norm();
    if (norm0 == 0.0) continue;
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t k = 0; k < keep.size(); ++k) {
        const auto q = basis.col(static_cast<Eigen::Index>(k));
        v -= q.dot(v) * q;
      }
    }
    const double norm = v.norm();
    if (norm <= kDependenceTolerance * norm0) continue;
    basis.col(static_cast<Eigen::Index>(keep.size())) = v / norm;
    keep.push_back(c);
  }

  Eigen::MatrixXd reduced(rows, static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) reduced.col(static_cast<Eigen::Index>(k)) = design.col(keep[k]);
  const Eigen::VectorXd beta = reduced.colPivHouseholderQr().solve(target);

  SeriesFit fit;
  fit.coefficients = Eigen::VectorXd::Zero(cols);
  for (std::size_t k = 0; k < keep.size(); ++k) fit.coefficients[keep[k]] = beta[static_cast<Eigen::Index>(k)];
  fit.rmse = std::sqrt((reduced * beta - target).squaredNorm() / static_cast<double>(rows));
  fit.active = static_cast<int>(keep.size()) - (keep.empty() || keep.front() != 0 ? 0 : 1);
  return fit;
}

}  // namespace

ForecastModel fit_forecaster(std::span<const StateVector> history, int lags) {
  if (lags < 0) throw Error("lag count must be nonnegative");
  const std::size_t window = static_cast<std::size_t>(lags) + 1;
  if (history.size() <= window) {
    throw Error("forecaster needs more than " + std::to_string(window) + " historical states, got " +
                std::to_string(history.size()));
  }
  const Eigen::Index states = static_cast<Eigen::Index>(2 * history.front().size());
  Eigen::MatrixXd series(states, static_cast<Eigen::Index>(history.size()));
  for (std::size_t t = 0; t < history.size(); ++t) {
    if (static_cast<Eigen::Index>(2 * history[t].size()) != states) throw ShapeError("state sizes differ in history");
    series.col(static_cast<Eigen::Index>(t)) = history[t].stacked();
  }

  // rows: t = lags .. T-2 predicting t + 1
  const Eigen::Index rows = static_cast<Eigen::Index>(history.size() - window);
  ForecastModel model;
  model.lags = lags;
  model.coefficients = Eigen::MatrixXd::Zero(states, lags + 2);
  model.fit_rmse = Eigen::VectorXd::Zero(states);
  model.active_lags.assign(static_cast<std::size_t>(states), 0);

  Eigen::MatrixXd design(rows, lags + 2);
  Eigen::VectorXd target(rows);
  std::size_t intercept_only = 0;
  for (Eigen::Index s = 0; s < states; ++s) {
    for (Eigen::Index r = 0; r < rows; ++r) {
      const Eigen::Index t = r + lags;
      design(r, 0) = 1.0;
      for (int k = 0; k <= lags; ++k) design(r, 1 + k) = series(s, t - k);
      target[r] = series(s, t + 1);
    }
    const SeriesFit fit = fit_series(design, target);
    model.coefficients.row(s) = fit.coefficients.transpose();
    model.fit_rmse[s] = fit.rmse;
    model.active_lags[static_cast<std::size_t>(s)] = fit.active;
    if (fit.active == 0) ++intercept_only;
  }
  if (intercept_only > 0) {
    spdlog::info("forecaster: {} constant state series fitted by intercept only", intercept_only);
  }
  return model;
}

Eigen::VectorXd forecast_next(const ForecastModel& model, const Eigen::MatrixXd& window) {
  if (window.cols() != static_cast<Eigen::Index>(model.window())) {
    throw ShapeError("forecast window must hold " + std::to_string(model.window()) + " states, got " +
                     std::to_string(window.cols()));
  }
  if (window.rows() != model.coefficients.rows()) throw ShapeError("forecast window state size mismatch");
  Eigen::VectorXd out = model.coefficients.col(0);
  const Eigen::Index last = window.cols() - 1;
  for (int k = 0; k <= model.lags; ++k) {
    out.array() += model.coefficients.col(1 + k).array() * window.col(last - k).array();
  }
  return out;
}

StateVector forecast_next(const ForecastModel& model, std::span<const StateVector> window) {
  Eigen::MatrixXd w(model.coefficients.rows(), static_cast<Eigen::Index>(window.size()));
  for (std::size_t t = 0; t < window.size(); ++t) {
    if (static_cast<Eigen::Index>(2 * window[t].size()) != w.rows()) {
      throw ShapeError("forecast window state size mismatch");
    }
    w.col(static_cast<Eigen::Index>(t)) = window[t].stacked();
  }
  return StateVector::from_stacked(forecast_next(model, w));
}

MeasurementVector pseudo_measurements(const StateVector& forecast, const MeasurementVector& real,
                                      const MeasurementPlan& plan, const AdmittanceMatrix& ybus) {
  if (real.size() != plan.size()) throw ShapeError("measurement vector does not match the plan");
  MeasurementVector out = real;
  if (real.fully_available()) return out;
  const Eigen::VectorXd h = evaluate_h(forecast, plan, ybus);
  for (std::size_t k = 0; k < out.mask.size(); ++k) {
    if (out.mask[k]) continue;
    out.values[static_cast<Eigen::Index>(k)] = h[static_cast<Eigen::Index>(k)];
    out.mask[k] = true;
  }
  return out;
}

std::string ForecastModel::to_json(std::string_view manifest) const {
  json doc;
  doc["format"] = "gridstate-forecast";
  doc["version"] = 1;
  if (!manifest.empty()) doc["manifest"] = std::string(manifest);
  doc["lags"] = lags;
  doc["layout"] = "rows: states [v; theta]; columns: intercept, then lag 0 (x_t) .. lag h";
  doc["coefficients"] = detail::to_json(coefficients);
  doc["fit_rmse"] = detail::to_json(fit_rmse);
  doc["active_lags"] = active_lags;
  return detail::dump(doc);
}

ForecastModel ForecastModel::from_json(std::string_view text) {
  const json doc = detail::parse_json(text, "forecast model");
  const std::string ctx = "forecast model";
  if (detail::field(doc, "format", ctx) != "gridstate-forecast") throw Error(ctx + ": unexpected format tag");
  if (detail::field(doc, "version", ctx) != 1) throw Error(ctx + ": unsupported version");
  ForecastModel m;
  m.lags = detail::field(doc, "lags", ctx).get<int>();
  m.coefficients = detail::matrix_from_json(detail::field(doc, "coefficients", ctx), "coefficients");
  if (m.coefficients.cols() != m.lags + 2) throw Error(ctx + ": coefficient rows must have lags + 2 entries");
  m.fit_rmse = detail::vector_from_json(detail::field(doc, "fit_rmse", ctx), "fit_rmse");
  m.active_lags = detail::field(doc, "active_lags", ctx).get<std::vector<int>>();
  return m;
}

}  // namespace gridstate
