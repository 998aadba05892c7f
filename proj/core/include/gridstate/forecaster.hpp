#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gridstate/case_model.hpp"
#include "gridstate/measurement.hpp"
#include "gridstate/powerflow.hpp"

namespace gridstate {

/// Per-state autoregression on the state's own history:
///   x_{t+1} = a0 + b0 x_t + b1 x_{t-1} + ... + b_h x_{t-h}
struct ForecastModel {
  int lags = 24;  // h
  /// 2n x (h + 2): column 0 is a0, column 1 + k is b_k. Rows follow the
  /// stacked state layout [v; theta].
  Eigen::MatrixXd coefficients;
  /// In-sample one-step RMSE per state.
  Eigen::VectorXd fit_rmse;
  /// Lag columns kept by the fit per state (others are exactly zero).
  std::vector<int> active_lags;

  std::size_t window() const noexcept { return static_cast<std::size_t>(lags) + 1; }
  std::size_t state_count() const noexcept { return static_cast<std::size_t>(coefficients.rows()); }

  std::string to_json(std::string_view manifest = {}) const;
  static ForecastModel from_json(std::string_view text);
};

/// Fits each state dimension by least squares over sliding windows of
/// `history` (oldest first). Regressors enter in the order intercept, b0,
/// b1, ...; one that is numerically dependent on those already taken is
/// dropped and its coefficient fixed at zero. A constant series therefore
/// gets an intercept-only fit, and a noiseless recurrence of order p keeps
/// exactly its p lags.
///
/// Throws Error if history.size() <= lags + 1.
ForecastModel fit_forecaster(std::span<const StateVector> history, int lags = 24);

/// One-step forecast from the last h + 1 states (oldest first).
StateVector forecast_next(const ForecastModel& model, std::span<const StateVector> window);

/// Stacked-state variant used by fit/forecast internals and tests.
Eigen::VectorXd forecast_next(const ForecastModel& model, const Eigen::MatrixXd& window);

/// Fills the unavailable channels of `real` with h(forecast) and marks them
/// available; available channels are left untouched.
MeasurementVector pseudo_measurements(const StateVector& forecast, const MeasurementVector& real,
                                      const MeasurementPlan& plan, const AdmittanceMatrix& ybus);

}  // namespace gridstate
