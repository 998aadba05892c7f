#pragma once

#include <vector>

#include <Eigen/Dense>

#include "gridstate/measurement.hpp"

namespace gridstate {

/// Diagonal of W, w_k = 1 / sigma_k^2.
struct WeightMatrix {
  Eigen::VectorXd diagonal;

  static WeightMatrix from_plan(const MeasurementPlan& plan);
};

struct WlsOptions {
  double tolerance = 1e-6;  // on max |dx| of the full Gauss-Newton step
  int max_iterations = 50;
  int max_step_halvings = 6;
};

struct EstimationResult {
  StateVector state;
  int iterations = 0;
  bool converged = false;
  double objective = 0.0;      // J(x) = 1/2 r^T W r
  double residual_norm = 0.0;  // sqrt(r^T W r)
  /// J at the start and after every accepted step.
  std::vector<double> objective_history;
};

/// J(x) = 1/2 (z - h(x))^T W (z - h(x)).
double objective(const Eigen::VectorXd& z, const StateVector& state, const MeasurementPlan& plan,
                 const AdmittanceMatrix& ybus, const WeightMatrix& weights);

/// Gauss-Newton WLS from a flat start. Each step solves
/// (H^T W H) dx = H^T W (z - h(x)) with a Cholesky factorization; a step
/// that raises J is halved up to `max_step_halvings` times.
///
/// Throws MaskedMeasurementError if any channel is unavailable and
/// SingularMatrixError if the gain matrix is singular (the plan does not
/// observe the state). Hitting `max_iterations` is reported through
/// `converged == false`.
EstimationResult estimate_wls(const MeasurementVector& z, const MeasurementPlan& plan,
                              const AdmittanceMatrix& ybus, const WlsOptions& options = {});

EstimationResult estimate_wls(const MeasurementVector& z, const MeasurementPlan& plan,
                              const NetworkCase& network, const WlsOptions& options = {});

}  // namespace gridstate
