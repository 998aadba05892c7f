#include "gridstate/wls.hpp"

#include <cmath>

#include <Eigen/Cholesky>

#include "gridstate/error.hpp"

namespace gridstate {

WeightMatrix WeightMatrix::from_plan(const MeasurementPlan& plan) {
  return {plan.sigmas().array().square().inverse().matrix()};
}

double objective(const Eigen::VectorXd& z, const StateVector& state, const MeasurementPlan& plan,
                 const AdmittanceMatrix& ybus, const WeightMatrix& weights) {
  const Eigen::VectorXd r = z - evaluate_h(state, plan, ybus);
  return 0.5 * r.dot(weights.diagonal.cwiseProduct(r));
}

EstimationResult estimate_wls(const MeasurementVector& z, const MeasurementPlan& plan,
                              const AdmittanceMatrix& ybus, const WlsOptions& options) {
  if (z.size() != plan.size()) throw ShapeError("measurement vector length does not match plan");
  if (!z.fully_available()) {
    throw MaskedMeasurementError(std::to_string(z.missing_count()) +
                                 " measurement(s) unavailable; substitute pseudo-measurements first");
  }
  const std::size_t dim = plan.state_dimension();
  if (plan.size() < dim) {
    throw SingularMatrixError("gain matrix is singular: " + std::to_string(plan.size()) +
                              " measurements for " + std::to_string(dim) + " states");
  }

  const WeightMatrix w = WeightMatrix::from_plan(plan);
  const std::size_t slack = plan.slack_index();
  const auto n = static_cast<Eigen::Index>(plan.bus_count());

  StateVector state{Eigen::VectorXd::Ones(n), Eigen::VectorXd::Zero(n)};
  Eigen::VectorXd x = to_estimation_coordinates(state, slack);
  Eigen::VectorXd r = z.values - evaluate_h(state, plan, ybus);
  double j = 0.5 * r.dot(w.diagonal.cwiseProduct(r));

  EstimationResult result;
  result.objective_history.push_back(j);

  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    const Eigen::MatrixXd h = evaluate_H(state, plan, ybus);
    const Eigen::MatrixXd wh = w.diagonal.asDiagonal() * h;
    const Eigen::MatrixXd gain = h.transpose() * wh;
    const Eigen::VectorXd rhs = wh.transpose() * r;

    Eigen::LLT<Eigen::MatrixXd> llt(gain);
    if (llt.info() != Eigen::Success || !(llt.rcond() > 1e-14)) {
      throw SingularMatrixError("gain matrix is singular or ill-conditioned; the state is not "
                                "observable from this measurement set");
    }
    const Eigen::VectorXd dx = llt.solve(rhs);
    if (!dx.allFinite()) throw SingularMatrixError("gain matrix solve produced non-finite step");

    double step = 1.0;
    Eigen::VectorXd x_trial = x + dx;
    StateVector trial = from_estimation_coordinates(x_trial, slack);
    Eigen::VectorXd r_trial = z.values - evaluate_h(trial, plan, ybus);
    double j_trial = 0.5 * r_trial.dot(w.diagonal.cwiseProduct(r_trial));
    for (int halving = 0; halving < options.max_step_halvings && !(j_trial <= j); ++halving) {
      step *= 0.5;
      x_trial = x + step * dx;
      trial = from_estimation_coordinates(x_trial, slack);
      r_trial = z.values - evaluate_h(trial, plan, ybus);
      j_trial = 0.5 * r_trial.dot(w.diagonal.cwiseProduct(r_trial));
    }

    x = std::move(x_trial);
    state = std::move(trial);
    r = std::move(r_trial);
    j = j_trial;
    result.objective_history.push_back(j);
    result.iterations = iter;

    if (dx.lpNorm<Eigen::Infinity>() < options.tolerance) {
      result.converged = true;
      break;
    }
    if (!std::isfinite(j)) break;
  }

  result.state = std::move(state);
  result.objective = j;
  result.residual_norm = std::sqrt(2.0 * j);
  return result;
}

EstimationResult estimate_wls(const MeasurementVector& z, const MeasurementPlan& plan,
                              const NetworkCase& network, const WlsOptions& options) {
  return estimate_wls(z, plan, build_ybus(network), options);
}

}  // namespace gridstate
