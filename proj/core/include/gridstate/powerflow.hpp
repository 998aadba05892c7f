#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "gridstate/case_model.hpp"

namespace gridstate {

/// Bus voltage magnitudes (pu) and angles (rad), indexed by the case's dense
/// bus order. The slack angle is the reference and is exactly zero in every
/// state this toolkit produces.
struct StateVector {
  Eigen::VectorXd v;
  Eigen::VectorXd theta;

  std::size_t size() const noexcept { return static_cast<std::size_t>(v.size()); }

  /// Flat start: v = 1 (or the setpoint at PV/Slack buses), theta = 0.
  static StateVector flat(const NetworkCase& network, bool use_setpoints = true);

  /// Stacked [v; theta] (length 2n), the layout used by learned estimators.
  Eigen::VectorXd stacked() const;
  static StateVector from_stacked(const Eigen::Ref<const Eigen::VectorXd>& x);

  bool operator==(const StateVector& o) const { return v == o.v && theta == o.theta; }
};

struct BusInjections {
  Eigen::VectorXd p;  // pu
  Eigen::VectorXd q;  // pu
};

/// P_i = V_i sum_j V_j (G_ij cos th_ij + B_ij sin th_ij)
/// Q_i = V_i sum_j V_j (G_ij sin th_ij - B_ij cos th_ij)
BusInjections injected_power(const StateVector& state, const AdmittanceMatrix& ybus);

/// Full 2n x 2n Jacobian of the injections,
///   [ dP/dtheta  dP/dV ]
///   [ dQ/dtheta  dQ/dV ]
/// with columns ordered (theta_0..theta_{n-1}, V_0..V_{n-1}).
Eigen::MatrixXd injection_jacobian(const StateVector& state, const AdmittanceMatrix& ybus);

/// Per-bus multipliers applied to nominal loads at one instant.
struct LoadScenario {
  std::int64_t timestamp = 0;
  Eigen::VectorXd scale;

  static LoadScenario uniform(std::size_t n, double factor, std::int64_t timestamp = 0) {
    return {timestamp, Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), factor)};
  }
};

/// Scheduled net injections (generation - load) in pu under a scenario.
/// Generator output is scaled by total scenario load over total nominal load.
BusInjections scheduled_injections(const NetworkCase& network, const LoadScenario& scenario);

struct PowerFlowOptions {
  double tolerance = 1e-8;  // pu mismatch
  int max_iterations = 30;
};

enum class PowerFlowStatus { Converged, MaxIterations, Diverged, SingularJacobian };

struct PowerFlowSolution {
  StateVector state;
  int iterations = 0;
  double max_mismatch = 0.0;
  bool converged = false;
  PowerFlowStatus status = PowerFlowStatus::MaxIterations;
};

/// Newton-Raphson on the polar mismatch equations from a flat start.
/// Unknowns are theta at non-slack buses and V at PQ buses. When the run
/// does not converge the iterate with the smallest mismatch is returned with
/// `converged == false`; a singular Jacobian is reported through `status`.
PowerFlowSolution solve_power_flow(const NetworkCase& network, const AdmittanceMatrix& ybus,
                                   const LoadScenario& scenario,
                                   const PowerFlowOptions& options = {});

PowerFlowSolution solve_power_flow(const NetworkCase& network, const LoadScenario& scenario,
                                   const PowerFlowOptions& options = {});

}  // namespace gridstate
