#include "gridstate/powerflow.hpp"

#include <cmath>
#include <limits>

#include <Eigen/LU>

#include "gridstate/error.hpp"

namespace gridstate {

StateVector StateVector::flat(const NetworkCase& network, bool use_setpoints) {
  const auto n = static_cast<Eigen::Index>(network.bus_count());
  StateVector s{Eigen::VectorXd::Ones(n), Eigen::VectorXd::Zero(n)};
  if (use_setpoints) {
    const auto buses = network.buses();
    for (Eigen::Index i = 0; i < n; ++i) {
      const Bus& b = buses[static_cast<std::size_t>(i)];
      if (b.kind != BusKind::PQ) s.v[i] = *b.v_setpoint;
    }
  }
  return s;
}

Eigen::VectorXd StateVector::stacked() const {
  Eigen::VectorXd x(v.size() + theta.size());
  x << v, theta;
  return x;
}

StateVector StateVector::from_stacked(const Eigen::Ref<const Eigen::VectorXd>& x) {
  const Eigen::Index n = x.size() / 2;
  return {x.head(n), x.tail(n)};
}

BusInjections injected_power(const StateVector& state, const AdmittanceMatrix& ybus) {
  const auto n = static_cast<Eigen::Index>(ybus.n);
  BusInjections s{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
  for (std::size_t i = 0; i < ybus.n; ++i) {
    double p = 0.0, q = 0.0;
    for (const auto& [j, y] : ybus.rows[i]) {
      const double th = state.theta[static_cast<Eigen::Index>(i)] -
                        state.theta[static_cast<Eigen::Index>(j)];
      const double c = std::cos(th), sn = std::sin(th);
      const double vj = state.v[static_cast<Eigen::Index>(j)];
      p += vj * (y.real() * c + y.imag() * sn);
      q += vj * (y.real() * sn - y.imag() * c);
    }
    const double vi = state.v[static_cast<Eigen::Index>(i)];
    s.p[static_cast<Eigen::Index>(i)] = vi * p;
    s.q[static_cast<Eigen::Index>(i)] = vi * q;
  }
  return s;
}

Eigen::MatrixXd injection_jacobian(const StateVector& state, const AdmittanceMatrix& ybus) {
  const auto n = static_cast<Eigen::Index>(ybus.n);
  const BusInjections s = injected_power(state, ybus);
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(2 * n, 2 * n);

  for (Eigen::Index i = 0; i < n; ++i) {
    const double vi = state.v[i];
    for (const auto& [jj, y] : ybus.rows[static_cast<std::size_t>(i)]) {
      const auto j = static_cast<Eigen::Index>(jj);
      const double g = y.real(), b = y.imag();
      if (j == i) {
        jac(i, i) = -s.q[i] - b * vi * vi;              // dP_i/dtheta_i
        jac(i, n + i) = s.p[i] / vi + g * vi;           // dP_i/dV_i
        jac(n + i, i) = s.p[i] - g * vi * vi;           // dQ_i/dtheta_i
        jac(n + i, n + i) = s.q[i] / vi - b * vi;       // dQ_i/dV_i
      } else {
        const double th = state.theta[i] - state.theta[j];
        const double c = std::cos(th), sn = std::sin(th);
        const double vj = state.v[j];
        jac(i, j) = vi * vj * (g * sn - b * c);
        jac(i, n + j) = vi * (g * c + b * sn);
        jac(n + i, j) = -vi * vj * (g * c + b * sn);
        jac(n + i, n + j) = vi * (g * sn - b * c);
      }
    }
  }
  return jac;
}

BusInjections scheduled_injections(const NetworkCase& network, const LoadScenario& scenario) {
  const auto n = static_cast<Eigen::Index>(network.bus_count());
  if (scenario.scale.size() != n) throw ShapeError("load scenario length does not match bus count");
  const auto buses = network.buses();

  double nominal = 0.0, scaled = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    nominal += buses[static_cast<std::size_t>(i)].p_load_mw;
    scaled += scenario.scale[i] * buses[static_cast<std::size_t>(i)].p_load_mw;
  }
  const double gen_scale = nominal != 0.0 ? scaled / nominal : 1.0;

  BusInjections s{Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const Bus& b = buses[static_cast<std::size_t>(i)];
    s.p[i] = (gen_scale * b.p_gen_mw - scenario.scale[i] * b.p_load_mw) / network.base_mva();
    s.q[i] = (gen_scale * b.q_gen_mvar - scenario.scale[i] * b.q_load_mvar) / network.base_mva();
  }
  return s;
}

PowerFlowSolution solve_power_flow(const NetworkCase& network, const AdmittanceMatrix& ybus,
                                   const LoadScenario& scenario,
                                   const PowerFlowOptions& options) {
  const auto n = static_cast<Eigen::Index>(network.bus_count());
  const BusInjections sched = scheduled_injections(network, scenario);
  const auto buses = network.buses();

  // unknown ordering: theta at non-slack buses, then V at PQ buses
  std::vector<Eigen::Index> angle_buses, magnitude_buses;
  for (Eigen::Index i = 0; i < n; ++i) {
    const BusKind kind = buses[static_cast<std::size_t>(i)].kind;
    if (kind != BusKind::Slack) angle_buses.push_back(i);
    if (kind == BusKind::PQ) magnitude_buses.push_back(i);
  }
  const auto na = static_cast<Eigen::Index>(angle_buses.size());
  const auto nm = static_cast<Eigen::Index>(magnitude_buses.size());

  StateVector state = StateVector::flat(network);

  auto mismatch = [&](const StateVector& s) {
    const BusInjections inj = injected_power(s, ybus);
    Eigen::VectorXd f(na + nm);
    for (Eigen::Index k = 0; k < na; ++k) f[k] = sched.p[angle_buses[k]] - inj.p[angle_buses[k]];
    for (Eigen::Index k = 0; k < nm; ++k) {
      f[na + k] = sched.q[magnitude_buses[k]] - inj.q[magnitude_buses[k]];
    }
    return f;
  };

  PowerFlowSolution result;
  Eigen::VectorXd f = mismatch(state);
  double norm = f.size() ? f.lpNorm<Eigen::Infinity>() : 0.0;
  result.state = state;
  result.max_mismatch = norm;

  for (int iter = 0;; ++iter) {
    if (!std::isfinite(norm)) {
      result.status = PowerFlowStatus::Diverged;
      return result;
    }
    if (norm < result.max_mismatch) {
      result.state = state;
      result.max_mismatch = norm;
    }
    if (norm < options.tolerance) {
      result.state = state;
      result.max_mismatch = norm;
      result.iterations = iter;
      result.converged = true;
      result.status = PowerFlowStatus::Converged;
      return result;
    }
    if (iter >= options.max_iterations) {
      result.iterations = iter;
      result.status = PowerFlowStatus::MaxIterations;
      return result;
    }

    const Eigen::MatrixXd full = injection_jacobian(state, ybus);
    Eigen::MatrixXd jac(na + nm, na + nm);
    for (Eigen::Index r = 0; r < na + nm; ++r) {
      const Eigen::Index row = r < na ? angle_buses[r] : n + magnitude_buses[r - na];
      for (Eigen::Index c = 0; c < na + nm; ++c) {
        const Eigen::Index col = c < na ? angle_buses[c] : n + magnitude_buses[c - na];
        jac(r, c) = full(row, col);
      }
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(jac);
    const double rcond = lu.rcond();
    if (!(rcond > 1e-14)) {
      result.iterations = iter;
      result.status = PowerFlowStatus::SingularJacobian;
      return result;
    }
    const Eigen::VectorXd dx = lu.solve(f);
    for (Eigen::Index k = 0; k < na; ++k) state.theta[angle_buses[k]] += dx[k];
    for (Eigen::Index k = 0; k < nm; ++k) state.v[magnitude_buses[k]] += dx[na + k];

    f = mismatch(state);
    norm = f.size() ? f.lpNorm<Eigen::Infinity>() : 0.0;
    if (norm > 1e10) {
      result.iterations = iter + 1;
      result.status = PowerFlowStatus::Diverged;
      return result;
    }
  }
}

PowerFlowSolution solve_power_flow(const NetworkCase& network, const LoadScenario& scenario,
                                   const PowerFlowOptions& options) {
  return solve_power_flow(network, build_ybus(network), scenario, options);
}

}  // namespace gridstate
