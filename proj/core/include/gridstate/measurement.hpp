#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gridstate/case_model.hpp"
#include "gridstate/powerflow.hpp"

namespace gridstate {

enum class MeasurementKind { Vmag, Vang, Pinj, Qinj, Pflow, Qflow };
enum class FlowDirection { FromTo, ToFrom };

std::string_view to_string(MeasurementKind kind);
MeasurementKind parse_measurement_kind(std::string_view s);

/// One metered quantity. Bus quantities use `bus` (external id); flows use
/// `branch` (position in the case branch list) and `direction`.
struct MeasurementSpec {
  MeasurementKind kind = MeasurementKind::Vmag;
  int bus = 0;
  std::size_t branch = 0;
  FlowDirection direction = FlowDirection::FromTo;
  double sigma = 0.01;

  bool is_flow() const noexcept {
    return kind == MeasurementKind::Pflow || kind == MeasurementKind::Qflow;
  }
  bool operator==(const MeasurementSpec&) const = default;
};

/// Standard errors used by the presets (pu for power and magnitude, rad for
/// angle).
namespace sigma {
inline constexpr double kVoltageMagnitude = 0.01;
inline constexpr double kVoltageAngle = 0.01414;
inline constexpr double kFlow = 0.01414;
inline constexpr double kInjection = 0.0122;
}  // namespace sigma

/// An ordered measurement set bound to one network case. Binding resolves
/// bus ids to dense indices so evaluation needs only the admittance matrix.
class MeasurementPlan {
 public:
  /// Throws CaseError if a location does not exist or a sigma is not > 0.
  static MeasurementPlan create(std::vector<MeasurementSpec> specs, const NetworkCase& network);

  std::size_t size() const noexcept { return specs_.size(); }
  std::size_t bus_count() const noexcept { return n_; }
  std::size_t slack_index() const noexcept { return slack_; }
  std::size_t state_dimension() const noexcept { return 2 * n_ - 1; }
  const std::vector<MeasurementSpec>& specs() const noexcept { return specs_; }
  const MeasurementSpec& operator[](std::size_t k) const { return specs_[k]; }
  Eigen::VectorXd sigmas() const;

  /// Dense bus index for a bus measurement; for flows, the metering end.
  std::size_t location_index(std::size_t k) const { return locations_[k]; }

  /// Human-readable channel label, e.g. "Pflow(2->3)".
  std::string label(std::size_t k, const NetworkCase& network) const;

 private:
  std::vector<MeasurementSpec> specs_;
  std::vector<std::size_t> locations_;
  std::size_t n_ = 0;
  std::size_t slack_ = 0;
};

std::string plan_to_json(const MeasurementPlan& plan);
MeasurementPlan plan_from_json(std::string_view text, const NetworkCase& network);

/// Values at one instant, aligned with plan order. `mask[k]` is false for an
/// unavailable channel.
struct MeasurementVector {
  std::int64_t timestamp = 0;
  Eigen::VectorXd values;
  std::vector<bool> mask;

  static MeasurementVector complete(Eigen::VectorXd values, std::int64_t timestamp = 0) {
    const auto m = static_cast<std::size_t>(values.size());
    return {timestamp, std::move(values), std::vector<bool>(m, true)};
  }
  std::size_t size() const noexcept { return static_cast<std::size_t>(values.size()); }
  bool fully_available() const;
  std::size_t missing_count() const;
};

/// Noiseless measurement function h(x).
Eigen::VectorXd evaluate_h(const StateVector& state, const MeasurementPlan& plan,
                           const AdmittanceMatrix& ybus);

/// Jacobian dh/dx, m x (2n-1). Columns: angles of the non-slack buses in
/// dense bus order, then all n magnitudes. The slack angle is not a column.
Eigen::MatrixXd evaluate_H(const StateVector& state, const MeasurementPlan& plan,
                           const AdmittanceMatrix& ybus);

/// Packs a state into the (2n-1) estimation coordinates used by evaluate_H.
Eigen::VectorXd to_estimation_coordinates(const StateVector& state, std::size_t slack);
/// Inverse of to_estimation_coordinates; the slack angle is set to zero.
StateVector from_estimation_coordinates(const Eigen::VectorXd& x, std::size_t slack);

/// Pass this as snr_db to disable noise.
inline constexpr double kNoNoise = std::numeric_limits<double>::infinity();

/// Zero-mean Gaussian noise with variance chosen so that the mean signal
/// power over the available entries divided by the noise variance equals
/// 10^(snr_db/10). Deterministic in (clean, snr_db, seed).
MeasurementVector add_gaussian_noise(const MeasurementVector& clean, double snr_db,
                                     std::uint64_t seed);

/// Draws e_k ~ U[0, max_pct * |z_k|] per entry; adds it to the first
/// ceil(m/2) entries in plan order and subtracts it from the rest.
MeasurementVector add_bounded_percent_noise(const MeasurementVector& clean, double max_pct,
                                            std::uint64_t seed);

enum class PlanPreset { Minimal14, Full14, Bench30, Bench57, Bench69, Bench118 };

PlanPreset parse_plan_preset(std::string_view name);
std::string_view to_string(PlanPreset preset);

/// Built-in placements.
///
/// minimal14: P/Q injections at buses 2, 4, 8, 10, 11, 12, 14; V and theta at
/// bus 1; P/Q flows on 1-2, 2-3, 2-5, 5-6, 4-7, 6-11, 6-13, 12-13 (32 total).
///
/// The remaining presets fill a fixed count (full14 64, bench30 110,
/// bench57 216, bench69 210, bench118 562) with a deterministic rule:
///   1. V and theta at the slack bus;
///   2. P/Q injections at every other load bus (non-slack, nonzero load,
///      file order, starting with the first);
///   3. P/Q from-end flows on the branches of a breadth-first spanning tree
///      rooted at the slack bus;
///   4. P/Q from-end flows on the remaining in-service branches;
///   5. P/Q to-end flows on in-service branches in case order;
///   6. V at non-slack buses; a single V fills an odd remainder.
/// These placements are stand-ins: only the counts are published.
MeasurementPlan default_plan(const NetworkCase& network, PlanPreset preset);

/// Numerical rank of H at flat start (observability check).
std::size_t observability_rank(const MeasurementPlan& plan, const AdmittanceMatrix& ybus);

}  // namespace gridstate
