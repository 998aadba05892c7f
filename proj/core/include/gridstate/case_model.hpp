#pragma once

#include <complex>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/SparseCore>

namespace gridstate {

enum class BusKind { Slack, PV, PQ };
enum class BranchStatus { In, Out };

std::string_view to_string(BusKind kind);
std::string_view to_string(BranchStatus status);

/// One bus of the network. Loads and shunts are kept in MW / MVAr as given
/// in the case file; per-unit conversion happens on demand.
struct Bus {
  int id = 0;
  BusKind kind = BusKind::PQ;
  double p_load_mw = 0.0;
  double q_load_mvar = 0.0;
  double gs_mw = 0.0;    // shunt conductance, MW at 1 pu
  double bs_mvar = 0.0;  // shunt susceptance, MVAr at 1 pu
  std::optional<double> v_setpoint;  // pu, PV and Slack only
  double base_kv = 0.0;
  double p_gen_mw = 0.0;
  double q_gen_mvar = 0.0;

  bool operator==(const Bus&) const = default;
};

/// Pi-model branch. `tap` is the off-nominal ratio on the from side,
/// `shift` the phase shift in radians.
struct Branch {
  int from_bus = 0;
  int to_bus = 0;
  double r = 0.0;
  double x = 0.0;
  double b_charging = 0.0;
  double tap = 1.0;
  double shift = 0.0;
  BranchStatus status = BranchStatus::In;

  bool operator==(const Branch&) const = default;
};

/// Validated, immutable network. Buses keep file order; `index_of` maps an
/// external bus id to its dense 0-based position.
class NetworkCase {
 public:
  /// Validates and builds a case. Throws CaseError on duplicate bus ids,
  /// missing or multiple slack buses, dangling or self-loop branches,
  /// non-positive setpoints or taps, negative resistance, or a network that
  /// is disconnected over in-service branches.
  static NetworkCase create(double base_mva, std::vector<Bus> buses,
                            std::vector<Branch> branches);

  double base_mva() const noexcept { return base_mva_; }
  std::span<const Bus> buses() const noexcept { return buses_; }
  std::span<const Branch> branches() const noexcept { return branches_; }
  std::size_t bus_count() const noexcept { return buses_.size(); }
  std::size_t branch_count() const noexcept { return branches_.size(); }
  std::size_t slack_index() const noexcept { return slack_index_; }

  /// Dense index of bus `id`; throws CaseError if absent.
  std::size_t index_of(int id) const;
  std::optional<std::size_t> find_index(int id) const;

  /// Index of the first in-service branch joining the two buses in the given
  /// orientation, if any.
  std::optional<std::size_t> find_branch(int from_id, int to_id) const;

  /// Copy with branch `k` switched to `status` (re-validated).
  NetworkCase with_branch_status(std::size_t k, BranchStatus status) const;

  bool operator==(const NetworkCase& other) const {
    return base_mva_ == other.base_mva_ && buses_ == other.buses_ &&
           branches_ == other.branches_;
  }

 private:
  NetworkCase() = default;

  double base_mva_ = 100.0;
  std::vector<Bus> buses_;
  std::vector<Branch> branches_;
  std::unordered_map<int, std::size_t> index_;
  std::size_t slack_index_ = 0;
};

/// Parses the JSON case schema. Syntax errors carry "line L, column C";
/// field errors carry the JSON path of the field.
NetworkCase parse_case(std::string_view text);
NetworkCase load_case(const std::filesystem::path& path);
std::string serialize_case(const NetworkCase& network);

/// Per-branch admittances retained for flow equations, in pu.
///
///   I_from = yff * V_from + yft * V_to
///   I_to   = ytf * V_from + ytt * V_to
struct BranchAdmittance {
  std::size_t from = 0;
  std::size_t to = 0;
  bool in_service = true;
  std::complex<double> y_series;
  std::complex<double> y_shunt_from;  // j*b/2 at the from end
  std::complex<double> y_shunt_to;    // j*b/2 at the to end
  std::complex<double> yff, yft, ytf, ytt;
};

struct AdmittanceMatrix {
  using Complex = std::complex<double>;

  std::size_t n = 0;
  Eigen::SparseMatrix<Complex> entries;
  std::vector<BranchAdmittance> branch_admittances;
  /// Row-wise view of `entries`: rows[i] lists (j, Y_ij) for each stored
  /// nonzero, diagonal included.
  std::vector<std::vector<std::pair<std::size_t, Complex>>> rows;

  Complex operator()(std::size_t i, std::size_t j) const {
    return entries.coeff(static_cast<Eigen::Index>(i),
                         static_cast<Eigen::Index>(j));
  }
};

/// Builds Ybus from the standard pi model:
///   y_s = 1/(r + jx), t = tap * e^{j shift}
///   Y_ff = (y_s + jb/2)/tap^2, Y_tt = y_s + jb/2,
///   Y_ft = -y_s/conj(t), Y_tf = -y_s/t,
/// plus bus shunts (gs + j bs)/base_mva on the diagonal. Out-of-service
/// branches contribute nothing. Throws CaseError for an in-service branch
/// with r = x = 0.
AdmittanceMatrix build_ybus(const NetworkCase& network);

}  // namespace gridstate
