#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gridstate/case_model.hpp"
#include "gridstate/measurement.hpp"
#include "gridstate/powerflow.hpp"
#include "gridstate/profile.hpp"
#include "gridstate/wls.hpp"

namespace gridstate {

enum class NoiseMode { Gaussian, BoundedPercent };

std::string_view to_string(NoiseMode mode);
NoiseMode parse_noise_mode(std::string_view s);

struct NoiseConfig {
  NoiseMode mode = NoiseMode::Gaussian;
  double snr_db = 50.0;  // Gaussian mode
  double max_pct = 0.0;  // bounded mode, fraction of |z| (0.03 = 3%)
};

MeasurementVector apply_noise(const MeasurementVector& clean, const NoiseConfig& noise,
                              std::uint64_t seed);

struct DatasetRow {
  std::int64_t t = 0;
  Eigen::VectorXd z_clean;
  Eigen::VectorXd z_noisy;
  StateVector x_true;
  StateVector x_wls;
};

struct Dataset {
  std::size_t measurements = 0;
  std::size_t buses = 0;
  std::vector<DatasetRow> rows;      // ascending t
  std::vector<std::int64_t> skipped;  // hours dropped for non-convergence

  /// Column-per-row matrices.
  Eigen::MatrixXd noisy() const;
  Eigen::MatrixXd clean() const;
  Eigen::MatrixXd labels() const;  // stacked x_wls
  Eigen::MatrixXd truth() const;   // stacked x_true
};

struct DatasetConfig {
  NoiseConfig noise;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  double max_skip_fraction = 0.05;
  PowerFlowOptions power_flow;
  WlsOptions wls;
};

/// For every hour t: scale loads by profile[t], solve the power flow, take
/// z = h(x), add noise seeded by (seed, t) and label the row with the WLS
/// estimate from the noisy vector. Hours whose power flow or WLS fails are
/// skipped; more than `max_skip_fraction` of them raises StageError.
Dataset generate_dataset(const NetworkCase& network, const MeasurementPlan& plan,
                         const LoadProfile& profile, const DatasetConfig& config);

/// Header `t,z_1..z_m,v_1..v_n,theta_1..theta_n`. The main file holds the
/// noisy measurements with WLS labels; the truth file holds the clean
/// measurements with power-flow states. A leading "# manifest=<hash>" line
/// is written when `manifest` is nonempty.
std::string dataset_to_csv(const Dataset& data, bool truth, std::string_view manifest = {});

/// Writes `path` and, next to it, `<stem>.truth.csv`.
void write_dataset(const Dataset& data, const std::filesystem::path& path, std::string_view manifest = {});

/// Reads `path` and its truth companion when present (otherwise the truth
/// fields repeat the main file).
Dataset read_dataset(const std::filesystem::path& path);

std::filesystem::path truth_path(const std::filesystem::path& path);

/// Numeric CSV with a header row. Lines starting with '#' are skipped;
/// empty cells and "nan" read as NaN.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  /// Index of `name` in the header, or -1.
  int column(std::string_view name) const;
};

CsvTable parse_csv(std::string_view text, std::string_view source = "csv");
CsvTable read_csv(const std::filesystem::path& path);

/// Stacked states from the v_i / theta_i columns of a table, one per row.
std::vector<StateVector> states_from_table(const CsvTable& table, std::string_view source = "csv");
/// Measurement vectors from the z_k columns; NaN cells become unavailable.
std::vector<MeasurementVector> measurements_from_table(const CsvTable& table, std::string_view source = "csv");

}  // namespace gridstate
