#include "gridstate/dataset.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <optional>

#include <spdlog/spdlog.h>

#include "gridstate/error.hpp"
#include "gridstate/manifest.hpp"
#include "gridstate/rng.hpp"
#include "json_io.hpp"
#include "parallel.hpp"

namespace gridstate {

std::string_view to_string(NoiseMode mode) {
  return mode == NoiseMode::Gaussian ? "gaussian" : "bounded";
}

NoiseMode parse_noise_mode(std::string_view s) {
  if (s == "gaussian") return NoiseMode::Gaussian;
  if (s == "bounded") return NoiseMode::BoundedPercent;
  throw Error("unknown noise mode \"" + std::string(s) + "\" (expected gaussian or bounded)");
}

MeasurementVector apply_noise(const MeasurementVector& clean, const NoiseConfig& noise, std::uint64_t seed) {
  if (noise.mode == NoiseMode::Gaussian) return add_gaussian_noise(clean, noise.snr_db, seed);
  return add_bounded_percent_noise(clean, noise.max_pct, seed);
}

namespace {

Eigen::MatrixXd gather(const std::vector<DatasetRow>& rows, Eigen::Index height,
                       Eigen::VectorXd (*get)(const DatasetRow&)) {
  Eigen::MatrixXd out(height, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = get(rows[i]);
  return out;
}

}  // namespace

Eigen::MatrixXd Dataset::noisy() const {
  return gather(rows, static_cast<Eigen::Index>(measurements), [](const DatasetRow& r) { return r.z_noisy; });
}
Eigen::MatrixXd Dataset::clean() const {
  return gather(rows, static_cast<Eigen::Index>(measurements), [](const DatasetRow& r) { return r.z_clean; });
}
Eigen::MatrixXd Dataset::labels() const {
  return gather(rows, static_cast<Eigen::Index>(2 * buses), [](const DatasetRow& r) { return r.x_wls.stacked(); });
}
Eigen::MatrixXd Dataset::truth() const {
  return gather(rows, static_cast<Eigen::Index>(2 * buses), [](const DatasetRow& r) { return r.x_true.stacked(); });
}

Dataset generate_dataset(const NetworkCase& network, const MeasurementPlan& plan, const LoadProfile& profile,
                         const DatasetConfig& config) {
  if (plan.bus_count() != network.bus_count()) throw StageError("dataset", "plan and case bus counts differ");
  if (profile.size() == 0) throw StageError("dataset", "load profile is empty");
  const AdmittanceMatrix ybus = build_ybus(network);
  const std::size_t hours = profile.size();
  const std::uint64_t noise_root = derive_seed(config.seed, "noise");

  std::vector<std::optional<DatasetRow>> slots(hours);
  detail::parallel_for(hours, config.threads, [&](std::size_t t) {
    const auto stamp = static_cast<std::int64_t>(t);
    const LoadScenario scenario = LoadScenario::uniform(network.bus_count(), profile.values[t], stamp);
    const PowerFlowSolution pf = solve_power_flow(network, ybus, scenario, config.power_flow);
    if (!pf.converged) return;
    DatasetRow row;
    row.t = stamp;
    row.x_true = pf.state;
    row.z_clean = evaluate_h(pf.state, plan, ybus);
    const MeasurementVector noisy =
        apply_noise(MeasurementVector::complete(row.z_clean, stamp), config.noise, derive_seed(noise_root, "hour", t));
    row.z_noisy = noisy.values;
    try {
      const EstimationResult est = estimate_wls(noisy, plan, ybus, config.wls);
      if (!est.converged) return;
      row.x_wls = est.state;
    } catch (const SingularMatrixError&) {
      return;
    }
    slots[t] = std::move(row);
  });

  Dataset data;
  data.measurements = plan.size();
  data.buses = network.bus_count();
  for (std::size_t t = 0; t < hours; ++t) {
    if (slots[t]) {
      data.rows.push_back(std::move(*slots[t]));
    } else {
      data.skipped.push_back(static_cast<std::int64_t>(t));
    }
  }
  if (!data.skipped.empty()) {
    spdlog::warn("dataset: skipped {} of {} hours (first at t={})", data.skipped.size(), hours,
                 data.skipped.front());
  }
  const double fraction = static_cast<double>(data.skipped.size()) / static_cast<double>(hours);
  if (fraction > config.max_skip_fraction) {
    throw StageError("dataset", std::to_string(data.skipped.size()) + " of " + std::to_string(hours) +
                                    " hours did not converge (limit " +
                                    format_double(100.0 * config.max_skip_fraction) +
                                    "%); the profile is likely out of range for this case");
  }
  return data;
}

std::string dataset_to_csv(const Dataset& data, bool truth, std::string_view manifest) {
  std::string out;
  if (!manifest.empty()) {
    out += "# manifest=";
    out += manifest;
    out += '\n';
  }
  out += 't';
  for (std::size_t k = 1; k <= data.measurements; ++k) out += ",z_" + std::to_string(k);
  for (std::size_t i = 1; i <= data.buses; ++i) out += ",v_" + std::to_string(i);
  for (std::size_t i = 1; i <= data.buses; ++i) out += ",theta_" + std::to_string(i);
  out += '\n';
  for (const DatasetRow& r : data.rows) {
    out += std::to_string(r.t);
    const Eigen::VectorXd& z = truth ? r.z_clean : r.z_noisy;
    const StateVector& x = truth ? r.x_true : r.x_wls;
    for (Eigen::Index k = 0; k < z.size(); ++k) (out += ',') += format_double(z[k]);
    for (Eigen::Index i = 0; i < x.v.size(); ++i) (out += ',') += format_double(x.v[i]);
    for (Eigen::Index i = 0; i < x.theta.size(); ++i) (out += ',') += format_double(x.theta[i]);
    out += '\n';
  }
  return out;
}

std::filesystem::path truth_path(const std::filesystem::path& path) {
  std::filesystem::path p = path;
  p.replace_extension();
  p += ".truth.csv";
  return p;
}

void write_dataset(const Dataset& data, const std::filesystem::path& path, std::string_view manifest) {
  detail::write_text_file(path, dataset_to_csv(data, false, manifest));
  detail::write_text_file(truth_path(path), dataset_to_csv(data, true, manifest));
}

int CsvTable::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t comma = line.find(',', pos);
    out.push_back(trim(line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos)));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

}  // namespace

CsvTable parse_csv(std::string_view text, std::string_view source) {
  CsvTable table;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  bool have_header = false;
  while (pos < text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    const std::string_view line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split_fields(line);
    if (!have_header) {
      for (auto f : fields) table.header.emplace_back(f);
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw Error(std::string(source) + ": line " + std::to_string(line_no) + ": expected " +
                  std::to_string(table.header.size()) + " fields, found " + std::to_string(fields.size()));
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const std::string_view f = fields[c];
      if (f.empty() || f == "nan" || f == "NaN") {
        row.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      double v = 0.0;
      const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      if (res.ec != std::errc() || res.ptr != f.data() + f.size()) {
        throw Error(std::string(source) + ": line " + std::to_string(line_no) + ", column " + table.header[c] +
                    ": not a number: \"" + std::string(f) + "\"");
      }
      row.push_back(v);
    }
    table.rows.push_back(std::move(row));
  }
  if (!have_header) throw Error(std::string(source) + ": missing header row");
  return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
  return parse_csv(detail::read_text_file(path), path.string());
}

namespace {

std::vector<int> numbered_columns(const CsvTable& table, const std::string& prefix) {
  std::vector<int> cols;
  for (std::size_t i = 1;; ++i) {
    const int c = table.column(prefix + std::to_string(i));
    if (c < 0) break;
    cols.push_back(c);
  }
  return cols;
}

}  // namespace

std::vector<StateVector> states_from_table(const CsvTable& table, std::string_view source) {
  const auto v = numbered_columns(table, "v_");
  const auto th = numbered_columns(table, "theta_");
  if (v.empty() || v.size() != th.size()) {
    throw Error(std::string(source) + ": expected matching v_1..v_n and theta_1..theta_n columns");
  }
  std::vector<StateVector> out;
  out.reserve(table.rows.size());
  const auto n = static_cast<Eigen::Index>(v.size());
  for (const auto& row : table.rows) {
    StateVector s{Eigen::VectorXd(n), Eigen::VectorXd(n)};
    for (Eigen::Index i = 0; i < n; ++i) {
      s.v[i] = row[static_cast<std::size_t>(v[static_cast<std::size_t>(i)])];
      s.theta[i] = row[static_cast<std::size_t>(th[static_cast<std::size_t>(i)])];
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<MeasurementVector> measurements_from_table(const CsvTable& table, std::string_view source) {
  const auto zc = numbered_columns(table, "z_");
  if (zc.empty()) throw Error(std::string(source) + ": expected z_1..z_m columns");
  const int tc = table.column("t");
  std::vector<MeasurementVector> out;
  out.reserve(table.rows.size());
  const auto m = static_cast<Eigen::Index>(zc.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    MeasurementVector z;
    z.timestamp = tc >= 0 ? static_cast<std::int64_t>(row[static_cast<std::size_t>(tc)]) : static_cast<std::int64_t>(r);
    z.values = Eigen::VectorXd(m);
    z.mask.assign(static_cast<std::size_t>(m), true);
    for (Eigen::Index k = 0; k < m; ++k) {
      const double value = row[static_cast<std::size_t>(zc[static_cast<std::size_t>(k)])];
      if (std::isnan(value)) {
        z.values[k] = 0.0;
        z.mask[static_cast<std::size_t>(k)] = false;
      } else {
        z.values[k] = value;
      }
    }
    out.push_back(std::move(z));
  }
  return out;
}

Dataset read_dataset(const std::filesystem::path& path) {
  const CsvTable main = read_csv(path);
  const auto states = states_from_table(main, path.string());
  const auto zs = measurements_from_table(main, path.string());
  Dataset data;
  data.measurements = zs.empty() ? numbered_columns(main, "z_").size() : zs.front().size();
  data.buses = numbered_columns(main, "v_").size();
  data.rows.resize(main.rows.size());
  for (std::size_t r = 0; r < main.rows.size(); ++r) {
    if (!zs[r].fully_available()) throw Error(path.string() + ": dataset rows must not have empty cells");
    data.rows[r].t = zs[r].timestamp;
    data.rows[r].z_noisy = zs[r].values;
    data.rows[r].x_wls = states[r];
    data.rows[r].z_clean = zs[r].values;
    data.rows[r].x_true = states[r];
  }
  const auto tp = truth_path(path);
  if (std::filesystem::exists(tp)) {
    const CsvTable truth = read_csv(tp);
    if (truth.rows.size() != main.rows.size()) throw Error(tp.string() + ": row count differs from " + path.string());
    const auto tstates = states_from_table(truth, tp.string());
    const auto tz = measurements_from_table(truth, tp.string());
    for (std::size_t r = 0; r < truth.rows.size(); ++r) {
      if (tz[r].timestamp != data.rows[r].t) throw Error(tp.string() + ": timestamps differ from " + path.string());
      data.rows[r].z_clean = tz[r].values;
      data.rows[r].x_true = tstates[r];
    }
  }
  return data;
}

}  // namespace gridstate
