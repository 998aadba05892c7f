#include <cstdio>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "gridstate/case_model.hpp"
#include "gridstate/dataset.hpp"
#include "gridstate/ensemble.hpp"
#include "gridstate/error.hpp"
#include "gridstate/experiment.hpp"
#include "gridstate/forecaster.hpp"
#include "gridstate/manifest.hpp"
#include "gridstate/measurement.hpp"
#include "gridstate/profile.hpp"
#include "gridstate/rng.hpp"
#include "gridstate/wls.hpp"

namespace fs = std::filesystem;
using namespace gridstate;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(path.string() + ": cannot open file");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void emit(const std::string& out_path, const std::string& text) {
  if (out_path.empty() || out_path == "-") {
    std::cout << text;
    return;
  }
  const fs::path p(out_path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(out_path + ": cannot write file");
  out << text;
}

std::string states_header(std::size_t n) {
  std::string h = "t";
  for (std::size_t i = 1; i <= n; ++i) h += ",v_" + std::to_string(i);
  for (std::size_t i = 1; i <= n; ++i) h += ",theta_" + std::to_string(i);
  return h;
}

std::string state_row(std::int64_t t, const StateVector& s) {
  std::string row = std::to_string(t);
  for (Eigen::Index i = 0; i < s.v.size(); ++i) (row += ',') += format_double(s.v[i]);
  for (Eigen::Index i = 0; i < s.theta.size(); ++i) (row += ',') += format_double(s.theta[i]);
  return row;
}

std::string metrics_csv(const ErrorMetrics& m) {
  std::string out = "metric,value\n";
  out += "v_rmse_pct," + format_double(m.v_rmse_pct) + "\n";
  out += "v_mae_pct," + format_double(m.v_mae_pct) + "\n";
  out += "theta_rmse_deg," + format_double(m.theta_rmse_deg) + "\n";
  out += "theta_mae_deg," + format_double(m.theta_mae_deg) + "\n";
  out += "samples," + std::to_string(m.samples) + "\n";
  return out;
}

ExperimentConfig config_from(const std::string& path) {
  ExperimentConfig c = load_experiment_config(path);
  apply_seed_override(c);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_st("gridstate"));
  spdlog::set_pattern("[%l] %v");

  CLI::App app{"Power-system state estimation toolkit: WLS, stacked ResNetD ensembles, forecasting"};
  app.require_subcommand(1);
  app.set_version_flag("--version", toolkit_version());
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")->capture_default_str();

  // case validate
  auto* case_cmd = app.add_subcommand("case", "Network case files")->require_subcommand(1);
  auto* case_validate = case_cmd->add_subcommand("validate", "Parse and validate a JSON case file");
  std::string case_file;
  case_validate->add_option("file", case_file, "Case JSON")->required();

  // profile synth|import
  auto* profile_cmd = app.add_subcommand("profile", "Hourly load profiles")->require_subcommand(1);
  auto* profile_synth = profile_cmd->add_subcommand("synth", "Synthesize a peak-normalized profile");
  std::size_t hours = 8760;
  std::uint64_t seed = 1;
  ProfileParams params;
  std::string out_path;
  profile_synth->add_option("--hours", hours, "Length in hours (>= 48)")->capture_default_str();
  profile_synth->add_option("--seed", seed, "Seed (GRIDSTATE_SEED overrides)")->capture_default_str();
  profile_synth->add_option("--daily", params.daily_amplitude, "Daily amplitude")->capture_default_str();
  profile_synth->add_option("--weekly", params.weekly_amplitude, "Weekly amplitude")->capture_default_str();
  profile_synth->add_option("--noise", params.noise, "Noise standard deviation")->capture_default_str();
  profile_synth->add_option("-o,--out", out_path, "Output file (default stdout)");
  auto* profile_import = profile_cmd->add_subcommand("import", "Peak-normalize a one-value-per-line file");
  std::string input_path;
  profile_import->add_option("file", input_path, "Input file")->required();
  profile_import->add_option("-o,--out", out_path, "Output file (default stdout)");

  // dataset generate
  auto* dataset_cmd = app.add_subcommand("dataset", "Training datasets")->require_subcommand(1);
  auto* dataset_generate = dataset_cmd->add_subcommand("generate", "Power flow + noise + WLS labels per hour");
  std::string config_path;
  dataset_generate->add_option("-c,--config", config_path, "Experiment TOML")->required();
  dataset_generate->add_option("-o,--out", out_path, "Dataset CSV")->required();

  // wls solve
  auto* wls_cmd = app.add_subcommand("wls", "Weighted least squares estimation")->require_subcommand(1);
  auto* wls_solve = wls_cmd->add_subcommand("solve", "Gauss-Newton WLS for every measurement row");
  std::string plan = "full14";
  std::string measurements_path;
  wls_solve->add_option("--case", case_file, "Case JSON")->required();
  wls_solve->add_option("--plan", plan, "Plan preset or plan JSON")->capture_default_str();
  wls_solve->add_option("--measurements", measurements_path, "CSV with z_1..z_m columns")->required();
  wls_solve->add_option("-o,--out", out_path, "Output CSV (default stdout)");

  // train
  auto* train_cmd = app.add_subcommand("train", "Train the stacked ensemble on a dataset");
  std::string dataset_path;
  std::string model_dir;
  train_cmd->add_option("-c,--config", config_path, "Experiment TOML (case and training settings)")->required();
  train_cmd->add_option("--dataset", dataset_path, "Dataset CSV")->required();
  train_cmd->add_option("-o,--out", model_dir, "Model directory")->required();

  // estimate
  auto* estimate_cmd = app.add_subcommand("estimate", "Estimate states with a trained ensemble");
  std::string forecast_path;
  std::string history_path;
  estimate_cmd->add_option("--model", model_dir, "Model directory")->required();
  estimate_cmd->add_option("--measurements", measurements_path, "CSV with z_1..z_m; empty cells are missing")
      ->required();
  estimate_cmd->add_option("--forecast", forecast_path, "Forecast model for missing channels");
  estimate_cmd->add_option("--history", history_path, "State CSV preceding the first row");
  estimate_cmd->add_option("--case", case_file, "Case JSON (needed with --forecast)");
  estimate_cmd->add_option("--plan", plan, "Plan preset or JSON (needed with --forecast)")->capture_default_str();
  estimate_cmd->add_option("-o,--out", out_path, "Output CSV (default stdout)");

  // forecast fit|next
  auto* forecast_cmd = app.add_subcommand("forecast", "State forecasting")->require_subcommand(1);
  auto* forecast_fit = forecast_cmd->add_subcommand("fit", "Fit per-state lag regressions");
  std::string states_path;
  int lags = 24;
  forecast_fit->add_option("--states", states_path, "CSV with v_i/theta_i columns, oldest first")->required();
  forecast_fit->add_option("--lags", lags, "Lag count h")->capture_default_str();
  forecast_fit->add_option("-o,--out", out_path, "Forecast model JSON")->required();
  auto* forecast_next_cmd = forecast_cmd->add_subcommand("next", "Forecast the state after the last row");
  forecast_next_cmd->add_option("--model", forecast_path, "Forecast model JSON")->required();
  forecast_next_cmd->add_option("--states", states_path, "CSV with at least h+1 rows")->required();
  forecast_next_cmd->add_option("-o,--out", out_path, "Output CSV (default stdout)");

  // evaluate
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Metrics of a trained ensemble on a dataset");
  std::string which = "test";
  evaluate_cmd->add_option("--model", model_dir, "Model directory")->required();
  evaluate_cmd->add_option("--dataset", dataset_path, "Dataset CSV")->required();
  evaluate_cmd->add_option("--split", which, "test, meta, base or all")
      ->check(CLI::IsMember({"test", "meta", "base", "all"}))
      ->capture_default_str();
  evaluate_cmd->add_option("-o,--out", out_path, "Output CSV (default stdout)");

  // report
  auto* report_cmd = app.add_subcommand("report", "Run a full experiment and write its report");
  report_cmd->add_option("-c,--config", config_path, "Experiment TOML")->required();
  report_cmd->add_option("-o,--out", model_dir, "Output directory (overrides output.dir)");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (case_validate->parsed()) {
      const NetworkCase c = load_case(case_file);
      const auto slack = c.buses()[c.slack_index()].id;
      std::cout << case_file << ": ok, " << c.bus_count() << " buses, " << c.branch_count()
                << " branches, slack bus " << slack << "\n";
    } else if (profile_synth->parsed()) {
      if (const char* env = std::getenv("GRIDSTATE_SEED"); env && *env) seed = std::stoull(env);
      const LoadProfile p = synth_profile(hours, seed, params);
      emit(out_path, "# " + p.provenance + "\n" + profile_to_csv(p));
    } else if (profile_import->parsed()) {
      const LoadProfile p = load_profile(input_path);
      emit(out_path, "# " + p.provenance + "\n" + profile_to_csv(p));
    } else if (dataset_generate->parsed()) {
      const ExperimentConfig c = config_from(config_path);
      const NetworkCase network = load_case(c.case_file);
      const MeasurementPlan mp = resolve_plan(c.plan, network);
      const LoadProfile p = c.profile_file ? load_profile(*c.profile_file)
                                           : synth_profile(c.hours, derive_seed(c.seed, "profile"), c.profile);
      DatasetConfig dc;
      dc.noise = c.train_noise();
      dc.seed = derive_seed(c.seed, "dataset");
      dc.threads = c.threads;
      const Dataset data = generate_dataset(network, mp, p, dc);
      RunManifest manifest;
      manifest.config_hash = sha256_hex(c.canonical_json());
      manifest.seeds = {{"master", c.seed}, {"dataset", dc.seed}};
      write_dataset(data, out_path, manifest.hash());
      std::cerr << data.rows.size() << " rows written to " << out_path << " (" << data.skipped.size()
                << " hours skipped)\n";
    } else if (wls_solve->parsed()) {
      const NetworkCase network = load_case(case_file);
      const AdmittanceMatrix ybus = build_ybus(network);
      const MeasurementPlan mp = resolve_plan(plan, network);
      const CsvTable table = read_csv(measurements_path);
      std::string out = states_header(network.bus_count()) + ",iterations,objective\n";
      for (const MeasurementVector& z : measurements_from_table(table, measurements_path)) {
        const EstimationResult r = estimate_wls(z, mp, ybus);
        if (!r.converged) spdlog::warn("row t={} did not converge in {} iterations", z.timestamp, r.iterations);
        out += state_row(z.timestamp, r.state) + "," + std::to_string(r.iterations) + "," +
               format_double(r.objective) + "\n";
      }
      emit(out_path, out);
    } else if (train_cmd->parsed()) {
      const ExperimentConfig c = config_from(config_path);
      const NetworkCase network = load_case(c.case_file);
      const Dataset data = read_dataset(dataset_path);
      if (data.buses != network.bus_count()) throw Error("dataset and case bus counts differ");
      EnsembleConfig ec = c.ensemble;
      ec.training.seed = derive_seed(c.seed, "ensemble");
      ec.threads = c.threads;
      const SplitSpec split = SplitSpec::make(data.rows.size(), derive_seed(c.seed, "split"));
      const EnsembleModel model = train_ensemble(data.noisy(), data.labels(), network.slack_index(), split, ec);
      RunManifest manifest;
      manifest.config_hash = sha256_hex(c.canonical_json());
      manifest.seeds = {{"master", c.seed}, {"split", split.seed}, {"ensemble", ec.training.seed}};
      manifest.inputs = {{"dataset", sha256_hex(slurp(dataset_path))}};
      model.save(model_dir, manifest.hash());
      std::cerr << "model written to " << model_dir << "\n";
    } else if (estimate_cmd->parsed()) {
      const EnsembleModel model = EnsembleModel::load(model_dir);
      const CsvTable table = read_csv(measurements_path);
      const auto rows = measurements_from_table(table, measurements_path);

      std::optional<ForecastModel> fm;
      std::optional<NetworkCase> network;
      std::optional<MeasurementPlan> mp;
      std::optional<AdmittanceMatrix> ybus;
      std::deque<StateVector> recent;
      if (!forecast_path.empty()) {
        if (case_file.empty() || history_path.empty()) throw Error("--forecast needs --case and --history");
        fm = ForecastModel::from_json(slurp(forecast_path));
        network = load_case(case_file);
        mp = resolve_plan(plan, *network);
        ybus = build_ybus(*network);
        for (auto& s : states_from_table(read_csv(history_path), history_path)) recent.push_back(std::move(s));
        while (recent.size() > fm->window()) recent.pop_front();
        if (recent.size() < fm->window()) {
          throw Error(history_path + ": need at least " + std::to_string(fm->window()) + " states");
        }
      }
      std::string out = states_header(model.bus_count()) + "\n";
      for (const MeasurementVector& z : rows) {
        MeasurementVector input = z;
        if (!z.fully_available() && fm) {
          const std::vector<StateVector> window(recent.begin(), recent.end());
          input = pseudo_measurements(forecast_next(*fm, window), z, *mp, *ybus);
        }
        const StateVector s = model.estimate(input);
        out += state_row(z.timestamp, s) + "\n";
        if (fm) {
          recent.push_back(s);
          recent.pop_front();
        }
      }
      emit(out_path, out);
    } else if (forecast_fit->parsed()) {
      const auto history = states_from_table(read_csv(states_path), states_path);
      const ForecastModel fm = fit_forecaster(history, lags);
      emit(out_path, fm.to_json());
    } else if (forecast_next_cmd->parsed()) {
      const ForecastModel fm = ForecastModel::from_json(slurp(forecast_path));
      const CsvTable table = read_csv(states_path);
      const auto states = states_from_table(table, states_path);
      if (states.size() < fm.window()) {
        throw Error(states_path + ": need at least " + std::to_string(fm.window()) + " states");
      }
      const std::vector<StateVector> window(states.end() - static_cast<std::ptrdiff_t>(fm.window()), states.end());
      const int tc = table.column("t");
      const std::int64_t next_t =
          tc >= 0 ? static_cast<std::int64_t>(table.rows.back()[static_cast<std::size_t>(tc)]) + 1
                  : static_cast<std::int64_t>(states.size());
      emit(out_path, states_header(window.front().size()) + "\n" + state_row(next_t, forecast_next(fm, window)) + "\n");
    } else if (evaluate_cmd->parsed()) {
      const EnsembleModel model = EnsembleModel::load(model_dir);
      const Dataset data = read_dataset(dataset_path);
      std::vector<std::size_t> idx;
      if (which == "all") {
        idx.resize(data.rows.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
      } else {
        if (model.split().size() != data.rows.size()) {
          throw Error("dataset has " + std::to_string(data.rows.size()) + " rows but the model split covers " +
                      std::to_string(model.split().size()) + "; use --split all");
        }
        idx = which == "test" ? model.split().test : which == "meta" ? model.split().meta_train : model.split().base_train;
      }
      Eigen::MatrixXd x = select_columns(data.labels(), idx);
      x.row(static_cast<Eigen::Index>(model.bus_count() + model.slack_index())).setZero();
      emit(out_path, metrics_csv(evaluate(model, select_columns(data.noisy(), idx), x)));
    } else if (report_cmd->parsed()) {
      ExperimentConfig c = config_from(config_path);
      if (!model_dir.empty()) c.output_dir = model_dir;
      const ExperimentResult r = run_experiment(c);
      std::cout << report_markdown(r);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
