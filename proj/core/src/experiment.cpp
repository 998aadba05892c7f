#include "gridstate/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>
#include <toml.hpp>

#include "gridstate/error.hpp"
#include "gridstate/forecaster.hpp"
#include "gridstate/rng.hpp"
#include "json_io.hpp"

namespace gridstate {

using detail::json;

NoiseConfig ExperimentConfig::train_noise() const { return {noise_mode, train_snr_db, max_pct}; }
NoiseConfig ExperimentConfig::test_noise() const { return {noise_mode, test_snr_db, max_pct}; }

std::string ExperimentConfig::canonical_json() const {
  const nn::TrainingConfig& t = ensemble.training;
  json j = {
      {"seed", std::to_string(seed)},
      {"plan", std::filesystem::path(plan).extension() == ".json" ? std::string("file") : plan},
      {"hours", hours},
      {"profile",
       {{"source", profile_file ? "file" : "synthetic"},
        {"base", profile.base},
        {"daily_amplitude", profile.daily_amplitude},
        {"weekly_amplitude", profile.weekly_amplitude},
        {"noise", profile.noise},
        {"floor", profile.floor}}},
      {"noise",
       {{"mode", to_string(noise_mode)},
        {"train_snr_db", train_snr_db},
        {"test_snr_db", test_snr_db},
        {"max_pct", max_pct}}},
      {"training",
       {{"learners", ensemble.learners},
        {"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"learning_rate", t.learning_rate},
        {"beta1", t.beta1},
        {"beta2", t.beta2},
        {"epsilon", t.epsilon},
        {"huber_delta", t.huber_delta},
        {"hidden_width", ensemble.hidden_width},
        {"input_scaling", to_string(ensemble.input_scaling)},
        {"ridge", ensemble.ridge}}},
      {"forecast", {{"lags", forecast_lags}, {"missing_fraction", missing_fraction}}},
  };
  return j.dump();
}

namespace {

// Reads typed keys from one TOML table and rejects keys nobody asked for.
class TableReader {
 public:
  TableReader(const toml::table* table, std::string name) : table_(table), name_(std::move(name)) {}

  template <typename T>
  void read(std::string_view key, T& out) {
    used_.insert(std::string(key));
    if (!table_) return;
    const toml::node* node = table_->get(key);
    if (!node) return;
    if constexpr (std::is_same_v<T, std::string>) {
      if (auto v = node->value<std::string>()) {
        out = *v;
        return;
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (auto v = node->value<double>()) {
        out = *v;
        return;
      }
    } else {
      if (auto v = node->value<std::int64_t>()) {
        if (*v < 0 && std::is_unsigned_v<T>) fail(key, "must be nonnegative");
        out = static_cast<T>(*v);
        return;
      }
    }
    fail(key, "has the wrong type");
  }

  void finish() const {
    if (!table_) return;
    for (const auto& [key, node] : *table_) {
      if (!used_.count(std::string(key.str()))) {
        throw StageError("config", qualified(key.str()) + ": unknown key");
      }
    }
  }

  [[noreturn]] void fail(std::string_view key, std::string_view what) const {
    throw StageError("config", qualified(key) + ": " + std::string(what));
  }

 private:
  std::string qualified(std::string_view key) const {
    return name_.empty() ? std::string(key) : name_ + "." + std::string(key);
  }

  const toml::table* table_;
  std::string name_;
  std::set<std::string> used_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

}  // namespace

ExperimentConfig parse_experiment_config(std::string_view toml_text, const std::filesystem::path& base_dir,
                                         std::string_view source) {
  toml::table root;
  try {
    root = toml::parse(toml_text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << source << ": line " << e.source().begin.line << ", column " << e.source().begin.column << ": "
        << e.description();
    throw StageError("config", msg.str());
  }

  ExperimentConfig c;
  static const std::set<std::string> kSections{"case", "profile", "noise", "training", "forecast", "output"};
  for (const auto& [key, node] : root) {
    const std::string k(key.str());
    if (k == "seed" || k == "threads") continue;
    if (!kSections.count(k) || !node.is_table()) throw StageError("config", k + ": unknown key");
  }
  if (const toml::node* node = root.get("seed")) {
    const auto v = node->value<std::int64_t>();
    if (!v || *v < 0) throw StageError("config", "seed: must be a nonnegative integer");
    c.seed = static_cast<std::uint64_t>(*v);
  }
  if (const toml::node* node = root.get("threads")) {
    const auto v = node->value<std::int64_t>();
    if (!v || *v < 0) throw StageError("config", "threads: must be a nonnegative integer");
    c.threads = static_cast<unsigned>(*v);
  }
  {
    TableReader r(root["case"].as_table(), "case");
    std::string file;
    r.read("file", file);
    r.read("plan", c.plan);
    r.finish();
    if (file.empty()) throw StageError("config", "case.file is required");
    c.case_file = resolve(base_dir, file);
    if (std::filesystem::path(c.plan).extension() == ".json") c.plan = resolve(base_dir, c.plan).string();
  }
  {
    TableReader r(root["profile"].as_table(), "profile");
    std::string file;
    r.read("hours", c.hours);
    r.read("file", file);
    r.read("base", c.profile.base);
    r.read("daily_amplitude", c.profile.daily_amplitude);
    r.read("weekly_amplitude", c.profile.weekly_amplitude);
    r.read("noise", c.profile.noise);
    r.read("floor", c.profile.floor);
    r.finish();
    if (!file.empty()) c.profile_file = resolve(base_dir, file);
  }
  {
    TableReader r(root["noise"].as_table(), "noise");
    std::string mode(to_string(c.noise_mode));
    r.read("mode", mode);
    r.read("train_snr_db", c.train_snr_db);
    r.read("test_snr_db", c.test_snr_db);
    r.read("max_pct", c.max_pct);
    r.finish();
    try {
      c.noise_mode = parse_noise_mode(mode);
    } catch (const Error& e) {
      throw StageError("config", std::string("noise.mode: ") + e.what());
    }
  }
  {
    TableReader r(root["training"].as_table(), "training");
    nn::TrainingConfig& t = c.ensemble.training;
    r.read("learners", c.ensemble.learners);
    r.read("epochs", t.epochs);
    r.read("batch_size", t.batch_size);
    r.read("learning_rate", t.learning_rate);
    r.read("beta1", t.beta1);
    r.read("beta2", t.beta2);
    r.read("epsilon", t.epsilon);
    r.read("huber_delta", t.huber_delta);
    r.read("hidden_width", c.ensemble.hidden_width);
    r.read("ridge", c.ensemble.ridge);
    std::string scaling(to_string(c.ensemble.input_scaling));
    r.read("input_scaling", scaling);
    r.finish();
    try {
      c.ensemble.input_scaling = parse_input_scaling(scaling);
    } catch (const Error& e) {
      throw StageError("config", std::string("training.input_scaling: ") + e.what());
    }
    if (c.ensemble.learners <= 0) r.fail("learners", "must be positive");
    if (t.epochs < 0) r.fail("epochs", "must be nonnegative");
    if (t.batch_size <= 0) r.fail("batch_size", "must be positive");
    if (!(t.huber_delta > 0.0)) r.fail("huber_delta", "must be positive");
  }
  {
    TableReader r(root["forecast"].as_table(), "forecast");
    r.read("lags", c.forecast_lags);
    r.read("missing_fraction", c.missing_fraction);
    r.finish();
    if (c.forecast_lags < 0) r.fail("lags", "must be nonnegative");
    if (!(c.missing_fraction >= 0.0 && c.missing_fraction <= 1.0)) r.fail("missing_fraction", "must lie in [0, 1]");
  }
  {
    TableReader r(root["output"].as_table(), "output");
    std::string dir;
    r.read("dir", dir);
    r.finish();
    if (!dir.empty()) c.output_dir = resolve(base_dir, dir);
  }
  if (c.hours < 48) throw StageError("config", "profile.hours must be at least 48");
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = detail::read_text_file(path);
  } catch (const Error& e) {
    throw StageError("config", e.what());
  }
  return parse_experiment_config(text, path.parent_path(), path.string());
}

void apply_seed_override(ExperimentConfig& config) {
  const char* env = std::getenv("GRIDSTATE_SEED");
  if (!env || !*env) return;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (*end != '\0') throw StageError("config", "GRIDSTATE_SEED must be an unsigned integer");
  config.seed = v;
}

MeasurementPlan resolve_plan(std::string_view plan, const NetworkCase& network) {
  const std::filesystem::path p(plan);
  if (p.extension() == ".json") return plan_from_json(detail::read_text_file(p), network);
  return default_plan(network, parse_plan_preset(plan));
}

ErrorMetrics ExperimentResult::best_base() const {
  ErrorMetrics best;
  if (base.empty()) return best;
  best = base.front();
  for (const auto& b : base) {
    best.v_rmse_pct = std::min(best.v_rmse_pct, b.v_rmse_pct);
    best.v_mae_pct = std::min(best.v_mae_pct, b.v_mae_pct);
    best.theta_rmse_deg = std::min(best.theta_rmse_deg, b.theta_rmse_deg);
    best.theta_mae_deg = std::min(best.theta_mae_deg, b.theta_mae_deg);
  }
  return best;
}

namespace {

using Clock = std::chrono::steady_clock;

template <typename Fn>
auto stage(const char* name, RunManifest& manifest, Fn&& fn) {
  const auto start = Clock::now();
  auto record = [&] {
    manifest.timings.emplace_back(name, std::chrono::duration<double>(Clock::now() - start).count());
  };
  try {
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      record();
    } else {
      auto out = fn();
      record();
      return out;
    }
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

void add_metrics(std::vector<std::pair<std::string, std::string>>& rows, const std::string& prefix,
                 const ErrorMetrics& m) {
  rows.emplace_back(prefix + "_v_rmse_pct", format_double(m.v_rmse_pct));
  rows.emplace_back(prefix + "_v_mae_pct", format_double(m.v_mae_pct));
  rows.emplace_back(prefix + "_theta_rmse_deg", format_double(m.theta_rmse_deg));
  rows.emplace_back(prefix + "_theta_mae_deg", format_double(m.theta_mae_deg));
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  ExperimentResult result;
  RunManifest& manifest = result.manifest;
  manifest.config_hash = sha256_hex(config.canonical_json());
  const std::uint64_t profile_seed = derive_seed(config.seed, "profile");
  const std::uint64_t dataset_seed = derive_seed(config.seed, "dataset");
  const std::uint64_t split_seed = derive_seed(config.seed, "split");
  const std::uint64_t ensemble_seed = derive_seed(config.seed, "ensemble");
  const std::uint64_t test_seed = derive_seed(config.seed, "test-noise");
  const std::uint64_t mask_seed = derive_seed(config.seed, "mask");
  manifest.seeds = {{"master", config.seed},     {"profile", profile_seed}, {"dataset", dataset_seed},
                    {"split", split_seed},       {"ensemble", ensemble_seed}, {"test_noise", test_seed},
                    {"mask", mask_seed}};

  // inputs
  const NetworkCase network = stage("case", manifest, [&] {
    const std::string text = detail::read_text_file(config.case_file);
    manifest.inputs.emplace_back("case", sha256_hex(text));
    return parse_case(text);
  });
  const AdmittanceMatrix ybus = build_ybus(network);
  const MeasurementPlan plan = stage("plan", manifest, [&] {
    MeasurementPlan p = resolve_plan(config.plan, network);
    manifest.inputs.emplace_back("plan", sha256_hex(plan_to_json(p)));
    return p;
  });
  const LoadProfile profile = stage("profile", manifest, [&] {
    LoadProfile p = config.profile_file ? load_profile(*config.profile_file)
                                        : synth_profile(config.hours, profile_seed, config.profile);
    if (config.profile_file) {
      manifest.inputs.emplace_back("profile", p.provenance);
      if (p.size() > config.hours) p.values.resize(config.hours);
    }
    return p;
  });
  const std::string hash = manifest.hash();

  // dataset
  const Dataset data = stage("dataset", manifest, [&] {
    DatasetConfig dc;
    dc.noise = config.train_noise();
    dc.seed = dataset_seed;
    dc.threads = config.threads;
    return generate_dataset(network, plan, profile, dc);
  });
  result.samples = data.rows.size();
  result.skipped_hours = data.skipped.size();
  spdlog::info("dataset: {} rows, {} skipped", data.rows.size(), data.skipped.size());

  // ensemble
  const Eigen::MatrixXd z_all = data.noisy();
  const Eigen::MatrixXd x_all = data.labels();
  const SplitSpec split = SplitSpec::make(data.rows.size(), split_seed);
  const EnsembleModel model = stage("train", manifest, [&] {
    EnsembleConfig ec = config.ensemble;
    ec.training.seed = ensemble_seed;
    ec.threads = config.threads;
    return train_ensemble(z_all, x_all, network.slack_index(), split, ec);
  });
  result.meta_in_sample_rmse = model.diagnostics().meta_in_sample_rmse;
  result.uniform_in_sample_rmse = model.diagnostics().uniform_in_sample_rmse;
  result.meta_ridge = model.diagnostics().ridge;

  // test split with test-time noise on the clean measurements
  const std::size_t window = static_cast<std::size_t>(config.forecast_lags) + 1;
  Eigen::MatrixXd z_test(static_cast<Eigen::Index>(plan.size()), static_cast<Eigen::Index>(split.test.size()));
  const Eigen::MatrixXd x_test = select_columns(x_all, split.test);
  stage("evaluate", manifest, [&] {
    const NoiseConfig noise = config.test_noise();
    for (std::size_t k = 0; k < split.test.size(); ++k) {
      const DatasetRow& row = data.rows[split.test[k]];
      z_test.col(static_cast<Eigen::Index>(k)) =
          apply_noise(MeasurementVector::complete(row.z_clean, row.t), noise,
                      derive_seed(test_seed, "hour", static_cast<std::uint64_t>(row.t)))
              .values;
    }
    result.test_samples = split.test.size();
    result.ensemble = evaluate_states(model.predict(z_test), x_test);
    result.uniform = evaluate_states(model.predict_uniform(z_test), x_test);
    for (std::size_t k = 0; k < model.learner_count(); ++k) {
      result.base.push_back(evaluate_states(model.predict_base(k, z_test), x_test));
    }

    const std::size_t probes = std::min<std::size_t>(split.test.size(), 200);
    const auto start = Clock::now();
    for (std::size_t k = 0; k < probes; ++k) {
      const StateVector s = model.estimate(MeasurementVector::complete(z_test.col(static_cast<Eigen::Index>(k))));
      (void)s;
    }
    if (probes > 0) {
      result.latency_ms =
          std::chrono::duration<double, std::milli>(Clock::now() - start).count() / static_cast<double>(probes);
    }
  });
  manifest.timings.emplace_back("latency_ms_per_instance", result.latency_ms);

  // forecaster and masked channels
  const ForecastModel forecaster = stage("forecast", manifest, [&] {
    const std::size_t fit_rows = std::max(data.rows.size() * 40 / 100, window + 2);
    if (fit_rows > data.rows.size()) throw Error("not enough rows to fit the forecaster");
    std::vector<StateVector> history;
    history.reserve(fit_rows);
    for (std::size_t i = 0; i < fit_rows; ++i) history.push_back(data.rows[i].x_wls);
    ForecastModel fm = fit_forecaster(history, config.forecast_lags);

    const auto masked = static_cast<std::size_t>(std::ceil(config.missing_fraction * static_cast<double>(plan.size())));
    result.missing.masked_channels = masked;
    std::vector<std::size_t> cols;
    std::vector<Eigen::VectorXd> pseudo;
    for (std::size_t k = 0; k < split.test.size(); ++k) {
      const std::size_t i = split.test[k];
      if (i < window) continue;
      std::vector<StateVector> recent;
      recent.reserve(window);
      for (std::size_t j = i - window; j < i; ++j) recent.push_back(data.rows[j].x_wls);
      const StateVector predicted = forecast_next(fm, recent);

      MeasurementVector z = MeasurementVector::complete(z_test.col(static_cast<Eigen::Index>(k)), data.rows[i].t);
      std::vector<std::size_t> channels(plan.size());
      std::iota(channels.begin(), channels.end(), std::size_t{0});
      Rng rng(derive_seed(mask_seed, "hour", static_cast<std::uint64_t>(data.rows[i].t)));
      rng.shuffle(channels.begin(), channels.end());
      for (std::size_t c = 0; c < masked; ++c) z.mask[channels[c]] = false;
      pseudo.push_back(pseudo_measurements(predicted, z, plan, ybus).values);
      cols.push_back(k);
    }
    if (cols.empty()) throw Error("no test rows have a full forecast window");
    Eigen::MatrixXd zp(static_cast<Eigen::Index>(plan.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) zp.col(static_cast<Eigen::Index>(k)) = pseudo[k];
    const Eigen::MatrixXd zf = select_columns(z_test, cols);
    const Eigen::MatrixXd xf = select_columns(x_test, cols);
    result.missing.with_pseudo = evaluate_states(model.predict(zp), xf);
    result.missing.full = evaluate_states(model.predict(zf), xf);
    return fm;
  });

  // artifacts
  stage("write", manifest, [&] {
    const auto& dir = config.output_dir;
    std::filesystem::create_directories(dir);
    detail::write_text_file(dir / "profile.csv", "# manifest=" + hash + "\n# " + profile.provenance + "\n" +
                                                     profile_to_csv(profile));
    json plan_doc = json::parse(plan_to_json(plan));
    plan_doc["manifest"] = hash;
    detail::write_text_file(dir / "plan.json", detail::dump(plan_doc));
    write_dataset(data, dir / "dataset.csv", hash);
    model.save(dir / "model", hash);
    detail::write_text_file(dir / "forecast.json", forecaster.to_json(hash));
    detail::write_text_file(dir / "metrics.csv", metrics_to_csv(result));
    detail::write_text_file(dir / "report.md", report_markdown(result));
  });
  detail::write_text_file(config.output_dir / "manifest.json", manifest.to_json());
  return result;
}

std::string metrics_to_csv(const ExperimentResult& r) {
  std::vector<std::pair<std::string, std::string>> rows;
  add_metrics(rows, "ensemble", r.ensemble);
  add_metrics(rows, "uniform", r.uniform);
  add_metrics(rows, "best_base", r.best_base());
  for (std::size_t k = 0; k < r.base.size(); ++k) add_metrics(rows, "base_" + std::to_string(k), r.base[k]);
  rows.emplace_back("meta_in_sample_rmse", format_double(r.meta_in_sample_rmse));
  rows.emplace_back("uniform_in_sample_rmse", format_double(r.uniform_in_sample_rmse));
  rows.emplace_back("meta_ridge", r.meta_ridge ? "1" : "0");
  add_metrics(rows, "missing_pseudo", r.missing.with_pseudo);
  add_metrics(rows, "missing_full", r.missing.full);
  rows.emplace_back("missing_channels", std::to_string(r.missing.masked_channels));
  rows.emplace_back("missing_samples", std::to_string(r.missing.full.samples));
  rows.emplace_back("samples", std::to_string(r.samples));
  rows.emplace_back("test_samples", std::to_string(r.test_samples));
  rows.emplace_back("skipped_hours", std::to_string(r.skipped_hours));

  std::string out = "# manifest=" + r.manifest.hash() + "\nmetric,value\n";
  for (const auto& [k, v] : rows) out += k + "," + v + "\n";
  return out;
}

std::string report_markdown(const ExperimentResult& r) {
  auto fixed = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return std::string(buf);
  };
  const ErrorMetrics best = r.best_base();
  std::string out = "# Run report\n\nmanifest `" + r.manifest.hash() + "`\n\n";
  out += std::to_string(r.samples) + " samples (" + std::to_string(r.skipped_hours) + " hours skipped), " +
         std::to_string(r.test_samples) + " in the test split.\n\n";
  out += "| estimator | V RMSE (%) | V MAE (%) | theta RMSE (deg) | theta MAE (deg) |\n";
  out += "|---|---|---|---|---|\n";
  auto row = [&](const std::string& name, const ErrorMetrics& m) {
    out += "| " + name + " | " + fixed(m.v_rmse_pct) + " | " + fixed(m.v_mae_pct) + " | " + fixed(m.theta_rmse_deg) +
           " | " + fixed(m.theta_mae_deg) + " |\n";
  };
  row("stacked ensemble", r.ensemble);
  row("uniform average", r.uniform);
  row("best base learner", best);
  for (std::size_t k = 0; k < r.base.size(); ++k) row("base learner " + std::to_string(k), r.base[k]);
  out += "\nMasked channels (" + std::to_string(r.missing.masked_channels) + " per vector, " +
         std::to_string(r.missing.full.samples) + " samples):\n\n";
  out += "| input | V RMSE (%) | theta RMSE (deg) |\n|---|---|---|\n";
  out += "| all channels | " + fixed(r.missing.full.v_rmse_pct) + " | " + fixed(r.missing.full.theta_rmse_deg) + " |\n";
  out += "| with pseudo-measurements | " + fixed(r.missing.with_pseudo.v_rmse_pct) + " | " +
         fixed(r.missing.with_pseudo.theta_rmse_deg) + " |\n";
  out += "\nMeta-learner in-sample RMSE " + fixed(r.meta_in_sample_rmse * 1e3) + "e-3 vs uniform average " +
         fixed(r.uniform_in_sample_rmse * 1e3) + "e-3.\n";
  return out;
}

}  // namespace gridstate
