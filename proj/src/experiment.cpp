#include "gridgm/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <tuple>

#include <nlohmann/json.hpp>

#include "gridgm/error.hpp"

namespace gridgm {

namespace {

constexpr std::size_t kStreamChunk = 8192;
constexpr std::uint64_t kAfterDomain = 0x61667465725f7631ULL;

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

template <typename T>
void read_optional(const nlohmann::json& doc, const char* key, std::optional<T>& out) {
  if (doc.contains(key) && !doc.at(key).is_null()) out = doc.at(key).get<T>();
}

template <typename T>
void read_value(const nlohmann::json& doc, const char* key, T& out) {
  if (doc.contains(key) && !doc.at(key).is_null()) out = doc.at(key).get<T>();
}

std::string grid_kind_name(GridKind k) {
  switch (k) {
    case GridKind::Path:
      return "path";
    case GridKind::Tree:
      return "tree";
    case GridKind::Meshed:
      return "meshed";
    case GridKind::Random:
      return "random";
  }
  return "tree";
}

GridSpec spec_from_json(const nlohmann::json& doc) {
  GridSpec spec;
  if (doc.contains("kind")) spec.kind = parse_grid_kind(doc.at("kind").get<std::string>());
  read_value(doc, "buses", spec.buses);
  read_value(doc, "loops", spec.loops);
  read_value(doc, "min_cycle", spec.min_cycle);
  read_value(doc, "seed", spec.seed);
  read_value(doc, "r_min", spec.r_min);
  read_value(doc, "r_max", spec.r_max);
  read_value(doc, "x_min", spec.x_min);
  read_value(doc, "x_max", spec.x_max);
  read_value(doc, "reference_is_leaf", spec.reference_is_leaf);
  read_value(doc, "max_attempts", spec.max_attempts);
  return spec;
}

nlohmann::json spec_to_json(const GridSpec& spec) {
  return {{"kind", grid_kind_name(spec.kind)}, {"buses", spec.buses},     {"loops", spec.loops},
          {"min_cycle", spec.min_cycle},      {"seed", spec.seed},       {"r_min", spec.r_min},
          {"r_max", spec.r_max},              {"x_min", spec.x_min},     {"x_max", spec.x_max},
          {"reference_is_leaf", spec.reference_is_leaf}};
}

LineEvent event_from_json(const nlohmann::json& doc) {
  LineEvent ev;
  const auto kind = doc.at("kind").get<std::string>();
  if (kind == "add") {
    ev.kind = LineEventKind::Add;
  } else if (kind == "remove") {
    ev.kind = LineEventKind::Remove;
  } else {
    throw ValidationError("event kind must be add or remove, got '" + kind + "'");
  }
  ev.line.from = doc.at("from").get<std::string>();
  ev.line.to = doc.at("to").get<std::string>();
  read_value(doc, "r", ev.line.r);
  read_value(doc, "x", ev.line.x);
  return ev;
}

std::string describe_endpoints(const ChangeReport& report) {
  if (!report.endpoints) return "";
  return report.endpoints->first + "-" + report.endpoints->second;
}

}  // namespace

EstimatorChoice parse_estimator_choice(const std::string& name) {
  if (name == "auto") return EstimatorChoice::Auto;
  if (name == "direct") return EstimatorChoice::Direct;
  if (name == "glasso") return EstimatorChoice::Glasso;
  throw ValidationError("unknown estimator '" + name + "' (expected auto|direct|glasso)");
}

std::string to_string(EstimatorChoice c) {
  switch (c) {
    case EstimatorChoice::Auto:
      return "auto";
    case EstimatorChoice::Direct:
      return "direct";
    case EstimatorChoice::Glasso:
      return "glasso";
  }
  return "auto";
}

ThresholdMode parse_threshold_mode(const std::string& name) {
  if (name == "analytic") return ThresholdMode::Analytic;
  if (name == "data") return ThresholdMode::Data;
  throw ValidationError("unknown threshold mode '" + name + "' (expected analytic|data)");
}

std::string to_string(ThresholdMode m) { return m == ThresholdMode::Analytic ? "analytic" : "data"; }

void ExperimentConfig::validate() const {
  if (sample_sizes.empty()) throw ValidationError("sample_sizes must not be empty");
  for (std::size_t i = 0; i < sample_sizes.size(); ++i) {
    if (sample_sizes[i] < 2) throw ValidationError("sample sizes must be at least 2");
    if (i > 0 && sample_sizes[i] <= sample_sizes[i - 1]) {
      throw ValidationError("sample_sizes must be strictly increasing");
    }
  }
  if (repetitions < 1) throw ValidationError("repetitions must be at least 1");
  if (!seeds.empty() && seeds.size() != repetitions) {
    throw ValidationError("seeds must list one seed per repetition");
  }
  if (!(injection_variance > 0.0)) throw ValidationError("injection variance must be positive");
  if (!(noise_level >= 0.0)) throw ValidationError("noise level must be non-negative");
  if (!(epsilon >= 0.0)) throw ValidationError("epsilon must be non-negative");
  if (algorithms.empty()) throw ValidationError("at least one algorithm is required");
  for (const auto* t : {&tau1, &tau2, &tau3}) {
    if (*t && !(**t >= 0.0)) throw ValidationError("thresholds must be non-negative");
  }
  for (const double m : tau_multipliers) {
    if (!(m >= 0.0)) throw ValidationError("threshold multipliers must be non-negative");
  }
  if (lambda && !(*lambda >= 0.0)) throw ValidationError("lambda must be non-negative");
  if (!(glasso_tol > 0.0)) throw ValidationError("glasso tolerance must be positive");
  if (!(glasso_below >= 0.0)) throw ValidationError("glasso_below must be non-negative");
}

std::uint64_t ExperimentConfig::seed_for(std::size_t repetition) const {
  return seeds.empty() ? seed + repetition : seeds.at(repetition);
}

ExperimentConfig config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ValidationError("config must be a JSON object");
  ExperimentConfig c;
  try {
    read_optional(doc, "grid", c.grid_path);
    if (doc.contains("generate") && !doc.at("generate").is_null()) c.generate = spec_from_json(doc.at("generate"));
    if (doc.contains("injection")) {
      const auto& inj = doc.at("injection");
      read_value(inj, "variance", c.injection_variance);
      read_value(inj, "sigma_pq", c.injection_pq);
      read_value(inj, "epsilon", c.epsilon);
    }
    read_value(doc, "epsilon", c.epsilon);
    read_value(doc, "noise", c.noise_level);
    read_value(doc, "sample_sizes", c.sample_sizes);
    read_value(doc, "repetitions", c.repetitions);
    read_value(doc, "seed", c.seed);
    read_value(doc, "seeds", c.seeds);
    if (doc.contains("algorithms")) {
      c.algorithms.clear();
      for (const auto& a : doc.at("algorithms")) c.algorithms.push_back(parse_learning_algorithm(a.get<std::string>()));
    }
    if (doc.contains("threshold_mode")) c.threshold_mode = parse_threshold_mode(doc.at("threshold_mode"));
    read_optional(doc, "tau1", c.tau1);
    read_optional(doc, "tau2", c.tau2);
    read_optional(doc, "tau3", c.tau3);
    read_value(doc, "paired_injections", c.paired_injections);
    read_value(doc, "tau_multipliers", c.tau_multipliers);
    if (doc.contains("estimator")) c.estimator = parse_estimator_choice(doc.at("estimator"));
    read_value(doc, "glasso_below", c.glasso_below);
    read_optional(doc, "lambda", c.lambda);
    read_value(doc, "glasso_tol", c.glasso_tol);
    if (doc.contains("event") && !doc.at("event").is_null()) c.event = event_from_json(doc.at("event"));
    read_optional(doc, "after_grid", c.after_grid_path);
    read_value(doc, "output_dir", c.output_dir);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json doc;
  doc["grid"] = c.grid_path ? nlohmann::json(*c.grid_path) : nlohmann::json(nullptr);
  doc["generate"] = c.generate ? spec_to_json(*c.generate) : nlohmann::json(nullptr);
  doc["injection"] = {{"variance", c.injection_variance}, {"sigma_pq", c.injection_pq}, {"epsilon", c.epsilon}};
  doc["noise"] = c.noise_level;
  doc["sample_sizes"] = c.sample_sizes;
  doc["repetitions"] = c.repetitions;
  doc["seed"] = c.seed;
  doc["seeds"] = c.seeds;
  nlohmann::json algs = nlohmann::json::array();
  for (const auto a : c.algorithms) algs.push_back(to_string(a));
  doc["algorithms"] = algs;
  doc["threshold_mode"] = to_string(c.threshold_mode);
  const auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  doc["tau1"] = opt(c.tau1);
  doc["tau2"] = opt(c.tau2);
  doc["tau3"] = opt(c.tau3);
  doc["paired_injections"] = c.paired_injections;
  doc["tau_multipliers"] = c.tau_multipliers;
  doc["estimator"] = to_string(c.estimator);
  doc["glasso_below"] = c.glasso_below;
  doc["lambda"] = opt(c.lambda);
  doc["glasso_tol"] = c.glasso_tol;
  if (c.event) {
    doc["event"] = {{"kind", c.event->kind == LineEventKind::Add ? "add" : "remove"},
                    {"from", c.event->line.from},
                    {"to", c.event->line.to},
                    {"r", c.event->line.r},
                    {"x", c.event->line.x}};
  } else {
    doc["event"] = nullptr;
  }
  doc["after_grid"] = c.after_grid_path ? nlohmann::json(*c.after_grid_path) : nlohmann::json(nullptr);
  doc["output_dir"] = c.output_dir;
  return doc;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(doc);
}

GridGraph resolve_grid(const ExperimentConfig& config) {
  if (config.grid_path) return load_grid(*config.grid_path);
  if (config.generate) return generate_grid(*config.generate);
  return case33_analog();
}

GridGraph resolve_after_grid(const ExperimentConfig& config, const GridGraph& before) {
  if (config.after_grid_path) return load_grid(*config.after_grid_path);
  if (config.event) return apply_line_event(before, *config.event);
  throw ValidationError("detection needs an event or an after_grid");
}

ExperimentModel build_model(const GridGraph& grid, const ExperimentConfig& config) {
  LaplacianPair lap = reduced_laplacians(grid);
  InjectionStatistics base = InjectionStatistics::uniform(grid.dimension(), config.injection_variance,
                                                          config.injection_pq);
  InjectionStatistics stats = make_correlated_stats(base, grid, config.epsilon);
  NoiseStatistics noise = config.noise_level > 0.0
                              ? NoiseStatistics::relative(analytic_voltage_covariance(lap, stats), config.noise_level)
                              : NoiseStatistics::zero(grid.dimension());
  ConcentrationMatrix analytic = analytic_concentration(lap, base);
  const GammaThresholds gamma = gamma_thresholds(analytic);
  return ExperimentModel{grid, std::move(lap), std::move(base), std::move(stats), std::move(noise),
                         std::move(analytic), gamma};
}

Eigen::MatrixXd streamed_covariance(const ExperimentModel& model, std::size_t n, std::uint64_t seed) {
  return streamed_covariance(model, n, seed, seed);
}

Eigen::MatrixXd streamed_covariance(const ExperimentModel& model, std::size_t n, std::uint64_t seed,
                                    std::uint64_t noise_seed) {
  const VoltageSampler sampler(model.laplacians, model.stats);
  const NoiseSampler noise(model.noise);
  CovarianceAccumulator acc(static_cast<Eigen::Index>(sampler.width()));
  for (std::size_t first = 0; first < n; first += kStreamChunk) {
    const std::size_t count = std::min(kStreamChunk, n - first);
    Eigen::MatrixXd rows = sampler.draw(seed, first, count);
    if (!noise.is_zero()) rows += noise.draw(noise_seed, first, count);
    acc.add(rows);
  }
  return acc.covariance();
}

ConcentrationMatrix estimate_concentration(const Eigen::MatrixXd& cov, std::size_t n, const ExperimentConfig& config,
                                           const std::vector<std::string>& bus_order) {
  const auto dim = static_cast<double>(cov.rows());
  bool use_glasso = config.estimator == EstimatorChoice::Glasso;
  if (config.estimator == EstimatorChoice::Auto) use_glasso = static_cast<double>(n) < config.glasso_below * dim;
  if (!use_glasso) return direct_concentration(cov, default_ridge(cov, n), bus_order);
  GlassoOptions opts;
  opts.lambda = config.lambda ? *config.lambda : default_glasso_lambda(cov.rows(), n);
  opts.tol = config.glasso_tol;
  return graphical_lasso_standardized(cov, opts, bus_order);
}

double learning_threshold(const ExperimentModel& model, const ConcentrationMatrix& estimate,
                          LearningAlgorithm algorithm, const ExperimentConfig& config, double multiplier) {
  const bool neighborhood = algorithm == LearningAlgorithm::NeighborhoodSearch;
  const auto& fixed = neighborhood ? config.tau1 : config.tau2;
  double base = 0.0;
  if (fixed) {
    base = *fixed;
  } else if (config.threshold_mode == ThresholdMode::Analytic) {
    base = (neighborhood ? model.gamma.gamma1 : model.gamma.gamma2) / 2.0;
  } else {
    base = neighborhood ? data_tau1(estimate) : data_tau2(estimate);
  }
  return base * multiplier;
}

TopologyEstimate learn(const ConcentrationMatrix& j, LearningAlgorithm algorithm, double tau) {
  return algorithm == LearningAlgorithm::NeighborhoodSearch ? learn_neighborhood(j, tau) : learn_sign_rule(j, tau);
}

double run_cell(const ExperimentModel& model, const ExperimentConfig& config, std::size_t n, std::uint64_t seed,
                LearningAlgorithm algorithm, double multiplier) {
  const Eigen::MatrixXd cov = streamed_covariance(model, n, seed);
  const ConcentrationMatrix j = estimate_concentration(cov, n, config, model.laplacians.bus_order);
  const double tau = learning_threshold(model, j, algorithm, config, multiplier);
  return score(learn(j, algorithm, tau), model.grid);
}

std::vector<SweepAggregate> aggregate(const std::vector<SweepRow>& rows) {
  using Key = std::tuple<double, std::size_t, int>;
  std::map<Key, std::vector<const SweepRow*>> groups;
  for (const auto& row : rows) {
    groups[{row.multiplier, row.sample_size, static_cast<int>(row.algorithm)}].push_back(&row);
  }
  std::vector<SweepAggregate> out;
  for (const auto& [key, members] : groups) {
    SweepAggregate agg;
    agg.multiplier = std::get<0>(key);
    agg.sample_size = std::get<1>(key);
    agg.algorithm = static_cast<LearningAlgorithm>(std::get<2>(key));
    std::vector<double> values;
    for (const auto* r : members) {
      if (r->error_ratio) {
        values.push_back(*r->error_ratio);
      } else {
        ++agg.failures;
      }
    }
    agg.count = values.size();
    if (!values.empty()) {
      double sum = 0.0;
      for (const double v : values) sum += v;
      agg.mean = sum / static_cast<double>(values.size());
      if (values.size() > 1) {
        double ss = 0.0;
        for (const double v : values) ss += (v - agg.mean) * (v - agg.mean);
        agg.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
      }
    }
    out.push_back(agg);
  }
  return out;
}

namespace {

// One (n, seed) cell: a shared estimate, then every algorithm and multiplier.
void run_cells(const ExperimentModel& model, const ExperimentConfig& config, std::size_t n, std::size_t repetition,
               const std::vector<double>& multipliers, std::vector<SweepRow>& rows) {
  const std::uint64_t seed = config.seed_for(repetition);
  const auto start = std::chrono::steady_clock::now();
  std::optional<ConcentrationMatrix> j;
  std::string estimate_failure;
  try {
    j = estimate_concentration(streamed_covariance(model, n, seed), n, config, model.laplacians.bus_order);
  } catch (const std::exception& e) {
    estimate_failure = e.what();
  }
  const double estimate_ms = elapsed_ms(start);
  for (const double multiplier : multipliers) {
    for (const auto algorithm : config.algorithms) {
      SweepRow row;
      row.sample_size = n;
      row.repetition = repetition;
      row.seed = seed;
      row.algorithm = algorithm;
      row.noise_level = config.noise_level;
      row.epsilon = config.epsilon;
      row.multiplier = multiplier;
      const auto learn_start = std::chrono::steady_clock::now();
      if (!j) {
        row.failure = estimate_failure;
      } else {
        try {
          row.tau = learning_threshold(model, *j, algorithm, config, multiplier);
          row.error_ratio = score(learn(*j, algorithm, row.tau), model.grid);
        } catch (const std::exception& e) {
          row.failure = e.what();
        }
      }
      row.runtime_ms = estimate_ms + elapsed_ms(learn_start);
      rows.push_back(std::move(row));
    }
  }
}

}  // namespace

SweepResult sweep(const ExperimentConfig& config) {
  config.validate();
  return sweep(build_model(resolve_grid(config), config), config);
}

SweepResult sweep(const ExperimentModel& model, const ExperimentConfig& config) {
  config.validate();
  SweepResult result;
  for (const std::size_t n : config.sample_sizes) {
    for (std::size_t rep = 0; rep < config.repetitions; ++rep) run_cells(model, config, n, rep, {1.0}, result.rows);
  }
  result.aggregates = aggregate(result.rows);
  return result;
}

SweepResult threshold_sensitivity(const ExperimentConfig& config) {
  config.validate();
  return threshold_sensitivity(build_model(resolve_grid(config), config), config);
}

SweepResult threshold_sensitivity(const ExperimentModel& model, const ExperimentConfig& config) {
  config.validate();
  if (config.tau_multipliers.empty()) throw ValidationError("tau_multipliers must not be empty");
  SweepResult result;
  const std::size_t n = config.sample_sizes.back();
  for (std::size_t rep = 0; rep < config.repetitions; ++rep) {
    run_cells(model, config, n, rep, config.tau_multipliers, result.rows);
  }
  std::stable_sort(result.rows.begin(), result.rows.end(), [](const SweepRow& a, const SweepRow& b) {
    return std::tie(a.multiplier, a.repetition) < std::tie(b.multiplier, b.repetition);
  });
  result.aggregates = aggregate(result.rows);
  return result;
}

bool matches_event(const ChangeReport& report, const LineEvent& event) {
  const ChangeKind expected = event.kind == LineEventKind::Add ? ChangeKind::Added : ChangeKind::Removed;
  if (report.kind != expected || !report.endpoints) return false;
  const auto& [a, b] = *report.endpoints;
  return (a == event.line.from && b == event.line.to) || (a == event.line.to && b == event.line.from);
}

DetectionResult detection_sweep(const ExperimentConfig& config) {
  config.validate();
  const GridGraph before = resolve_grid(config);
  return detection_sweep(before, resolve_after_grid(config, before), config);
}

DetectionResult detection_sweep(const GridGraph& before, const GridGraph& after, const ExperimentConfig& config) {
  config.validate();
  DetectionResult result;
  result.event = diff_single_line(before, after);

  ExperimentModel model_before = build_model(before, config);
  ExperimentModel model_after = build_model(after, config);
  // Sensors do not change with the grid.
  model_after.noise = model_before.noise;

  if (config.tau3) {
    result.tau3 = *config.tau3;
  } else if (config.threshold_mode == ThresholdMode::Analytic) {
    result.tau3 = default_tau3(before, result.event, model_before.base_stats);
  }
  const double analytic_tau = result.tau3 > 0.0 ? result.tau3
                                                : data_tau3(diagonal_deltas(model_before.analytic_base,
                                                                            model_after.analytic_base));
  result.analytic = detect_change(model_before.analytic_base, model_after.analytic_base, analytic_tau);

  const auto& order = model_before.laplacians.bus_order;
  for (const std::size_t n : config.sample_sizes) {
    std::size_t correct = 0;
    std::size_t counted = 0;
    for (std::size_t rep = 0; rep < config.repetitions; ++rep) {
      DetectionRow row;
      row.sample_size = n;
      row.repetition = rep;
      row.seed = config.seed_for(rep);
      row.noise_level = config.noise_level;
      const auto start = std::chrono::steady_clock::now();
      try {
        const auto j_before = estimate_concentration(streamed_covariance(model_before, n, row.seed), n, config, order);
        // Sensor noise is always fresh after the event; injections are reused when paired.
        const std::uint64_t after_seed = config.paired_injections ? row.seed : row.seed ^ kAfterDomain;
        const auto j_after = estimate_concentration(
            streamed_covariance(model_after, n, after_seed, row.seed ^ kAfterDomain), n, config, order);
        const double tau = result.tau3 > 0.0 ? result.tau3 : data_tau3(diagonal_deltas(j_before, j_after));
        const ChangeReport report = detect_change(j_before, j_after, tau);
        row.kind = to_string(report.kind);
        row.endpoints = describe_endpoints(report);
        row.error = matches_event(report, result.event) ? 0 : 1;
      } catch (const std::exception& e) {
        row.failure = e.what();
        row.error = 1;
      }
      row.runtime_ms = elapsed_ms(start);
      counted += 1;
      correct += *row.error == 0 ? 1 : 0;
      result.rows.push_back(std::move(row));
    }
    result.accuracy.push_back({n, counted, static_cast<double>(correct) / static_cast<double>(counted)});
  }
  return result;
}

}  // namespace gridgm
