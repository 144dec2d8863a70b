// gridgm command-line harness.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gridgm/detect.hpp"
#include "gridgm/error.hpp"
#include "gridgm/estimator.hpp"
#include "gridgm/experiment.hpp"
#include "gridgm/generate.hpp"
#include "gridgm/grid.hpp"
#include "gridgm/io.hpp"
#include "gridgm/sampler.hpp"
#include "gridgm/topology.hpp"

namespace fs = std::filesystem;
using namespace gridgm;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

// Flags shared by the experiment commands; any flag given wins over --config.
struct Overrides {
  std::string config;
  std::string grid;
  std::string after;
  std::optional<std::uint64_t> seed;
  std::vector<std::size_t> n;
  std::optional<std::size_t> repetitions;
  std::optional<double> noise;
  std::optional<double> epsilon;
  std::optional<double> lambda;
  std::optional<double> tau1;
  std::optional<double> tau2;
  std::optional<double> tau3;
  std::vector<double> multipliers;
  std::string estimator;
  std::string threshold_mode;
  std::vector<std::string> algorithms;
  std::string out;

  void attach(CLI::App* app, bool with_after, bool with_multipliers) {
    app->add_option("--config", config, "experiment config JSON");
    app->add_option("--grid", grid, "grid JSON file");
    if (with_after) app->add_option("--after", after, "grid after the line event");
    app->add_option("--seed", seed, "base seed (repetition r uses seed + r)");
    app->add_option("--n", n, "sample sizes");
    app->add_option("--repetitions", repetitions, "repetitions per sample size");
    app->add_option("--noise", noise, "relative measurement noise variance");
    app->add_option("--epsilon", epsilon, "injection correlation between neighbours");
    app->add_option("--lambda", lambda, "graphical lasso penalty (correlation scale)");
    app->add_option("--tau1", tau1, "neighborhood-search threshold");
    app->add_option("--tau2", tau2, "sign-rule threshold");
    app->add_option("--tau3", tau3, "change-detection threshold");
    if (with_multipliers) app->add_option("--multipliers", multipliers, "threshold multipliers");
    app->add_option("--estimator", estimator, "auto|direct|glasso");
    app->add_option("--threshold-mode", threshold_mode, "analytic|data");
    app->add_option("--alg", algorithms, "neighborhood|sign (repeatable)");
    app->add_option("--out", out, "output directory");
  }

  ExperimentConfig resolve() const {
    ExperimentConfig c = config.empty() ? ExperimentConfig{} : load_config(config);
    if (!grid.empty()) c.grid_path = grid;
    if (!after.empty()) c.after_grid_path = after;
    if (seed) {
      c.seed = *seed;
      c.seeds.clear();
    }
    if (!n.empty()) c.sample_sizes = n;
    if (repetitions) {
      c.repetitions = *repetitions;
      c.seeds.clear();
    }
    if (noise) c.noise_level = *noise;
    if (epsilon) c.epsilon = *epsilon;
    if (lambda) c.lambda = *lambda;
    if (tau1) c.tau1 = *tau1;
    if (tau2) c.tau2 = *tau2;
    if (tau3) c.tau3 = *tau3;
    if (!multipliers.empty()) c.tau_multipliers = multipliers;
    if (!estimator.empty()) c.estimator = parse_estimator_choice(estimator);
    if (!threshold_mode.empty()) c.threshold_mode = parse_threshold_mode(threshold_mode);
    if (!algorithms.empty()) {
      c.algorithms.clear();
      for (const auto& a : algorithms) c.algorithms.push_back(parse_learning_algorithm(a));
    }
    if (!out.empty()) c.output_dir = out;
    c.validate();
    return c;
  }
};

void print_aggregates(const SweepResult& r) {
  for (const auto& a : r.aggregates) {
    std::cout << "n=" << a.sample_size << " alg=" << to_string(a.algorithm) << " multiplier=" << format_double(a.multiplier)
              << " mean_error=" << format_double(a.mean) << " sd=" << format_double(a.stddev)
              << " failures=" << a.failures << '\n';
  }
}

InjectionStatistics cli_stats(const GridGraph& grid, double variance, double pq, double epsilon) {
  return make_correlated_stats(InjectionStatistics::uniform(grid.dimension(), variance, pq), grid, epsilon);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Topology learning and line-change detection for distribution grids"};
  app.require_subcommand(1);

  // gen-grid
  auto* gen = app.add_subcommand("gen-grid", "generate a synthetic grid");
  std::string gen_kind = "tree";
  GridSpec gen_spec;
  std::string gen_out;
  gen->add_option("--kind", gen_kind, "path|tree|meshed|random|case33");
  gen->add_option("--buses", gen_spec.buses, "bus count including the reference");
  gen->add_option("--loops", gen_spec.loops, "extra lines beyond the spanning tree");
  gen->add_option("--min-cycle", gen_spec.min_cycle, "cycle length closed by each loop (meshed)");
  gen->add_option("--seed", gen_spec.seed, "random seed");
  gen->add_option("--out", gen_out, "output grid JSON")->required();

  // sample
  auto* sample = app.add_subcommand("sample", "draw voltage samples from the linear model");
  std::string sample_grid, sample_out;
  std::size_t sample_n = 0;
  std::uint64_t sample_seed = 1;
  double sample_noise = 0.0, sample_eps = 0.0, sample_var = kDefaultInjectionVariance, sample_pq = 0.0;
  sample->add_option("--grid", sample_grid, "grid JSON file")->required();
  sample->add_option("--n", sample_n, "number of samples")->required();
  sample->add_option("--seed", sample_seed, "random seed");
  sample->add_option("--noise", sample_noise, "relative measurement noise variance");
  sample->add_option("--epsilon", sample_eps, "injection correlation between neighbours");
  sample->add_option("--variance", sample_var, "injection variance");
  sample->add_option("--pq", sample_pq, "p-q injection covariance");
  sample->add_option("--out", sample_out, "output CSV")->required();

  // estimate
  auto* estimate = app.add_subcommand("estimate", "estimate the concentration matrix");
  std::string est_grid, est_samples, est_out, est_estimator = "auto";
  std::optional<double> est_lambda;
  bool est_analytic = false;
  double est_var = kDefaultInjectionVariance, est_pq = 0.0, est_eps = 0.0;
  estimate->add_option("--grid", est_grid, "grid JSON file")->required();
  estimate->add_option("--samples", est_samples, "voltage samples CSV");
  estimate->add_flag("--analytic", est_analytic, "closed form from the grid instead of samples");
  estimate->add_option("--estimator", est_estimator, "auto|direct|glasso");
  estimate->add_option("--lambda", est_lambda, "graphical lasso penalty (correlation scale)");
  estimate->add_option("--variance", est_var, "injection variance (analytic)");
  estimate->add_option("--pq", est_pq, "p-q injection covariance (analytic)");
  estimate->add_option("--epsilon", est_eps, "injection correlation (analytic)");
  estimate->add_option("--out", est_out, "output concentration CSV")->required();

  // learn
  auto* learn_cmd = app.add_subcommand("learn", "learn the topology from a concentration matrix");
  std::string learn_grid, learn_j, learn_alg = "sign", learn_out, learn_mode = "analytic";
  std::optional<double> learn_tau1, learn_tau2;
  learn_cmd->add_option("--alg", learn_alg, "neighborhood|sign");
  learn_cmd->add_option("--j", learn_j, "concentration CSV (default: analytic from --grid)");
  learn_cmd->add_option("--grid", learn_grid, "ground-truth grid, for scoring and analytic thresholds");
  learn_cmd->add_option("--tau1", learn_tau1, "neighborhood-search threshold");
  learn_cmd->add_option("--tau2", learn_tau2, "sign-rule threshold");
  learn_cmd->add_option("--threshold-mode", learn_mode, "analytic|data");
  learn_cmd->add_option("--out", learn_out, "output JSON");

  // recover-params
  auto* recover = app.add_subcommand("recover-params", "recover line admittances from covariances");
  std::string rec_grid, rec_vcov, rec_icov, rec_out;
  double rec_var = kDefaultInjectionVariance, rec_pq = 0.0;
  recover->add_option("--grid", rec_grid, "grid JSON file (exact covariances)");
  recover->add_option("--voltage-cov", rec_vcov, "voltage covariance CSV");
  recover->add_option("--injection-cov", rec_icov, "injection covariance CSV");
  recover->add_option("--variance", rec_var, "injection variance (with --grid)");
  recover->add_option("--pq", rec_pq, "p-q injection covariance (with --grid)");
  recover->add_option("--out", rec_out, "output JSON");

  // experiments
  Overrides detect_flags, sweep_flags, sens_flags;
  auto* detect = app.add_subcommand("detect", "detect a single line change");
  detect_flags.attach(detect, true, false);
  auto* sweep_cmd = app.add_subcommand("sweep", "error vs. sample size");
  sweep_flags.attach(sweep_cmd, false, false);
  auto* sens = app.add_subcommand("threshold-sensitivity", "error vs. threshold multiplier");
  sens_flags.attach(sens, false, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*gen) {
      GridGraph grid = [&] {
        if (gen_kind == "case33") return case33_analog();
        gen_spec.kind = parse_grid_kind(gen_kind);
        return generate_grid(gen_spec);
      }();
      save_grid(grid, gen_out);
      const StructureReport rep = structure_report(grid);
      nlohmann::json summary = {{"buses", grid.num_buses()},
                                {"lines", grid.lines().size()},
                                {"min_cycle_length", rep.is_tree() ? nlohmann::json("infinite")
                                                                   : nlohmann::json(rep.min_cycle_length)},
                                {"leaves", rep.leaves.size()},
                                {"non_leaves", rep.non_leaves.size()},
                                {"sha256", grid_sha256(grid)}};
      std::cout << summary.dump() << '\n';
    } else if (*sample) {
      const GridGraph grid = load_grid(sample_grid);
      const LaplacianPair lap = reduced_laplacians(grid);
      const InjectionStatistics stats = cli_stats(grid, sample_var, sample_pq, sample_eps);
      VoltageSampleSet set = sample_voltages(lap, stats, sample_n, sample_seed);
      set.metadata.grid_sha256 = grid_sha256(grid);
      if (sample_noise > 0.0) {
        set = add_noise(set, NoiseStatistics::relative(analytic_voltage_covariance(lap, stats), sample_noise),
                        sample_seed);
      }
      export_samples(set, sample_out);
      export_sample_metadata(set.metadata, sample_out + ".meta.json");
    } else if (*estimate) {
      const GridGraph grid = load_grid(est_grid);
      const LaplacianPair lap = reduced_laplacians(grid);
      ConcentrationMatrix j;
      if (est_analytic) {
        j = analytic_concentration(lap, cli_stats(grid, est_var, est_pq, est_eps));
      } else {
        if (est_samples.empty()) throw ValidationError("estimate needs --samples or --analytic");
        const VoltageSampleSet set = import_samples(est_samples, grid);
        ExperimentConfig c;
        c.estimator = parse_estimator_choice(est_estimator);
        c.lambda = est_lambda;
        j = estimate_concentration(sample_covariance(set), set.size(), c, lap.bus_order);
      }
      write_concentration(j, est_out);
    } else if (*learn_cmd) {
      const LearningAlgorithm alg = parse_learning_algorithm(learn_alg);
      std::optional<GridGraph> grid;
      if (!learn_grid.empty()) grid = load_grid(learn_grid);
      ConcentrationMatrix j;
      if (!learn_j.empty()) {
        j = read_concentration(learn_j);
      } else if (grid) {
        j = analytic_concentration(reduced_laplacians(*grid), InjectionStatistics::uniform(grid->dimension()));
      } else {
        throw ValidationError("learn needs --j or --grid");
      }
      const bool neighborhood = alg == LearningAlgorithm::NeighborhoodSearch;
      double tau = 0.0;
      if (const auto& fixed = neighborhood ? learn_tau1 : learn_tau2) {
        tau = *fixed;
      } else if (parse_threshold_mode(learn_mode) == ThresholdMode::Analytic && grid) {
        const GammaThresholds g = gamma_thresholds(
            analytic_concentration(reduced_laplacians(*grid), InjectionStatistics::uniform(grid->dimension())));
        tau = (neighborhood ? g.gamma1 : g.gamma2) / 2.0;
      } else {
        tau = neighborhood ? data_tau1(j) : data_tau2(j);
      }
      const TopologyEstimate est = learn(j, alg, tau);
      std::optional<double> err;
      if (grid) err = score(est, *grid);
      const auto doc = topology_to_json(est, err);
      if (learn_out.empty()) {
        std::cout << doc.dump(2) << '\n';
      } else {
        write_json(doc, learn_out);
      }
    } else if (*recover) {
      Eigen::MatrixXd vcov, icov;
      std::vector<std::string> order;
      std::string reference = "reference";
      if (!rec_grid.empty()) {
        const GridGraph grid = load_grid(rec_grid);
        const LaplacianPair lap = reduced_laplacians(grid);
        const InjectionStatistics stats = InjectionStatistics::uniform(grid.dimension(), rec_var, rec_pq);
        vcov = analytic_voltage_covariance(lap, stats);
        icov = stats.covariance();
        order = lap.bus_order;
        reference = grid.reference();
      } else {
        if (rec_vcov.empty() || rec_icov.empty()) {
          throw ValidationError("recover-params needs --grid or both --voltage-cov and --injection-cov");
        }
        std::vector<std::string> header;
        vcov = read_csv_matrix(rec_vcov, &header);
        icov = read_csv_matrix(rec_icov, nullptr);
        for (std::size_t i = 0; i < header.size() / 2; ++i) {
          order.push_back(header[i].rfind("v_", 0) == 0 ? header[i].substr(2) : header[i]);
        }
      }
      const auto doc = recovered_to_json(recover_parameters(vcov, icov, order), reference);
      if (rec_out.empty()) {
        std::cout << doc.dump(2) << '\n';
      } else {
        write_json(doc, rec_out);
      }
    } else if (*detect) {
      const ExperimentConfig c = detect_flags.resolve();
      const DetectionResult r = detection_sweep(c);
      write_detection(r, c.output_dir);
      std::cout << change_report_to_json(r.analytic).dump() << '\n';
      for (const auto& a : r.accuracy) {
        std::cout << "n=" << a.sample_size << " accuracy=" << format_double(a.accuracy) << '\n';
      }
    } else if (*sweep_cmd) {
      const ExperimentConfig c = sweep_flags.resolve();
      const SweepResult r = sweep(c);
      write_sweep(r, c.output_dir, "sweep");
      write_json(config_to_json(c), fs::path(c.output_dir) / "sweep_config.json");
      print_aggregates(r);
    } else if (*sens) {
      const ExperimentConfig c = sens_flags.resolve();
      const SweepResult r = threshold_sensitivity(c);
      write_sweep(r, c.output_dir, "threshold");
      write_json(config_to_json(c), fs::path(c.output_dir) / "threshold_config.json");
      print_aggregates(r);
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
