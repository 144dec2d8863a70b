#include "gridgm/io.hpp"

#include <array>
#include <charconv>
#include <fstream>

#include <nlohmann/json.hpp>

#include "gridgm/error.hpp"
#include "gridgm/sampler.hpp"

namespace gridgm {

namespace {

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  return out;
}

std::string optional_number(const std::optional<double>& v) { return v ? format_double(*v) : ""; }

// Failure messages go into a CSV cell.
std::string csv_text(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string quoted = "\"";
  for (const char c : s) {
    if (c == '"') quoted += '"';
    quoted += c == '\n' ? ' ' : c;
  }
  return quoted + "\"";
}

std::filesystem::path sidecar(const std::filesystem::path& path) { return path.string() + ".json"; }

}  // namespace

std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) throw NumericalError("cannot format number");
  return std::string(buf.data(), end);
}

void write_json(const nlohmann::json& doc, const std::filesystem::path& path) {
  auto out = open_output(path);
  out << doc.dump(2) << '\n';
}

nlohmann::json topology_to_json(const TopologyEstimate& estimate, std::optional<double> error) {
  nlohmann::json doc;
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [a, b] : estimate.edges) edges.push_back({estimate.bus_order.at(a), estimate.bus_order.at(b)});
  doc["edges"] = edges;
  nlohmann::json classes = nlohmann::json::object();
  for (std::size_t i = 0; i < estimate.bus_order.size() && i < estimate.node_class.size(); ++i) {
    classes[estimate.bus_order[i]] = to_string(estimate.node_class[i]);
  }
  doc["node_class"] = classes;
  doc["algorithm"] = to_string(estimate.algorithm);
  doc["thresholds"] = estimate.thresholds;
  doc["error"] = error ? nlohmann::json(*error) : nlohmann::json(nullptr);
  return doc;
}

void write_concentration(const ConcentrationMatrix& j, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_csv_matrix(j.j, voltage_column_names(j.bus_order), path);
  write_json({{"provenance", to_string(j.provenance)},
              {"lambda", j.lambda},
              {"tol", j.tol},
              {"iterations", j.iterations},
              {"gap", j.gap},
              {"ridge", j.ridge},
              {"bus_order", j.bus_order}},
             sidecar(path));
}

ConcentrationMatrix read_concentration(const std::filesystem::path& path) {
  std::vector<std::string> header;
  ConcentrationMatrix out;
  out.j = read_csv_matrix(path, &header);
  if (out.j.rows() != out.j.cols() || out.j.rows() % 2 != 0) {
    throw ValidationError("concentration matrix in " + path.string() + " must be square with even dimension");
  }
  const std::size_t n = header.size() / 2;
  for (std::size_t i = 0; i < n; ++i) {
    if (header[i].rfind("v_", 0) != 0 || header[n + i] != "theta_" + header[i].substr(2)) {
      throw ValidationError("unexpected concentration header in " + path.string());
    }
    out.bus_order.push_back(header[i].substr(2));
  }
  out.provenance = Provenance::DirectInverse;
  if (std::filesystem::exists(sidecar(path))) {
    std::ifstream in(sidecar(path));
    const auto meta = nlohmann::json::parse(in);
    const auto prov = meta.value("provenance", std::string("direct_inverse"));
    for (const auto p : {Provenance::Analytic, Provenance::DirectInverse, Provenance::GraphicalLasso}) {
      if (to_string(p) == prov) out.provenance = p;
    }
    out.lambda = meta.value("lambda", 0.0);
    out.tol = meta.value("tol", 0.0);
    out.iterations = meta.value("iterations", std::size_t{0});
    out.gap = meta.value("gap", 0.0);
    out.ridge = meta.value("ridge", 0.0);
  }
  return out;
}

nlohmann::json recovered_to_json(const RecoveredParameters& params, const std::string& reference) {
  nlohmann::json lines = nlohmann::json::array();
  for (const auto& l : params.lines) {
    lines.push_back({{"from", l.from}, {"to", l.to.empty() ? reference : l.to}, {"g", l.g}, {"beta", l.beta}});
  }
  return {{"lines", lines},
          {"residual", params.residual},
          {"principal_residual", params.principal_residual},
          {"branch", params.branch == SquareRootBranch::Principal ? "principal" : "sign_resolved"},
          {"identifiable", params.identifiable},
          {"exact", params.residual <= kRecoveryResidualTolerance}};
}

void write_sweep(const SweepResult& result, const std::filesystem::path& dir, const std::string& stem) {
  auto rows = open_output(dir / (stem + ".csv"));
  auto timing = open_output(dir / (stem + "_timing.csv"));
  rows << "sample_size,repetition,seed,algorithm,noise_level,epsilon,multiplier,tau,error_ratio,failure\n";
  timing << "sample_size,repetition,seed,algorithm,multiplier,runtime_ms\n";
  for (const auto& r : result.rows) {
    rows << r.sample_size << ',' << r.repetition << ',' << r.seed << ',' << to_string(r.algorithm) << ','
         << format_double(r.noise_level) << ',' << format_double(r.epsilon) << ',' << format_double(r.multiplier)
         << ',' << format_double(r.tau) << ',' << optional_number(r.error_ratio) << ',' << csv_text(r.failure)
         << '\n';
    timing << r.sample_size << ',' << r.repetition << ',' << r.seed << ',' << to_string(r.algorithm) << ','
           << format_double(r.multiplier) << ',' << format_double(r.runtime_ms) << '\n';
  }
  auto agg = open_output(dir / (stem + "_aggregate.csv"));
  agg << "sample_size,algorithm,multiplier,count,failures,mean_error,stddev_error\n";
  for (const auto& a : result.aggregates) {
    agg << a.sample_size << ',' << to_string(a.algorithm) << ',' << format_double(a.multiplier) << ',' << a.count
        << ',' << a.failures << ',' << format_double(a.mean) << ',' << format_double(a.stddev) << '\n';
  }
}

void write_detection(const DetectionResult& result, const std::filesystem::path& dir) {
  nlohmann::json report = change_report_to_json(result.analytic);
  report["event"] = {{"kind", result.event.kind == LineEventKind::Add ? "add" : "remove"},
                     {"from", result.event.line.from},
                     {"to", result.event.line.to}};
  write_json(report, dir / "detect_report.json");

  auto acc = open_output(dir / "detect_accuracy.csv");
  acc << "sample_size,repetitions,accuracy\n";
  for (const auto& a : result.accuracy) acc << a.sample_size << ',' << a.count << ',' << format_double(a.accuracy) << '\n';

  auto runs = open_output(dir / "detect_runs.csv");
  auto timing = open_output(dir / "detect_timing.csv");
  runs << "sample_size,repetition,seed,noise_level,kind,endpoints,error,failure\n";
  timing << "sample_size,repetition,seed,runtime_ms\n";
  for (const auto& r : result.rows) {
    runs << r.sample_size << ',' << r.repetition << ',' << r.seed << ',' << format_double(r.noise_level) << ','
         << r.kind << ',' << r.endpoints << ',' << (r.error ? std::to_string(*r.error) : "") << ','
         << csv_text(r.failure) << '\n';
    timing << r.sample_size << ',' << r.repetition << ',' << r.seed << ',' << format_double(r.runtime_ms) << '\n';
  }
}

}  // namespace gridgm
