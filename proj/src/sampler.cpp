#include "gridgm/sampler.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "gridgm/error.hpp"
#include "gridgm/linalg.hpp"
#include "random.hpp"

namespace gridgm {

namespace {

constexpr std::size_t kChunkRows = 512;
constexpr std::uint64_t kNoiseDomain = 0x6e6f6973655f7631ULL;

// Rows [first, first+count) of a stream whose row k is factor * z_k, with
// z_k drawn from the per-sample stream (seed, k). Rows are computed in fixed
// absolute chunks so the floating-point path of a row never depends on the
// requested range.
Eigen::MatrixXd draw_rows(const Eigen::MatrixXd& factor, std::uint64_t seed, std::size_t first, std::size_t count) {
  const auto width = factor.rows();
  const auto depth = factor.cols();
  Eigen::MatrixXd out(static_cast<Eigen::Index>(count), width);
  if (count == 0) return out;

  const std::size_t last = first + count;
  Eigen::MatrixXd z(static_cast<Eigen::Index>(kChunkRows), depth);
  for (std::size_t chunk = first / kChunkRows; chunk * kChunkRows < last; ++chunk) {
    const std::size_t begin = chunk * kChunkRows;
    for (std::size_t k = 0; k < kChunkRows; ++k) {
      detail::SplitMix64 gen(detail::sample_seed(seed, begin + k));
      std::normal_distribution<double> normal;
      for (Eigen::Index j = 0; j < depth; ++j) z(static_cast<Eigen::Index>(k), j) = normal(gen);
    }
    const Eigen::MatrixXd rows = z * factor.transpose();
    const std::size_t lo = std::max(begin, first);
    const std::size_t hi = std::min(begin + kChunkRows, last);
    out.middleRows(static_cast<Eigen::Index>(lo - first), static_cast<Eigen::Index>(hi - lo)) =
        rows.middleRows(static_cast<Eigen::Index>(lo - begin), static_cast<Eigen::Index>(hi - lo));
  }
  return out;
}

void check_square(const Eigen::MatrixXd& m, Eigen::Index n, const char* what) {
  if (m.rows() != n || m.cols() != n) {
    throw ValidationError(std::string(what) + " must be " + std::to_string(n) + "x" + std::to_string(n));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// InjectionStatistics

InjectionStatistics InjectionStatistics::uniform(std::size_t buses, double variance, double pq_covariance) {
  const auto n = static_cast<Eigen::Index>(buses);
  InjectionStatistics s;
  s.sigma_pp = Eigen::VectorXd::Constant(n, variance);
  s.sigma_qq = Eigen::VectorXd::Constant(n, variance);
  s.sigma_pq = Eigen::VectorXd::Constant(n, pq_covariance);
  return s;
}

Eigen::VectorXd InjectionStatistics::determinants() const {
  return (sigma_pp.cwiseProduct(sigma_qq) - sigma_pq.cwiseProduct(sigma_pq)).cwiseAbs();
}

Eigen::MatrixXd InjectionStatistics::base_precision() const {
  const auto n = sigma_pp.size();
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  const Eigen::VectorXd d = determinants();
  for (Eigen::Index i = 0; i < n; ++i) {
    p(i, i) = sigma_qq(i) / d(i);
    p(n + i, n + i) = sigma_pp(i) / d(i);
    p(i, n + i) = p(n + i, i) = -sigma_pq(i) / d(i);
  }
  return p;
}

Eigen::MatrixXd InjectionStatistics::precision() const {
  Eigen::MatrixXd p = base_precision();
  if (precision_perturbation) p += *precision_perturbation;
  return p;
}

Eigen::MatrixXd InjectionStatistics::covariance() const {
  const auto n = sigma_pp.size();
  if (precision_perturbation) return symmetrize(checked_inverse(precision(), "injection precision"));
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  c.topLeftCorner(n, n) = sigma_pp.asDiagonal();
  c.bottomRightCorner(n, n) = sigma_qq.asDiagonal();
  c.topRightCorner(n, n) = sigma_pq.asDiagonal();
  c.bottomLeftCorner(n, n) = sigma_pq.asDiagonal();
  return c;
}

void InjectionStatistics::validate() const {
  const auto n = sigma_pp.size();
  if (n == 0 || sigma_qq.size() != n || sigma_pq.size() != n) {
    throw ValidationError("injection statistics vectors must share a non-zero length");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(sigma_pp(i) > 0.0) || !(sigma_qq(i) > 0.0)) {
      throw ValidationError("injection variances must be positive (bus position " + std::to_string(i) + ")");
    }
    if (!(sigma_pp(i) * sigma_qq(i) - sigma_pq(i) * sigma_pq(i) > 0.0)) {
      throw ValidationError("injection covariance block is not positive definite (bus position " +
                            std::to_string(i) + ")");
    }
  }
  if (precision_perturbation) {
    check_square(*precision_perturbation, 2 * n, "precision perturbation");
    if ((*precision_perturbation - precision_perturbation->transpose()).cwiseAbs().maxCoeff() > 0.0) {
      throw ValidationError("precision perturbation must be symmetric");
    }
    if (!is_positive_definite(precision())) {
      throw ValidationError("perturbed injection precision is not positive definite");
    }
  }
}

InjectionStatistics make_correlated_stats(const InjectionStatistics& stats, const GridGraph& grid, double epsilon) {
  stats.validate();
  if (!stats.is_block_diagonal()) throw ValidationError("base injection statistics must be block diagonal");
  if (stats.dimension() != grid.dimension()) throw ValidationError("injection statistics do not match the grid");
  if (!(epsilon >= 0.0)) throw ValidationError("correlation epsilon must be non-negative");
  if (epsilon == 0.0) return stats;

  const auto n = static_cast<Eigen::Index>(stats.dimension());
  const Eigen::MatrixXd base = stats.base_precision();
  Eigen::MatrixXd delta = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  for (const auto& [a, b] : grid.observable_edges()) {
    const auto i = static_cast<Eigen::Index>(a);
    const auto j = static_cast<Eigen::Index>(b);
    for (const Eigen::Index off : {Eigen::Index{0}, n}) {
      const double v = epsilon * std::sqrt(base(off + i, off + i) * base(off + j, off + j));
      delta(off + i, off + j) = v;
      delta(off + j, off + i) = v;
    }
  }
  InjectionStatistics out = stats;
  out.precision_perturbation = delta;
  if (!is_positive_definite(out.precision())) {
    throw ValidationError("correlation epsilon " + std::to_string(epsilon) +
                          " makes the injection precision indefinite");
  }
  return out;
}

// ---------------------------------------------------------------------------
// NoiseStatistics

NoiseStatistics NoiseStatistics::zero(std::size_t buses) {
  const auto n = static_cast<Eigen::Index>(2 * buses);
  return {Eigen::MatrixXd::Zero(n, n), {{"kind", "none"}}};
}

NoiseStatistics NoiseStatistics::per_bus(const Eigen::VectorXd& vv, const Eigen::VectorXd& thetatheta,
                                         const Eigen::VectorXd& vtheta) {
  const auto n = vv.size();
  if (thetatheta.size() != n || vtheta.size() != n) throw ValidationError("noise vectors must share a length");
  NoiseStatistics s;
  s.covariance = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  s.covariance.topLeftCorner(n, n) = vv.asDiagonal();
  s.covariance.bottomRightCorner(n, n) = thetatheta.asDiagonal();
  s.covariance.topRightCorner(n, n) = vtheta.asDiagonal();
  s.covariance.bottomLeftCorner(n, n) = vtheta.asDiagonal();
  s.descriptor = {{"kind", "per_bus"}};
  s.validate();
  return s;
}

NoiseStatistics NoiseStatistics::relative(const Eigen::MatrixXd& voltage_covariance, double fraction) {
  if (!(fraction >= 0.0)) throw ValidationError("noise fraction must be non-negative");
  NoiseStatistics s;
  s.covariance = (fraction * voltage_covariance.diagonal()).asDiagonal();
  s.descriptor = {{"kind", "relative"}, {"fraction", fraction}};
  s.validate();
  return s;
}

bool NoiseStatistics::is_zero() const { return covariance.size() == 0 || covariance.cwiseAbs().maxCoeff() == 0.0; }

bool NoiseStatistics::uncorrelated_across_buses() const {
  const auto n = covariance.rows() / 2;
  for (Eigen::Index i = 0; i < 2 * n; ++i) {
    for (Eigen::Index j = 0; j < 2 * n; ++j) {
      if (i % n != j % n && covariance(i, j) != 0.0) return false;
    }
  }
  return true;
}

void NoiseStatistics::validate() const {
  if (covariance.rows() != covariance.cols() || covariance.rows() % 2 != 0) {
    throw ValidationError("noise covariance must be 2N x 2N");
  }
  if (covariance.size() == 0) return;
  if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 0.0) {
    throw ValidationError("noise covariance must be symmetric");
  }
  const Eigen::VectorXd lambda = symmetric_eigenvalues(covariance);
  const double scale = lambda.cwiseAbs().maxCoeff();
  if (lambda(0) < -1e-12 * scale) throw ValidationError("noise covariance is not positive semidefinite");
}

// ---------------------------------------------------------------------------
// Samplers

VoltageSampler::VoltageSampler(const LaplacianPair& laplacians, const InjectionStatistics& stats)
    : bus_order_(laplacians.bus_order) {
  stats.validate();
  const auto n = static_cast<Eigen::Index>(laplacians.dimension());
  if (static_cast<Eigen::Index>(stats.dimension()) != n) {
    throw ValidationError("injection statistics cover " + std::to_string(stats.dimension()) + " buses, grid has " +
                          std::to_string(n));
  }
  const Eigen::MatrixXd h_inv = checked_inverse(laplacians.composite, "composite Laplacian");

  Eigen::MatrixXd factor;
  if (stats.is_block_diagonal()) {
    factor = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double a = std::sqrt(stats.sigma_pp(i));
      factor(i, i) = a;
      factor(n + i, i) = stats.sigma_pq(i) / a;
      factor(n + i, n + i) = std::sqrt(stats.sigma_qq(i) - stats.sigma_pq(i) * stats.sigma_pq(i) / stats.sigma_pp(i));
    }
  } else {
    // cov = P^-1 = L^-T L^-1 for P = L L^T, so L^-T is a factor.
    Eigen::LLT<Eigen::MatrixXd> llt(stats.precision());
    if (llt.info() != Eigen::Success) throw ValidationError("injection precision is not positive definite");
    const Eigen::MatrixXd l_inv =
        llt.matrixL().solve(Eigen::MatrixXd::Identity(2 * n, 2 * n));
    factor = l_inv.transpose();
  }
  transfer_ = h_inv * factor;
}

Eigen::MatrixXd VoltageSampler::draw(std::uint64_t seed, std::size_t first, std::size_t count) const {
  return draw_rows(transfer_, seed, first, count);
}

NoiseSampler::NoiseSampler(const NoiseStatistics& noise) {
  noise.validate();
  zero_ = noise.is_zero();
  if (zero_) {
    factor_ = Eigen::MatrixXd::Zero(noise.covariance.rows(), noise.covariance.cols());
    return;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(noise.covariance);
  if (es.info() != Eigen::Success) throw NumericalError("noise covariance eigen decomposition failed");
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  factor_ = es.eigenvectors() * root.asDiagonal();
}

Eigen::MatrixXd NoiseSampler::draw(std::uint64_t seed, std::size_t first, std::size_t count) const {
  if (zero_) return Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(count), factor_.rows());
  return draw_rows(factor_, seed ^ kNoiseDomain, first, count);
}

VoltageSampleSet sample_voltages(const LaplacianPair& laplacians, const InjectionStatistics& stats, std::size_t n,
                                 std::uint64_t seed) {
  if (n < 1) throw ValidationError("sample count must be at least 1");
  const VoltageSampler sampler(laplacians, stats);
  VoltageSampleSet out;
  out.samples = sampler.draw(seed, 0, n);
  out.bus_order = laplacians.bus_order;
  out.metadata.seed = seed;
  out.metadata.noise = {{"kind", "none"}};
  return out;
}

VoltageSampleSet add_noise(const VoltageSampleSet& samples, const NoiseStatistics& noise, std::uint64_t seed) {
  if (noise.covariance.rows() != samples.samples.cols()) {
    throw ValidationError("noise dimension " + std::to_string(noise.covariance.rows()) +
                          " does not match sample width " + std::to_string(samples.samples.cols()));
  }
  VoltageSampleSet out = samples;
  out.metadata.noise = noise.descriptor;
  out.metadata.noise["seed"] = seed;
  const NoiseSampler sampler(noise);
  if (sampler.is_zero()) return out;
  out.samples += sampler.draw(seed, 0, samples.size());
  return out;
}

Eigen::MatrixXd analytic_voltage_covariance(const LaplacianPair& laplacians, const InjectionStatistics& stats) {
  stats.validate();
  if (stats.dimension() != laplacians.dimension()) throw ValidationError("injection statistics do not match the grid");
  const Eigen::MatrixXd h_inv = checked_inverse(laplacians.composite, "composite Laplacian");
  return symmetrize(h_inv * stats.covariance() * h_inv.transpose());
}

// ---------------------------------------------------------------------------
// CSV

std::vector<std::string> voltage_column_names(const std::vector<std::string>& bus_order) {
  std::vector<std::string> out;
  out.reserve(2 * bus_order.size());
  for (const auto& b : bus_order) out.push_back("v_" + b);
  for (const auto& b : bus_order) out.push_back("theta_" + b);
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

void append_double(std::string& out, double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

}  // namespace

Eigen::MatrixXd read_csv_matrix(const std::filesystem::path& path, std::vector<std::string>* header) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path.string() + " is empty");
  const auto names = split_csv_line(line);
  if (header) *header = names;

  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != names.size()) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(names.size()) + " cells, found " + std::to_string(cells.size()));
    }
    for (const auto& c : cells) {
      double v = 0.0;
      const auto res = std::from_chars(c.data(), c.data() + c.size(), v);
      if (res.ec != std::errc() || res.ptr != c.data() + c.size()) {
        throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": non-numeric cell '" + c + "'");
      }
      values.push_back(v);
    }
    ++rows;
  }
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(names.size()));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < names.size(); ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = values[r * names.size() + c];
    }
  }
  return m;
}

void write_csv_matrix(const Eigen::MatrixXd& m, const std::vector<std::string>& header,
                      const std::filesystem::path& path) {
  if (static_cast<Eigen::Index>(header.size()) != m.cols()) throw ValidationError("CSV header width mismatch");
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  std::string text;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c) text += ',';
    text += header[c];
  }
  text += '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) text += ',';
      append_double(text, m(r, c));
    }
    text += '\n';
  }
  out << text;
}

VoltageSampleSet import_samples(const std::filesystem::path& path, const GridGraph& grid, Centering centering) {
  std::vector<std::string> header;
  Eigen::MatrixXd data = read_csv_matrix(path, &header);
  const auto expected = voltage_column_names(grid.non_reference_buses());
  if (header != expected) {
    throw ValidationError(path.string() + ": header does not match the grid bus order (expected " +
                          std::to_string(expected.size()) + " columns v_<bus>..., theta_<bus>...)");
  }
  switch (centering) {
    case Centering::None:
      break;
    case Centering::Mean:
      if (data.rows() > 0) data.rowwise() -= data.colwise().mean();
      break;
    case Centering::Difference:
      if (data.rows() < 2) throw ValidationError("differencing needs at least two rows");
      data = (data.bottomRows(data.rows() - 1) - data.topRows(data.rows() - 1)).eval();
      break;
  }
  VoltageSampleSet out;
  out.samples = std::move(data);
  out.bus_order = grid.non_reference_buses();
  out.metadata.grid_sha256 = grid_sha256(grid);
  return out;
}

void export_samples(const VoltageSampleSet& samples, const std::filesystem::path& path) {
  write_csv_matrix(samples.samples, voltage_column_names(samples.bus_order), path);
}

void export_sample_metadata(const SampleMetadata& metadata, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << nlohmann::json{{"seed", metadata.seed}, {"grid_sha256", metadata.grid_sha256}, {"noise", metadata.noise}}.dump(2)
      << '\n';
}

}  // namespace gridgm
