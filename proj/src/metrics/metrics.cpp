#include "ayce/metrics/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "ayce/core/errors.hpp"
#include "ayce/kernels/kernels.hpp"

namespace ayce::metrics {

Metric parse_metric(std::string_view name) {
  if (name == "cosine" || name == "cosine_metric") return Metric::CosineMetric;
  if (name == "euclidean") return Metric::Euclidean;
  throw ConfigError("unknown metric '" + std::string(name) + "' (expected cosine_metric|euclidean)");
}

std::string_view metric_name(Metric m) {
  return m == Metric::CosineMetric ? "cosine_metric" : "euclidean";
}

double cosine_metric(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size())
    throw DimensionMismatch("cosine_metric: widths " + std::to_string(u.size()) + " vs " + std::to_string(v.size()));
  const double nu = std::sqrt(kernels::dot(u, u));
  const double nv = std::sqrt(kernels::dot(v, v));
  if (nu == 0.0 || nv == 0.0) throw ZeroVector("cosine_metric on a zero vector");
  return 1.0 + (-(kernels::dot(u, v) / (nu * nv)));
}

double euclidean(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size())
    throw DimensionMismatch("euclidean: widths " + std::to_string(u.size()) + " vs " + std::to_string(v.size()));
  return kernels::euclidean_distance(u, v);
}

double distance(Metric m, std::span<const double> u, std::span<const double> v) {
  return m == Metric::CosineMetric ? cosine_metric(u, v) : euclidean(u, v);
}

Matrix distance_matrix(const Matrix& visual, const Matrix& text, Metric m) {
  auto arity_ok = [](std::size_t r) { return r == 1 || r == 3; };
  if (!arity_ok(visual.rows) || !arity_ok(text.rows))
    throw DimensionMismatch("distance_matrix: arities must be 1 or 3, got " + std::to_string(visual.rows) +
                            " and " + std::to_string(text.rows));
  Matrix d(visual.rows, text.rows);
  for (std::size_t i = 0; i < visual.rows; ++i)
    for (std::size_t j = 0; j < text.rows; ++j) d(i, j) = distance(m, visual.row(i), text.row(j));
  return d;
}

Aggregation parse_aggregation(std::string_view name) {
  if (name == "min") return Aggregation::Min;
  if (name == "mean") return Aggregation::Mean;
  throw ConfigError("unknown aggregation '" + std::string(name) + "'");
}

double aggregate(const Matrix& d, Aggregation mode) {
  if (d.empty()) throw DimensionMismatch("aggregate on an empty matrix");
  if (mode == Aggregation::Min) return *std::min_element(d.data.begin(), d.data.end());
  double s = 0.0;
  for (double x : d.data) s += x;
  return s / static_cast<double>(d.size());
}

namespace {

// Two-pass population mean/variance over the values `visit` emits.
template <typename Visit>
std::pair<double, double> mean_var(Visit&& visit) {
  double sum = 0.0;
  std::size_t n = 0;
  visit([&](double x) {
    sum += x;
    ++n;
  });
  const double mean = sum / static_cast<double>(n);
  double acc = 0.0;
  visit([&](double x) { acc += (x - mean) * (x - mean); });
  return {mean, acc / static_cast<double>(n)};
}

}  // namespace

IntraInterReport intra_inter_report(std::span<const Matrix> triples, Metric m) {
  if (triples.size() < 2) throw TooFewTracks("intra_inter_report needs at least 2 tracks");
  for (const auto& t : triples)
    if (t.rows != 3) throw ShapeError("intra_inter_report expects 3 embeddings per track");

  IntraInterReport r;
  r.metric = m;
  auto intra = [&](auto&& emit) {
    for (const auto& t : triples)
      for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t b = a + 1; b < 3; ++b) emit(distance(m, t.row(a), t.row(b)));
  };
  auto inter = [&](auto&& emit) {
    for (std::size_t i = 0; i < triples.size(); ++i)
      for (std::size_t j = i + 1; j < triples.size(); ++j)
        for (std::size_t a = 0; a < 3; ++a)
          for (std::size_t b = 0; b < 3; ++b) emit(distance(m, triples[i].row(a), triples[j].row(b)));
  };
  std::tie(r.intra_mean, r.intra_var) = mean_var(intra);
  std::tie(r.inter_mean, r.inter_var) = mean_var(inter);
  return r;
}

std::size_t RankingEntry::rank_of_truth() const {
  auto it = std::find(candidates.begin(), candidates.end(), truth);
  if (it == candidates.end()) throw MissingTruth("query '" + query + "': truth '" + truth + "' not among candidates");
  return static_cast<std::size_t>(it - candidates.begin()) + 1;
}

double mrr(const RankingTable& table) {
  if (table.entries.empty()) throw MissingTruth("mrr over an empty ranking table");
  double s = 0.0;
  for (const auto& e : table.entries) s += 1.0 / static_cast<double>(e.rank_of_truth());
  return s / static_cast<double>(table.entries.size());
}

Pca2d pca_2d(const Matrix& points) {
  const std::size_t n = points.rows;
  const std::size_t d = points.cols;
  if (n < 3 || d < 2) throw ShapeError("pca_2d needs n >= 3 points of dimension >= 2");

  Eigen::MatrixXd x(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) x(i, j) = points(i, j);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::VectorXd& evals = eig.eigenvalues();  // ascending
  const Eigen::MatrixXd& evecs = eig.eigenvectors();

  Pca2d out;
  out.coords = Matrix(n, 2);
  out.components = Matrix(2, d);
  const double top = std::max(evals(d - 1), 0.0);
  const double tol = std::max(top, 1.0) * 1e-12 * static_cast<double>(d);
  for (int c = 0; c < 2; ++c) {
    const auto idx = static_cast<Eigen::Index>(d) - 1 - c;
    double ev = std::max(evals(idx), 0.0);
    const bool rank_deficient = ev <= tol;
    if (c == 1 && rank_deficient) out.degenerate = true;
    if (rank_deficient && (c == 1 || top <= tol)) {
      out.explained_variance[c] = 0.0;
      continue;  // coordinates and loading stay zero
    }
    Eigen::VectorXd v = evecs.col(idx);
    for (Eigen::Index j = 0; j < v.size(); ++j) {
      if (std::abs(v(j)) > 1e-12) {
        if (v(j) < 0) v = -v;
        break;
      }
    }
    out.explained_variance[c] = ev;
    const Eigen::VectorXd proj = x * v;
    for (std::size_t i = 0; i < n; ++i) out.coords(i, c) = proj(static_cast<Eigen::Index>(i));
    for (std::size_t j = 0; j < d; ++j) out.components(c, j) = v(static_cast<Eigen::Index>(j));
  }
  if (top <= tol) out.degenerate = true;
  return out;
}

void write_pca_csv(const std::filesystem::path& path, std::span<const std::string> ids, const Pca2d& pca) {
  if (ids.size() != pca.coords.rows) throw LengthMismatch("write_pca_csv: ids and coordinates differ in length");
  std::ofstream out(path);
  if (!out) throw IOError("cannot write " + path.string());
  out.precision(17);
  out << "id,pc1,pc2\n";
  for (std::size_t i = 0; i < ids.size(); ++i) out << ids[i] << ',' << pca.coords(i, 0) << ',' << pca.coords(i, 1) << '\n';
}

}  // namespace ayce::metrics
