#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ayce/core/matrix.hpp"

namespace ayce::metrics {

enum class Metric { CosineMetric, Euclidean };

Metric parse_metric(std::string_view name);
std::string_view metric_name(Metric m);

/// 1 + (-cosine similarity), in [0, 2]. Throws ZeroVector for a zero-norm
/// argument and DimensionMismatch for unequal widths.
double cosine_metric(std::span<const double> u, std::span<const double> v);

/// L2 norm of u - v.
double euclidean(std::span<const double> u, std::span<const double> v);

double distance(Metric m, std::span<const double> u, std::span<const double> v);

/// values(m, n) = metric(V_m, T_n). Both sides must have arity 1 or 3.
Matrix distance_matrix(const Matrix& visual, const Matrix& text, Metric m);

enum class Aggregation { Min, Mean };

Aggregation parse_aggregation(std::string_view name);

/// min: smallest entry; mean: arithmetic mean of all entries.
double aggregate(const Matrix& d, Aggregation mode);

struct IntraInterReport {
  double intra_mean = 0.0;
  double intra_var = 0.0;
  double inter_mean = 0.0;
  double inter_var = 0.0;
  Metric metric = Metric::CosineMetric;
};

/// Intra-tuple statistics over the 3 unordered caption pairs of each track;
/// inter-tuple over all 9 cross pairs of every unordered track pair.
/// Variances are population variances over those pair populations.
/// Each element of `triples` is one track's 3 x d caption embeddings.
IntraInterReport intra_inter_report(std::span<const Matrix> triples, Metric m);

struct RankingEntry {
  std::string query;
  std::string truth;
  std::vector<std::string> candidates;  // best first

  /// 1-based position of `truth` in `candidates`; throws MissingTruth.
  std::size_t rank_of_truth() const;
};

struct RankingTable {
  std::vector<RankingEntry> entries;
};

/// Mean over queries of 1 / rank_of_truth.
double mrr(const RankingTable& table);

struct Pca2d {
  Matrix coords;                          // n x 2
  std::array<double, 2> explained_variance{};  // population variance along pc1, pc2
  Matrix components;                      // 2 x d, unit rows
  bool degenerate = false;                // rank < 2: pc2 column is zero
};

/// Projects mean-centred points onto the two leading principal directions.
/// Component signs are fixed so the first nonzero loading is positive.
Pca2d pca_2d(const Matrix& points);

/// CSV with header "id,pc1,pc2".
void write_pca_csv(const std::filesystem::path& path, std::span<const std::string> ids, const Pca2d& pca);

}  // namespace ayce::metrics
