#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <vector>

#include "ayce/core/errors.hpp"
#include "ayce/metrics/metrics.hpp"
#include "support.hpp"

using namespace ayce;
using namespace ayce::metrics;
using ayce::testing::random_matrix;

TEST(CosineMetric, Endpoints) {
  const std::vector<double> u{1, 0, 0}, v{0, 1, 0}, w{-2, 0, 0};
  EXPECT_EQ(cosine_metric(u, u), 0.0);
  EXPECT_EQ(cosine_metric(u, v), 1.0);
  EXPECT_EQ(cosine_metric(u, w), 2.0);
}

TEST(CosineMetric, RangeSymmetryScaleInvariance) {
  Rng rng(10);
  for (int i = 0; i < 2000; ++i) {
    auto a = random_matrix(1, 16, rng), b = random_matrix(1, 16, rng);
    const double d = cosine_metric(a.row(0), b.row(0));
    ASSERT_GE(d, 0.0);
    ASSERT_LE(d, 2.0);
    ASSERT_NEAR(d, cosine_metric(b.row(0), a.row(0)), 1e-12);
    const double s = uniform(rng, 0.01, 100.0);
    for (auto& x : a.data) x *= s;
    ASSERT_NEAR(d, cosine_metric(a.row(0), b.row(0)), 1e-12);
  }
}

TEST(CosineMetric, Errors) {
  const std::vector<double> z{0, 0}, u{1, 2}, w{1, 2, 3};
  EXPECT_THROW(cosine_metric(z, u), ZeroVector);
  EXPECT_THROW(cosine_metric(u, w), DimensionMismatch);
  EXPECT_THROW(euclidean(u, w), DimensionMismatch);
}

TEST(Euclidean, PythagoreanTriple) {
  const std::vector<double> a{0, 0}, b{3, 4};
  EXPECT_EQ(euclidean(a, b), 5.0);
  EXPECT_EQ(euclidean(a, a), 0.0);
}

TEST(DistanceMatrix, ShapesAndEntries) {
  Rng rng(11);
  for (auto [r, c] : {std::pair<std::size_t, std::size_t>{1, 1}, {1, 3}, {3, 1}, {3, 3}}) {
    auto v = random_matrix(r, 5, rng), t = random_matrix(c, 5, rng);
    const auto d = distance_matrix(v, t, Metric::Euclidean);
    ASSERT_EQ(d.rows, r);
    ASSERT_EQ(d.cols, c);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) EXPECT_EQ(d(i, j), euclidean(v.row(i), t.row(j)));
  }
  EXPECT_THROW(distance_matrix(Matrix(2, 4, 1.0), Matrix(3, 4, 1.0), Metric::Euclidean), DimensionMismatch);
}

TEST(Aggregate, MinAndMean) {
  const auto m = Matrix::from_rows({{1, 2, 3}, {4, 5, 6}, {7, 8, 9}});
  EXPECT_EQ(aggregate(m, Aggregation::Min), 1.0);
  EXPECT_EQ(aggregate(m, Aggregation::Mean), 5.0);
  EXPECT_EQ(aggregate(Matrix(3, 3, 2.5), Aggregation::Mean), 2.5);
  EXPECT_THROW(aggregate(Matrix(), Aggregation::Min), DimensionMismatch);
  EXPECT_EQ(parse_aggregation("min"), Aggregation::Min);
  EXPECT_THROW(parse_aggregation("max"), ConfigError);
}

TEST(IntraInter, HandComputedFixture) {
  // Track A: three identical rows; track B: three rows at distance 2 from each other's mates.
  std::vector<Matrix> triples{Matrix::from_rows({{0, 0}, {0, 0}, {0, 0}}),
                              Matrix::from_rows({{3, 4}, {3, 4}, {3, 4}})};
  const auto r = intra_inter_report(triples, Metric::Euclidean);
  EXPECT_EQ(r.intra_mean, 0.0);
  EXPECT_EQ(r.intra_var, 0.0);
  EXPECT_EQ(r.inter_mean, 5.0);
  EXPECT_EQ(r.inter_var, 0.0);

  std::vector<Matrix> spread{Matrix::from_rows({{0, 0}, {1, 0}, {2, 0}}), Matrix::from_rows({{0, 0}, {0, 0}, {0, 0}})};
  const auto s = intra_inter_report(spread, Metric::Euclidean);
  // Intra pairs: {1,2,1} and {0,0,0} -> mean 4/6, population variance.
  std::vector<double> intra{1, 2, 1, 0, 0, 0};
  const double mean = 4.0 / 6.0;
  double var = 0;
  for (double x : intra) var += (x - mean) * (x - mean);
  EXPECT_NEAR(s.intra_mean, mean, 1e-15);
  EXPECT_NEAR(s.intra_var, var / 6.0, 1e-15);
  EXPECT_NEAR(s.inter_mean, 1.0, 1e-15);  // each B row vs A rows: 0,1,2
  EXPECT_THROW(intra_inter_report(std::vector<Matrix>{triples[0]}, Metric::Euclidean), TooFewTracks);
}

TEST(Mrr, HandValues) {
  RankingTable t;
  t.entries.push_back({"a", "a", {"a", "b", "c"}});
  t.entries.push_back({"b", "b", {"a", "c", "b"}});
  EXPECT_EQ(t.entries[1].rank_of_truth(), 3u);
  EXPECT_DOUBLE_EQ(mrr(t), (1.0 + 1.0 / 3.0) / 2.0);
  t.entries.push_back({"x", "z", {"a", "b"}});
  EXPECT_THROW(t.entries[2].rank_of_truth(), MissingTruth);
  EXPECT_THROW(mrr(RankingTable{}), MissingTruth);
}

TEST(Mrr, RandomRankingsMatchHarmonicBaseline) {
  // Uniform random rankings of n candidates: E[1/rank] = H_n / n.
  const std::size_t n = 32, queries = 20000;
  double h = 0;
  for (std::size_t k = 1; k <= n; ++k) h += 1.0 / static_cast<double>(k);
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = "t" + std::to_string(i);
  Rng rng(12);
  RankingTable t;
  for (std::size_t q = 0; q < queries; ++q) {
    auto c = ids;
    std::shuffle(c.begin(), c.end(), rng);
    t.entries.push_back({ids[q % n], ids[q % n], std::move(c)});
  }
  // Standard error of the mean of 1/rank is about 0.2 / sqrt(queries).
  EXPECT_NEAR(mrr(t), h / n, 5 * 0.2 / std::sqrt(static_cast<double>(queries)));
  EXPECT_NEAR(h / n, 0.127, 0.001);
}

TEST(Pca, MatchesSvdOfCentredData) {
  Rng rng(13);
  const std::size_t n = 40, d = 6;
  auto pts = random_matrix(n, d, rng);
  for (std::size_t i = 0; i < n; ++i) pts(i, 1) = 3.0 * pts(i, 0) + 0.1 * pts(i, 1);
  const auto p = pca_2d(pts);

  Eigen::MatrixXd x(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) x(i, j) = pts(i, j);
  x.rowwise() -= x.colwise().mean();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinV);
  ASSERT_FALSE(p.degenerate);
  for (int k = 0; k < 2; ++k) {
    const double sv = svd.singularValues()(k);
    EXPECT_NEAR(p.explained_variance[k], sv * sv / n, 1e-9);
    Eigen::VectorXd v = svd.matrixV().col(k);
    // Sign convention: first nonzero loading positive.
    for (int j = 0; j < v.size(); ++j)
      if (std::abs(v(j)) > 1e-12) {
        if (v(j) < 0) v = -v;
        break;
      }
    for (std::size_t j = 0; j < d; ++j) EXPECT_NEAR(p.components(k, j), v(j), 1e-8);
    const Eigen::VectorXd proj = x * v;
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(p.coords(i, k), proj(i), 1e-8);
  }
}

TEST(Pca, DegenerateAndCsv) {
  Matrix line(5, 3);
  for (std::size_t i = 0; i < 5; ++i) line(i, 0) = static_cast<double>(i);
  const auto p = pca_2d(line);
  EXPECT_TRUE(p.degenerate);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(p.coords(i, 1), 0.0);
  EXPECT_THROW(pca_2d(Matrix(2, 3, 1.0)), ShapeError);

  ayce::testing::TempDir dir("pca");
  const std::vector<std::string> ids{"a", "b", "c", "d", "e"};
  write_pca_csv(dir / "p.csv", ids, p);
  std::ifstream in(dir / "p.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "id,pc1,pc2");
  std::size_t lines = 0;
  for (std::string l; std::getline(in, l);) lines += !l.empty();
  EXPECT_EQ(lines, 5u);
}

TEST(MetricNames, RoundTrip) {
  for (auto m : {Metric::CosineMetric, Metric::Euclidean}) EXPECT_EQ(parse_metric(metric_name(m)), m);
  EXPECT_THROW(parse_metric("manhattan"), ConfigError);
}
