#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <algorithm>
#include <fstream>
#include <map>

#include "ayce/core/errors.hpp"
#include "ayce/data/synthetic.hpp"
#include "ayce/nn/ops.hpp"
#include "ayce/text/text.hpp"
#include "support.hpp"

using namespace ayce;
using namespace ayce::text;
using ayce::testing::TempDir;

namespace {

data::Dataset small_corpus(std::size_t n, std::uint64_t seed) {
  data::SyntheticSpec spec;
  spec.n_tracks = n;
  return data::generate_synthetic(spec, seed, false).dataset;
}

}  // namespace

TEST(Tokenize, WordsThenBigrams) {
  const auto t = tokenize("A red, Car.");
  const std::vector<std::string> expect{"a", "red", "car", "a|red", "red|car"};
  EXPECT_EQ(t, expect);
  EXPECT_TRUE(tokenize(" ,. ").empty());
}

TEST(Vocabulary, UnknownFirstThenSorted) {
  const auto d = small_corpus(4, 1);
  const auto v = build_vocabulary(d);
  ASSERT_GT(v.size(), 2u);
  EXPECT_EQ(v[0], "<unk>");
  EXPECT_TRUE(std::is_sorted(v.begin() + 1, v.end()));
  EXPECT_EQ(std::adjacent_find(v.begin() + 1, v.end()), v.end());
  const TextModel m(v, {}, 1);
  const auto ids = m.encoder.token_ids("zzzunseen red");
  EXPECT_EQ(ids[0], 0u);
}

TEST(Encode, ShapesAndDeterminism) {
  const auto d = small_corpus(4, 2);
  const TextModel m(build_vocabulary(d), {}, 3);
  const auto& caps = d.tracks[0].captions;
  const auto lto = encode_lto(caps, m);
  EXPECT_EQ(lto.rows, 3u);
  EXPECT_EQ(lto.cols, 256u);
  const auto lso = encode_lso(caps, m);
  EXPECT_EQ(lso.rows, 1u);
  EXPECT_EQ(lso.cols, 256u);
  EXPECT_EQ(encode(caps, m, TextMode::LSO), lso);

  const std::array<std::string, 3> same{caps[0], caps[0], caps[0]};
  const auto rows = encode_lto(same, m);
  EXPECT_TRUE(std::equal(rows.row(0).begin(), rows.row(0).end(), rows.row(1).begin()));
  EXPECT_TRUE(std::equal(rows.row(0).begin(), rows.row(0).end(), rows.row(2).begin()));
  EXPECT_THROW(encode_lto({"a", "", "b"}, m), EmptyCaption);
}

TEST(Encode, RowIsHeadOfEncoderOutput) {
  const auto d = small_corpus(3, 4);
  const TextModel m(build_vocabulary(d), {}, 5);
  const auto lto = encode_lto(d.tracks[1].captions, m);
  for (std::size_t j = 0; j < 3; ++j) {
    nn::Graph g(m.store);
    const auto raw = m.encoder.encode(g, d.tracks[1].captions[j], {});
    const auto& row = g.value(m.head(g, raw));
    EXPECT_TRUE(std::equal(row.data.begin(), row.data.end(), lto.row(j).begin()));
  }
}

TEST(Encode, LsoSeparatorAndOrder) {
  EXPECT_EQ(lso_concat({"a", "b", "c"}), "a b c");
  const auto d = small_corpus(3, 6);
  const TextModel m(build_vocabulary(d), {}, 7);
  const auto& c = d.tracks[0].captions;
  const auto x = encode_lso(c, m);
  const auto y = encode_lso({c[2], c[0], c[1]}, m);
  EXPECT_NE(x, y);
  EXPECT_EQ(m.embed(lso_concat(c)), x);
}

TEST(Triplets, LtoInvariants) {
  const auto d = small_corpus(2, 8);
  Rng rng(9);
  for (const auto& t : sample_text_triplets(d, TextMode::LTO, 100, rng)) {
    EXPECT_EQ(t.provenance[0].first, t.provenance[1].first);
    EXPECT_NE(t.provenance[0].first, t.provenance[2].first);
    EXPECT_NE(t.provenance[0].second, t.provenance[1].second);
    const auto& tr = d.tracks[d.index_of(t.provenance[0].first)];
    EXPECT_EQ(t.anchor, tr.captions[t.provenance[0].second]);
    EXPECT_EQ(t.positive, tr.captions[t.provenance[1].second]);
  }
}

TEST(Triplets, LsoUsesPermutedConcatenations) {
  const auto d = small_corpus(3, 10);
  Rng rng(11);
  for (const auto& t : sample_text_triplets(d, TextMode::LSO, 50, rng)) {
    EXPECT_EQ(t.provenance[0].second, -1);
    EXPECT_EQ(t.provenance[0].first, t.provenance[1].first);
    EXPECT_NE(t.provenance[0].first, t.provenance[2].first);
    const auto& tr = d.tracks[d.index_of(t.provenance[0].first)];
    for (const auto& c : tr.captions) {
      EXPECT_NE(t.anchor.find(c), std::string::npos);
      EXPECT_NE(t.positive.find(c), std::string::npos);
    }
    EXPECT_EQ(t.anchor.size(), t.positive.size());
  }
  EXPECT_THROW(sample_text_triplets(small_corpus(1, 1), TextMode::LTO, 4, rng), TooFewTracks);
}

TEST(Triplets, TrackSelectionIsUniform) {
  const auto d = small_corpus(10, 12);
  Rng rng(13);
  std::map<std::string, double> counts;
  const std::size_t samples = 10000;
  for (const auto& t : sample_text_triplets(d, TextMode::LTO, samples, rng)) counts[t.provenance[0].first] += 1;
  ASSERT_EQ(counts.size(), 10u);
  double stat = 0;
  const double expected = samples / 10.0;
  for (const auto& [id, c] : counts) stat += (c - expected) * (c - expected) / expected;
  boost::math::chi_squared dist(9);
  EXPECT_GT(boost::math::cdf(boost::math::complement(dist, stat)), 0.01);
}

TEST(TripletLoss, HandArithmetic) {
  const std::vector<double> ap{0.2}, an{0.5};
  EXPECT_DOUBLE_EQ(triplet_margin_loss(ap, an, 1.0), 0.7);
  const std::vector<double> ap2{0.1, 0.3}, an2{1.5, 2.0};
  EXPECT_EQ(triplet_margin_loss(ap2, an2, 1.0), 0.0);
  EXPECT_EQ(triplet_margin_loss(an2, an2, 1.0), 1.0);
  EXPECT_THROW(triplet_margin_loss(ap, an2, 1.0), LengthMismatch);
  EXPECT_THROW(triplet_margin_loss(std::vector<double>{}, std::vector<double>{}, 1.0), LengthMismatch);
}

TEST(TripletLoss, GradientMatchesFiniteDifferences) {
  const auto d = small_corpus(4, 14);
  TextModel m(build_vocabulary(d), {8, 6}, 15);
  Rng rng(16);
  const auto batch = sample_text_triplets(d, TextMode::LTO, 4, rng);
  nn::Gradients grads(m.store);
  triplet_batch_loss(m, batch, metrics::Metric::CosineMetric, 1.5, &grads);
  Rng pick(17);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t p = uniform_index(pick, m.store.size());
    const std::size_t i = uniform_index(pick, m.store[p].value.size());
    double& x = m.store[p].value.data[i];
    const double saved = x, h = 1e-6;
    x = saved + h;
    const double up = triplet_batch_loss(m, batch, metrics::Metric::CosineMetric, 1.5, nullptr);
    x = saved - h;
    const double down = triplet_batch_loss(m, batch, metrics::Metric::CosineMetric, 1.5, nullptr);
    x = saved;
    const double fd = (up - down) / (2 * h);
    EXPECT_NEAR(grads.per_param[p].data[i], fd, 1e-6 + 1e-4 * std::abs(fd)) << m.store[p].name;
  }
}

TEST(Finetune, IntraDistanceShrinks) {
  const auto d = small_corpus(32, 18);
  TextModel m(build_vocabulary(d), {}, 19);
  TextFinetuneConfig cfg;
  cfg.epochs = 12;
  cfg.seed = 20;
  std::size_t calls = 0;
  const auto r = finetune_text(d, m, cfg, [&](std::size_t, const metrics::IntraInterReport&, double) { ++calls; });
  ASSERT_EQ(r.history.size(), 13u);
  EXPECT_EQ(calls, 13u);
  EXPECT_LT(r.history.back().intra_mean, r.history.front().intra_mean);
  EXPECT_LT(r.history.back().intra_mean, r.history.back().inter_mean);
}

TEST(Checkpoint, RoundTripIsExact) {
  const auto d = small_corpus(4, 21);
  const TextModel m(build_vocabulary(d), {}, 22);
  TempDir dir("txt");
  m.save(dir / "t.ckpt");
  const auto back = TextModel::load(dir / "t.ckpt");
  EXPECT_TRUE(back == m);
  EXPECT_EQ(encode_lto(d.tracks[0].captions, back), encode_lto(d.tracks[0].captions, m));
  std::ofstream(dir / "junk.ckpt") << "not a checkpoint";
  EXPECT_THROW(TextModel::load(dir / "junk.ckpt"), CheckpointIOError);
  EXPECT_THROW(TextModel::load(dir / "missing.ckpt"), CheckpointIOError);
}

TEST(Modes, ParseNames) {
  EXPECT_EQ(parse_text_mode("lto"), TextMode::LTO);
  EXPECT_EQ(parse_text_mode("LSO"), TextMode::LSO);
  EXPECT_THROW(parse_text_mode("xyz"), ConfigError);
}
