#include <gtest/gtest.h>
#include <omp.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "ayce/core/errors.hpp"
#include "ayce/data/crop_source.hpp"
#include "ayce/data/synthetic.hpp"
#include "ayce/train/train.hpp"
#include "support.hpp"

using namespace ayce;
using namespace ayce::train;
using ayce::testing::random_matrix;
using ayce::testing::TempDir;

namespace {

LossConfig euclid(double beta = 0.1) {
  LossConfig c;
  c.beta = beta;
  return c;
}

// Small corpus with models and frozen text, enough to run the training code.
struct Fixture {
  data::SyntheticSpec spec;
  data::SyntheticCorpus corpus;
  std::unique_ptr<data::SyntheticCropSource> src;
  visual::CropCache cache;
  visual::VisualConfig vcfg;
  text::TextModel tmodel;
  TrainingData td;

  Fixture(std::size_t tracks, const visual::EncoderConfig& enc) {
    spec.n_tracks = tracks;
    spec.frames_min = 3;
    spec.frames_max = 6;
    corpus = data::generate_synthetic(spec, 5);
    src = std::make_unique<data::SyntheticCropSource>(spec);
    vcfg.encoder = enc;
    vcfg.crop_width = 16;
    vcfg.crop_height = 12;
    vcfg.conv_channels = {4, 8};
    vcfg.frame_cap = 4;
    cache = visual::CropCache(*src, corpus.dataset, vcfg.crop_width, vcfg.crop_height);
    tmodel = text::TextModel(text::build_vocabulary(corpus.dataset), {}, 6);
    td = {&corpus.dataset, &corpus.detections, &cache,
          text_embeddings(corpus.dataset, tmodel, text::TextMode::LTO)};
  }
};

}  // namespace

TEST(Loss, PhiAndNegativeAggregation) {
  auto a = Matrix::from_rows({{0, 0}, {1, 0}, {5, 5}});
  auto p = Matrix::from_rows({{1, 0}, {9, 9}, {7, 7}});
  EXPECT_EQ(phi(a, p, euclid()), 0.0);
  EXPECT_EQ(phi(Matrix::from_rows({{0, 0}}), Matrix::from_rows({{3, 4}}), euclid()), 5.0);
  EXPECT_EQ(neg_distance(Matrix::from_rows({{0, 0}}), Matrix::from_rows({{3, 4}}), euclid()), 5.0);

  Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    auto x = random_matrix(3, 4, rng), y = random_matrix(3, 4, rng);
    double mn = INFINITY, sum = 0;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        const double d = metrics::euclidean(x.row(i), y.row(j));
        mn = std::min(mn, d);
        sum += d;
      }
    EXPECT_EQ(phi(x, y, euclid()), mn);
    EXPECT_NEAR(neg_distance(x, y, euclid()), sum / 9, 1e-15);
  }
}

TEST(Loss, CompositeHandArithmetic) {
  // One item whose phi is 0.2 and whose negative mean distance is 0.5.
  const std::vector<Matrix> a{Matrix::from_rows({{0.0}})};
  const std::vector<Matrix> p{Matrix::from_rows({{0.2}})};
  const std::vector<Matrix> n{Matrix::from_rows({{0.5}})};
  EXPECT_DOUBLE_EQ(composite_loss(a, p, n, euclid(0.0)), 0.7);
  EXPECT_DOUBLE_EQ(composite_loss(a, p, n, euclid(0.1)), 0.72);
  const std::vector<Matrix> far{Matrix::from_rows({{3.0}})};
  EXPECT_NEAR(composite_loss(a, p, far, euclid(0.1)), 0.02, 1e-15);
  EXPECT_THROW(composite_loss(a, p, std::vector<Matrix>{}, euclid()), LengthMismatch);
}

TEST(Loss, BetaZeroEqualsTripletLossAndIsNonNegative) {
  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    std::vector<Matrix> a, p, n;
    std::vector<double> dap, dan;
    for (int i = 0; i < 4; ++i) {
      a.push_back(random_matrix(3, 5, rng));
      p.push_back(random_matrix(3, 5, rng));
      n.push_back(random_matrix(3, 5, rng));
      dap.push_back(phi(a.back(), p.back(), euclid()));
      dan.push_back(neg_distance(a.back(), n.back(), euclid()));
    }
    EXPECT_EQ(composite_loss(a, p, n, euclid(0.0)), text::triplet_margin_loss(dap, dan, 1.0));
    EXPECT_GE(composite_loss(a, p, n, euclid()), 0.0);
  }
}

TEST(Mining, MatchesBruteForceWithTieBreak) {
  Rng rng(3);
  for (auto rule : {Mining::Farthest, Mining::Hardest})
    for (int t = 0; t < 50; ++t) {
      const std::size_t n = 2 + uniform_index(rng, 7);
      std::vector<Matrix> anchors, texts;
      for (std::size_t i = 0; i < n; ++i) {
        anchors.push_back(random_matrix(3, 4, rng));
        texts.push_back(random_matrix(3, 4, rng));
      }
      if (n > 3) texts[n - 1] = texts[n - 2];  // forces ties for some anchors
      const auto got = mine_hard_negatives(anchors, texts, euclid(), rule);
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = n;
        double best_d = 0;
        for (std::size_t j = 0; j < n; ++j) {
          if (j == i) continue;
          const double d = neg_distance(anchors[i], texts[j], euclid());
          const bool better = best == n || (rule == Mining::Farthest ? d > best_d : d < best_d);
          if (better) {
            best = j;
            best_d = d;
          }
        }
        ASSERT_EQ(got[i], best);
      }
    }
  std::vector<Matrix> one{Matrix(1, 2, 1.0)};
  EXPECT_THROW(mine_hard_negatives(one, one, euclid()), NoCandidates);
}

TEST(Schedule, PaperValues) {
  const auto c = TrainConfig::paper_2021();
  EXPECT_EQ(lr_at(0, c), 3.5e-5);
  EXPECT_EQ(lr_at(449, c), 3.5e-5);
  EXPECT_EQ(lr_at(450, c), 2.5e-5);
  EXPECT_EQ(lr_at(649, c), 2.5e-5);
  EXPECT_EQ(lr_at(651, c), 1.5e-5);
  EXPECT_EQ(c.epochs, 680u);
  EXPECT_EQ(c.optimizer, "adam");
  for (const auto& cfg : {c, TrainConfig::desk()})
    for (std::size_t e = 1; e < cfg.epochs; ++e) EXPECT_LE(lr_at(e, cfg), lr_at(e - 1, cfg));
}

TEST(Schedule, Validation) {
  auto c = TrainConfig::desk();
  c.batch = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig::desk();
  c.milestones = {{10, 1e-4}, {5, 1e-5}};
  EXPECT_THROW(c.validate(), ConfigError);
  LossConfig l;
  l.margin = -1;
  EXPECT_THROW(l.validate(), ConfigError);
}

TEST(Variant, ParseAndArities) {
  EXPECT_EQ(parse_variant("vt-lt"), ModelVariant::VT_LT);
  EXPECT_EQ(parse_variant("VS-LS"), ModelVariant::VS_LS);
  EXPECT_THROW(parse_variant("vt-ls"), ConfigError);
  EXPECT_EQ(visual_arity(ModelVariant::VT_LT), 3u);
  EXPECT_EQ(text_arity(ModelVariant::VT_LT), 3u);
  EXPECT_EQ(visual_arity(ModelVariant::VS_LT), 1u);
  EXPECT_EQ(text_arity(ModelVariant::VS_LT), 3u);
  EXPECT_EQ(visual_arity(ModelVariant::VS_LS), 1u);
  EXPECT_EQ(text_arity(ModelVariant::VS_LS), 1u);
  EXPECT_EQ(parse_mining("hardest"), Mining::Hardest);
}

TEST(RunConfigFile, RoundTripAndOverrides) {
  const auto f = ConfigFile::parse(
      "[model]\nvariant = \"vs-lt\"\nd_model = 32\nn_heads = 2\n[loss]\nbeta = 0.2\n"
      "[train]\npreset = \"paper-2021\"\nepochs = 12\nmining = \"hardest\"\n");
  const auto r = RunConfig::from_file(f);
  EXPECT_EQ(r.variant, ModelVariant::VS_LT);
  EXPECT_EQ(r.model.encoder.d_model, 32u);
  EXPECT_EQ(r.loss.beta, 0.2);
  EXPECT_EQ(r.train.epochs, 12u);
  EXPECT_EQ(r.train.lr, 3.5e-5);
  EXPECT_EQ(r.train.mining, Mining::Hardest);
  const auto back = RunConfig::from_file(r.to_file());
  EXPECT_EQ(back.to_file().to_text(), r.to_file().to_text());
  EXPECT_THROW(RunConfig::from_file(ConfigFile::parse("[bogus]\nx = 1\n")), ConfigError);
  EXPECT_THROW(RunConfig::from_file(ConfigFile::parse("[model]\nvariant = \"nope\"\n")), ConfigError);
}

TEST(Gradient, CompositeLossMatchesFiniteDifferences) {
  Fixture fx(4, visual::EncoderConfig::desk());
  visual::VisualModel model(fx.vcfg, 7);
  LossConfig loss = euclid();
  loss.margin = 50.0;  // keeps every hinge active
  const std::vector<std::size_t> tracks{0, 1, 2}, negs{1, 2, 0};
  nn::Gradients grads(model.store());
  batch_loss(model, fx.td, tracks, negs, loss, 11, false, &grads);
  Rng pick(8);
  int checked = 0;
  while (checked < 25) {
    const std::size_t p = uniform_index(pick, model.store().size());
    const std::size_t i = uniform_index(pick, model.store()[p].value.size());
    const double an = grads.per_param[p].data[i];
    double& x = model.store()[p].value.data[i];
    const double saved = x, h = 1e-5;
    x = saved + h;
    const double up = batch_loss(model, fx.td, tracks, negs, loss, 11, false, nullptr);
    x = saved - h;
    const double down = batch_loss(model, fx.td, tracks, negs, loss, 11, false, nullptr);
    x = saved;
    const double fd = (up - down) / (2 * h);
    if (std::abs(fd) < 1e-7 && std::abs(an) < 1e-7) continue;
    EXPECT_LT(std::abs(an - fd) / std::max(std::abs(fd), std::abs(an)), 1e-3) << model.store()[p].name;
    ++checked;
  }
}

TEST(Training, SmallStepDescends) {
  Fixture fx(4, {1, 2, 16, 24, 0.1});
  visual::VisualModel model(fx.vcfg, 9);
  const std::vector<std::size_t> tracks{0, 1, 2, 3}, negs{1, 2, 3, 0};
  nn::Gradients grads(model.store());
  const double before = batch_loss(model, fx.td, tracks, negs, euclid(), 3, false, &grads);
  for (std::size_t p = 0; p < model.store().size(); ++p)
    for (std::size_t i = 0; i < model.store()[p].value.size(); ++i)
      model.store()[p].value.data[i] -= 1e-4 * grads.per_param[p].data[i];
  EXPECT_LT(batch_loss(model, fx.td, tracks, negs, euclid(), 3, false, nullptr), before);
}

TEST(Training, LoopKeepsTextFrozenAndIsDeterministic) {
  Fixture fx(6, {1, 2, 16, 24, 0.1});
  const auto text_before = fx.td.text;
  auto cfg = TrainConfig::desk();
  cfg.epochs = 3;
  cfg.batch = 4;
  cfg.eval_every = 3;
  cfg.checkpoint_every = 2;
  cfg.seed = 10;
  std::vector<std::size_t> ckpts;
  TrainHooks hooks;
  hooks.checkpoint = [&](std::size_t e, const visual::VisualModel&) { ckpts.push_back(e); };
  visual::VisualModel a(fx.vcfg, 11), b(fx.vcfg, 11);
  const auto ra = train_visual(a, fx.td, euclid(), cfg, hooks);
  const auto rb = train_visual(b, fx.td, euclid(), cfg);
  EXPECT_TRUE(a == b);
  ASSERT_EQ(ra.history.size(), 3u);
  EXPECT_EQ(ra.history[0].loss, rb.history[0].loss);
  EXPECT_FALSE(ra.history[0].mrr);
  ASSERT_TRUE(ra.history[2].mrr);
  EXPECT_EQ(ckpts, (std::vector<std::size_t>{2}));
  EXPECT_EQ(fx.td.text, text_before);
  EXPECT_EQ(text_embeddings(fx.corpus.dataset, fx.tmodel, text::TextMode::LTO), text_before);

  TempDir dir("hist");
  write_history_csv(dir / "h.csv", ra.history);
  std::ifstream in(dir / "h.csv");
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  EXPECT_EQ(header, "epoch,loss,lr,mrr");
  EXPECT_EQ(first.back(), ',');
}

TEST(Training, ThreadCountDoesNotChangeResults) {
  Fixture fx(6, {1, 2, 16, 24, 0.1});
  auto cfg = TrainConfig::desk();
  cfg.epochs = 2;
  cfg.batch = 3;
  cfg.seed = 12;
  const int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  visual::VisualModel serial(fx.vcfg, 13);
  const auto rs = train_visual(serial, fx.td, euclid(), cfg);
  omp_set_num_threads(4);
  visual::VisualModel parallel(fx.vcfg, 13);
  const auto rp = train_visual(parallel, fx.td, euclid(), cfg);
  omp_set_num_threads(saved);
  EXPECT_TRUE(serial == parallel);
  EXPECT_EQ(rs.history.back().loss, rp.history.back().loss);
}
