#include "ayce/train/train.hpp"

#include <omp.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <exception>
#include <fstream>
#include <memory>
#include <numeric>

#include "ayce/core/errors.hpp"
#include "ayce/core/rng.hpp"
#include "ayce/nn/ops.hpp"
#include "ayce/nn/optim.hpp"
#include "ayce/retrieval/retrieval.hpp"

namespace ayce::train {

namespace {
std::string lower(std::string_view s) {
  std::string l(s);
  for (char& c : l) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return l;
}
}  // namespace

ModelVariant parse_variant(std::string_view s) {
  const std::string l = lower(s);
  if (l == "vs-lt") return ModelVariant::VS_LT;
  if (l == "vs-ls") return ModelVariant::VS_LS;
  if (l == "vt-lt") return ModelVariant::VT_LT;
  throw ConfigError("unknown variant '" + std::string(s) + "' (expected vs-lt|vs-ls|vt-lt)");
}

std::string_view variant_name(ModelVariant v) {
  switch (v) {
    case ModelVariant::VS_LT: return "VS-LT";
    case ModelVariant::VS_LS: return "VS-LS";
    default: return "VT-LT";
  }
}

visual::VisualMode visual_mode(ModelVariant v) {
  return v == ModelVariant::VT_LT ? visual::VisualMode::VTO : visual::VisualMode::VSO;
}

text::TextMode text_mode(ModelVariant v) { return v == ModelVariant::VS_LS ? text::TextMode::LSO : text::TextMode::LTO; }

std::size_t visual_arity(ModelVariant v) { return visual_mode(v) == visual::VisualMode::VTO ? 3 : 1; }
std::size_t text_arity(ModelVariant v) { return text_mode(v) == text::TextMode::LTO ? 3 : 1; }

void LossConfig::validate() const {
  if (!(margin >= 0)) throw ConfigError("margin must be non-negative");
  if (!(beta >= 0)) throw ConfigError("beta must be non-negative");
}

double phi(const Matrix& anchor, const Matrix& positive, const LossConfig& cfg) {
  return metrics::aggregate(metrics::distance_matrix(anchor, positive, cfg.metric), cfg.positive);
}

double neg_distance(const Matrix& anchor, const Matrix& negative, const LossConfig& cfg) {
  return metrics::aggregate(metrics::distance_matrix(anchor, negative, cfg.metric), cfg.negative);
}

double composite_loss(std::span<const Matrix> anchors, std::span<const Matrix> positives,
                      std::span<const Matrix> negatives, const LossConfig& cfg) {
  if (anchors.size() != positives.size() || anchors.size() != negatives.size() || anchors.empty())
    throw LengthMismatch("composite loss needs equal, non-empty anchor/positive/negative batches");
  std::vector<double> dap(anchors.size()), dan(anchors.size());
  double phi_sum = 0.0;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    dap[i] = phi(anchors[i], positives[i], cfg);
    dan[i] = neg_distance(anchors[i], negatives[i], cfg);
    phi_sum += cfg.beta * dap[i];
  }
  const double loss = text::triplet_margin_loss(dap, dan, cfg.margin) + phi_sum / static_cast<double>(anchors.size());
  if (!std::isfinite(loss)) throw NonFiniteLoss("composite loss is not finite");
  return loss;
}

Mining parse_mining(std::string_view s) {
  const std::string l = lower(s);
  if (l == "farthest") return Mining::Farthest;
  if (l == "hardest") return Mining::Hardest;
  throw ConfigError("unknown mining rule '" + std::string(s) + "' (expected farthest|hardest)");
}

std::string_view mining_name(Mining m) { return m == Mining::Farthest ? "farthest" : "hardest"; }

std::vector<std::size_t> mine_hard_negatives(std::span<const Matrix> anchors, std::span<const Matrix> texts,
                                             const LossConfig& cfg, Mining mining) {
  if (anchors.size() != texts.size()) throw LengthMismatch("one text embedding per anchor is required");
  if (anchors.size() < 2) throw NoCandidates("hard-negative mining needs at least two tracks in the batch");
  std::vector<std::size_t> out(anchors.size());
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    std::size_t best = i == 0 ? 1 : 0;
    double best_d = neg_distance(anchors[i], texts[best], cfg);
    for (std::size_t j = best + 1; j < texts.size(); ++j) {
      if (j == i) continue;
      const double d = neg_distance(anchors[i], texts[j], cfg);
      if (mining == Mining::Farthest ? d > best_d : d < best_d) {
        best = j;
        best_d = d;
      }
    }
    out[i] = best;
  }
  return out;
}

TrainConfig TrainConfig::paper_2021() { return TrainConfig{}; }

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.epochs = 200;
  c.batch = 8;
  c.lr = 1e-3;
  // Same fractions of training and the same lr ratios as the full schedule.
  c.milestones = {{132, c.lr * 2.5 / 3.5}, {191, c.lr * 1.5 / 3.5}};
  return c;
}

void TrainConfig::validate() const {
  if (batch < 2) throw ConfigError("batch size must be at least 2 for negative mining");
  if (!(lr > 0)) throw ConfigError("learning rate must be positive");
  for (std::size_t i = 0; i < milestones.size(); ++i) {
    if (!(milestones[i].second > 0)) throw ConfigError("milestone learning rates must be positive");
    if (i > 0 && milestones[i].first <= milestones[i - 1].first)
      throw ConfigError("lr milestones must be strictly increasing");
  }
}

double lr_at(std::size_t epoch, const TrainConfig& cfg) {
  double lr = cfg.lr;
  for (const auto& [at, value] : cfg.milestones)
    if (epoch >= at) lr = value;
  return lr;
}

std::vector<Matrix> text_embeddings(const data::Dataset& d, const text::TextModel& model, text::TextMode mode) {
  std::vector<Matrix> out(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) out[i] = text::encode(d.tracks[i].captions, model, mode);
  return out;
}

namespace {

struct ItemPass {
  std::unique_ptr<nn::Graph> graph;
  nn::Var anchor;
};

std::uint64_t item_seed(std::uint64_t batch_seed, std::size_t track) { return derive_seed(batch_seed, track); }

template <typename F>
void parallel_items(std::size_t n, F&& f) {
  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      f(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<ItemPass> forward_items(const visual::VisualModel& model, const TrainingData& td,
                                    std::span<const std::size_t> tracks, std::uint64_t batch_seed, bool training,
                                    std::vector<Rng>& rngs) {
  std::vector<ItemPass> passes(tracks.size());
  rngs.clear();
  for (std::size_t i = 0; i < tracks.size(); ++i) rngs.emplace_back(derive_seed(item_seed(batch_seed, tracks[i]), 1));
  parallel_items(tracks.size(), [&](std::size_t i) {
    const std::size_t t = tracks[i];
    const auto sample = visual::sample_track(model, td.dataset->tracks[t], t, *td.detections, *td.crops,
                                             item_seed(batch_seed, t));
    auto& p = passes[i];
    p.graph = std::make_unique<nn::Graph>(model.store());
    p.anchor = model.forward(*p.graph, sample.input, sample.crops, {training, &rngs[i]});
  });
  return passes;
}

nn::Var aggregate_var(nn::Graph& g, nn::Var d, metrics::Aggregation a) {
  return a == metrics::Aggregation::Min ? nn::min_all(g, d) : nn::mean_all(g, d);
}

double losses_and_grads(std::vector<ItemPass>& passes, const TrainingData& td, std::span<const std::size_t> tracks,
                        std::span<const std::size_t> negatives, const LossConfig& loss, nn::Gradients* grads,
                        const nn::ParameterStore& store) {
  const std::size_t bs = tracks.size();
  const double inv_bs = 1.0 / static_cast<double>(bs);
  std::vector<double> item_loss(bs);
  std::vector<nn::Gradients> item_grads(grads ? bs : 0);
  parallel_items(bs, [&](std::size_t i) {
    nn::Graph& g = *passes[i].graph;
    const nn::Var a = passes[i].anchor;
    const nn::Var pos = g.constant(td.text[tracks[i]]);
    const nn::Var neg = g.constant(td.text[negatives[i]]);
    const nn::Var dap = aggregate_var(g, nn::distance_matrix(g, a, pos, loss.metric), loss.positive);
    const nn::Var dan = aggregate_var(g, nn::distance_matrix(g, a, neg, loss.metric), loss.negative);
    const nn::Var hinge = nn::relu(g, nn::add_scalar(g, nn::sub(g, dap, dan), loss.margin));
    const nn::Var total = nn::scale(g, nn::add(g, hinge, nn::scale(g, dap, loss.beta)), inv_bs);
    item_loss[i] = g.value(total)(0, 0);
    if (!std::isfinite(item_loss[i])) throw NonFiniteLoss("non-finite loss for track " + std::to_string(tracks[i]));
    if (grads) {
      item_grads[i] = nn::Gradients(store);
      g.backward(total, item_grads[i]);
    }
  });
  double sum = 0.0;
  for (std::size_t i = 0; i < bs; ++i) {
    sum += item_loss[i];
    if (grads) grads->add(item_grads[i]);
  }
  return sum;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch, Rng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < n; s += batch)
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(s),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, s + batch)));
  // A lone trailing track has no negative to mine; fold it into the previous batch.
  if (out.size() > 1 && out.back().size() < 2) {
    out[out.size() - 2].push_back(out.back()[0]);
    out.pop_back();
  }
  return out;
}

}  // namespace

double batch_loss(const visual::VisualModel& model, const TrainingData& td, std::span<const std::size_t> tracks,
                  std::span<const std::size_t> negatives, const LossConfig& loss, std::uint64_t batch_seed,
                  bool training, nn::Gradients* grads) {
  if (negatives.size() != tracks.size()) throw LengthMismatch("one negative per anchor is required");
  std::vector<Rng> rngs;
  auto passes = forward_items(model, td, tracks, batch_seed, training, rngs);
  return losses_and_grads(passes, td, tracks, negatives, loss, grads, model.store());
}

double train_mrr(const visual::VisualModel& model, const TrainingData& td, const LossConfig& loss,
                 std::uint64_t eval_seed) {
  retrieval::EmbeddingStore store;
  const auto& d = *td.dataset;
  store.seed = eval_seed;
  store.ids.resize(d.size());
  store.visual.resize(d.size());
  store.text = td.text;
  parallel_items(d.size(), [&](std::size_t i) {
    const auto s = visual::sample_track(model, d.tracks[i], i, *td.detections, *td.crops, derive_seed(eval_seed, i));
    store.ids[i] = d.tracks[i].id;
    store.visual[i] = model.embed(s.input, s.crops);
  });
  return metrics::mrr(retrieval::rank(store, retrieval::Direction::TextToVisual, loss.metric));
}

TrainResult train_visual(visual::VisualModel& model, const TrainingData& td, const LossConfig& loss,
                         const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  loss.validate();
  const auto& d = *td.dataset;
  if (d.size() < 2) throw TooFewTracks("training needs at least 2 tracks");
  if (td.text.size() != d.size()) throw ShapeError("one text embedding per track is required");
  if (cfg.jobs > 0) omp_set_num_threads(static_cast<int>(cfg.jobs));

  const auto opt = nn::make_optimizer(cfg.optimizer, model.store());
  nn::Gradients grads(model.store());
  TrainResult res;
  std::vector<Rng> rngs;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg);
    Rng shuffle_rng(derive_seed(cfg.seed, 0x73687566, epoch));
    const auto batches = make_batches(d.size(), std::min(cfg.batch, d.size()), shuffle_rng);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& tracks = batches[b];
      const std::uint64_t batch_seed = derive_seed(cfg.seed, 0x62617463, epoch);
      auto passes = forward_items(model, td, tracks, batch_seed, true, rngs);
      std::vector<Matrix> anchors, texts;
      for (std::size_t i = 0; i < tracks.size(); ++i) {
        anchors.push_back(passes[i].graph->value(passes[i].anchor));
        texts.push_back(td.text[tracks[i]]);
      }
      const auto mined = mine_hard_negatives(anchors, texts, loss, cfg.mining);
      std::vector<std::size_t> negatives(tracks.size());
      for (std::size_t i = 0; i < tracks.size(); ++i) negatives[i] = tracks[mined[i]];
      grads.zero();
      const double l = losses_and_grads(passes, td, tracks, negatives, loss, &grads, model.store());
      if (!std::isfinite(l) || !std::isfinite(grads.squared_norm()))
        throw NonFiniteLoss("non-finite visual loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(b) + ", batch seed " + std::to_string(batch_seed));
      opt->step(model.store(), grads, lr);
      epoch_loss += l;
    }
    EpochRecord rec{epoch + 1, epoch_loss / static_cast<double>(batches.size()), lr, std::nullopt};
    if (cfg.eval_every && (epoch + 1) % cfg.eval_every == 0)
      rec.mrr = train_mrr(model, td, loss, derive_seed(cfg.seed, 0x6576616c));
    res.history.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (hooks.checkpoint && cfg.checkpoint_every && (epoch + 1) % cfg.checkpoint_every == 0)
      hooks.checkpoint(epoch + 1, model);
  }
  return res;
}

void write_history_csv(const std::filesystem::path& path, std::span<const EpochRecord> history) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IOError("cannot write " + path.string());
  out.precision(10);
  out << "epoch,loss,lr,mrr\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << r.loss << ',' << r.lr << ',';
    if (r.mrr) out << *r.mrr;
    out << '\n';
  }
}

namespace {

std::size_t to_count(const ConfigValue& v, const char* what) {
  const double x = v.number();
  if (x < 0 || x != std::floor(x)) throw ConfigError(std::string(what) + " must be a non-negative integer");
  return static_cast<std::size_t>(x);
}

ConfigValue num(double v) { return ConfigValue{v}; }
ConfigValue str(std::string s) { return ConfigValue{std::move(s)}; }

}  // namespace

RunConfig RunConfig::from_file(const ConfigFile& f) {
  RunConfig c;
  auto has = [&](const char* s, const char* k) { return f.has(s, k); };
  auto get = [&](const char* s, const char* k) -> const ConfigValue& { return f.get(s, k); };
  for (const auto& [section, keys] : f.sections()) {
    static const std::vector<std::string> known{"model", "loss", "train", "text"};
    if (std::find(known.begin(), known.end(), section) == known.end())
      throw ConfigError("unknown config section [" + section + "]");
  }

  if (has("model", "variant")) c.variant = parse_variant(get("model", "variant").string());
  c.model.mode = visual_mode(c.variant);
  auto& e = c.model.encoder;
  if (has("model", "preset")) {
    const auto& p = get("model", "preset").string();
    if (p == "paper-2021") {
      c.model = visual::VisualConfig::paper();
      c.model.mode = visual_mode(c.variant);
    } else if (p != "desk") {
      throw ConfigError("unknown model preset '" + p + "'");
    }
  }
  if (has("model", "d_model")) e.d_model = to_count(get("model", "d_model"), "d_model");
  if (has("model", "n_blocks")) e.n_blocks = to_count(get("model", "n_blocks"), "n_blocks");
  if (has("model", "n_heads")) e.n_heads = to_count(get("model", "n_heads"), "n_heads");
  if (has("model", "d_ff")) e.d_ff = to_count(get("model", "d_ff"), "d_ff");
  if (has("model", "dropout")) e.dropout = get("model", "dropout").number();
  if (has("model", "decoder_blocks")) c.model.decoder_blocks = to_count(get("model", "decoder_blocks"), "decoder_blocks");
  if (has("model", "crop_width")) c.model.crop_width = static_cast<int>(to_count(get("model", "crop_width"), "crop_width"));
  if (has("model", "crop_height"))
    c.model.crop_height = static_cast<int>(to_count(get("model", "crop_height"), "crop_height"));
  if (has("model", "conv_channels")) {
    c.model.conv_channels.clear();
    for (const auto& v : get("model", "conv_channels").array()) c.model.conv_channels.push_back(to_count(v, "conv_channels"));
  }
  if (has("model", "frame_cap")) c.model.frame_cap = to_count(get("model", "frame_cap"), "frame_cap");
  if (has("model", "cap_objects")) c.model.assembly.cap_objects = to_count(get("model", "cap_objects"), "cap_objects");
  if (has("model", "iou_threshold")) c.model.assembly.iou_threshold = get("model", "iou_threshold").number();
  c.model.validate();

  if (has("loss", "margin")) c.loss.margin = get("loss", "margin").number();
  if (has("loss", "beta")) c.loss.beta = get("loss", "beta").number();
  if (has("loss", "metric")) c.loss.metric = metrics::parse_metric(get("loss", "metric").string());
  if (has("loss", "positive")) c.loss.positive = metrics::parse_aggregation(get("loss", "positive").string());
  if (has("loss", "negative")) c.loss.negative = metrics::parse_aggregation(get("loss", "negative").string());
  c.loss.validate();

  if (has("train", "preset")) {
    const auto& p = get("train", "preset").string();
    if (p == "paper-2021")
      c.train = TrainConfig::paper_2021();
    else if (p == "desk")
      c.train = TrainConfig::desk();
    else
      throw ConfigError("unknown train preset '" + p + "'");
  }
  auto& t = c.train;
  if (has("train", "epochs")) t.epochs = to_count(get("train", "epochs"), "epochs");
  if (has("train", "batch")) t.batch = to_count(get("train", "batch"), "batch");
  if (has("train", "lr")) t.lr = get("train", "lr").number();
  if (has("train", "milestones")) {
    t.milestones.clear();
    for (const auto& m : get("train", "milestones").array()) {
      const auto& pair = m.array();
      if (pair.size() != 2) throw ConfigError("milestones are [epoch, lr] pairs");
      t.milestones.emplace_back(to_count(pair[0], "milestone epoch"), pair[1].number());
    }
  }
  if (has("train", "optimizer")) t.optimizer = get("train", "optimizer").string();
  if (has("train", "mining")) t.mining = parse_mining(get("train", "mining").string());
  if (has("train", "seed")) t.seed = to_count(get("train", "seed"), "seed");
  if (has("train", "checkpoint_every")) t.checkpoint_every = to_count(get("train", "checkpoint_every"), "checkpoint_every");
  if (has("train", "eval_every")) t.eval_every = to_count(get("train", "eval_every"), "eval_every");
  t.validate();
  nn::make_optimizer(t.optimizer, nn::ParameterStore{});
  return c;
}

ConfigFile RunConfig::to_file() const {
  ConfigFile f;
  const auto& e = model.encoder;
  f.set("model", "variant", str(lower(variant_name(variant))));
  f.set("model", "d_model", num(static_cast<double>(e.d_model)));
  f.set("model", "n_blocks", num(static_cast<double>(e.n_blocks)));
  f.set("model", "n_heads", num(static_cast<double>(e.n_heads)));
  f.set("model", "d_ff", num(static_cast<double>(e.d_ff)));
  f.set("model", "dropout", num(e.dropout));
  f.set("model", "decoder_blocks", num(static_cast<double>(model.decoder_blocks)));
  f.set("model", "crop_width", num(model.crop_width));
  f.set("model", "crop_height", num(model.crop_height));
  ConfigValue::Array ch;
  for (auto c : model.conv_channels) ch.push_back(num(static_cast<double>(c)));
  f.set("model", "conv_channels", ConfigValue{ch});
  f.set("model", "frame_cap", num(static_cast<double>(model.frame_cap)));
  f.set("model", "cap_objects", num(static_cast<double>(model.assembly.cap_objects)));
  f.set("model", "iou_threshold", num(model.assembly.iou_threshold));

  f.set("loss", "margin", num(loss.margin));
  f.set("loss", "beta", num(loss.beta));
  f.set("loss", "metric", str(std::string(metrics::metric_name(loss.metric))));
  f.set("loss", "positive", str(loss.positive == metrics::Aggregation::Min ? "min" : "mean"));
  f.set("loss", "negative", str(loss.negative == metrics::Aggregation::Min ? "min" : "mean"));

  f.set("train", "epochs", num(static_cast<double>(train.epochs)));
  f.set("train", "batch", num(static_cast<double>(train.batch)));
  f.set("train", "lr", num(train.lr));
  ConfigValue::Array ms;
  for (const auto& [at, lr] : train.milestones) ms.push_back(ConfigValue{ConfigValue::Array{num(static_cast<double>(at)), num(lr)}});
  f.set("train", "milestones", ConfigValue{ms});
  f.set("train", "optimizer", str(train.optimizer));
  f.set("train", "mining", str(std::string(mining_name(train.mining))));
  f.set("train", "seed", num(static_cast<double>(train.seed)));
  f.set("train", "checkpoint_every", num(static_cast<double>(train.checkpoint_every)));
  f.set("train", "eval_every", num(static_cast<double>(train.eval_every)));
  return f;
}

}  // namespace ayce::train
