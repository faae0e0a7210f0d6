#include "ayce/text/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "ayce/core/binary_io.hpp"
#include "ayce/core/errors.hpp"
#include "ayce/nn/ops.hpp"
#include "ayce/nn/optim.hpp"

namespace ayce::text {

namespace {
constexpr std::uint32_t kCheckpointVersion = 1;
}

TextMode parse_text_mode(std::string_view s) {
  std::string l(s);
  for (char& c : l) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (l == "lto") return TextMode::LTO;
  if (l == "lso") return TextMode::LSO;
  throw ConfigError("unknown text mode '" + std::string(s) + "' (expected lto or lso)");
}

std::string_view text_mode_name(TextMode m) { return m == TextMode::LTO ? "LTO" : "LSO"; }

std::vector<std::string> tokenize(std::string_view sentence) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : sentence) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || ch == '-' || ch == '\'') {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  std::vector<std::string> tokens = words;
  for (std::size_t i = 1; i < words.size(); ++i) tokens.push_back(words[i - 1] + "|" + words[i]);
  return tokens;
}

std::vector<std::string> build_vocabulary(const data::Dataset& d) {
  std::set<std::string> all;
  for (const auto& t : d.tracks)
    for (const auto& c : t.captions)
      for (auto& tok : tokenize(c)) all.insert(std::move(tok));
  std::vector<std::string> vocab{"<unk>"};
  vocab.insert(vocab.end(), all.begin(), all.end());
  return vocab;
}

ToyEncoder::ToyEncoder(nn::ParameterStore& store, std::vector<std::string> vocabulary, std::size_t embed_dim,
                       std::size_t width, Rng& rng)
    : vocab_(std::move(vocabulary)), embed_dim_(embed_dim) {
  if (vocab_.empty() || vocab_[0] != "<unk>") vocab_.insert(vocab_.begin(), "<unk>");
  std::sort(vocab_.begin() + 1, vocab_.end());
  Matrix table(vocab_.size(), embed_dim);
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& v : table.data) v = n(rng);
  table_ = store.add("text.embed", std::move(table));
  hidden_ = nn::Linear(store, "text.hidden", embed_dim, width, rng);
}

std::vector<std::size_t> ToyEncoder::token_ids(std::string_view sentence) const {
  std::vector<std::size_t> ids;
  for (const auto& tok : tokenize(sentence)) {
    auto it = std::lower_bound(vocab_.begin() + 1, vocab_.end(), tok);
    ids.push_back(it != vocab_.end() && *it == tok ? static_cast<std::size_t>(it - vocab_.begin()) : 0);
  }
  return ids;
}

nn::Var ToyEncoder::encode(nn::Graph& g, std::string_view sentence, const nn::ForwardContext&) const {
  const auto ids = token_ids(sentence);
  if (ids.empty()) throw EmptyCaption("caption has no tokens");
  return nn::tanh(g, hidden_(g, nn::embed_mean(g, g.param(table_), ids)));
}

ProjectionHead::ProjectionHead(nn::ParameterStore& store, std::size_t width, Rng& rng)
    : linear_(store, "text.head", width, kEmbeddingWidth, rng) {}

TextModel::TextModel(std::vector<std::string> vocabulary, const TextModelConfig& cfg, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x747874));
  encoder = ToyEncoder(store, std::move(vocabulary), cfg.embed_dim, cfg.width, rng);
  head = ProjectionHead(store, cfg.width, rng);
}

nn::Var TextModel::embed(nn::Graph& g, std::string_view sentence, const nn::ForwardContext& ctx) const {
  return head(g, encoder.encode(g, sentence, ctx));
}

Matrix TextModel::embed(std::string_view sentence) const {
  nn::Graph g(store);
  return g.value(embed(g, sentence, {}));
}

void TextModel::save(const std::filesystem::path& path) const {
  BinaryWriter w;
  w.magic("AYCE-TXT");
  w.u32(kCheckpointVersion);
  w.str("toy");
  w.str(optimizer);
  w.u64(encoder.embed_dim());
  w.u64(encoder.width());
  w.u64(encoder.vocabulary().size());
  for (const auto& tok : encoder.vocabulary()) w.str(tok);
  store.write(w);
  w.commit(path);
}

TextModel TextModel::load(const std::filesystem::path& path) {
  BinaryReader r(path);
  try {
    r.expect_magic("AYCE-TXT");
    if (const auto v = r.u32(); v != kCheckpointVersion)
      throw CheckpointIOError("unsupported text checkpoint version " + std::to_string(v));
    if (r.str() != "toy") throw CheckpointIOError("unknown sentence encoder kind");
    const std::string optimizer = r.str();
    TextModelConfig cfg;
    cfg.embed_dim = r.u64();
    cfg.width = r.u64();
    std::vector<std::string> vocab(r.u64());
    for (auto& tok : vocab) tok = r.str();
    TextModel m(std::move(vocab), cfg, 0);
    m.optimizer = optimizer;
    m.store.read_into(r);
    if (!r.at_end()) throw CheckpointIOError("trailing bytes in " + path.string());
    return m;
  } catch (const CheckpointIOError&) {
    throw;
  } catch (const Error& e) {
    throw CheckpointIOError(path.string() + ": " + e.what());
  }
}

std::string lso_concat(const std::array<std::string, 3>& c) { return c[0] + " " + c[1] + " " + c[2]; }

namespace {
void check_captions(const std::array<std::string, 3>& c) {
  for (const auto& s : c)
    if (s.empty()) throw EmptyCaption("empty caption");
}
}  // namespace

Matrix encode_lto(const std::array<std::string, 3>& captions, const TextModel& model) {
  check_captions(captions);
  Matrix out(3, kEmbeddingWidth);
  for (std::size_t j = 0; j < 3; ++j) {
    const Matrix row = model.embed(captions[j]);
    std::copy(row.data.begin(), row.data.end(), out.row(j).begin());
  }
  return out;
}

Matrix encode_lso(const std::array<std::string, 3>& captions, const TextModel& model) {
  check_captions(captions);
  return model.embed(lso_concat(captions));
}

Matrix encode(const std::array<std::string, 3>& captions, const TextModel& model, TextMode mode) {
  return mode == TextMode::LTO ? encode_lto(captions, model) : encode_lso(captions, model);
}

std::vector<TextTriplet> sample_text_triplets(const data::Dataset& d, TextMode mode, std::size_t batch, Rng& rng) {
  const std::size_t n = d.size();
  if (n < 2) throw TooFewTracks("text triplets need at least 2 tracks, found " + std::to_string(n));
  std::vector<TextTriplet> out;
  out.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t i = uniform_index(rng, n);
    std::size_t k = uniform_index(rng, n - 1);
    if (k >= i) ++k;
    const auto& ti = d.tracks[i];
    const auto& tk = d.tracks[k];
    TextTriplet t;
    if (mode == TextMode::LTO) {
      const int a = static_cast<int>(uniform_index(rng, 3));
      int p = static_cast<int>(uniform_index(rng, 2));
      if (p >= a) ++p;
      const int ng = static_cast<int>(uniform_index(rng, 3));
      t.anchor = ti.captions[a];
      t.positive = ti.captions[p];
      t.negative = tk.captions[ng];
      t.provenance = {{{ti.id, a}, {ti.id, p}, {tk.id, ng}}};
    } else {
      static const std::array<std::array<int, 3>, 6> perms{
          {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
      const std::size_t pa = uniform_index(rng, 6);
      std::size_t pp = uniform_index(rng, 5);
      if (pp >= pa) ++pp;
      const std::size_t pn = uniform_index(rng, 6);
      auto concat = [](const data::TrackRecord& tr, const std::array<int, 3>& p) {
        return lso_concat({tr.captions[p[0]], tr.captions[p[1]], tr.captions[p[2]]});
      };
      t.anchor = concat(ti, perms[pa]);
      t.positive = concat(ti, perms[pp]);
      t.negative = concat(tk, perms[pn]);
      t.provenance = {{{ti.id, -1}, {ti.id, -1}, {tk.id, -1}}};
    }
    out.push_back(std::move(t));
  }
  return out;
}

double triplet_margin_loss(std::span<const double> dap, std::span<const double> dan, double margin) {
  if (dap.size() != dan.size() || dap.empty())
    throw LengthMismatch("triplet loss needs equal, non-empty batches (" + std::to_string(dap.size()) + " vs " +
                         std::to_string(dan.size()) + ")");
  double sum = 0.0;
  for (std::size_t i = 0; i < dap.size(); ++i) sum += std::max(0.0, dap[i] - dan[i] + margin);
  return sum / static_cast<double>(dap.size());
}

std::vector<Matrix> caption_embeddings(const data::Dataset& d, const TextModel& model) {
  std::vector<Matrix> out(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) out[i] = encode_lto(d.tracks[i].captions, model);
  return out;
}

double triplet_batch_loss(const TextModel& model, std::span<const TextTriplet> batch, metrics::Metric metric,
                          double margin, nn::Gradients* grads) {
  const double inv_bs = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& t : batch) {
    nn::Graph g(model.store);
    const nn::ForwardContext ctx{grads != nullptr, nullptr};
    const nn::Var a = model.embed(g, t.anchor, ctx);
    const nn::Var p = model.embed(g, t.positive, ctx);
    const nn::Var n = model.embed(g, t.negative, ctx);
    const nn::Var hinge =
        nn::relu(g, nn::add_scalar(g, nn::sub(g, nn::distance_matrix(g, a, p, metric), nn::distance_matrix(g, a, n, metric)),
                                   margin));
    const nn::Var loss = nn::scale(g, hinge, inv_bs);
    total += g.value(loss)(0, 0);
    if (grads) g.backward(loss, *grads);
  }
  return total;
}

TextFinetuneResult finetune_text(const data::Dataset& d, TextModel& model, const TextFinetuneConfig& cfg,
                                 const std::function<void(std::size_t, const metrics::IntraInterReport&, double)>&
                                     on_epoch) {
  if (d.size() < 2) throw TooFewTracks("text fine-tuning needs at least 2 tracks");
  if (cfg.batch < 1) throw ConfigError("text batch size must be positive");
  TextFinetuneResult res;
  auto report = [&] {
    const auto emb = caption_embeddings(d, model);
    return metrics::intra_inter_report(emb, cfg.metric);
  };
  res.history.push_back(report());
  if (on_epoch) on_epoch(0, res.history.back(), std::nan(""));
  const auto opt = nn::make_optimizer(model.optimizer, model.store);
  const std::size_t steps =
      cfg.steps_per_epoch ? cfg.steps_per_epoch : std::max<std::size_t>(1, (3 * d.size() + cfg.batch - 1) / cfg.batch);
  nn::Gradients grads(model.store);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (std::size_t step = 0; step < steps; ++step) {
      const std::uint64_t batch_seed = derive_seed(cfg.seed, 0x7478, epoch, step);
      Rng rng(batch_seed);
      const auto batch = sample_text_triplets(d, cfg.mode, cfg.batch, rng);
      grads.zero();
      const double loss = triplet_batch_loss(model, batch, cfg.metric, cfg.margin, &grads);
      if (!std::isfinite(loss) || !std::isfinite(grads.squared_norm()))
        throw NonFiniteLoss("non-finite text loss at epoch " + std::to_string(epoch) + ", batch seed " +
                            std::to_string(batch_seed));
      opt->step(model.store, grads, cfg.lr);
      epoch_loss += loss;
    }
    res.epoch_loss.push_back(epoch_loss / static_cast<double>(steps));
    res.history.push_back(report());
    if (on_epoch) on_epoch(epoch + 1, res.history.back(), res.epoch_loss.back());
  }
  return res;
}

}  // namespace ayce::text
