#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "ayce/core/config_file.hpp"
#include "ayce/core/errors.hpp"
#include "ayce/data/crop_source.hpp"
#include "ayce/data/dataset.hpp"
#include "ayce/data/stats.hpp"
#include "ayce/data/synthetic.hpp"
#include "ayce/metrics/metrics.hpp"
#include "ayce/retrieval/retrieval.hpp"
#include "ayce/text/text.hpp"
#include "ayce/train/train.hpp"
#include "ayce/visual/visual.hpp"

namespace fs = std::filesystem;
using namespace ayce;

namespace {

struct Globals {
  std::string workdir = ".";
  std::uint64_t seed = 0;
  int jobs = 0;
};

fs::path resolve(const Globals& g, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : fs::path(g.workdir) / path;
}

void print_header(const std::string& cmd, const Globals& g) {
  std::cout << "# ayce " << cmd << " seed=" << g.seed << " jobs=" << (g.jobs ? g.jobs : omp_get_max_threads())
            << " workdir=" << g.workdir << "\n";
}

void print_config(const ConfigFile& f) {
  std::istringstream in(f.to_text());
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) std::cout << "# " << line << "\n";
}

struct Corpus {
  data::Dataset dataset;
  data::DetectionTable detections;
  std::unique_ptr<data::CropSource> crops;
};

Corpus load_corpus(const fs::path& dir) {
  Corpus c;
  c.dataset = data::load_dataset(dir / "dataset.json");
  if (fs::exists(dir / "detections.jsonl")) c.detections = data::load_detections(dir / "detections.jsonl");
  if (fs::exists(dir / "crops"))
    c.crops = std::make_unique<data::DirectoryCropSource>(dir / "crops");
  else if (fs::exists(dir / "spec.json"))
    c.crops = std::make_unique<data::SyntheticCropSource>(data::SyntheticSpec::load(dir / "spec.json"));
  else
    c.crops = std::make_unique<data::DirectoryCropSource>(dir);
  return c;
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Usage: return 1;
    case ErrorKind::Numeric: return 3;
    default: return 2;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-modal vehicle track retrieval: data generation, training, embedding and evaluation."};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  if (const char* env = std::getenv("AYCE_SEED")) g.seed = std::strtoull(env, nullptr, 10);
  app.add_option("--workdir", g.workdir, "Base directory for relative paths")->capture_default_str();
  app.add_option("--seed", g.seed, "Random seed (default: $AYCE_SEED or 0)")->capture_default_str();
  app.add_option("--jobs", g.jobs, "OpenMP threads (0: runtime default)")->check(CLI::NonNegativeNumber);

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a synthetic corpus");
  std::string gen_spec, gen_out = "data";
  std::optional<std::size_t> gen_tracks;
  bool gen_paper = false, gen_no_crops = false;
  gen->add_option("--spec", gen_spec, "Synthetic spec JSON (default: built-in desk spec)");
  gen->add_flag("--paper-calibrated", gen_paper, "Use the caption-noise calibration matching the reference corpus");
  gen->add_option("--tracks", gen_tracks, "Override the number of tracks");
  gen->add_option("--out", gen_out, "Output directory")->capture_default_str();
  gen->add_flag("--no-crops", gen_no_crops, "Skip writing crop images");

  // stats
  auto* stats = app.add_subcommand("stats", "Print corpus statistics");
  std::string stats_data = "data", stats_attr;
  stats->add_option("--data", stats_data, "Corpus directory or dataset.json")->capture_default_str();
  stats->add_option("--attributes", stats_attr, "Per-caption attribute file for real corpora");

  // finetune-text
  auto* ft = app.add_subcommand("finetune-text", "Fine-tune the sentence encoder with caption triplets");
  std::string ft_data = "data", ft_out = "text.ckpt", ft_metric = "cosine_metric", ft_mode = "lto", ft_history;
  text::TextFinetuneConfig ft_cfg;
  text::TextModelConfig ft_model;
  ft->add_option("--data", ft_data, "Corpus directory")->capture_default_str();
  ft->add_option("--out", ft_out, "Text checkpoint path")->capture_default_str();
  ft->add_option("--metric", ft_metric, "cosine_metric | euclidean")->capture_default_str();
  ft->add_option("--mode", ft_mode, "Triplet sampling mode: lto | lso")->capture_default_str();
  ft->add_option("--epochs", ft_cfg.epochs, "Epochs")->capture_default_str();
  ft->add_option("--batch", ft_cfg.batch, "Triplets per step")->capture_default_str();
  ft->add_option("--lr", ft_cfg.lr, "SGD learning rate")->capture_default_str();
  ft->add_option("--margin", ft_cfg.margin, "Triplet margin")->capture_default_str();
  ft->add_option("--embed-dim", ft_model.embed_dim, "Token embedding width")->capture_default_str();
  ft->add_option("--width", ft_model.width, "Encoder output width")->capture_default_str();
  ft->add_option("--history", ft_history, "CSV of per-epoch intra/inter statistics");

  // train
  auto* tr = app.add_subcommand("train", "Train the visual branch against frozen text embeddings");
  std::string tr_config, tr_variant, tr_data = "data", tr_text = "text.ckpt", tr_out = "run";
  std::optional<std::size_t> tr_epochs;
  tr->add_option("--config", tr_config, "Config file with [model] [loss] [train] sections");
  tr->add_option("--variant", tr_variant, "vs-lt | vs-ls | vt-lt (default vt-lt)");
  tr->add_option("--data", tr_data, "Corpus directory")->capture_default_str();
  tr->add_option("--text", tr_text, "Text checkpoint")->capture_default_str();
  tr->add_option("--out", tr_out, "Run directory (model.ckpt, history.csv)")->capture_default_str();
  tr->add_option("--epochs", tr_epochs, "Override the number of epochs");

  // embed
  auto* em = app.add_subcommand("embed", "Embed every track and caption triplet");
  std::string em_model = "run/model.ckpt", em_text = "text.ckpt", em_data = "data", em_out = "embeds";
  em->add_option("--model", em_model, "Visual checkpoint")->capture_default_str();
  em->add_option("--text", em_text, "Text checkpoint")->capture_default_str();
  em->add_option("--data", em_data, "Corpus directory")->capture_default_str();
  em->add_option("--out", em_out, "Embedding directory")->capture_default_str();

  // rank / eval shared options
  std::string rk_embeds = "embeds", rk_direction = "text_to_visual", rk_metric = "euclidean", rk_order = "asc";
  auto add_rank_opts = [&](CLI::App* sub) {
    sub->add_option("--embeds", rk_embeds, "Embedding directory")->capture_default_str();
    sub->add_option("--direction", rk_direction, "text_to_visual | visual_to_text")->capture_default_str();
    sub->add_option("--metric", rk_metric, "euclidean | cosine_metric")->capture_default_str();
    sub->add_option("--rank-order", rk_order, "asc | desc")->capture_default_str();
  };
  auto* rk = app.add_subcommand("rank", "Write a submission file");
  std::string rk_out = "submission.json";
  add_rank_opts(rk);
  rk->add_option("--out", rk_out, "Submission path")->capture_default_str();

  auto* ev = app.add_subcommand("eval", "Compute MRR and top-10 rate");
  std::string ev_out;
  add_rank_opts(ev);
  ev->add_option("--out", ev_out, "report.json path (default: <embeds>/report.json)");

  // pca
  auto* pc = app.add_subcommand("pca", "Export a 2-D PCA projection of stored embeddings");
  std::string pc_embeds = "embeds", pc_side = "text", pc_out = "pca.csv";
  pc->add_option("--embeds", pc_embeds, "Embedding directory")->capture_default_str();
  pc->add_option("--side", pc_side, "text | visual")->check(CLI::IsMember({"text", "visual"}))->capture_default_str();
  pc->add_option("--out", pc_out, "CSV path")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 1;
  }

  try {
    if (g.jobs > 0) omp_set_num_threads(g.jobs);

    if (*gen) {
      print_header("gen", g);
      data::SyntheticSpec spec = gen_paper ? data::SyntheticSpec::paper_calibrated() : data::SyntheticSpec{};
      if (!gen_spec.empty()) spec = data::SyntheticSpec::load(resolve(g, gen_spec));
      if (gen_tracks) spec.n_tracks = *gen_tracks;
      spec.validate();
      std::cout << "# spec " << spec.to_json() << "\n";
      const auto corpus = data::generate_synthetic(spec, g.seed);
      const auto out = resolve(g, gen_out);
      data::write_corpus(spec, corpus, out, !gen_no_crops);
      std::cout << "wrote " << corpus.dataset.size() << " tracks to " << out.string() << "\n";
      return 0;
    }

    if (*stats) {
      print_header("stats", g);
      fs::path p = resolve(g, stats_data);
      if (fs::is_directory(p)) p /= "dataset.json";
      auto d = data::load_dataset(p);
      if (!stats_attr.empty()) data::apply_attribute_file(d, resolve(g, stats_attr));
      std::cout << data::stats_to_json(data::compute_stats(d)) << "\n";
      return 0;
    }

    if (*ft) {
      ft_cfg.metric = metrics::parse_metric(ft_metric);
      ft_cfg.mode = text::parse_text_mode(ft_mode);
      ft_cfg.seed = g.seed;
      print_header("finetune-text", g);
      std::cout << "# metric=" << metrics::metric_name(ft_cfg.metric) << " mode=" << text::text_mode_name(ft_cfg.mode)
                << " epochs=" << ft_cfg.epochs << " batch=" << ft_cfg.batch << " lr=" << ft_cfg.lr
                << " margin=" << ft_cfg.margin << " embed_dim=" << ft_model.embed_dim << " width=" << ft_model.width
                << " optimizer=sgd\n";
      const auto d = data::load_dataset(resolve(g, ft_data) / "dataset.json");
      text::TextModel model(text::build_vocabulary(d), ft_model, g.seed);
      std::ofstream hist;
      if (!ft_history.empty()) {
        hist.open(resolve(g, ft_history));
        if (!hist) throw IOError("cannot write " + ft_history);
        hist << "epoch,loss,intra_mean,intra_var,inter_mean,inter_var\n";
      }
      text::finetune_text(d, model, ft_cfg, [&](std::size_t epoch, const metrics::IntraInterReport& r, double loss) {
        if (std::isnan(loss))
          std::printf("epoch %3zu loss=-", epoch);
        else
          std::printf("epoch %3zu loss=%.5f", epoch, loss);
        std::printf(" intra=%.4f (var %.4f) inter=%.4f (var %.4f)\n", r.intra_mean, r.intra_var, r.inter_mean,
                    r.inter_var);
        if (hist.is_open())
          hist << epoch << ',' << loss << ',' << r.intra_mean << ',' << r.intra_var << ',' << r.inter_mean << ','
               << r.inter_var << '\n';
      });
      model.save(resolve(g, ft_out));
      std::cout << "wrote " << resolve(g, ft_out).string() << "\n";
      return 0;
    }

    if (*tr) {
      ConfigFile file;
      if (!tr_config.empty()) file = ConfigFile::load(resolve(g, tr_config));
      if (!tr_variant.empty()) file.set("model", "variant", ConfigValue{tr_variant});
      if (tr_epochs) file.set("train", "epochs", ConfigValue{static_cast<double>(*tr_epochs)});
      if (!file.has("train", "seed")) file.set("train", "seed", ConfigValue{static_cast<double>(g.seed)});
      auto run = train::RunConfig::from_file(file);
      run.train.jobs = static_cast<std::size_t>(g.jobs);
      const auto corpus = load_corpus(resolve(g, tr_data));
      run.model.assembly.image_width = corpus.dataset.image_width;
      run.model.assembly.image_height = corpus.dataset.image_height;
      print_header("train", g);
      const ConfigFile effective = run.to_file();
      print_config(effective);

      const auto tmodel = text::TextModel::load(resolve(g, tr_text));
      const visual::CropCache cache(*corpus.crops, corpus.dataset, run.model.crop_width, run.model.crop_height);
      train::TrainingData td{&corpus.dataset, &corpus.detections, &cache,
                             train::text_embeddings(corpus.dataset, tmodel, train::text_mode(run.variant))};
      visual::VisualModel model(run.model, run.train.seed);
      const fs::path out = resolve(g, tr_out);
      fs::create_directories(out);
      std::ofstream(out / "config.toml") << effective.to_text();
      train::TrainHooks hooks;
      const auto t0 = std::chrono::steady_clock::now();
      hooks.on_epoch = [&](const train::EpochRecord& r) {
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("epoch %4zu loss=%.5f lr=%.3g", r.epoch, r.loss, r.lr);
        if (r.mrr) std::printf(" mrr=%.4f", *r.mrr);
        std::printf(" (%.0fs)\n", secs);
        std::fflush(stdout);
      };
      hooks.checkpoint = [&](std::size_t epoch, const visual::VisualModel& m) {
        m.save(out / ("model-" + std::to_string(epoch) + ".ckpt"), effective.to_text());
      };
      const auto res = train::train_visual(model, td, run.loss, run.train, hooks);
      model.save(out / "model.ckpt", effective.to_text());
      train::write_history_csv(out / "history.csv", res.history);
      std::cout << "wrote " << (out / "model.ckpt").string() << "\n";
      return 0;
    }

    if (*em) {
      print_header("embed", g);
      const auto corpus = load_corpus(resolve(g, em_data));
      std::string cfg_text;
      const auto vmodel = visual::VisualModel::load(resolve(g, em_model), &cfg_text);
      const auto tmodel = text::TextModel::load(resolve(g, em_text));
      train::ModelVariant variant = train::ModelVariant::VT_LT;
      if (!cfg_text.empty()) {
        const auto f = ConfigFile::parse(cfg_text);
        print_config(f);
        if (f.has("model", "variant")) variant = train::parse_variant(f.get("model", "variant").string());
      }
      const visual::CropCache cache(*corpus.crops, corpus.dataset, vmodel.config().crop_width,
                                    vmodel.config().crop_height);
      const auto store = retrieval::embed_all(vmodel, tmodel, train::text_mode(variant), corpus.dataset,
                                              corpus.detections, cache, g.seed);
      const fs::path out = resolve(g, em_out) / "store.json";
      store.save(out);
      std::cout << "wrote " << store.size() << " tracks (" << store.variant << ") to " << out.string() << "\n";
      return 0;
    }

    if (*rk || *ev) {
      const auto direction = retrieval::parse_direction(rk_direction);
      const auto metric = metrics::parse_metric(rk_metric);
      const auto order = retrieval::parse_rank_order(rk_order);
      print_header(*rk ? "rank" : "eval", g);
      std::cout << "# direction=" << rk_direction << " metric=" << metrics::metric_name(metric)
                << " rank_order=" << rk_order << "\n";
      const fs::path dir = resolve(g, rk_embeds);
      const auto store = retrieval::EmbeddingStore::load(dir / "store.json");
      if (*rk) {
        retrieval::write_submission(retrieval::rank(store, direction, metric, order), resolve(g, rk_out));
        std::cout << "wrote " << resolve(g, rk_out).string() << "\n";
        return 0;
      }
      const auto report = retrieval::evaluate(store, direction, metric, order);
      const fs::path out = ev_out.empty() ? dir / "report.json" : resolve(g, ev_out);
      std::ofstream(out) << retrieval::report_json(report) << "\n";
      std::printf("mrr=%.4f top10=%.4f\n", report.mrr, report.top10);
      return 0;
    }

    if (*pc) {
      print_header("pca", g);
      const auto store = retrieval::EmbeddingStore::load(resolve(g, pc_embeds) / "store.json");
      const auto& side = pc_side == "text" ? store.text : store.visual;
      std::vector<std::string> ids;
      Matrix points(0, side[0].cols);
      for (std::size_t i = 0; i < store.size(); ++i)
        for (std::size_t r = 0; r < side[i].rows; ++r) {
          ids.push_back(side[i].rows == 1 ? store.ids[i] : store.ids[i] + "/" + std::to_string(r));
          points.data.insert(points.data.end(), side[i].row(r).begin(), side[i].row(r).end());
          ++points.rows;
        }
      const auto pca = metrics::pca_2d(points);
      metrics::write_pca_csv(resolve(g, pc_out), ids, pca);
      std::printf("explained variance: pc1=%.6g pc2=%.6g%s\n", pca.explained_variance[0], pca.explained_variance[1],
                  pca.degenerate ? " (degenerate)" : "");
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
