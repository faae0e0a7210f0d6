// Serial reference kernels against their OpenMP counterparts, plus one
// training batch with the item loop run serially or across threads.

#include <benchmark/benchmark.h>
#include <omp.h>

#include <vector>

#include "ayce/core/matrix.hpp"
#include "ayce/core/rng.hpp"
#include "ayce/data/crop_source.hpp"
#include "ayce/data/synthetic.hpp"
#include "ayce/kernels/kernels.hpp"
#include "ayce/train/train.hpp"

using namespace ayce;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = uniform(rng, -1, 1);
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vec(n * n, 1), b = random_vec(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::gemm_omp(kernels::Trans::No, kernels::Trans::Yes, n, n, n, a, b, c, false);
    else
      kernels::gemm_serial(kernels::Trans::No, kernels::Trans::Yes, n, n, n, a, b, c, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * 2 * n * n * n));
}

template <bool Parallel>
void BM_Pairwise(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t d = 256;
  const auto x = random_vec(n * d, 3), y = random_vec(n * d, 4);
  std::vector<double> out(n * n);
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::pairwise_omp(kernels::Distance::Cosine, x, n, y, n, d, out);
    else
      kernels::pairwise_serial(kernels::Distance::Cosine, x, n, y, n, d, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n));
}

// All-pairs ranking table for VT-LT stores of n tracks.
template <bool Parallel>
void BM_MinSetDistance(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t d = 256;
  const auto x = random_vec(3 * n * d, 5), y = random_vec(3 * n * d, 6);
  std::vector<double> out(n * n);
  for (auto _ : state) {
    if constexpr (Parallel)
      kernels::min_set_distance_omp(kernels::Distance::Euclidean, x, n, 3, y, n, 3, d, out);
    else
      kernels::min_set_distance_serial(kernels::Distance::Euclidean, x, n, 3, y, n, 3, d, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n));
}

// Forward and backward of one desk-scale batch of 8 tracks.
void BM_TrainBatch(benchmark::State& state) {
  const int threads = static_cast<int>(state.range(0));
  data::SyntheticSpec spec;
  spec.n_tracks = 8;
  const auto corpus = data::generate_synthetic(spec, 1);
  const data::SyntheticCropSource src(spec);
  visual::VisualConfig cfg;
  const visual::CropCache cache(src, corpus.dataset, cfg.crop_width, cfg.crop_height);
  const text::TextModel tm(text::build_vocabulary(corpus.dataset), {}, 1);
  train::TrainingData td{&corpus.dataset, &corpus.detections, &cache,
                         train::text_embeddings(corpus.dataset, tm, text::TextMode::LTO)};
  const visual::VisualModel model(cfg, 1);
  const std::vector<std::size_t> tracks{0, 1, 2, 3, 4, 5, 6, 7}, negs{1, 2, 3, 4, 5, 6, 7, 0};
  const int saved = omp_get_max_threads();
  omp_set_num_threads(threads);
  for (auto _ : state) {
    nn::Gradients grads(model.store());
    benchmark::DoNotOptimize(train::batch_loss(model, td, tracks, negs, {}, 1, true, &grads));
  }
  omp_set_num_threads(saved);
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Name("gemm/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Name("gemm/omp")->Arg(64)->Arg(256);
BENCHMARK(BM_Pairwise<false>)->Name("pairwise_cosine/serial")->Arg(128)->Arg(512);
BENCHMARK(BM_Pairwise<true>)->Name("pairwise_cosine/omp")->Arg(128)->Arg(512);
BENCHMARK(BM_MinSetDistance<false>)->Name("min_set_distance/serial")->Arg(128)->Arg(530);
BENCHMARK(BM_MinSetDistance<true>)->Name("min_set_distance/omp")->Arg(128)->Arg(530);
BENCHMARK(BM_TrainBatch)->Name("train_batch/threads")->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
