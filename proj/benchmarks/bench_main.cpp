// Micro-benchmarks for the training hot paths: dense matmul with reverse-mode
// gradients, the contrastive loss, soft-DTW supervision distances, alignment
// metrics, and one full optimizer step at the default desk configuration.

#include <benchmark/benchmark.h>

#include <filesystem>
#include <string>
#include <vector>

#include "rscl/alignment.hpp"
#include "rscl/autodiff.hpp"
#include "rscl/config.hpp"
#include "rscl/contrastive.hpp"
#include "rscl/dataset.hpp"
#include "rscl/rng.hpp"
#include "rscl/tensor.hpp"
#include "rscl/trainer.hpp"

namespace {

using namespace rscl;

void bm_matmul_forward_backward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  Var a = Var::leaf(rng.gaussian_tensor({n, n}), true);
  Var b = Var::leaf(rng.gaussian_tensor({n, n}), true);
  for (auto _ : state) {
    a.zero_grad();
    b.zero_grad();
    Var loss = sum(matmul(a, b));
    backward(loss);
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK(bm_matmul_forward_backward)->Arg(32)->Arg(64)->Arg(128);

void bm_rscl_loss(benchmark::State& state) {
  const auto b = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  Tensor q = rng.gaussian_tensor({b, 3});
  Tensor w = soft_weights(q, 1.0).w;
  Var z = Var::leaf(rng.gaussian_tensor({b, 16}), true);
  Var za = Var::leaf(rng.gaussian_tensor({b, 16}), true);
  for (auto _ : state) {
    z.zero_grad();
    za.zero_grad();
    Var loss = rscl_loss(z, za, w, 0.2);
    backward(loss);
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK(bm_rscl_loss)->Arg(32)->Arg(128);

void bm_soft_weights(benchmark::State& state) {
  const auto b = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  Tensor q = rng.gaussian_tensor({b, 3});
  for (auto _ : state) {
    benchmark::DoNotOptimize(soft_weights(q, 1.0).w);
  }
}
BENCHMARK(bm_soft_weights)->Arg(32)->Arg(256);

void bm_soft_dtw(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  Rng rng(4);
  Tensor a = rng.gaussian_tensor({len, 3});
  Tensor b = rng.gaussian_tensor({len, 3});
  for (auto _ : state) {
    benchmark::DoNotOptimize(soft_dtw(a, b, 10.0));
  }
}
BENCHMARK(bm_soft_dtw)->Arg(8)->Arg(32);

void bm_cknna(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(5);
  Tensor x = rng.gaussian_tensor({n, 32});
  Tensor y = rng.gaussian_tensor({n, 3});
  for (auto _ : state) {
    benchmark::DoNotOptimize(cknna(x, y, 10));
  }
}
BENCHMARK(bm_cknna)->Arg(100)->Arg(400);

// One full optimizer step (batch assembly, both losses, backward, Adam) at
// the default desk model size.
void bm_train_step(benchmark::State& state) {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "rscl_bench";
  fs::create_directories(dir);
  const std::string path = (dir / "bench.jsonl").string();
  Dataset ds = generate_dataset(20, 2, 1, 9);
  write_dataset(ds, path);

  TrainConfig cfg;
  cfg.dataset = path;
  cfg.metrics = (dir / "metrics.jsonl").string();
  cfg.checkpoint_dir = (dir / "ck").string();
  CheckpointData st = init_train_state(cfg, ds);
  for (auto _ : state) {
    benchmark::DoNotOptimize(train_step(st, cfg, ds).total);
  }
  std::error_code ec;
  fs::remove_all(dir, ec);
}
BENCHMARK(bm_train_step)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
