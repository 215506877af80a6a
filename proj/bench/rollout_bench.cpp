// Serial reference vs OpenMP rollout kernel over one batch.

#include <benchmark/benchmark.h>

#include <memory>
#include <vector>

#include "groundloop/grpo.hpp"
#include "groundloop/policy.hpp"
#include "groundloop/scene.hpp"

namespace gl = groundloop;

namespace {

struct Fixture {
  std::vector<gl::SceneSample> samples;
  std::vector<gl::PreparedSample> prepared;
  std::vector<const gl::PreparedSample*> batch;
  gl::PolicyParams params;
  gl::GrpoConfig config;

  explicit Fixture(int batch_size) {
    samples = gl::generate_samples(0, batch_size, gl::SceneConfig{}, 4);
    prepared = gl::prepare_samples(samples, 4);
    for (const auto& p : prepared) batch.push_back(&p);
    params = gl::init_params(gl::PolicyShape{}, 7, 0.01);
    config.batch_size = batch_size;
  }
};

Fixture& fixture(int batch_size) {
  static std::vector<std::unique_ptr<Fixture>> cache;
  for (auto& f : cache)
    if (static_cast<int>(f->batch.size()) == batch_size) return *f;
  cache.push_back(std::make_unique<Fixture>(batch_size));
  return *cache.back();
}

void BM_RolloutSerial(benchmark::State& state) {
  auto& f = fixture(static_cast<int>(state.range(0)));
  const gl::RewardSource source;
  const gl::Stream stream(11);
  for (auto _ : state) {
    auto r = gl::rollout_batch_serial(f.params, f.params, f.batch, f.config, source, stream);
    benchmark::DoNotOptimize(r);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_RolloutParallel(benchmark::State& state) {
  auto& f = fixture(static_cast<int>(state.range(0)));
  const gl::RewardSource source;
  const gl::Stream stream(11);
  const int workers = static_cast<int>(state.range(1));
  for (auto _ : state) {
    auto r = gl::rollout_batch_parallel(f.params, f.params, f.batch, f.config, source, stream, workers);
    benchmark::DoNotOptimize(r);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_RolloutSerial)->Arg(8)->Arg(64)->UseRealTime();
BENCHMARK(BM_RolloutParallel)->ArgsProduct({{8, 64}, {1, 2, 4, 8}})->UseRealTime();

BENCHMARK_MAIN();
