#include <benchmark/benchmark.h>

#include "scgen/config.hpp"
#include "scgen/synthdata.hpp"
#include "scgen/train.hpp"

using namespace scgen;

namespace {

// One full D + G update of the families4 preset at batch 8.
void BM_TrainStepFamilies4(benchmark::State& state) {
  const TrainConfig cfg = preset_config("families4").train;
  const auto spec = SceneSpec::families4(1);
  Dataset data;
  data.spec = spec;
  for (std::int64_t i = 0; i < cfg.batch_size; ++i) {
    auto p = generate_scene(spec, i);
    data.layouts.push_back(one_hot(p.labels, spec.class_count()));
    data.images.push_back(p.image);
    data.labels.push_back(p.labels);
    data.indices.push_back(i);
  }
  const BatchStream stream(data, cfg.batch_size, cfg.seed);
  const auto [layout, image] = stream.batch_at(0);
  Trainer trainer(cfg);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.train_step(layout, image).g_total);
}
BENCHMARK(BM_TrainStepFamilies4)->Unit(benchmark::kMillisecond)->MinTime(2.0);

}  // namespace
