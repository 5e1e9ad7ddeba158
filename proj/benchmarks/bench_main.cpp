#include <benchmark/benchmark.h>

#include <vector>

#include "mlatmi/mi_mc.hpp"
#include "mlatmi/mine.hpp"
#include "mlatmi/mlat.hpp"
#include "mlatmi/parallel.hpp"
#include "mlatmi/peb.hpp"

using namespace mlatmi;

namespace {

measure::Scene square_scene() {
  const auto room = env::square_room(4.0);
  return measure::make_scene(room, 0.2,
                             env::make_placement(room, "corners", {{0.6, 0.6}, {3.4, 0.7}, {3.3, 3.4}, {0.7, 3.3}}));
}

void BM_McMi(benchmark::State& state) {
  configure_allocator();
  const auto scene = square_scene();
  const auto d = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(mi::mc_mi(scene, {}, d, 1).value);
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * d * scene.num_cells()));
}
BENCHMARK(BM_McMi)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_MineEpoch(benchmark::State& state) {
  configure_allocator();
  const auto scene = square_scene();
  const auto size = static_cast<mine::ModelSize>(state.range(0));
  const mine::SceneSource source(scene, {}, 1);
  auto train_state = mine::TrainState::fresh(mine::preset(size, 6), 1);
  mine::TrainConfig cfg;
  cfg.epochs = 1;
  cfg.window = 1;
  for (auto _ : state) benchmark::DoNotOptimize(mine::train(source, cfg, train_state).values[0]);
  state.SetLabel(mine::to_string(size));
}
BENCHMARK(BM_MineEpoch)->Arg(0)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

void BM_Localize(benchmark::State& state) {
  const auto scene = square_scene();
  const auto set = measure::sample_measurements(scene, {}, 1, 3);
  std::size_t x = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(mlat::localize(scene.placement.refs, set.row(x, 0), 0.1, 2.5).position);
    x = (x + 1) % scene.num_cells();
  }
}
BENCHMARK(BM_Localize);

void BM_PebMap(benchmark::State& state) {
  const auto scene = square_scene();
  for (auto _ : state) benchmark::DoNotOptimize(peb::peb_map(scene, 0.2).values.data());
}
BENCHMARK(BM_PebMap)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
