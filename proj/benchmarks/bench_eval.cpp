#include <benchmark/benchmark.h>

#include <random>

#include "caseval/ego_flow.hpp"
#include "caseval/metrics.hpp"
#include "caseval/prototypes.hpp"
#include "caseval/synth.hpp"

namespace {

caseval::SynthScene frame_pair() {
  caseval::SceneSpec spec;
  spec.width = 1024;
  spec.height = 512;
  spec.min_objects = 20;
  spec.max_objects = 40;
  return caseval::generate_scene(99, spec);
}

void BM_ContingencyTable(benchmark::State& state) {
  const caseval::SynthScene scene = frame_pair();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        caseval::contingency_table(scene.panoptic_pred, scene.panoptic_gt));
  }
}
BENCHMARK(BM_ContingencyTable);

void BM_MatchClassAgnostic(benchmark::State& state) {
  const caseval::SynthScene scene = frame_pair();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        caseval::match_instances(scene.ca_pred, scene.ca_gt, false));
  }
}
BENCHMARK(BM_MatchClassAgnostic);

void BM_MatchPanoptic(benchmark::State& state) {
  const caseval::SynthScene scene = frame_pair();
  for (auto _ : state) {
    const caseval::MatchResult m =
        caseval::match_instances(scene.panoptic_pred, scene.panoptic_gt, true);
    benchmark::DoNotOptimize(caseval::compute_pq(m, scene.categories));
  }
}
BENCHMARK(BM_MatchPanoptic);

void BM_ComputeEgoFlow(benchmark::State& state) {
  const caseval::SynthScene scene = frame_pair();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        caseval::compute_ego_flow(scene.depth, scene.intrinsics, scene.pose));
  }
}
BENCHMARK(BM_ComputeEgoFlow);

void BM_FlowPngRoundTrip(benchmark::State& state) {
  const caseval::SynthScene scene = frame_pair();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        caseval::decode_flow_png(caseval::encode_flow_png(scene.flow)));
  }
}
BENCHMARK(BM_FlowPngRoundTrip);

void BM_AgglomerativeCluster(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(5);
  std::vector<caseval::Prototype> ps(n);
  std::vector<std::uint32_t> ids(n);
  for (int i = 0; i < n; ++i) {
    ps[i].vec = {double(rng() % 10000) / 10.0, double(rng() % 10000) / 10.0,
                 double(rng() % 10000) / 10.0, double(rng() % 10000) / 10.0};
    ids[i] = std::uint32_t(i + 1);
  }
  const Eigen::MatrixXd d = caseval::pairwise_distances(ps);
  for (auto _ : state) {
    benchmark::DoNotOptimize(caseval::agglomerative_cluster(d, ids));
  }
}
BENCHMARK(BM_AgglomerativeCluster)->Arg(8)->Arg(32)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
