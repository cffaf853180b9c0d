#include "stereops/diffmath/ops.hpp"
#include "stereops/geometry.hpp"
#include "stereops/heightmap.hpp"
#include "stereops/kdtree.hpp"
#include "stereops/scenegen.hpp"
#include "stereops/shading.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace stereops;

namespace {

Matrix random_xy(Eigen::Index n, double half_width, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-half_width, half_width);
  Matrix xy(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) xy.row(i) << u(rng), u(rng);
  return xy;
}

HeightmapNetwork make_network(int width) {
  SirenConfig sc;
  sc.hidden_layers = 3;
  sc.hidden_width = width;
  CoordinateFrame frame;
  frame.origin = Vec3(0, 0, 170);
  return HeightmapNetwork(sc, 1, frame);
}

// Surface query with normals plus a full backward pass.
void BM_SirenSurfaceBackward(benchmark::State& state) {
  HeightmapNetwork net = make_network(static_cast<int>(state.range(1)));
  const Matrix xy = random_xy(state.range(0), 40.0, 2);
  diff::Tape tape;
  for (auto _ : state) {
    tape.clear();
    const auto s = net.surface(tape, tape.constant(xy));
    tape.backward(diff::sum_all(s.height) + diff::sum_all(s.normal));
    benchmark::DoNotOptimize(s.height.data().data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SirenSurfaceBackward)->Args({256, 64})->Args({256, 128})->Args({1024, 64})->Unit(benchmark::kMillisecond);

void BM_SirenEvaluate(benchmark::State& state) {
  const HeightmapNetwork net = make_network(64);
  const Matrix xy = random_xy(state.range(0), 40.0, 3);
  for (auto _ : state) benchmark::DoNotOptimize(net.evaluate(xy, true).normal.data());
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SirenEvaluate)->Arg(256)->Arg(4096)->Unit(benchmark::kMillisecond);

void BM_VolumetricReduce(benchmark::State& state) {
  const Eigen::Index b = state.range(0), n = state.range(1);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix depths(b, n), ray_heights(b, n), heights(b, n), normals(b * n, 3);
  for (Eigen::Index r = 0; r < b; ++r)
    for (Eigen::Index i = 0; i < n; ++i) {
      depths(r, i) = 164.0 + 12.0 * static_cast<double>(i) / static_cast<double>(n - 1);
      ray_heights(r, i) = depths(r, i);
      heights(r, i) = 170.0 + 0.5 * g(rng);
      normals.row(r * n + i) = Vec3(0.1 * g(rng), 0.1 * g(rng), -1.0).normalized();
    }
  diff::Tape tape;
  for (auto _ : state) {
    tape.clear();
    const auto h = tape.leaf(heights);
    const auto res = volumetric_reduce(depths, ray_heights, h, tape.leaf(normals), diff::Value(), 1.0);
    tape.backward(diff::sum_all(res.height) + diff::sum_all(res.normal));
    benchmark::DoNotOptimize(h.grad().data());
  }
  state.SetItemsProcessed(state.iterations() * b);
}
BENCHMARK(BM_VolumetricReduce)->Args({256, 32})->Args({256, 128})->Unit(benchmark::kMillisecond);

void BM_RenderIntensity(benchmark::State& state) {
  const bool shadows = state.range(1) != 0;
  const Eigen::Index b = state.range(0);
  HeightmapNetwork net = make_network(64);
  const Rig rig = make_default_rig();
  BrdfNet brdf(BrdfConfig{}, 5, false);
  const Matrix xy = random_xy(b, 30.0, 6);
  const auto ev = net.evaluate(xy, true);
  Matrix points(b, 3), view(b, 3);
  for (Eigen::Index i = 0; i < b; ++i) {
    points.row(i) << xy(i, 0), xy(i, 1), ev.height(i, 0);
    view.row(i) = (rig.cameras[0].center_world() - points.row(i).transpose()).normalized().transpose();
  }
  RenderOptions opt;
  opt.shadows = shadows;
  ShadowSource src;
  src.field = &net;
  diff::Tape tape;
  for (auto _ : state) {
    tape.clear();
    const auto r = render_intensity(tape, tape.constant(ev.albedo), tape.leaf(ev.normal), tape.leaf(points),
                                    tape.constant(view), rig.lights, brdf, src, opt);
    tape.backward(diff::sum_all(r.intensity));
    benchmark::DoNotOptimize(r.intensity.data().data());
  }
  state.SetItemsProcessed(state.iterations() * b * static_cast<std::int64_t>(rig.lights.size()));
}
BENCHMARK(BM_RenderIntensity)->Args({256, 0})->Args({256, 1})->Unit(benchmark::kMillisecond);

void BM_KdTreeNearest(benchmark::State& state) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  Matrix pts(state.range(0), 3);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) pts.row(i) << u(rng), u(rng), u(rng);
  const KdTree tree(pts);
  for (auto _ : state) benchmark::DoNotOptimize(tree.nearest(Vec3(u(rng), u(rng), u(rng))).distance);
}
BENCHMARK(BM_KdTreeNearest)->Arg(10000)->Arg(100000);

}  // namespace

BENCHMARK_MAIN();
