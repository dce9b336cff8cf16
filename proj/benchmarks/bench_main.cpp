#include <benchmark/benchmark.h>

#include "peghole/geometry.hpp"
#include "peghole/nets.hpp"
#include "peghole/raster.hpp"
#include "peghole/rng.hpp"

namespace {

using namespace peghole;

void BM_RenderSeg(benchmark::State& state) {
    const auto& shape = geometry::seen_shapes()[0];
    raster::Camera cam;
    geometry::Pose hole{};
    geometry::Pose peg{4.0, -3.0, 0.0, 5.0};
    for (auto _ : state) {
        auto img = raster::render_seg(peg, hole, shape, cam);
        benchmark::DoNotOptimize(img.labels.data());
    }
}
BENCHMARK(BM_RenderSeg);

void BM_InsertionFeasible(benchmark::State& state) {
    const auto& shape = geometry::all_shapes()[state.range(0)];
    geometry::PoseError err{0.3, -0.2, 0.5};
    for (auto _ : state) {
        bool ok = geometry::insertion_feasible(shape, err, 1.0);
        benchmark::DoNotOptimize(ok);
    }
}
BENCHMARK(BM_InsertionFeasible)->Arg(0)->Arg(7);

void BM_EncoderDecoderForward(benchmark::State& state) {
    neuro::ParamStore store(7);
    neuro::EncoderDecoderNet net(store, "p", 3, 1);
    neuro::Tensor x({3, 63, 63});
    Rng rng(3);
    for (double& v : x.data) v = rng.uniform();
    for (auto _ : state) {
        const auto& y = net.forward(x);
        benchmark::DoNotOptimize(y.data.data());
    }
}
BENCHMARK(BM_EncoderDecoderForward);

void BM_EncoderDecoderTrainStep(benchmark::State& state) {
    neuro::ParamStore store(7);
    neuro::EncoderDecoderNet net(store, "p", 3, 1);
    neuro::Tensor x({3, 63, 63});
    Rng rng(3);
    for (double& v : x.data) v = rng.uniform();
    for (auto _ : state) {
        const auto& y = net.forward(x);
        neuro::Tensor gy;
        gy.dims = y.dims;
        gy.data.assign(y.size(), 1e-3);
        const auto& gx = net.backward(gy);
        benchmark::DoNotOptimize(gx.data.data());
    }
}
BENCHMARK(BM_EncoderDecoderTrainStep);

void BM_MaskEncoderForward(benchmark::State& state) {
    neuro::ParamStore store(7);
    neuro::MaskEncoderNet net(store, "r");
    neuro::Tensor x({1, 63, 63});
    Rng rng(3);
    for (double& v : x.data) v = rng.uniform() > 0.7 ? 1.0 : 0.0;
    for (auto _ : state) {
        const auto& y = net.forward(x);
        benchmark::DoNotOptimize(y.data.data());
    }
}
BENCHMARK(BM_MaskEncoderForward);

}  // namespace

BENCHMARK_MAIN();
