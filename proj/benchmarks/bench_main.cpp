#include <benchmark/benchmark.h>

#include "dcbilstm/lstm.hpp"
#include "dcbilstm/network.hpp"
#include "dcbilstm/rng.hpp"
#include "dcbilstm/tensor.hpp"

namespace {

using namespace dcbilstm;

void BM_Matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(1);
    const Tensor a = uniform(n, n, -1, 1, rng);
    const Tensor b = uniform(n, n, -1, 1, rng);
    for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
    state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(128)->Arg(256);

void BM_LstmStep(benchmark::State& state) {
    const auto batch = static_cast<std::size_t>(state.range(0));
    const std::size_t in = 300, d = 100;
    Rng rng(2);
    const LstmParams p = LstmParams::glorot(in, d, rng);
    const Tensor x = uniform(batch, in, -1, 1, rng);
    const Tensor h(batch, d), c(batch, d);
    for (auto _ : state) benchmark::DoNotOptimize(lstm_step(p, x, h, c));
}
BENCHMARK(BM_LstmStep)->Arg(1)->Arg(50)->Arg(200);

Batch random_batch(std::size_t size, std::size_t len, std::size_t vocab, Rng& rng) {
    Batch b;
    for (std::size_t r = 0; r < size; ++r) {
        std::vector<std::size_t> row(len);
        for (auto& id : row) id = 2 + rng.below(vocab - 2);
        b.indices.push_back(row);
        b.lengths.push_back(len);
        b.labels.push_back(r % 2);
    }
    return b;
}

ModelConfig bench_config(std::size_t dl) {
    ModelConfig cfg;
    cfg.m = 100;
    cfg.dl = dl;
    cfg.dh = 10;
    cfg.th = 50;
    cfg.dropout_embed = cfg.dropout_pool = 0.0;
    return cfg;
}

void BM_ModelForward(benchmark::State& state) {
    Rng rng(3);
    const Model model = Model::create(bench_config(static_cast<std::size_t>(state.range(0))), 500, rng);
    const Batch batch = random_batch(32, 20, 500, rng);
    for (auto _ : state) benchmark::DoNotOptimize(model_forward(model, batch));
}
BENCHMARK(BM_ModelForward)->Arg(0)->Arg(3)->Arg(10);

void BM_ModelForwardBackward(benchmark::State& state) {
    Rng rng(4);
    const Model model = Model::create(bench_config(static_cast<std::size_t>(state.range(0))), 500, rng);
    const Batch batch = random_batch(32, 20, 500, rng);
    for (auto _ : state) {
        const ForwardTrace tr = model_forward(model, batch);
        benchmark::DoNotOptimize(model_backward(model, tr, batch.labels));
    }
}
BENCHMARK(BM_ModelForwardBackward)->Arg(0)->Arg(3)->Arg(10);

} // namespace

BENCHMARK_MAIN();
