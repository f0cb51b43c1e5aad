// Copyright 2026 The microreg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Microbenchmarks for the training hot paths.
//
//   microreg_bench [--benchmark_filter=REGEX]

#include "microreg/batching.hpp"
#include "microreg/grad.hpp"
#include "microreg/model.hpp"
#include "microreg/regularizers.hpp"
#include "microreg/telemetry.hpp"

#include <benchmark/benchmark.h>

#include <numeric>

namespace {

using namespace microreg;

struct Problem {
    ModelParams params;
    Dataset data;
    std::vector<std::size_t> batch;
};

// Default desk-scale shapes: 64 inputs, 10 classes, a 64-64 hidden stack.
Problem make_problem(std::size_t batch_size)
{
    SyntheticSpec spec;
    spec.train_size = std::max<std::size_t>(batch_size, 1024);
    Problem p;
    p.data = make_synthetic(spec, Split::Train);
    ModelSpec model;
    model.input_dim = p.data.dim();
    model.class_count = p.data.class_count;
    model.hidden = {64, 64};
    p.params = init_params(model);
    p.batch.resize(batch_size);
    std::iota(p.batch.begin(), p.batch.end(), std::size_t{0});
    return p;
}

void BM_ForwardBackward(benchmark::State& state)
{
    const auto p = make_problem(static_cast<std::size_t>(state.range(0)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(batch_loss_gradient(p.params, p.data, p.batch));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardBackward)->Arg(32)->Arg(128)->Arg(1024);

void BM_Accumulate(benchmark::State& state)
{
    const auto p = make_problem(1024);
    const auto partition = partition_microbatches(p.batch, 32);
    const auto threads = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(accumulate_full_gradient(p.params, p.data, partition, threads));
    }
}
BENCHMARK(BM_Accumulate)->Arg(1)->Arg(4);

void BM_Penalty(benchmark::State& state)
{
    const auto kind = static_cast<RegularizerKind>(state.range(0));
    const auto p = make_problem(256);
    const auto partition = partition_microbatches(p.batch, 32);
    PenaltyOptions options;
    if (state.range(1) == 1) {
        options.mode = ad::FiniteDifference{};
    }
    std::uint64_t step = 0;
    for (auto _ : state) {
        const StreamKey rng{1, step++};
        PenalizedLoss r;
        switch (kind) {
        case RegularizerKind::GN: r = gn_penalized_loss(p.params, p.data, partition, 0.01, options); break;
        case RegularizerKind::FT: r = ft_penalized_loss(p.params, p.data, partition, 0.01, rng, options); break;
        case RegularizerKind::AJ: r = aj_penalized_loss(p.params, p.data, partition, 0.01, options); break;
        case RegularizerKind::UJ: r = uj_penalized_loss(p.params, p.data, partition, 0.01, rng, options); break;
        case RegularizerKind::SampleGN:
            r = sample_gn_penalized_loss(p.params, p.data, partition, 0.01, rng, options);
            break;
        }
        benchmark::DoNotOptimize(r);
    }
    state.SetLabel(std::string(regularizer_name(kind)) + (state.range(1) == 1 ? " fd" : " db"));
}
BENCHMARK(BM_Penalty)
    ->ArgsProduct({{static_cast<long>(RegularizerKind::GN), static_cast<long>(RegularizerKind::FT),
                    static_cast<long>(RegularizerKind::AJ), static_cast<long>(RegularizerKind::UJ),
                    static_cast<long>(RegularizerKind::SampleGN)},
                   {0, 1}})
    ->Unit(benchmark::kMillisecond);

void BM_GradNormMetric(benchmark::State& state)
{
    const auto p = make_problem(1280);
    const auto partition = partition_microbatches(p.batch, 128);
    for (auto _ : state) {
        benchmark::DoNotOptimize(avg_microbatch_grad_norm(p.params, p.data, partition));
    }
}
BENCHMARK(BM_GradNormMetric)->Unit(benchmark::kMillisecond);

void BM_TelemetryRecord(benchmark::State& state)
{
    TrajectoryRecord r;
    r.step = 12345;
    r.train_loss = 0.123456789;
    r.avg_mb_grad_norm = 1.0 / 3.0;
    r.fisher_trace = 42.0;
    r.lr = 0.1;
    for (auto _ : state) {
        benchmark::DoNotOptimize(parse_record(format_record(r)));
    }
}
BENCHMARK(BM_TelemetryRecord);

} // namespace

BENCHMARK_MAIN();
