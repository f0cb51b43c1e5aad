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

#include "microreg/batching.hpp"

#include "microreg/errors.hpp"

#include <exception>
#include <mutex>
#include <thread>

namespace microreg {

MicroBatchPartition partition_microbatches(std::vector<std::size_t> batch, std::size_t m)
{
    if (m == 0) {
        throw ValidationError("micro-batch size must be at least 1");
    }
    if (batch.empty() || batch.size() % m != 0) {
        throw ValidationError("micro-batch size " + std::to_string(m)
                              + " does not divide batch size " + std::to_string(batch.size()));
    }
    return MicroBatchPartition{std::move(batch), m};
}

void parallel_for(std::size_t count, std::size_t threads,
                  const std::function<void(std::size_t)>& fn)
{
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) {
            fn(i);
        }
        return;
    }
    const std::size_t workers = std::min(threads, count);
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (std::size_t i = w; i < count; i += workers) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) {
                        failure = std::current_exception();
                    }
                    return;
                }
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
}

MicroBatch materialize(const Dataset& data, std::span<const std::size_t> index)
{
    return MicroBatch{gather_rows(data.inputs, index), gather_labels(data.labels, index)};
}

ad::ValueAndGrad batch_loss_gradient(const ModelParams& params, const Dataset& data,
                                     std::span<const std::size_t> index)
{
    const MicroBatch mb = materialize(data, index);
    return ad::value_and_grad(
        [&](ad::Tape& tape, std::span<const ad::Var> p) {
            return cross_entropy(forward(p, tape.constant(mb.inputs)), mb.labels);
        },
        params);
}

AccumulatedGradient accumulate_full_gradient(const ModelParams& params, const Dataset& data,
                                             const MicroBatchPartition& partition,
                                             std::size_t threads, bool keep_slices)
{
    const std::size_t k = partition.count();
    if (k == 0) {
        throw ValidationError("accumulate_full_gradient: empty partition");
    }
    std::vector<ad::ValueAndGrad> slices(k);
    parallel_for(k, threads, [&](std::size_t i) {
        slices[i] = batch_loss_gradient(params, data, partition.slice(i));
    });

    AccumulatedGradient out;
    out.gradient = zeros_like(params);
    const double inv_k = 1.0 / static_cast<double>(k);
    double loss = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        axpy(1.0, slices[i].gradient, out.gradient);
        loss += slices[i].value;
    }
    for (auto& t : out.gradient) {
        for (double& v : t.values()) {
            v *= inv_k;
        }
    }
    out.loss = loss * inv_k;
    if (keep_slices) {
        out.slice_gradients.reserve(k);
        out.slice_losses.reserve(k);
        for (auto& s : slices) {
            out.slice_losses.push_back(s.value);
            out.slice_gradients.push_back(std::move(s.gradient));
        }
    }
    return out;
}

} // namespace microreg
