#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mpsamp/contract.hpp"
#include "mpsamp/mps.hpp"
#include "mpsamp/precision.hpp"

namespace mpsamp {

// Dead samples keep this sentinel in the outcome matrix.
constexpr std::uint8_t kDeadOutcome = 0xFF;

// Two-level batching: N split into n1 macro batches of N1 samples, each
// processed in micro batches of N2. Tail batches run at their natural size;
// per-sample keyed RNG makes outcomes independent of the split.
struct BatchPlan {
    std::uint64_t total_samples = 0;  // N
    std::uint64_t macro_batch = 0;    // N1 (0: single macro batch)
    std::uint64_t micro_batch = 5000; // N2

    void normalize();
    std::uint64_t macro_count() const;

    static BatchPlan simple(std::uint64_t n, std::uint64_t n2 = 5000);
};

struct SampleBatch {
    std::uint64_t num_samples = 0;
    std::size_t num_sites = 0;
    std::size_t phys_dim = 0;
    std::uint64_t seed = 0;
    std::vector<std::uint8_t> outcomes;  // (N, M) row-major

    std::uint8_t outcome(std::uint64_t sample, std::size_t site) const {
        return outcomes[sample * num_sites + site];
    }
    std::uint64_t dead_count() const;
};

struct RunStats {
    FlopCounters flops;
    std::uint64_t dead_samples = 0;
    std::vector<double> site_seconds;   // per-site wall time
    std::vector<double> decay_trace;    // mean |env| per site, before scaling
    double total_seconds = 0;

    RunStats& merge(const RunStats& o);
};

struct MeasureResult {
    std::vector<std::uint8_t> outcomes;
    ComplexTensor env;  // (N2, chi)
};

// One measurement step: weights w[n,k] = sum_b lambda[b]^2 |temp[n,b,k]|^2,
// outcome[n] = number of cumulative probabilities strictly below draws[n],
// env[n,b] = temp[n,b,outcome[n]]. Samples whose weights vanish are flagged
// dead (sentinel outcome, zero env row), never resampled.
MeasureResult measure(const ComplexTensor& temp, std::span<const double> lambda,
                      std::span<const double> draws, std::vector<std::uint8_t>& alive,
                      FlopCounters* flops = nullptr);

// Optional per-site transform applied to the unmeasured environment
// (N2, chi, d); used to hook displacement operators into the pipeline.
using SiteTransform =
    std::function<void(std::size_t site, std::uint64_t first_global_sample, ComplexTensor& temp,
                       FlopCounters& flops)>;

struct SamplerOptions {
    PrecisionPolicy policy;
    std::uint64_t seed = 0;
    std::optional<BondSchedule> schedule;  // truncated per-site bond dims
    SiteTransform site_transform;          // optional
    bool record_decay_trace = false;
};

// Sequential reference sampler over an in-memory state.
SampleBatch sample_batch(const MpsState& mps, const BatchPlan& plan, const SamplerOptions& opts,
                         RunStats* stats = nullptr);

// Per-site mean |env| magnitudes (before scaling) for the given policy; used
// to measure the decay rate and reproduce the underflow failure mode.
std::vector<double> decay_probe(const MpsState& mps, const PrecisionPolicy& policy,
                                std::uint64_t sample_count, std::uint64_t seed = 1);

// Truncates gammas/lambdas to the schedule's per-site bond dimensions.
MpsState apply_schedule(const MpsState& mps, const BondSchedule& schedule);

// Zero-pads gammas/lambdas back up to the given bond dimensions.
MpsState pad_bonds(const MpsState& mps, const std::vector<std::size_t>& bond_dims);

namespace detail {

// Shared micro-batch worker: samples `count` consecutive samples starting at
// global index `first`, writing outcome rows. Exposed for the parallel
// executors, which re-drive the same pieces around their collectives.
void sample_micro_serial(const MpsState& mps, std::uint64_t first, std::size_t count,
                         const SamplerOptions& opts, std::uint8_t* rows, RunStats& stats);

std::vector<double> measurement_draws(std::uint64_t seed, std::uint64_t first, std::size_t count,
                                      std::size_t site);

}  // namespace detail

}  // namespace mpsamp
