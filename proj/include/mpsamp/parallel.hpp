#pragma once

#include <string>

#include "mpsamp/collective.hpp"
#include "mpsamp/sampler.hpp"

namespace mpsamp {

enum class Scheme { Serial, DataParallel, SingleSite, DoubleSite };

const char* to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);

struct ParallelResult {
    SampleBatch batch;
    RunStats stats;   // merged over workers in rank order
    CommStats comm;
};

// Fig.-3 style scheme: worker 0 reads each site payload and broadcasts the
// raw bytes; every worker samples its own round-robin macro batches. Merged
// outcomes are identical to the serial sampler for the same seed.
ParallelResult run_data_parallel(const std::string& mps_path, const BatchPlan& plan,
                                 std::size_t p1, const SamplerOptions& opts,
                                 const CostModel& cost = {});

// Tensor-parallel execution over a p1 x p2 grid: p1 independent sample
// groups, p2-way bond sharding inside each group.
//
// Single-site: every site runs a split-K partial contraction on the rank's
// gamma row shard, one ReduceScatter of the unmeasured environment forms the
// next exact bond shard, and each rank runs the measurement pipeline for all
// samples redundantly (p2-fold measurement work).
//
// Double-site: even sites contract locally against gamma column segments
// (no environment collective), odd sites AllReduce the unmeasured
// environment; the measurement pipeline is distributed over samples. An odd
// trailing site falls back to a single-site style step.
//
// Under the Born-rule weights the outcome distribution needs the complete
// contracted tensor, so the per-site env collective carries the unmeasured
// (N2, chi, d) tensor and the small per-site weight/outcome gathers are
// tracked separately as measurement_exchanges.
ParallelResult run_tensor_parallel(const std::string& mps_path, const BatchPlan& plan,
                                   std::size_t p1, std::size_t p2, bool double_site,
                                   const SamplerOptions& opts, const CostModel& cost = {});

// Serial reference over the same file-backed path (streams sites per macro
// batch); convenience wrapper used by the CLI and the equivalence suites.
ParallelResult run_serial(const std::string& mps_path, const BatchPlan& plan,
                          const SamplerOptions& opts);

}  // namespace mpsamp
