#pragma once

#include <cstdint>

#include "mpsamp/precision.hpp"
#include "mpsamp/tensor.hpp"

namespace mpsamp {

// Complex MAC and measurement work counters. Workers keep private counters
// and merge them in rank order, so no synchronization is needed.
struct FlopCounters {
    std::uint64_t contraction_macs = 0;       // env x gamma complex MACs
    std::uint64_t displacement_macs = 0;      // displacement generation + apply
    std::uint64_t measure_weight_macs = 0;    // lambda^2 weighted |.|^2 sums
    std::uint64_t measure_pipeline_ops = 0;   // normalize/cumsum/compare per (sample, level)

    FlopCounters& operator+=(const FlopCounters& o) {
        contraction_macs += o.contraction_macs;
        displacement_macs += o.displacement_macs;
        measure_weight_macs += o.measure_weight_macs;
        measure_pipeline_ops += o.measure_pipeline_ops;
        return *this;
    }
};

// out[n, r, k] = sum_l env[n, l] * gamma[l, r, k], accumulated in ascending l
// order under the policy's compute rounding. env is (N2, chiL), gamma is
// (chiL, chiR, d).
ComplexTensor contract_site(const ComplexTensor& env, const ComplexTensor& gamma,
                            const PrecisionPolicy& policy, FlopCounters* flops = nullptr);

// Split-K partial contraction against a contiguous row range [l0, l1) of
// gamma using the matching env columns [c0, c0 + (l1-l0)). Used by the
// tensor-parallel schemes; the serial path is contract_site.
ComplexTensor contract_site_rows(const ComplexTensor& env, std::size_t env_col0,
                                 const ComplexTensor& gamma, std::size_t l0, std::size_t l1,
                                 const PrecisionPolicy& policy, FlopCounters* flops = nullptr);

// Local GEMM against a contiguous bond-column segment [r0, r1) of gamma with
// the full left environment; yields the exact output slice (N2, r1-r0, d)
// with the same per-element accumulation order as the serial kernel.
ComplexTensor contract_site_cols(const ComplexTensor& env, const ComplexTensor& gamma,
                                 std::size_t r0, std::size_t r1, const PrecisionPolicy& policy,
                                 FlopCounters* flops = nullptr);

}  // namespace mpsamp
