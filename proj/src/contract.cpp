#include "mpsamp/contract.hpp"

#include <complex>
#include <vector>

#include "mpsamp/errors.hpp"

namespace mpsamp {

namespace {

using cfloat = std::complex<float>;

// Generic block kernel: out[n, j, k] = sum over l in [l0, l1) of
// env[n, env_col0 + l - l0] * gamma[l, r0 + j, k]. Accumulation runs in
// ascending l order per output element in every code path, which keeps
// split-K partial sums consistent with the serial loop.
ComplexTensor contract_block_f64(const ComplexTensor& env, std::size_t env_col0,
                                 const ComplexTensor& gamma, std::size_t l0, std::size_t l1,
                                 std::size_t r0, std::size_t r1) {
    const std::size_t batch = env.extent(0);
    const std::size_t chi_r = gamma.extent(1);
    const std::size_t d = gamma.extent(2);
    const std::size_t width = (r1 - r0) * d;

    ComplexTensor out({batch, r1 - r0, d});
    const cdouble* envp = env.data();
    const cdouble* gp = gamma.data();
    const std::size_t env_cols = env.extent(1);

    for (std::size_t n = 0; n < batch; ++n) {
        cdouble* dst = out.data() + n * width;
        const cdouble* erow = envp + n * env_cols + env_col0;
        for (std::size_t l = l0; l < l1; ++l) {
            const cdouble c = erow[l - l0];
            const cdouble* g = gp + (l * chi_r + r0) * d;
            for (std::size_t j = 0; j < width; ++j) dst[j] += c * g[j];
        }
    }
    return out;
}

ComplexTensor contract_block_reduced(const ComplexTensor& env, std::size_t env_col0,
                                     const ComplexTensor& gamma, std::size_t l0, std::size_t l1,
                                     std::size_t r0, std::size_t r1, Precision input_round) {
    const std::size_t batch = env.extent(0);
    const std::size_t chi_r = gamma.extent(1);
    const std::size_t d = gamma.extent(2);
    const std::size_t width = (r1 - r0) * d;

    // Pre-round the gamma block once; rounded values are exactly
    // representable in float, so float storage loses nothing.
    std::vector<cfloat> gblock((l1 - l0) * width);
    for (std::size_t l = l0; l < l1; ++l) {
        const cdouble* g = gamma.data() + (l * chi_r + r0) * d;
        cfloat* gb = gblock.data() + (l - l0) * width;
        for (std::size_t j = 0; j < width; ++j) {
            cdouble r = round_scalar(g[j], input_round);
            gb[j] = cfloat(static_cast<float>(r.real()), static_cast<float>(r.imag()));
        }
    }

    ComplexTensor out({batch, r1 - r0, d});
    const std::size_t env_cols = env.extent(1);
    std::vector<cfloat> acc(width);

    for (std::size_t n = 0; n < batch; ++n) {
        std::fill(acc.begin(), acc.end(), cfloat(0.0f, 0.0f));
        const cdouble* erow = env.data() + n * env_cols + env_col0;
        for (std::size_t l = l0; l < l1; ++l) {
            cdouble r = round_scalar(erow[l - l0], input_round);
            const cfloat c(static_cast<float>(r.real()), static_cast<float>(r.imag()));
            const cfloat* g = gblock.data() + (l - l0) * width;
            for (std::size_t j = 0; j < width; ++j) acc[j] += c * g[j];
        }
        cdouble* dst = out.data() + n * width;
        for (std::size_t j = 0; j < width; ++j) {
            dst[j] = cdouble(static_cast<double>(acc[j].real()), static_cast<double>(acc[j].imag()));
        }
    }
    return out;
}

ComplexTensor contract_block(const ComplexTensor& env, std::size_t env_col0,
                             const ComplexTensor& gamma, std::size_t l0, std::size_t l1,
                             std::size_t r0, std::size_t r1, const PrecisionPolicy& policy,
                             FlopCounters* flops) {
    if (env.rank() != 2 || gamma.rank() != 3) {
        throw DimensionError("contract_site expects env (batch, chi) and gamma (chiL, chiR, d)");
    }
    if (l1 > gamma.extent(0) || r1 > gamma.extent(1) || l0 > l1 || r0 > r1) {
        throw DimensionError("contraction block out of gamma bounds");
    }
    if (env_col0 + (l1 - l0) > env.extent(1)) {
        throw DimensionError("env columns do not cover the contracted range");
    }
    if (flops) {
        flops->contraction_macs += static_cast<std::uint64_t>(env.extent(0)) * (l1 - l0) *
                                   (r1 - r0) * gamma.extent(2);
    }
    if (policy.compute == Precision::F64) {
        return contract_block_f64(env, env_col0, gamma, l0, l1, r0, r1);
    }
    return contract_block_reduced(env, env_col0, gamma, l0, l1, r0, r1, policy.compute);
}

}  // namespace

ComplexTensor contract_site(const ComplexTensor& env, const ComplexTensor& gamma,
                            const PrecisionPolicy& policy, FlopCounters* flops) {
    if (env.rank() != 2 || gamma.rank() != 3) {
        throw DimensionError("contract_site expects env (batch, chi) and gamma (chiL, chiR, d)");
    }
    if (env.extent(1) != gamma.extent(0)) {
        throw DimensionError("contract_site: env chi does not match gamma first axis");
    }
    if (policy.compute == Precision::F64 && (!env.all_finite() || !gamma.all_finite())) {
        throw NumericError("contract_site: non-finite input");
    }
    return contract_block(env, 0, gamma, 0, gamma.extent(0), 0, gamma.extent(1), policy, flops);
}

ComplexTensor contract_site_rows(const ComplexTensor& env, std::size_t env_col0,
                                 const ComplexTensor& gamma, std::size_t l0, std::size_t l1,
                                 const PrecisionPolicy& policy, FlopCounters* flops) {
    return contract_block(env, env_col0, gamma, l0, l1, 0, gamma.extent(1), policy, flops);
}

ComplexTensor contract_site_cols(const ComplexTensor& env, const ComplexTensor& gamma,
                                 std::size_t r0, std::size_t r1, const PrecisionPolicy& policy,
                                 FlopCounters* flops) {
    if (env.extent(1) != gamma.extent(0)) {
        throw DimensionError("contract_site_cols: env chi does not match gamma first axis");
    }
    return contract_block(env, 0, gamma, 0, gamma.extent(0), r0, r1, policy, flops);
}

}  // namespace mpsamp
