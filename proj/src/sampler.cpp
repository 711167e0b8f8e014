#include "mpsamp/sampler.hpp"

#include <chrono>
#include <cmath>

#include "mpsamp/errors.hpp"
#include "mpsamp/rng.hpp"

namespace mpsamp {

namespace {

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

}  // namespace

void BatchPlan::normalize() {
    if (total_samples == 0) throw ConfigError("batch plan: total samples must be >= 1");
    if (macro_batch == 0 || macro_batch > total_samples) macro_batch = total_samples;
    if (micro_batch == 0) micro_batch = 5000;
    if (micro_batch > macro_batch) micro_batch = macro_batch;
}

std::uint64_t BatchPlan::macro_count() const {
    return (total_samples + macro_batch - 1) / macro_batch;
}

BatchPlan BatchPlan::simple(std::uint64_t n, std::uint64_t n2) {
    BatchPlan p;
    p.total_samples = n;
    p.macro_batch = n;
    p.micro_batch = n2;
    p.normalize();
    return p;
}

std::uint64_t SampleBatch::dead_count() const {
    // Death is permanent, so the last column carries the sentinel.
    std::uint64_t dead = 0;
    for (std::uint64_t n = 0; n < num_samples; ++n) {
        if (outcomes[(n + 1) * num_sites - 1] == kDeadOutcome) ++dead;
    }
    return dead;
}

RunStats& RunStats::merge(const RunStats& o) {
    flops += o.flops;
    dead_samples += o.dead_samples;
    if (site_seconds.size() < o.site_seconds.size()) site_seconds.resize(o.site_seconds.size());
    for (std::size_t i = 0; i < o.site_seconds.size(); ++i) site_seconds[i] += o.site_seconds[i];
    if (decay_trace.size() < o.decay_trace.size()) decay_trace.resize(o.decay_trace.size());
    for (std::size_t i = 0; i < o.decay_trace.size(); ++i) decay_trace[i] += o.decay_trace[i];
    total_seconds += o.total_seconds;
    return *this;
}

MeasureResult measure(const ComplexTensor& temp, std::span<const double> lambda,
                      std::span<const double> draws, std::vector<std::uint8_t>& alive,
                      FlopCounters* flops) {
    if (temp.rank() != 3) throw DimensionError("measure expects temp of shape (batch, chi, d)");
    const std::size_t batch = temp.extent(0);
    const std::size_t chi = temp.extent(1);
    const std::size_t d = temp.extent(2);
    if (lambda.size() != chi) throw DimensionError("lambda length does not match temp bond axis");
    if (draws.size() != batch || alive.size() != batch) {
        throw DimensionError("draws/alive length does not match batch");
    }

    std::vector<double> lam2(chi);
    for (std::size_t b = 0; b < chi; ++b) lam2[b] = lambda[b] * lambda[b];

    MeasureResult res;
    res.outcomes.assign(batch, kDeadOutcome);
    res.env = ComplexTensor({batch, chi});

    std::vector<double> w(d);
    std::uint64_t weight_macs = 0, pipeline_ops = 0;
    for (std::size_t n = 0; n < batch; ++n) {
        if (!alive[n]) continue;
        std::fill(w.begin(), w.end(), 0.0);
        const cdouble* row = temp.data() + n * chi * d;
        for (std::size_t b = 0; b < chi; ++b) {
            const double l2 = lam2[b];
            const cdouble* t = row + b * d;
            for (std::size_t k = 0; k < d; ++k) w[k] += l2 * std::norm(t[k]);
        }
        weight_macs += chi * d;

        double total = 0.0;
        for (std::size_t k = 0; k < d; ++k) total += w[k];
        pipeline_ops += d;
        if (total == 0.0) {
            alive[n] = 0;  // underflowed: conditional distribution undefined
            continue;
        }

        const double draw = draws[n];
        double cum = 0.0;
        std::size_t outcome = 0;
        for (std::size_t k = 0; k < d; ++k) {
            cum += w[k] / total;
            if (draw > cum) ++outcome;
        }
        if (outcome >= d) outcome = d - 1;
        res.outcomes[n] = static_cast<std::uint8_t>(outcome);

        cdouble* env_row = res.env.data() + n * chi;
        for (std::size_t b = 0; b < chi; ++b) env_row[b] = row[b * d + outcome];
    }
    if (flops) {
        flops->measure_weight_macs += weight_macs;
        flops->measure_pipeline_ops += pipeline_ops;
    }
    return res;
}

std::vector<double> detail::measurement_draws(std::uint64_t seed, std::uint64_t first,
                                              std::size_t count, std::size_t site) {
    std::vector<double> draws(count);
    for (std::size_t j = 0; j < count; ++j) {
        draws[j] = rng::uniform(seed, rng::kMeasureStream, first + j, site);
    }
    return draws;
}

void detail::sample_micro_serial(const MpsState& mps, std::uint64_t first, std::size_t count,
                                 const SamplerOptions& opts, std::uint8_t* rows, RunStats& stats) {
    const std::size_t m = mps.num_sites;
    const std::size_t d = mps.phys_dim;
    stats.site_seconds.resize(m, 0.0);
    if (opts.record_decay_trace) stats.decay_trace.resize(m, 0.0);

    ComplexTensor env({count, 1});
    for (std::size_t n = 0; n < count; ++n) env[n] = cdouble(1.0, 0.0);
    std::vector<std::uint8_t> alive(count, 1);

    for (std::size_t i = 0; i < m; ++i) {
        const double t0 = now_seconds();
        ComplexTensor temp = contract_site(env, mps.gammas[i], opts.policy, &stats.flops);
        if (opts.site_transform) opts.site_transform(i, first, temp, stats.flops);

        std::vector<double> draws = measurement_draws(opts.seed, first, count, i);
        MeasureResult mr = measure(temp, mps.lambdas[i], draws, alive, &stats.flops);
        env = std::move(mr.env);

        if (opts.record_decay_trace) {
            double acc = 0.0;
            for (const cdouble& v : env.values()) acc += std::abs(v);
            stats.decay_trace[i] += acc;  // normalized by caller over N * chi_i
        }
        scale_rows_inplace(env, opts.policy.scaling, alive);

        for (std::size_t n = 0; n < count; ++n) rows[n * m + i] = mr.outcomes[n];
        stats.site_seconds[i] += now_seconds() - t0;
    }
    for (std::size_t n = 0; n < count; ++n) {
        if (!alive[n]) ++stats.dead_samples;
    }
}

SampleBatch sample_batch(const MpsState& mps, const BatchPlan& plan_in, const SamplerOptions& opts,
                         RunStats* stats_out) {
    mps.validate();
    opts.policy.validate();
    BatchPlan plan = plan_in;
    plan.normalize();

    const MpsState* state = &mps;
    MpsState truncated;
    if (opts.schedule) {
        truncated = apply_schedule(mps, *opts.schedule);
        state = &truncated;
    }

    SampleBatch batch;
    batch.num_samples = plan.total_samples;
    batch.num_sites = state->num_sites;
    batch.phys_dim = state->phys_dim;
    batch.seed = opts.seed;
    batch.outcomes.assign(plan.total_samples * state->num_sites, kDeadOutcome);

    RunStats stats;
    const double t0 = now_seconds();
    for (std::uint64_t start = 0; start < plan.total_samples; start += plan.macro_batch) {
        const std::uint64_t macro_end = std::min(plan.total_samples, start + plan.macro_batch);
        for (std::uint64_t mb = start; mb < macro_end; mb += plan.micro_batch) {
            const std::size_t count =
                static_cast<std::size_t>(std::min(macro_end, mb + plan.micro_batch) - mb);
            detail::sample_micro_serial(*state, mb, count, opts,
                                        batch.outcomes.data() + mb * state->num_sites, stats);
        }
    }
    stats.total_seconds = now_seconds() - t0;
    if (opts.record_decay_trace) {
        for (std::size_t i = 0; i < state->num_sites; ++i) {
            stats.decay_trace[i] /= static_cast<double>(plan.total_samples) *
                                    static_cast<double>(state->bond_dims[i + 1]);
        }
    }
    if (stats_out) *stats_out = std::move(stats);
    return batch;
}

std::vector<double> decay_probe(const MpsState& mps, const PrecisionPolicy& policy,
                                std::uint64_t sample_count, std::uint64_t seed) {
    SamplerOptions opts;
    opts.policy = policy;
    opts.seed = seed;
    opts.record_decay_trace = true;
    RunStats stats;
    (void)sample_batch(mps, BatchPlan::simple(sample_count), opts, &stats);
    return stats.decay_trace;
}

MpsState apply_schedule(const MpsState& mps, const BondSchedule& schedule) {
    if (schedule.per_site_chi.size() != mps.bond_dims.size()) {
        throw DimensionError("bond schedule length does not match state");
    }
    MpsState out;
    out.num_sites = mps.num_sites;
    out.phys_dim = mps.phys_dim;
    out.bond_dims.resize(mps.bond_dims.size());
    for (std::size_t i = 0; i < mps.bond_dims.size(); ++i) {
        out.bond_dims[i] = std::min(schedule.per_site_chi[i], mps.bond_dims[i]);
        if (out.bond_dims[i] == 0) throw DimensionError("bond schedule has a zero bond");
    }
    out.bond_dims.front() = 1;
    out.bond_dims.back() = 1;
    for (std::size_t i = 0; i < mps.num_sites; ++i) {
        const std::size_t cl = out.bond_dims[i], cr = out.bond_dims[i + 1];
        ComplexTensor g({cl, cr, mps.phys_dim});
        for (std::size_t l = 0; l < cl; ++l) {
            for (std::size_t r = 0; r < cr; ++r) {
                for (std::size_t k = 0; k < mps.phys_dim; ++k) {
                    g.at3(l, r, k) = mps.gammas[i].at3(l, r, k);
                }
            }
        }
        out.gammas.push_back(std::move(g));
        out.lambdas.emplace_back(mps.lambdas[i].begin(), mps.lambdas[i].begin() + cr);
    }
    return out;
}

MpsState pad_bonds(const MpsState& mps, const std::vector<std::size_t>& bond_dims) {
    if (bond_dims.size() != mps.bond_dims.size()) {
        throw DimensionError("pad_bonds: bond dimension list length mismatch");
    }
    MpsState out;
    out.num_sites = mps.num_sites;
    out.phys_dim = mps.phys_dim;
    out.bond_dims = bond_dims;
    for (std::size_t i = 0; i < mps.num_sites; ++i) {
        const std::size_t cl = bond_dims[i], cr = bond_dims[i + 1];
        if (cl < mps.bond_dims[i] || cr < mps.bond_dims[i + 1]) {
            throw DimensionError("pad_bonds: target bonds smaller than source");
        }
        ComplexTensor g({cl, cr, mps.phys_dim});
        for (std::size_t l = 0; l < mps.bond_dims[i]; ++l) {
            for (std::size_t r = 0; r < mps.bond_dims[i + 1]; ++r) {
                for (std::size_t k = 0; k < mps.phys_dim; ++k) {
                    g.at3(l, r, k) = mps.gammas[i].at3(l, r, k);
                }
            }
        }
        out.gammas.push_back(std::move(g));
        std::vector<double> lam(cr, 0.0);
        for (std::size_t r = 0; r < mps.bond_dims[i + 1]; ++r) lam[r] = mps.lambdas[i][r];
        out.lambdas.push_back(std::move(lam));
    }
    return out;
}

}  // namespace mpsamp
