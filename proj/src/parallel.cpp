#include "mpsamp/parallel.hpp"

#include <cmath>
#include <cstring>
#include <thread>

#include "mpsamp/contract.hpp"
#include "mpsamp/errors.hpp"
#include "mpsamp/mps_io.hpp"
#include "mpsamp/rng.hpp"

namespace mpsamp {

const char* to_string(Scheme s) {
    switch (s) {
        case Scheme::Serial: return "serial";
        case Scheme::DataParallel: return "data";
        case Scheme::SingleSite: return "single-site";
        case Scheme::DoubleSite: return "double-site";
    }
    return "?";
}

Scheme scheme_from_string(const std::string& s) {
    if (s == "serial") return Scheme::Serial;
    if (s == "data") return Scheme::DataParallel;
    if (s == "single-site") return Scheme::SingleSite;
    if (s == "double-site") return Scheme::DoubleSite;
    throw ConfigError("unknown scheme: " + s);
}

namespace {

struct MacroRange {
    std::uint64_t first = 0;
    std::uint64_t count = 0;
};

// Macro batch t (global, round-robin over groups) covers
// [t*N1, min(N, (t+1)*N1)).
MacroRange macro_range(const BatchPlan& plan, std::uint64_t t) {
    MacroRange r;
    r.first = t * plan.macro_batch;
    if (r.first >= plan.total_samples) return r;
    r.count = std::min<std::uint64_t>(plan.macro_batch, plan.total_samples - r.first);
    return r;
}

std::vector<MacroRange> micro_ranges(const BatchPlan& plan, const MacroRange& macro) {
    std::vector<MacroRange> out;
    for (std::uint64_t at = 0; at < macro.count; at += plan.micro_batch) {
        out.push_back({macro.first + at, std::min<std::uint64_t>(plan.micro_batch, macro.count - at)});
    }
    return out;
}

// (count, chi, d) -> (chi, count, d): bond-major layout whose leading axis is
// the scatter axis of the per-site env collectives.
ComplexTensor to_chi_major(const ComplexTensor& t) {
    const std::size_t count = t.extent(0), chi = t.extent(1), d = t.extent(2);
    ComplexTensor out({chi, count, d});
    for (std::size_t n = 0; n < count; ++n) {
        for (std::size_t b = 0; b < chi; ++b) {
            std::memcpy(out.data() + (b * count + n) * d, t.data() + (n * chi + b) * d,
                        d * sizeof(cdouble));
        }
    }
    return out;
}

ComplexTensor from_chi_major(const ComplexTensor& t) {
    const std::size_t chi = t.extent(0), count = t.extent(1), d = t.extent(2);
    ComplexTensor out({count, chi, d});
    for (std::size_t b = 0; b < chi; ++b) {
        for (std::size_t n = 0; n < count; ++n) {
            std::memcpy(out.data() + (n * chi + b) * d, t.data() + (b * count + n) * d,
                        d * sizeof(cdouble));
        }
    }
    return out;
}

struct MeasureExchange {
    std::vector<double> weights;  // (count, d), rank-order partial sums
    std::vector<double> maxes;    // (count, d), cross-rank max
};

// Partial Born weights and per-(sample, level) max magnitudes over a bond
// slice of the exact unmeasured environment.
MeasureExchange partial_measure_stats(const ComplexTensor& temp_slice,
                                      std::span<const double> lambda_slice, bool want_maxes,
                                      FlopCounters& flops) {
    const std::size_t count = temp_slice.extent(0);
    const std::size_t width = temp_slice.extent(1);
    const std::size_t d = temp_slice.extent(2);
    MeasureExchange ex;
    ex.weights.assign(count * d, 0.0);
    ex.maxes.assign(want_maxes ? count * d : 0, 0.0);
    for (std::size_t n = 0; n < count; ++n) {
        const cdouble* row = temp_slice.data() + n * width * d;
        double* w = ex.weights.data() + n * d;
        double* mx = want_maxes ? ex.maxes.data() + n * d : nullptr;
        for (std::size_t b = 0; b < width; ++b) {
            const double l2 = lambda_slice[b] * lambda_slice[b];
            const cdouble* t = row + b * d;
            for (std::size_t k = 0; k < d; ++k) {
                w[k] += l2 * std::norm(t[k]);
                if (mx) mx[k] = std::max(mx[k], component_mag(t[k]));
            }
        }
    }
    flops.measure_weight_macs += static_cast<std::uint64_t>(count) * width * d;
    return ex;
}

MeasureExchange gather_measure_stats(WorkerGrid& grid, const SubGroup& group,
                                     const MeasureExchange& mine, bool want_maxes,
                                     const CostModel& cost, CommStats& comm) {
    const std::size_t wn = mine.weights.size();
    std::vector<double> packed = mine.weights;
    if (want_maxes) packed.insert(packed.end(), mine.maxes.begin(), mine.maxes.end());
    std::vector<Message> all = ring_all_gather(grid, group, pack_doubles(packed), cost, comm);
    ++comm.measurement_exchanges;

    MeasureExchange out;
    out.weights.assign(wn, 0.0);
    out.maxes.assign(want_maxes ? wn : 0, 0.0);
    for (std::size_t rpos = 0; rpos < group.size(); ++rpos) {
        std::vector<double> part = unpack_doubles(all[rpos]);
        for (std::size_t j = 0; j < wn; ++j) out.weights[j] += part[j];
        if (want_maxes) {
            for (std::size_t j = 0; j < wn; ++j) out.maxes[j] = std::max(out.maxes[j], part[wn + j]);
        }
    }
    return out;
}

// Inverse-CDF pipeline on combined weights for samples [n0, n1); writes
// outcomes (kDeadOutcome for vanished weights) and the per-sample scale
// factor (the row max under per-sample-max scaling, 1 otherwise).
void outcome_pipeline(const MeasureExchange& ex, std::span<const double> draws, std::size_t d,
                      std::size_t n0, std::size_t n1, ScalingMode scaling,
                      std::vector<std::uint8_t>& alive, std::uint8_t* outcomes, double* scales,
                      FlopCounters& flops) {
    for (std::size_t n = n0; n < n1; ++n) {
        outcomes[n] = kDeadOutcome;
        scales[n] = 1.0;
        if (!alive[n]) continue;
        const double* w = ex.weights.data() + n * d;
        double total = 0.0;
        for (std::size_t k = 0; k < d; ++k) total += w[k];
        if (total == 0.0) {
            alive[n] = 0;
            continue;
        }
        double cum = 0.0;
        std::size_t outcome = 0;
        for (std::size_t k = 0; k < d; ++k) {
            cum += w[k] / total;
            if (draws[n] > cum) ++outcome;
        }
        if (outcome >= d) outcome = d - 1;
        outcomes[n] = static_cast<std::uint8_t>(outcome);
        if (scaling == ScalingMode::PerSampleMax) {
            double m = ex.maxes[n * d + outcome];
            if (m == 0.0) {
                alive[n] = 0;
                outcomes[n] = kDeadOutcome;
            } else {
                scales[n] = m;
            }
        }
    }
    flops.measure_pipeline_ops += static_cast<std::uint64_t>(n1 - n0) * d;
}

// Outcome + scale exchange for distributed pipelines: u8 outcome then f64
// scale per sample in the rank's range.
Message pack_outcomes(const std::uint8_t* outcomes, const double* scales, std::size_t n0,
                      std::size_t n1) {
    Message m((n1 - n0) * 9);
    std::memcpy(m.data(), outcomes + n0, n1 - n0);
    std::memcpy(m.data() + (n1 - n0), scales + n0, (n1 - n0) * sizeof(double));
    return m;
}

void unpack_outcomes(const Message& m, std::size_t n0, std::size_t n1, std::uint8_t* outcomes,
                     double* scales) {
    std::memcpy(outcomes + n0, m.data(), n1 - n0);
    std::memcpy(scales + n0, m.data() + (n1 - n0), (n1 - n0) * sizeof(double));
}

struct WorkerOutput {
    RunStats stats;
    CommStats comm;
    std::exception_ptr error;
};

void merge_worker_outputs(std::vector<WorkerOutput>& outs, RunStats& stats, CommStats& comm) {
    for (auto& o : outs) {
        if (o.error) std::rethrow_exception(o.error);
        stats.merge(o.stats);
        comm.merge(o.comm);
    }
}

// Per-micro-batch environment state carried across sites within one round.
struct MicroState {
    ComplexTensor env;  // (count, chi_local or chi) depending on scheme phase
    std::vector<std::uint8_t> alive;
};

void select_env_rows(const ComplexTensor& temp_slice, const std::uint8_t* outcomes,
                     const double* scales, const std::vector<std::uint8_t>& alive,
                     ComplexTensor& env_out) {
    const std::size_t count = temp_slice.extent(0);
    const std::size_t width = temp_slice.extent(1);
    const std::size_t d = temp_slice.extent(2);
    env_out = ComplexTensor({count, width});
    for (std::size_t n = 0; n < count; ++n) {
        if (!alive[n]) continue;  // dead rows stay zero
        const cdouble* row = temp_slice.data() + n * width * d;
        cdouble* dst = env_out.data() + n * width;
        const std::size_t k = outcomes[n];
        const double inv = 1.0 / scales[n];
        for (std::size_t b = 0; b < width; ++b) dst[b] = row[b * d + k] * (scales[n] == 1.0 ? 1.0 : inv);
    }
}

}  // namespace

ParallelResult run_serial(const std::string& mps_path, const BatchPlan& plan,
                          const SamplerOptions& opts) {
    MpsState state = load_mps(mps_path);
    ParallelResult res;
    res.batch = sample_batch(state, plan, opts, &res.stats);
    return res;
}

ParallelResult run_data_parallel(const std::string& mps_path, const BatchPlan& plan_in,
                                 std::size_t p1, const SamplerOptions& opts,
                                 const CostModel& cost) {
    if (p1 < 1) throw ConfigError("data parallel needs p1 >= 1");
    BatchPlan plan = plan_in;
    plan.normalize();
    opts.policy.validate();

    MpsFileInfo info = read_mps_info(mps_path);
    const std::size_t m = info.num_sites;

    ParallelResult res;
    res.batch.num_samples = plan.total_samples;
    res.batch.num_sites = m;
    res.batch.phys_dim = info.phys_dim;
    res.batch.seed = opts.seed;
    res.batch.outcomes.assign(plan.total_samples * m, kDeadOutcome);

    const std::uint64_t n1 = plan.macro_count();
    const std::uint64_t rounds = (n1 + p1 - 1) / p1;

    WorkerGrid grid(p1);
    std::vector<std::size_t> ranks(p1);
    for (std::size_t i = 0; i < p1; ++i) ranks[i] = i;
    std::vector<WorkerOutput> outs(p1);
    std::uint8_t* outcome_base = res.batch.outcomes.data();

    auto worker = [&](std::size_t g) {
        WorkerOutput& out = outs[g];
        try {
            SubGroup group{&ranks, g};
            for (std::uint64_t round = 0; round < rounds; ++round) {
                const std::uint64_t t = round * p1 + g;
                MacroRange macro = t < n1 ? macro_range(plan, t) : MacroRange{};
                std::vector<MacroRange> micros = micro_ranges(plan, macro);

                std::vector<MicroState> states(micros.size());
                for (std::size_t j = 0; j < micros.size(); ++j) {
                    states[j].env = ComplexTensor({micros[j].count, 1});
                    for (std::size_t n = 0; n < micros[j].count; ++n) {
                        states[j].env[n] = cdouble(1.0, 0.0);
                    }
                    states[j].alive.assign(micros[j].count, 1);
                }

                for (std::size_t i = 0; i < m; ++i) {
                    Message payload;
                    if (g == 0) payload = read_site_payload(mps_path, info, i);
                    broadcast_bytes(grid, group, 0, payload, cost, out.comm);
                    SiteData site = decode_site_payload(info, i, payload);

                    for (std::size_t j = 0; j < micros.size(); ++j) {
                        MicroState& st = states[j];
                        const MacroRange& mr = micros[j];
                        ComplexTensor temp =
                            contract_site(st.env, site.gamma, opts.policy, &out.stats.flops);
                        if (opts.site_transform) {
                            opts.site_transform(i, mr.first, temp, out.stats.flops);
                        }
                        std::vector<double> draws = detail::measurement_draws(
                            opts.seed, mr.first, static_cast<std::size_t>(mr.count), i);
                        MeasureResult meas =
                            measure(temp, site.lambda, draws, st.alive, &out.stats.flops);
                        st.env = std::move(meas.env);
                        scale_rows_inplace(st.env, opts.policy.scaling, st.alive);
                        for (std::size_t n = 0; n < mr.count; ++n) {
                            outcome_base[(mr.first + n) * m + i] = meas.outcomes[n];
                        }
                    }
                }
                for (auto& st : states) {
                    for (auto a : st.alive) {
                        if (!a) ++out.stats.dead_samples;
                    }
                }
            }
        } catch (const std::exception& e) {
            out.error = std::make_exception_ptr(
                Error("worker rank " + std::to_string(g) + " failed: " + e.what()));
            grid.close_all();
        }
    };

    std::vector<std::thread> threads;
    threads.reserve(p1);
    for (std::size_t g = 0; g < p1; ++g) threads.emplace_back(worker, g);
    for (auto& t : threads) t.join();
    merge_worker_outputs(outs, res.stats, res.comm);
    res.stats.dead_samples = res.batch.dead_count();
    return res;
}

namespace {

struct TensorWorkerCtx {
    const std::string& path;
    const MpsFileInfo& info;
    const BatchPlan& plan;
    const SamplerOptions& opts;
    const CostModel& cost;
    WorkerGrid& grid;
    const std::vector<std::vector<std::size_t>>& group_ranks;  // per group
    std::size_t p1, p2;
    bool double_site;
    std::uint8_t* outcome_base;
    std::size_t num_sites;
};

class TensorWorker {
  public:
    TensorWorker(const TensorWorkerCtx& ctx, std::size_t group_id, std::size_t rpos,
                 WorkerOutput& out)
        : ctx_(ctx), group_{&ctx.group_ranks[group_id], rpos}, group_id_(group_id), rpos_(rpos),
          out_(out) {}

    void run() {
        const std::uint64_t n1 = ctx_.plan.macro_count();
        const std::uint64_t rounds = (n1 + ctx_.p1 - 1) / ctx_.p1;
        for (std::uint64_t round = 0; round < rounds; ++round) {
            const std::uint64_t t = round * ctx_.p1 + group_id_;
            if (t >= n1) continue;  // groups are independent; no idle sync needed
            run_macro(macro_range(ctx_.plan, t));
        }
    }

  private:
    const TensorWorkerCtx& ctx_;
    SubGroup group_;
    std::size_t group_id_, rpos_;
    WorkerOutput& out_;

    std::span<const double> lambda_slice(const SiteData& site, std::size_t b0, std::size_t b1) {
        return std::span<const double>(site.lambda.data() + b0, b1 - b0);
    }

    // Split-K partial contraction on this rank's gamma row shard followed by
    // the environment collective. ReduceScatter yields the exact bond slice;
    // AllReduce yields the full tensor on every rank.
    ComplexTensor splitk_and_reduce(const MicroState& st, const SiteData& site, bool all_reduce) {
        const std::size_t chi_l = site.gamma.extent(0);
        auto lparts = balanced_partition(chi_l, ctx_.p2);
        auto [l0, l1] = lparts[rpos_];
        ComplexTensor partial = contract_site_rows(st.env, 0, site.gamma, l0, l1,
                                                   ctx_.opts.policy, &out_.stats.flops);
        ComplexTensor packed = to_chi_major(partial);
        ++out_.comm.env_collectives;
        if (all_reduce) {
            ComplexTensor full = all_reduce_sum(ctx_.grid, group_, packed, ctx_.cost, out_.comm);
            return from_chi_major(full);
        }
        ComplexTensor shard = reduce_scatter_sum(ctx_.grid, group_, packed, ctx_.cost, out_.comm);
        return from_chi_major(shard);
    }

    // Single-site protocol step: env shard -> env shard. The measurement
    // pipeline runs redundantly on every rank (non-distributed measurement).
    void single_site_step(MicroState& st, const SiteData& site, std::size_t site_idx,
                          const MacroRange& mr, std::vector<double>& scales,
                          std::vector<std::uint8_t>& outcomes) {
        const std::size_t d = ctx_.info.phys_dim;
        const bool scaled = ctx_.opts.policy.scaling == ScalingMode::PerSampleMax;
        ComplexTensor temp_slice = splitk_and_reduce(st, site, /*all_reduce=*/false);

        auto rparts = balanced_partition(site.gamma.extent(1), ctx_.p2);
        auto [b0, b1] = rparts[rpos_];
        MeasureExchange mine =
            partial_measure_stats(temp_slice, lambda_slice(site, b0, b1), scaled, out_.stats.flops);
        MeasureExchange combined =
            gather_measure_stats(ctx_.grid, group_, mine, scaled, ctx_.cost, out_.comm);

        std::vector<double> draws = detail::measurement_draws(
            ctx_.opts.seed, mr.first, static_cast<std::size_t>(mr.count), site_idx);
        outcome_pipeline(combined, draws, d, 0, static_cast<std::size_t>(mr.count),
                         ctx_.opts.policy.scaling, st.alive, outcomes.data(), scales.data(),
                         out_.stats.flops);
        select_env_rows(temp_slice, outcomes.data(), scales.data(), st.alive, st.env);
    }

    // Double-site even step: local column-segment GEMM from the full env,
    // measurement pipeline distributed over samples, outcome gather.
    void even_site_step(MicroState& st, const SiteData& site, std::size_t site_idx,
                        const MacroRange& mr, std::vector<double>& scales,
                        std::vector<std::uint8_t>& outcomes) {
        const std::size_t d = ctx_.info.phys_dim;
        const bool scaled = ctx_.opts.policy.scaling == ScalingMode::PerSampleMax;
        auto rparts = balanced_partition(site.gamma.extent(1), ctx_.p2);
        auto [b0, b1] = rparts[rpos_];
        ComplexTensor temp_slice =
            contract_site_cols(st.env, site.gamma, b0, b1, ctx_.opts.policy, &out_.stats.flops);

        MeasureExchange mine =
            partial_measure_stats(temp_slice, lambda_slice(site, b0, b1), scaled, out_.stats.flops);
        MeasureExchange combined =
            gather_measure_stats(ctx_.grid, group_, mine, scaled, ctx_.cost, out_.comm);

        std::vector<double> draws = detail::measurement_draws(
            ctx_.opts.seed, mr.first, static_cast<std::size_t>(mr.count), site_idx);
        auto nparts = balanced_partition(static_cast<std::size_t>(mr.count), ctx_.p2);
        outcome_pipeline(combined, draws, d, nparts[rpos_].first, nparts[rpos_].second,
                         ctx_.opts.policy.scaling, st.alive, outcomes.data(), scales.data(),
                         out_.stats.flops);
        exchange_outcomes(nparts, outcomes, scales, st.alive);
        select_env_rows(temp_slice, outcomes.data(), scales.data(), st.alive, st.env);
    }

    // Double-site odd step: split-K + AllReduce gives every rank the full
    // unmeasured tensor; weights and pipeline are distributed over samples.
    void odd_site_step(MicroState& st, const SiteData& site, std::size_t site_idx,
                       const MacroRange& mr, std::vector<double>& scales,
                       std::vector<std::uint8_t>& outcomes) {
        const std::size_t d = ctx_.info.phys_dim;
        const std::size_t chi_r = site.gamma.extent(1);
        const bool scaled = ctx_.opts.policy.scaling == ScalingMode::PerSampleMax;
        ComplexTensor temp = splitk_and_reduce(st, site, /*all_reduce=*/true);

        auto nparts = balanced_partition(static_cast<std::size_t>(mr.count), ctx_.p2);
        auto [n0, n1] = nparts[rpos_];

        MeasureExchange ex;
        ex.weights.assign(mr.count * d, 0.0);
        ex.maxes.assign(scaled ? mr.count * d : 0, 0.0);
        for (std::size_t n = n0; n < n1; ++n) {
            const cdouble* row = temp.data() + n * chi_r * d;
            double* w = ex.weights.data() + n * d;
            double* mx = scaled ? ex.maxes.data() + n * d : nullptr;
            for (std::size_t b = 0; b < chi_r; ++b) {
                const double l2 = site.lambda[b] * site.lambda[b];
                for (std::size_t k = 0; k < d; ++k) {
                    w[k] += l2 * std::norm(row[b * d + k]);
                    if (mx) mx[k] = std::max(mx[k], component_mag(row[b * d + k]));
                }
            }
        }
        out_.stats.flops.measure_weight_macs +=
            static_cast<std::uint64_t>(n1 - n0) * chi_r * d;

        std::vector<double> draws = detail::measurement_draws(
            ctx_.opts.seed, mr.first, static_cast<std::size_t>(mr.count), site_idx);
        outcome_pipeline(ex, draws, d, n0, n1, ctx_.opts.policy.scaling, st.alive, outcomes.data(),
                         scales.data(), out_.stats.flops);
        exchange_outcomes(nparts, outcomes, scales, st.alive);
        select_env_rows(temp, outcomes.data(), scales.data(), st.alive, st.env);
    }

    void exchange_outcomes(const std::vector<std::pair<std::size_t, std::size_t>>& nparts,
                           std::vector<std::uint8_t>& outcomes, std::vector<double>& scales,
                           std::vector<std::uint8_t>& alive) {
        auto [n0, n1] = nparts[rpos_];
        Message mine = pack_outcomes(outcomes.data(), scales.data(), n0, n1);
        std::vector<Message> all = ring_all_gather(ctx_.grid, group_, mine, ctx_.cost, out_.comm);
        ++out_.comm.measurement_exchanges;
        for (std::size_t i = 0; i < ctx_.p2; ++i) {
            unpack_outcomes(all[i], nparts[i].first, nparts[i].second, outcomes.data(),
                            scales.data());
        }
        for (std::size_t n = 0; n < outcomes.size(); ++n) {
            if (outcomes[n] == kDeadOutcome) alive[n] = 0;
        }
    }

    void run_macro(const MacroRange& macro) {
        const std::size_t m = ctx_.num_sites;
        std::vector<MacroRange> micros = micro_ranges(ctx_.plan, macro);
        std::vector<MicroState> states(micros.size());
        for (std::size_t j = 0; j < micros.size(); ++j) {
            // env starts as the full (count, 1) ones row; the single-site
            // scheme immediately re-shards it along the (width 1) bond.
            states[j].alive.assign(micros[j].count, 1);
        }

        std::vector<SiteData> sites_cache(m);
        for (std::size_t i = 0; i < m; ++i) sites_cache[i] = load_site(ctx_.path, i);

        for (std::size_t j = 0; j < micros.size(); ++j) {
            MicroState& st = states[j];
            const MacroRange& mr = micros[j];
            std::vector<std::uint8_t> outcomes(mr.count, kDeadOutcome);
            std::vector<double> scales(mr.count, 1.0);

            ComplexTensor full_ones({static_cast<std::size_t>(mr.count), 1});
            for (std::size_t n = 0; n < mr.count; ++n) full_ones[n] = cdouble(1.0, 0.0);

            if (!ctx_.double_site) {
                // env is sharded along the contracted bond at every site;
                // site 0's bond has width 1, so one rank holds the ones row.
                auto parts0 = balanced_partition(1, ctx_.p2);
                st.env = ComplexTensor({static_cast<std::size_t>(mr.count),
                                        parts0[rpos_].second - parts0[rpos_].first});
                for (std::size_t n = 0; n < mr.count && st.env.extent(1) == 1; ++n) {
                    st.env[n] = cdouble(1.0, 0.0);
                }
                for (std::size_t i = 0; i < m; ++i) {
                    single_site_step(st, sites_cache[i], i, mr, scales, outcomes);
                    write_outcomes(mr, i, outcomes);
                }
            } else {
                st.env = std::move(full_ones);
                std::size_t i = 0;
                while (i < m) {
                    if (i + 1 < m) {
                        even_site_step(st, sites_cache[i], i, mr, scales, outcomes);
                        write_outcomes(mr, i, outcomes);
                        odd_site_step(st, sites_cache[i + 1], i + 1, mr, scales, outcomes);
                        write_outcomes(mr, i + 1, outcomes);
                        i += 2;
                    } else {
                        // odd chain length: trailing site runs the
                        // single-site protocol from a locally taken shard
                        auto lparts = balanced_partition(ctx_.info.bond_dims[i], ctx_.p2);
                        auto [l0, l1] = lparts[rpos_];
                        ComplexTensor shard({static_cast<std::size_t>(mr.count), l1 - l0});
                        for (std::size_t n = 0; n < mr.count; ++n) {
                            for (std::size_t b = l0; b < l1; ++b) {
                                shard.at2(n, b - l0) = st.env.at2(n, b);
                            }
                        }
                        st.env = std::move(shard);
                        single_site_step(st, sites_cache[i], i, mr, scales, outcomes);
                        write_outcomes(mr, i, outcomes);
                        i += 1;
                    }
                }
            }
            for (auto a : st.alive) {
                if (!a && rpos_ == 0) ++out_.stats.dead_samples;
            }
        }
    }

    void write_outcomes(const MacroRange& mr, std::size_t site, const std::vector<std::uint8_t>& o) {
        if (rpos_ != 0) return;  // group leader records the outcome column
        for (std::size_t n = 0; n < mr.count; ++n) {
            ctx_.outcome_base[(mr.first + n) * ctx_.num_sites + site] = o[n];
        }
    }
};

}  // namespace

ParallelResult run_tensor_parallel(const std::string& mps_path, const BatchPlan& plan_in,
                                   std::size_t p1, std::size_t p2, bool double_site,
                                   const SamplerOptions& opts, const CostModel& cost) {
    if (p1 < 1 || p2 < 1) throw ConfigError("tensor parallel needs p1, p2 >= 1");
    if (opts.schedule) throw ConfigError("bond schedules are applied by re-saving the state file");
    BatchPlan plan = plan_in;
    plan.normalize();
    opts.policy.validate();

    MpsFileInfo info = read_mps_info(mps_path);
    const std::size_t m = info.num_sites;

    ParallelResult res;
    res.batch.num_samples = plan.total_samples;
    res.batch.num_sites = m;
    res.batch.phys_dim = info.phys_dim;
    res.batch.seed = opts.seed;
    res.batch.outcomes.assign(plan.total_samples * m, kDeadOutcome);

    WorkerGrid grid(p1 * p2);
    std::vector<std::vector<std::size_t>> group_ranks(p1);
    for (std::size_t g = 0; g < p1; ++g) {
        for (std::size_t r = 0; r < p2; ++r) group_ranks[g].push_back(g * p2 + r);
    }
    std::vector<WorkerOutput> outs(p1 * p2);

    TensorWorkerCtx ctx{mps_path, info,       plan, opts, cost, grid, group_ranks,
                        p1,       p2,         double_site, res.batch.outcomes.data(), m};

    auto body = [&](std::size_t g, std::size_t r) {
        WorkerOutput& out = outs[g * p2 + r];
        try {
            TensorWorker(ctx, g, r, out).run();
        } catch (const std::exception& e) {
            out.error = std::make_exception_ptr(Error("worker rank (" + std::to_string(g) + "," +
                                                      std::to_string(r) + ") failed: " + e.what()));
            grid.close_all();
        }
    };

    std::vector<std::thread> threads;
    threads.reserve(p1 * p2);
    for (std::size_t g = 0; g < p1; ++g) {
        for (std::size_t r = 0; r < p2; ++r) threads.emplace_back(body, g, r);
    }
    for (auto& t : threads) t.join();
    merge_worker_outputs(outs, res.stats, res.comm);
    res.stats.dead_samples = res.batch.dead_count();
    return res;
}

}  // namespace mpsamp
