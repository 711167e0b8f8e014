#include "mpsamp/collective.hpp"

#include <cstring>

#include "mpsamp/errors.hpp"

namespace mpsamp {

namespace {

double transfer_seconds(std::uint64_t bytes, double bandwidth, double latency,
                        std::uint64_t steps) {
    double t = latency * static_cast<double>(steps);
    if (bandwidth > 0) t += static_cast<double>(bytes) / bandwidth;
    return t;
}

}  // namespace

CommStats& CommStats::merge(const CommStats& o) {
    broadcasts += o.broadcasts;
    all_reduces += o.all_reduces;
    reduce_scatters += o.reduce_scatters;
    all_gathers += o.all_gathers;
    bytes_sent += o.bytes_sent;
    bytes_received += o.bytes_received;
    broadcast_bytes += o.broadcast_bytes;
    all_reduce_bytes += o.all_reduce_bytes;
    reduce_scatter_bytes += o.reduce_scatter_bytes;
    all_gather_bytes += o.all_gather_bytes;
    env_collectives += o.env_collectives;
    measurement_exchanges += o.measurement_exchanges;
    modeled_seconds = std::max(modeled_seconds, o.modeled_seconds);
    return *this;
}

void Channel::send(Message msg) {
    {
        std::lock_guard<std::mutex> lock(mu_);
        if (closed_) throw Error("worker failure: channel closed");
        queue_.push_back(std::move(msg));
    }
    cv_.notify_one();
}

Message Channel::recv() {
    std::unique_lock<std::mutex> lock(mu_);
    cv_.wait(lock, [this] { return !queue_.empty() || closed_; });
    if (queue_.empty()) throw Error("worker failure: channel closed");
    Message msg = std::move(queue_.front());
    queue_.pop_front();
    return msg;
}

void Channel::close() {
    {
        std::lock_guard<std::mutex> lock(mu_);
        closed_ = true;
    }
    cv_.notify_all();
}

WorkerGrid::WorkerGrid(std::size_t num_workers) : p_(num_workers) {
    channels_.resize(p_ * p_);
    for (auto& c : channels_) c = std::make_unique<Channel>();
}

void WorkerGrid::send(std::size_t from, std::size_t to, Message msg) {
    channels_[from * p_ + to]->send(std::move(msg));
}

Message WorkerGrid::recv(std::size_t to, std::size_t from) {
    return channels_[from * p_ + to]->recv();
}

void WorkerGrid::close_all() {
    for (auto& c : channels_) c->close();
}

std::vector<std::pair<std::size_t, std::size_t>> balanced_partition(std::size_t extent,
                                                                    std::size_t parts) {
    std::vector<std::pair<std::size_t, std::size_t>> out(parts);
    std::size_t base = extent / parts;
    std::size_t rem = extent % parts;
    std::size_t at = 0;
    for (std::size_t i = 0; i < parts; ++i) {
        std::size_t len = base + (i < rem ? 1 : 0);
        out[i] = {at, at + len};
        at += len;
    }
    return out;
}

void broadcast_bytes(WorkerGrid& grid, const SubGroup& group, std::size_t root_index,
                     Message& data, const CostModel& cost, CommStats& stats) {
    const std::size_t p = group.size();
    ++stats.broadcasts;
    if (p == 1) return;
    const std::size_t root = group.rank_at(root_index);
    const std::size_t self = group.rank_at(group.me);
    if (group.me == root_index) {
        for (std::size_t i = 0; i < p; ++i) {
            if (i == root_index) continue;
            grid.send(root, group.rank_at(i), data);
            stats.bytes_sent += data.size();
            stats.broadcast_bytes += data.size();
        }
        stats.modeled_seconds +=
            transfer_seconds(data.size() * (p - 1), cost.bw_broadcast, cost.latency_seconds, p - 1);
    } else {
        data = grid.recv(self, root);
        stats.bytes_received += data.size();
        stats.modeled_seconds +=
            transfer_seconds(data.size(), cost.bw_broadcast, cost.latency_seconds, 1);
    }
}

namespace {

// Ring step bookkeeping shared by reduce-scatter and all-gather. Algorithm
// chunk j is relabeled to logical shard (j + p - 1) % p so that rank position
// r finishes owning logical shard r.
struct RingCtx {
    WorkerGrid& grid;
    const SubGroup& group;
    std::size_t p, me, next, prev;

    RingCtx(WorkerGrid& g, const SubGroup& grp)
        : grid(g),
          group(grp),
          p(grp.size()),
          me(grp.me),
          next(grp.rank_at((grp.me + 1) % grp.size())),
          prev(grp.rank_at((grp.me + grp.size() - 1) % grp.size())) {}

    std::size_t self() const { return group.rank_at(me); }
};

}  // namespace

std::vector<double> ring_reduce_scatter(WorkerGrid& grid, const SubGroup& group,
                                        std::span<const double> local,
                                        const std::vector<std::pair<std::size_t, std::size_t>>& shards,
                                        const CostModel& cost, CommStats& stats) {
    const std::size_t p = group.size();
    ++stats.reduce_scatters;
    if (shards.size() != p) throw DimensionError("reduce_scatter shard count != group size");
    if (p == 1) return {local.begin(), local.end()};

    RingCtx ring(grid, group);
    std::vector<double> working(local.begin(), local.end());
    auto alg_range = [&](std::size_t j) { return shards[(j + p - 1) % p]; };

    std::uint64_t sent = 0, steps = 0;
    for (std::size_t s = 0; s + 1 < p; ++s) {
        const std::size_t cs = (ring.me + p - s) % p;
        const std::size_t cr = (ring.me + p - s - 1) % p;
        auto [b0, e0] = alg_range(cs);
        Message out = pack_doubles(std::span<const double>(working.data() + b0, e0 - b0));
        grid.send(ring.self(), ring.next, std::move(out));
        const std::uint64_t out_bytes = (e0 - b0) * sizeof(double);
        sent += out_bytes;
        ++steps;

        Message in = grid.recv(ring.self(), ring.prev);
        stats.bytes_received += in.size();
        auto [b1, e1] = alg_range(cr);
        std::vector<double> incoming = unpack_doubles(in);
        if (incoming.size() != e1 - b1) throw DimensionError("reduce_scatter shard size mismatch");
        // incoming carries the chain prefix; addition is elementwise.
        for (std::size_t i = 0; i < incoming.size(); ++i) working[b1 + i] += incoming[i];
    }
    stats.bytes_sent += sent;
    stats.reduce_scatter_bytes += sent;
    stats.modeled_seconds += transfer_seconds(sent, cost.bw_reduce_scatter, cost.latency_seconds, steps);

    auto [mb, me_] = alg_range((ring.me + 1) % p);
    return {working.begin() + static_cast<std::ptrdiff_t>(mb),
            working.begin() + static_cast<std::ptrdiff_t>(me_)};
}

std::vector<Message> ring_all_gather(WorkerGrid& grid, const SubGroup& group, const Message& mine,
                                     const CostModel& cost, CommStats& stats) {
    const std::size_t p = group.size();
    ++stats.all_gathers;
    std::vector<Message> all(p);
    all[group.me] = mine;
    if (p == 1) return all;

    RingCtx ring(grid, group);
    std::uint64_t sent = 0, steps = 0;
    for (std::size_t s = 0; s + 1 < p; ++s) {
        const std::size_t cs = (ring.me + p - s) % p;
        const std::size_t cr = (ring.me + p - s - 1) % p;
        grid.send(ring.self(), ring.next, all[cs]);
        sent += all[cs].size();
        ++steps;
        all[cr] = grid.recv(ring.self(), ring.prev);
        stats.bytes_received += all[cr].size();
    }
    stats.bytes_sent += sent;
    stats.all_gather_bytes += sent;
    stats.modeled_seconds += transfer_seconds(sent, cost.bw_all_gather, cost.latency_seconds, steps);
    return all;
}

void ring_all_reduce(WorkerGrid& grid, const SubGroup& group, std::vector<double>& data,
                     const CostModel& cost, CommStats& stats) {
    const std::size_t p = group.size();
    ++stats.all_reduces;
    if (p == 1) return;

    // Reduce-scatter then all-gather over the same balanced element chunks;
    // wire volume per rank is 2(p-1)/p of the buffer. The class counters
    // attribute the traffic to all_reduce.
    CommStats sub;
    auto shards = balanced_partition(data.size(), p);
    std::vector<double> owned = ring_reduce_scatter(grid, group, data, shards, CostModel{}, sub);
    std::vector<Message> all =
        ring_all_gather(grid, group, pack_doubles(owned), CostModel{}, sub);
    for (std::size_t i = 0; i < p; ++i) {
        auto [b, e] = shards[i];
        std::vector<double> chunk = unpack_doubles(all[i]);
        if (chunk.size() != e - b) throw DimensionError("all_reduce chunk size mismatch");
        std::memcpy(data.data() + b, chunk.data(), chunk.size() * sizeof(double));
    }
    const std::uint64_t sent = sub.bytes_sent;
    stats.bytes_sent += sent;
    stats.bytes_received += sub.bytes_received;
    stats.all_reduce_bytes += sent;
    stats.modeled_seconds +=
        transfer_seconds(sent, cost.bw_all_reduce, cost.latency_seconds, 2 * (p - 1));
}

void broadcast(WorkerGrid& grid, const SubGroup& group, std::size_t root_index, ComplexTensor& t,
               const CostModel& cost, CommStats& stats) {
    Message m;
    if (group.me == root_index) m = pack_tensor(t);
    broadcast_bytes(grid, group, root_index, m, cost, stats);
    if (group.me != root_index) unpack_tensor_into(m, t);
}

ComplexTensor all_reduce_sum(WorkerGrid& grid, const SubGroup& group, const ComplexTensor& local,
                             const CostModel& cost, CommStats& stats) {
    if (local.rank() == 0) throw DimensionError("all_reduce needs a shaped tensor");
    const std::size_t p = group.size();
    ++stats.all_reduces;
    ComplexTensor out = local;
    if (p == 1) return out;

    // Reduce-scatter + all-gather over the same axis-0 shards reduce_scatter_sum
    // uses, so concatenating reduce_scatter outputs reproduces this bit-exactly.
    const std::size_t lead = local.extent(0);
    const std::size_t row = local.size() / (lead == 0 ? 1 : lead);
    auto lead_parts = balanced_partition(lead, p);
    std::vector<std::pair<std::size_t, std::size_t>> shards(p);
    for (std::size_t i = 0; i < p; ++i) {
        shards[i] = {lead_parts[i].first * row * 2, lead_parts[i].second * row * 2};
    }
    std::span<const double> data(reinterpret_cast<const double*>(local.data()), 2 * local.size());

    CommStats sub;
    std::vector<double> mine = ring_reduce_scatter(grid, group, data, shards, CostModel{}, sub);
    std::vector<Message> all = ring_all_gather(grid, group, pack_doubles(mine), CostModel{}, sub);
    double* dst = reinterpret_cast<double*>(out.data());
    for (std::size_t i = 0; i < p; ++i) {
        std::vector<double> chunk = unpack_doubles(all[i]);
        if (chunk.size() != shards[i].second - shards[i].first) {
            throw DimensionError("all_reduce chunk size mismatch");
        }
        std::memcpy(dst + shards[i].first, chunk.data(), chunk.size() * sizeof(double));
    }
    stats.bytes_sent += sub.bytes_sent;
    stats.bytes_received += sub.bytes_received;
    stats.all_reduce_bytes += sub.bytes_sent;
    stats.modeled_seconds +=
        transfer_seconds(sub.bytes_sent, cost.bw_all_reduce, cost.latency_seconds, 2 * (p - 1));
    return out;
}

ComplexTensor reduce_scatter_sum(WorkerGrid& grid, const SubGroup& group,
                                 const ComplexTensor& local, const CostModel& cost,
                                 CommStats& stats) {
    if (local.rank() == 0) throw DimensionError("reduce_scatter needs a shaped tensor");
    const std::size_t lead = local.extent(0);
    const std::size_t row = local.size() / (lead == 0 ? 1 : lead);
    auto lead_parts = balanced_partition(lead, group.size());
    std::vector<std::pair<std::size_t, std::size_t>> shards(group.size());
    for (std::size_t i = 0; i < group.size(); ++i) {
        shards[i] = {lead_parts[i].first * row * 2, lead_parts[i].second * row * 2};
    }
    std::span<const double> data(reinterpret_cast<const double*>(local.data()), 2 * local.size());
    std::vector<double> mine = ring_reduce_scatter(grid, group, data, shards, cost, stats);

    auto [b, e] = lead_parts[group.me];
    std::vector<std::size_t> shape = local.shape();
    shape[0] = e - b;
    ComplexTensor out(shape);
    std::memcpy(out.data(), mine.data(), mine.size() * sizeof(double));
    return out;
}

Message pack_doubles(std::span<const double> v) {
    Message m(v.size() * sizeof(double));
    std::memcpy(m.data(), v.data(), m.size());
    return m;
}

std::vector<double> unpack_doubles(const Message& m) {
    std::vector<double> v(m.size() / sizeof(double));
    std::memcpy(v.data(), m.data(), m.size());
    return v;
}

Message pack_tensor(const ComplexTensor& t) {
    // rank, extents, then raw complex values
    Message m((1 + t.rank()) * sizeof(std::uint64_t) + t.size() * sizeof(cdouble));
    auto* p = m.data();
    std::uint64_t r = t.rank();
    std::memcpy(p, &r, 8);
    p += 8;
    for (std::size_t i = 0; i < t.rank(); ++i) {
        std::uint64_t e = t.extent(i);
        std::memcpy(p, &e, 8);
        p += 8;
    }
    std::memcpy(p, t.data(), t.size() * sizeof(cdouble));
    return m;
}

void unpack_tensor_into(const Message& m, ComplexTensor& t) {
    const auto* p = m.data();
    std::uint64_t r;
    std::memcpy(&r, p, 8);
    p += 8;
    std::vector<std::size_t> shape(r);
    for (std::uint64_t i = 0; i < r; ++i) {
        std::uint64_t e;
        std::memcpy(&e, p, 8);
        p += 8;
        shape[i] = e;
    }
    t = ComplexTensor(std::move(shape));
    std::memcpy(t.data(), p, t.size() * sizeof(cdouble));
}

}  // namespace mpsamp
