#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "mpsamp/tensor.hpp"

namespace mpsamp {

using Message = std::vector<std::uint8_t>;

// Injected link parameters for the analytic communication-time model; zero
// bandwidth means "infinitely fast" (modeled transfer time 0).
struct CostModel {
    double bw_broadcast = 0;        // bytes/second
    double bw_all_reduce = 0;
    double bw_reduce_scatter = 0;
    double bw_all_gather = 0;
    double latency_seconds = 0;     // per message step
};

struct CommStats {
    std::uint64_t broadcasts = 0;
    std::uint64_t all_reduces = 0;
    std::uint64_t reduce_scatters = 0;
    std::uint64_t all_gathers = 0;

    std::uint64_t bytes_sent = 0;
    std::uint64_t bytes_received = 0;
    std::uint64_t broadcast_bytes = 0;       // payload bytes pushed by roots
    std::uint64_t all_reduce_bytes = 0;      // wire bytes sent, per class
    std::uint64_t reduce_scatter_bytes = 0;
    std::uint64_t all_gather_bytes = 0;

    // Logical counters kept by the executors: chi-sized per-site reductions
    // vs the small per-site measurement gathers.
    std::uint64_t env_collectives = 0;
    std::uint64_t measurement_exchanges = 0;

    double modeled_seconds = 0;  // per-rank sum; merge keeps the max (critical path)

    CommStats& merge(const CommStats& o);
};

// Lossless FIFO byte channel between one ordered worker pair.
class Channel {
  public:
    void send(Message msg);
    Message recv();
    void close();

  private:
    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<Message> queue_;
    bool closed_ = false;
};

// p workers with a channel per ordered pair. Collectives are SPMD free
// functions invoked from each participating worker thread.
class WorkerGrid {
  public:
    explicit WorkerGrid(std::size_t num_workers);

    std::size_t size() const { return p_; }
    void send(std::size_t from, std::size_t to, Message msg);
    Message recv(std::size_t to, std::size_t from);
    void close_all();

  private:
    std::size_t p_;
    std::vector<std::unique_ptr<Channel>> channels_;  // [from * p + to]
};

// A collective's participant set: global ranks plus this worker's position.
struct SubGroup {
    const std::vector<std::size_t>* ranks = nullptr;
    std::size_t me = 0;  // index into ranks

    std::size_t size() const { return ranks->size(); }
    std::size_t rank_at(std::size_t i) const { return (*ranks)[i]; }
};

// Balanced [begin, end) partition of `extent` into `parts` ranges whose sizes
// differ by at most one.
std::vector<std::pair<std::size_t, std::size_t>> balanced_partition(std::size_t extent,
                                                                    std::size_t parts);

// Root pushes the payload verbatim to every other rank ((p-1) * B bytes).
void broadcast_bytes(WorkerGrid& grid, const SubGroup& group, std::size_t root_index, Message& data,
                     const CostModel& cost, CommStats& stats);

// Ring reduce-scatter over a flat double buffer; shard boundaries are element
// ranges per rank position. Per rank wire volume is (p-1)/p of the buffer for
// balanced shards. The per-shard sum order is a fixed linear chain, so
// results are run-to-run deterministic.
std::vector<double> ring_reduce_scatter(WorkerGrid& grid, const SubGroup& group,
                                        std::span<const double> local,
                                        const std::vector<std::pair<std::size_t, std::size_t>>& shards,
                                        const CostModel& cost, CommStats& stats);

// Ring reduce-scatter followed by ring all-gather: every rank ends with the
// identical elementwise sum; per rank wire volume 2(p-1)/p of the buffer.
void ring_all_reduce(WorkerGrid& grid, const SubGroup& group, std::vector<double>& data,
                     const CostModel& cost, CommStats& stats);

// Each rank contributes one message; all ranks end with every contribution
// indexed by rank position.
std::vector<Message> ring_all_gather(WorkerGrid& grid, const SubGroup& group, const Message& mine,
                                     const CostModel& cost, CommStats& stats);

// Tensor-level wrappers used by the executors and exercised by tests.
void broadcast(WorkerGrid& grid, const SubGroup& group, std::size_t root_index, ComplexTensor& t,
               const CostModel& cost, CommStats& stats);
ComplexTensor all_reduce_sum(WorkerGrid& grid, const SubGroup& group, const ComplexTensor& local,
                             const CostModel& cost, CommStats& stats);
// Scatters along axis 0 into balanced shards; concatenating the outputs over
// ranks reproduces all_reduce_sum bit-exactly.
ComplexTensor reduce_scatter_sum(WorkerGrid& grid, const SubGroup& group,
                                 const ComplexTensor& local, const CostModel& cost,
                                 CommStats& stats);

// Byte (de)serialization helpers shared with the executors.
Message pack_doubles(std::span<const double> v);
std::vector<double> unpack_doubles(const Message& m);
Message pack_tensor(const ComplexTensor& t);
void unpack_tensor_into(const Message& m, ComplexTensor& t);

}  // namespace mpsamp
