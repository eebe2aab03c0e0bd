#pragma once

// In-process virtual-rank cluster. G workers execute the same per-rank
// program; collectives are rendezvous points on per-group channels. Data
// movement is semantic (deposit pointers, combine, copy out) while byte
// accounting follows ring-algorithm closed forms. Reductions always combine
// contributions in ascending coordinate order unless the cluster is put in
// the unordered mode, so results are bit-identical across schedulers and
// reruns.
//
// Byte counters are kept as exact integers in "group-size-ths" of a byte
// (ring formulas divide by the group size g, which need not divide the
// buffer). numer = g * bytes, so sums over split buffers stay exact.

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>
#include <vector>

#include "plexuskit/dense.hpp"
#include "plexuskit/grid.hpp"
#include "plexuskit/layout.hpp"

namespace plexuskit {

enum class ConcatDim { Rows, Cols };

struct CommStats {
  struct Counter {
    u64 calls = 0;
    u64 ring_numer = 0;  // g * bytes moved per rank under the ring model
  };
  // [axis][op] with op order: all_gather, all_reduce, reduce_scatter
  std::array<std::array<Counter, 3>, 3> coll{};
  u64 spmm_flops = 0;
  u64 gemm_flops = 0;
  double collective_seconds = 0;

  Counter& at(Axis axis, CollOp op) {
    return coll[static_cast<int>(axis)][static_cast<int>(op)];
  }
  const Counter& at(Axis axis, CollOp op) const {
    return coll[static_cast<int>(axis)][static_cast<int>(op)];
  }

  double bytes(Axis axis, CollOp op, const GridConfig& grid) const {
    return static_cast<double>(at(axis, op).ring_numer) / grid.extent(axis);
  }

  double total_bytes(const GridConfig& grid) const {
    double sum = 0;
    for (int a = 0; a < 3; ++a)
      for (int o = 0; o < 3; ++o)
        sum += static_cast<double>(coll[a][o].ring_numer) /
               grid.extent(static_cast<Axis>(a));
    return sum;
  }
};

// Thrown on ranks that were interrupted because another rank failed.
class ClusterAborted : public std::runtime_error {
public:
  ClusterAborted() : std::runtime_error("cluster aborted by another rank") {}
};

namespace detail {

// Caps how many workers run simultaneously. In round-robin (lockstep) mode a
// single permit is handed to waiting ranks in cyclic rank order, giving
// logically single-threaded, rank-stepped execution for debugging.
class RunGate {
public:
  RunGate(int max_running, bool round_robin, int nranks)
      : max_running_(max_running > 0 ? max_running : nranks),
        rr_(round_robin),
        nranks_(nranks),
        waiting_(nranks, false) {
    if (rr_) max_running_ = 1;
  }

  void acquire(int rank) {
    std::unique_lock lk(mu_);
    waiting_[rank] = true;
    cv_.wait(lk, [&] {
      return running_ < max_running_ && (!rr_ || next_waiting() == rank);
    });
    waiting_[rank] = false;
    ++running_;
    if (rr_) last_ = rank;
  }

  void release(int) {
    std::lock_guard lk(mu_);
    --running_;
    cv_.notify_all();
  }

private:
  int next_waiting() const {
    for (int i = 1; i <= nranks_; ++i) {
      int r = (last_ + i) % nranks_;
      if (waiting_[r]) return r;
    }
    return -1;
  }

  std::mutex mu_;
  std::condition_variable cv_;
  int running_ = 0;
  int max_running_;
  bool rr_;
  int nranks_;
  std::vector<bool> waiting_;
  int last_ = -1;
};

// Rendezvous channel for one process group. Members deposit a pointer, the
// last arrival combines all contributions, everyone leaves with a shared
// pointer to the combined value.
class GroupChannel {
public:
  GroupChannel(Axis axis, std::vector<int> members)
      : axis_(axis), members_(std::move(members)), slots_(members_.size()) {}

  Axis axis() const { return axis_; }
  const std::vector<int>& members() const { return members_; }
  int size() const { return static_cast<int>(members_.size()); }

  // combine(slots, arrival_order) -> shared_ptr<const void>.
  using CombineFn = std::function<std::shared_ptr<const void>(
      const std::vector<const void*>&, const std::vector<int>&)>;

  std::shared_ptr<const void> exchange(int pos, const void* in,
                                       const CombineFn& combine,
                                       const std::atomic<bool>& aborted) {
    std::unique_lock lk(mu_);
    if (aborted.load()) throw ClusterAborted();
    const u64 gen = generation_;
    slots_[pos] = in;
    arrival_.push_back(pos);
    if (arrival_.size() == slots_.size()) {
      std::shared_ptr<const void> res;
      try {
        res = combine(slots_, arrival_);
      } catch (...) {
        result_ = nullptr;
        arrival_.clear();
        ++generation_;
        cv_.notify_all();
        throw;
      }
      result_ = res;
      arrival_.clear();
      ++generation_;
      cv_.notify_all();
      return res;
    }
    cv_.wait(lk, [&] { return generation_ != gen || aborted.load(); });
    if (generation_ == gen || !result_) throw ClusterAborted();
    return result_;
  }

  void notify_abort() {
    std::lock_guard lk(mu_);
    cv_.notify_all();
  }

private:
  Axis axis_;
  std::vector<int> members_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::vector<const void*> slots_;
  std::vector<int> arrival_;
  std::shared_ptr<const void> result_;
  u64 generation_ = 0;
};

}  // namespace detail

struct ClusterOptions {
  // 0 means: use PLEXUSKIT_THREADS if set, otherwise one per rank.
  int max_running = 0;
  bool lockstep = false;
  bool deterministic = true;  // ascending-coordinate reduction order
};

class RankCtx;

// Owns the channels and worker threads for one grid execution.
class Cluster {
public:
  Cluster(GridConfig grid, ClusterOptions opts)
      : grid_(std::move(grid)), opts_(opts) {
    int cap = opts_.max_running;
    if (cap == 0) {
      if (const char* env = std::getenv("PLEXUSKIT_THREADS"))
        cap = std::max(1, std::atoi(env));
      else
        cap = grid_.size();
    }
    gate_ = std::make_unique<detail::RunGate>(cap, opts_.lockstep, grid_.size());
    for (int a = 0; a < 3; ++a) {
      Axis axis = static_cast<Axis>(a);
      for (int gid = 0; gid < grid_.group_count(axis); ++gid) {
        auto members = grid_.group_members(axis, gid);
        // group members must differ only along this axis
        for (int r : members) {
          Coords c = grid_.coords_of(r);
          check(grid_.group_id(axis, c) == gid,
                "grid group construction is inconsistent");
        }
        channels_[a].push_back(
            std::make_unique<detail::GroupChannel>(axis, std::move(members)));
      }
    }
  }

  const GridConfig& grid() const { return grid_; }
  const ClusterOptions& options() const { return opts_; }

  // Runs fn on every rank; per-rank CommStats are returned in rank order.
  std::vector<CommStats> run(const std::function<void(RankCtx&)>& fn);

private:
  friend class RankCtx;

  detail::GroupChannel& channel(Axis axis, Coords c) {
    return *channels_[static_cast<int>(axis)][grid_.group_id(axis, c)];
  }

  void abort_all() {
    aborted_.store(true);
    for (auto& per_axis : channels_)
      for (auto& ch : per_axis) ch->notify_abort();
  }

  GridConfig grid_;
  ClusterOptions opts_;
  std::unique_ptr<detail::RunGate> gate_;
  std::array<std::vector<std::unique_ptr<detail::GroupChannel>>, 3> channels_;
  std::atomic<bool> aborted_{false};
};

// Per-rank handle passed to the worker function: coordinates, collectives and
// traffic/FLOP counters.
class RankCtx {
public:
  RankCtx(Cluster& cluster, int rank)
      : cluster_(cluster), rank_(rank), coords_(cluster.grid_.coords_of(rank)) {}

  const GridConfig& grid() const { return cluster_.grid_; }
  int rank() const { return rank_; }
  Coords coords() const { return coords_; }
  CommStats& stats() { return stats_; }
  bool deterministic() const { return cluster_.opts_.deterministic; }

  // Concatenation in ascending coordinate order. Chunk sizes may differ
  // along the concatenation dimension (ceil splits), the other dimension
  // must agree.
  template <typename T>
  DenseMatrix<T> all_gather(const DenseMatrix<T>& local, Axis axis,
                            ConcatDim dim = ConcatDim::Rows) {
    auto t0 = std::chrono::steady_clock::now();
    auto& ch = cluster_.channel(axis, coords_);
    const int g = ch.size();
    auto result = exchange<T>(ch, local, [&ch, dim](
                                             const std::vector<const void*>& s,
                                             const std::vector<int>&) {
      std::vector<const DenseMatrix<T>*> mats(s.size());
      for (std::size_t i = 0; i < s.size(); ++i) {
        mats[i] = static_cast<const DenseMatrix<T>*>(s[i]);
        const bool ok = dim == ConcatDim::Rows
                            ? mats[i]->cols() == mats[0]->cols()
                            : mats[i]->rows() == mats[0]->rows();
        if (!ok)
          throw ContractError(
              "all_gather: rank " + std::to_string(ch.members()[i]) +
              " supplied shape " + mats[i]->shape_str() + " but rank " +
              std::to_string(ch.members()[0]) + " supplied " +
              mats[0]->shape_str());
      }
      auto out = dim == ConcatDim::Rows
                     ? DenseMatrix<T>::concat_rows(
                           std::span<const DenseMatrix<T>* const>(mats))
                     : DenseMatrix<T>::concat_cols(
                           std::span<const DenseMatrix<T>* const>(mats));
      return std::shared_ptr<const void>(
          std::make_shared<DenseMatrix<T>>(std::move(out)));
    });
    auto& ctr = stats_.at(axis, CollOp::AllGather);
    ctr.calls++;
    ctr.ring_numer += static_cast<u64>(g - 1) * result->bytes();
    stats_.collective_seconds +=
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    return *result;
  }

  // Elementwise sum across the group; every member gets the same result.
  template <typename T>
  DenseMatrix<T> all_reduce(const DenseMatrix<T>& local, Axis axis) {
    auto t0 = std::chrono::steady_clock::now();
    auto& ch = cluster_.channel(axis, coords_);
    const int g = ch.size();
    auto result = exchange<T>(ch, local, sum_combine<T>(ch, deterministic()));
    auto& ctr = stats_.at(axis, CollOp::AllReduce);
    ctr.calls++;
    ctr.ring_numer += 2 * static_cast<u64>(g - 1) * local.bytes();
    stats_.collective_seconds +=
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    return *result;
  }

  // Sum across the group, then keep this rank's row chunk (ceil-split).
  template <typename T>
  DenseMatrix<T> reduce_scatter(const DenseMatrix<T>& local, Axis axis) {
    auto t0 = std::chrono::steady_clock::now();
    auto& ch = cluster_.channel(axis, coords_);
    const int g = ch.size();
    const int pos = coords_.along(axis);
    auto result = exchange<T>(ch, local, sum_combine<T>(ch, deterministic()));
    auto& ctr = stats_.at(axis, CollOp::ReduceScatter);
    ctr.calls++;
    ctr.ring_numer += static_cast<u64>(g - 1) * local.bytes();
    stats_.collective_seconds +=
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    const std::size_t r0 = chunk_start(result->rows(), g, pos);
    const std::size_t r1 = chunk_start(result->rows(), g, pos + 1);
    return result->row_block(r0, r1);
  }

private:
  friend class Cluster;

  template <typename T>
  static detail::GroupChannel::CombineFn sum_combine(detail::GroupChannel& ch,
                                                     bool deterministic) {
    return [&ch, deterministic](const std::vector<const void*>& s,
                                const std::vector<int>& arrival)
               -> std::shared_ptr<const void> {
      const auto* first = static_cast<const DenseMatrix<T>*>(s[0]);
      for (std::size_t i = 1; i < s.size(); ++i) {
        const auto* m = static_cast<const DenseMatrix<T>*>(s[i]);
        if (!m->same_shape(*first))
          throw ContractError(
              "all_reduce: rank " + std::to_string(ch.members()[i]) +
              " supplied shape " + m->shape_str() + " but rank " +
              std::to_string(ch.members()[0]) + " supplied " +
              first->shape_str());
      }
      std::vector<int> order(s.size());
      for (std::size_t i = 0; i < s.size(); ++i) order[i] = static_cast<int>(i);
      if (!deterministic) order = arrival;
      auto acc = std::make_shared<DenseMatrix<T>>(
          *static_cast<const DenseMatrix<T>*>(s[order[0]]));
      for (std::size_t i = 1; i < order.size(); ++i) {
        const auto* m = static_cast<const DenseMatrix<T>*>(s[order[i]]);
        for (std::size_t k = 0; k < acc->size(); ++k)
          acc->data()[k] += m->data()[k];
      }
      return acc;
    };
  }

  template <typename T>
  std::shared_ptr<const DenseMatrix<T>> exchange(
      detail::GroupChannel& ch, const DenseMatrix<T>& local,
      const detail::GroupChannel::CombineFn& combine) {
    const int pos = coords_.along(ch.axis());
    if (ch.size() == 1) {
      // singleton group: identity, nothing moves
      std::vector<const void*> slots{&local};
      std::vector<int> order{0};
      auto res = combine(slots, order);
      return std::static_pointer_cast<const DenseMatrix<T>>(res);
    }
    cluster_.gate_->release(rank_);
    std::shared_ptr<const void> res;
    try {
      res = ch.exchange(pos, &local, combine, cluster_.aborted_);
    } catch (...) {
      cluster_.gate_->acquire(rank_);
      throw;
    }
    cluster_.gate_->acquire(rank_);
    return std::static_pointer_cast<const DenseMatrix<T>>(res);
  }

  Cluster& cluster_;
  int rank_;
  Coords coords_;
  CommStats stats_;
};

inline std::vector<CommStats> Cluster::run(
    const std::function<void(RankCtx&)>& fn) {
  const int g = grid_.size();
  aborted_.store(false);
  std::vector<CommStats> stats(g);
  std::vector<std::exception_ptr> errors(g);
  std::vector<std::thread> workers;
  workers.reserve(g);
  for (int r = 0; r < g; ++r) {
    workers.emplace_back([&, r] {
      gate_->acquire(r);
      RankCtx ctx(*this, r);
      try {
        fn(ctx);
      } catch (...) {
        errors[r] = std::current_exception();
        abort_all();
      }
      stats[r] = ctx.stats();
      gate_->release(r);
    });
  }
  for (auto& w : workers) w.join();
  // surface the root cause, not the secondary aborts
  std::exception_ptr first;
  for (int r = 0; r < g; ++r) {
    if (!errors[r]) continue;
    try {
      std::rethrow_exception(errors[r]);
    } catch (const ClusterAborted&) {
      if (!first) first = errors[r];
    } catch (...) {
      std::rethrow_exception(errors[r]);
    }
  }
  if (first) std::rethrow_exception(first);
  return stats;
}

}  // namespace plexuskit
