#pragma once

// The 3D-parallel GCN layer. Each rank executes the same sequence:
//
//   forward:  [layer 0 only] all-gather F along row_shard
//             H = SpMM(A_shard, F) in row blocks, all-reduce each block
//             along inner, concatenate
//             all-gather W along row_shard
//             Q = GEMM(H, W), all-reduce along col_shard
//             F_out = relu(Q)   (raw logits on the last layer)
//
//   backward: dQ = dF ⊙ relu'(Q)
//             dW = (GEMM(dQ^T, H))^T, reduce-scatter along row_shard
//             all-gather W along row_shard
//             dH = GEMM(dQ, W^T), all-reduce along inner
//             dF = SpMM(A_shard^T, dH); reduce-scatter along row_shard on
//             layer 0, all-reduce otherwise
//
// Layer l uses the adjacency shard of plane l%3 and permutation parity l%2;
// shard transposes are precomputed at setup.

#include <algorithm>
#include <array>
#include <chrono>
#include <optional>
#include <utility>
#include <vector>

#include "plexuskit/cluster.hpp"
#include "plexuskit/csr.hpp"
#include "plexuskit/kernels.hpp"
#include "plexuskit/layout.hpp"

namespace plexuskit {

template <typename T>
struct AdjacencyShard {
  CsrMatrix<T> a;   // (row_shard block) x (inner block)
  CsrMatrix<T> at;  // transpose, precomputed for the backward pass
};

// At most min(6, L) shards per rank: 3 planes x 2 permutation parities.
template <typename T>
class AdjacencyShardSet {
public:
  void put(int plane, int parity, AdjacencyShard<T> shard) {
    shards_[plane * 2 + parity] = std::move(shard);
  }
  const AdjacencyShard<T>& get(const LayerLayout& lay) const {
    const auto& slot = shards_[lay.plane() * 2 + lay.parity()];
    check(slot.has_value(), std::string("no adjacency shard for plane ") +
                                plane_name(lay.plane()) + " parity " +
                                std::to_string(lay.parity()));
    return *slot;
  }
  bool has(int plane, int parity) const {
    return shards_[plane * 2 + parity].has_value();
  }
  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& s : shards_)
      if (s) ++n;
    return n;
  }

private:
  std::array<std::optional<AdjacencyShard<T>>, 6> shards_;
};

// The (plane, parity) pairs a rank needs for an L-layer network.
inline std::vector<std::pair<int, int>> needed_adjacency_keys(int num_layers) {
  std::vector<std::pair<int, int>> keys;
  for (int l = 0; l < num_layers && keys.size() < 6; ++l) {
    std::pair<int, int> k{l % 3, l % 2};
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
  }
  return keys;
}

// Global (row, col) ranges of the adjacency block a rank holds on a plane.
struct BlockRange {
  std::size_t row0, row1, col0, col1;
};

inline BlockRange adjacency_block_range(const GridConfig& grid, int plane,
                                        Coords c, std::size_t n) {
  const LayerLayout lay = plan_layouts(plane + 1).back();
  const int g_row = grid.extent(lay.row_shard), g_in = grid.extent(lay.inner);
  const int c_row = c.along(lay.row_shard), c_in = c.along(lay.inner);
  return {chunk_start(n, g_row, c_row), chunk_start(n, g_row, c_row + 1),
          chunk_start(n, g_in, c_in), chunk_start(n, g_in, c_in + 1)};
}

// In-memory sharding: every rank slices its blocks out of the full permuted
// matrices and is implicitly replicated along the remaining axis.
template <typename T>
AdjacencyShardSet<T> build_adjacency_shards(const CsrMatrix<T>& a_even,
                                            const CsrMatrix<T>& a_odd,
                                            const GridConfig& grid, Coords c,
                                            int num_layers) {
  check(a_even.rows() == a_even.cols() && a_odd.rows() == a_odd.cols() &&
            a_even.rows() == a_odd.rows(),
        "build_adjacency_shards: adjacency variants must be square and equal");
  AdjacencyShardSet<T> out;
  for (auto [plane, parity] : needed_adjacency_keys(num_layers)) {
    const auto& variant = parity ? a_odd : a_even;
    auto r = adjacency_block_range(grid, plane, c, variant.rows());
    auto block = variant.block(r.row0, r.row1, r.col0, r.col1);
    auto block_t = block.transpose();
    out.put(plane, parity, {std::move(block), std::move(block_t)});
  }
  return out;
}

template <typename T>
struct GcnLayerState {
  DenseMatrix<T> w;  // stored shard: rows split by col_shard then row_shard,
                     // cols split by inner
  DenseMatrix<T> cached_h, cached_q;  // kept between forward and backward
  bool has_cache = false;
};

struct EngineOptions {
  int block_count = 0;  // 0: one block per 16384 adjacency rows
  // testing hook: skip the aggregation all-reduce (negative control)
  bool fault_skip_h_allreduce = false;
};

struct PhaseTimers {
  double forward_spmm = 0, forward_gemm = 0, backward = 0, optimizer = 0;
};

namespace detail {

inline int resolve_block_count(int requested, std::size_t rows) {
  if (requested > 0) return requested;
  return static_cast<int>(std::max<std::size_t>(1, (rows + 16383) / 16384));
}

class ScopedTimer {
public:
  explicit ScopedTimer(double* acc)
      : acc_(acc), t0_(std::chrono::steady_clock::now()) {}
  ~ScopedTimer() {
    if (acc_)
      *acc_ +=
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_)
              .count();
  }

private:
  double* acc_;
  std::chrono::steady_clock::time_point t0_;
};

}  // namespace detail

// One layer of the forward pass; caches H and Q for the backward pass.
template <typename T>
DenseMatrix<T> forward_layer(RankCtx& ctx, const LayerLayout& lay,
                             GcnLayerState<T>& state,
                             const AdjacencyShardSet<T>& adj,
                             const DenseMatrix<T>& f_in, bool is_last,
                             const EngineOptions& opts,
                             PhaseTimers* timers = nullptr) {
  const auto& shard = adj.get(lay);
  // layer 0 input carries the extra row_shard split (trainable features)
  DenseMatrix<T> f = lay.layer == 0 ? ctx.all_gather(f_in, lay.row_shard) : f_in;
  if (shard.a.cols() != f.rows())
    throw ContractError("forward layer " + std::to_string(lay.layer) +
                        ": adjacency shard " + shard.a.shape_str() +
                        " does not match features " + f.shape_str() +
                        " along axis " + axis_name(lay.inner));

  const int blocks = detail::resolve_block_count(opts.block_count, shard.a.rows());
  std::vector<DenseMatrix<T>> h_blocks;
  h_blocks.reserve(blocks);
  for (int b = 0; b < blocks; ++b) {
    const std::size_t r0 = chunk_start(shard.a.rows(), blocks, b);
    const std::size_t r1 = chunk_start(shard.a.rows(), blocks, b + 1);
    DenseMatrix<T> hb;
    {
      detail::ScopedTimer t(timers ? &timers->forward_spmm : nullptr);
      hb = spmm_rows(shard.a, f, r0, r1, &ctx.stats().spmm_flops);
    }
    if (!opts.fault_skip_h_allreduce) hb = ctx.all_reduce(hb, lay.inner);
    h_blocks.push_back(std::move(hb));
  }
  std::vector<const DenseMatrix<T>*> parts;
  for (const auto& h : h_blocks) parts.push_back(&h);
  DenseMatrix<T> h = DenseMatrix<T>::concat_rows(
      std::span<const DenseMatrix<T>* const>(parts));

  DenseMatrix<T> w_full = ctx.all_gather(state.w, lay.row_shard);
  DenseMatrix<T> q;
  {
    detail::ScopedTimer t(timers ? &timers->forward_gemm : nullptr);
    q = gemm(h, w_full, false, false, &ctx.stats().gemm_flops);
  }
  q = ctx.all_reduce(q, lay.col_shard);

  state.cached_h = std::move(h);
  state.cached_q = q;
  state.has_cache = true;
  return is_last ? std::move(q) : relu_forward(q);
}

template <typename T>
struct LayerGrads {
  DenseMatrix<T> df_in;  // gradient w.r.t. this layer's input shard
  DenseMatrix<T> dw;     // gradient w.r.t. the stored W shard
};

// One layer of the backward pass; `df_out` is dL/d(layer output) for
// non-last layers and dL/dQ (the loss gradient) for the last layer.
template <typename T>
LayerGrads<T> backward_layer(RankCtx& ctx, const LayerLayout& lay,
                             GcnLayerState<T>& state,
                             const AdjacencyShardSet<T>& adj,
                             const DenseMatrix<T>& df_out, bool is_last,
                             PhaseTimers* timers = nullptr) {
  check(state.has_cache, "backward layer " + std::to_string(lay.layer) +
                             ": no cached forward activations");
  const auto& shard = adj.get(lay);
  LayerGrads<T> out;

  DenseMatrix<T> dq;
  DenseMatrix<T> dw_partial, dh;
  {
    detail::ScopedTimer t(timers ? &timers->backward : nullptr);
    dq = is_last ? df_out : relu_backward(state.cached_q, df_out);
    // dW via the reversed multiplication order: (dQ^T H)^T == H^T dQ
    dw_partial =
        gemm(dq, state.cached_h, true, false, &ctx.stats().gemm_flops)
            .transposed();
  }
  out.dw = ctx.reduce_scatter(dw_partial, lay.row_shard);

  DenseMatrix<T> w_full = ctx.all_gather(state.w, lay.row_shard);
  {
    detail::ScopedTimer t(timers ? &timers->backward : nullptr);
    dh = gemm(dq, w_full, false, true, &ctx.stats().gemm_flops);
  }
  dh = ctx.all_reduce(dh, lay.inner);

  DenseMatrix<T> df_partial;
  {
    detail::ScopedTimer t(timers ? &timers->backward : nullptr);
    df_partial = spmm(shard.at, dh, &ctx.stats().spmm_flops);
  }
  out.df_in = lay.layer == 0 ? ctx.reduce_scatter(df_partial, lay.row_shard)
                             : ctx.all_reduce(df_partial, lay.row_shard);

  // cached activations are not needed past this point
  state.cached_h = DenseMatrix<T>();
  state.cached_q = DenseMatrix<T>();
  state.has_cache = false;
  return out;
}

}  // namespace plexuskit
