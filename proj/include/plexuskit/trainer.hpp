#pragma once

// Training drivers: the serial reference trainer (the correctness oracle,
// which shares only the plain kernels with the distributed path), the
// per-rank shard loader, and the distributed epoch loop running on the
// virtual grid.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "plexuskit/engine.hpp"
#include "plexuskit/graph.hpp"
#include "plexuskit/model.hpp"
#include "plexuskit/shard_io.hpp"

namespace plexuskit {

class TrainingError : public std::runtime_error {
public:
  explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TrainOptions {
  int epochs = 10;
  AdamParams adam;
  u64 seed = 0;  // weight initialization
  int block_count = 0;
  std::vector<std::size_t> hidden_dims = {128, 128};
  int fault_epoch = -1;  // epoch whose aggregation all-reduces are skipped
};

struct EpochMetrics {
  int epoch = 0;
  double loss = 0;
  double accuracy = 0;
  // per-epoch phase seconds and counter deltas
  double load_s = 0, forward_spmm_s = 0, forward_gemm_s = 0, backward_s = 0,
         optimizer_s = 0, collectives_s = 0;
  u64 spmm_flops = 0, gemm_flops = 0;
  double allreduce_bytes = 0, allgather_bytes = 0, reducescatter_bytes = 0;
};

inline std::vector<std::size_t> model_dims(std::size_t d0,
                                           const std::vector<std::size_t>& hidden,
                                           u32 classes) {
  std::vector<std::size_t> dims;
  dims.push_back(d0);
  for (auto h : hidden) dims.push_back(h);
  dims.push_back(classes);
  return dims;
}

namespace detail {

// Loss pieces shared bit-for-bit by the serial and distributed paths: the
// mean is always taken over the global masked count.
template <typename T>
struct LossResult {
  double loss = 0, accuracy = 0;
  DenseMatrix<T> dlogits;  // (softmax - onehot) / global_count, masked rows
};

template <typename T>
LossResult<T> finalize_loss(CrossEntropySums<T>&& sums, double global_sum,
                            u64 global_count, u64 global_correct, int epoch) {
  if (global_count == 0)
    throw TrainingError("epoch " + std::to_string(epoch) +
                        ": no nodes selected by the training mask");
  LossResult<T> out;
  out.loss = global_sum / static_cast<double>(global_count);
  out.accuracy =
      static_cast<double>(global_correct) / static_cast<double>(global_count);
  if (!std::isfinite(out.loss))
    throw TrainingError("epoch " + std::to_string(epoch) +
                        ": loss is not finite (" + std::to_string(out.loss) + ")");
  const T scale = T(1) / static_cast<T>(global_count);
  out.dlogits = std::move(sums.dlogits);
  for (std::size_t i = 0; i < out.dlogits.size(); ++i)
    out.dlogits.data()[i] *= scale;
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// serial reference

// Single-rank implementation of the full pipeline on the preprocessed
// (permuted) dataset: layer l aggregates with A_even or A_odd by parity.
// No grid, no collectives, no sharding algebra.
template <typename T>
class SerialTrainer {
public:
  SerialTrainer(const PreprocessedDataset<T>& data, const TrainOptions& opts)
      : data_(&data),
        opts_(opts),
        dims_(model_dims(data.feat_dim, opts.hidden_dims, data.num_classes)),
        a_even_t_(data.a_even.transpose()),
        a_odd_t_(data.a_odd.transpose()),
        features_(data.features),
        f_state_(AdamState<T>::like(features_)) {
    weights_ = init_weights<T>(dims_, opts.seed);
    for (const auto& w : weights_) w_states_.push_back(AdamState<T>::like(w));
  }

  int num_layers() const { return static_cast<int>(dims_.size()) - 1; }
  const std::vector<DenseMatrix<T>>& weights() const { return weights_; }
  const DenseMatrix<T>& features() const { return features_; }

  struct Pass {
    double loss = 0, accuracy = 0;
    DenseMatrix<T> logits;
    std::vector<DenseMatrix<T>> dw;
    DenseMatrix<T> df0;
    u64 spmm_flops = 0, gemm_flops = 0;
  };

  DenseMatrix<T> forward_only() const {
    DenseMatrix<T> f = features_;
    u64 flops = 0;
    for (int l = 0; l < num_layers(); ++l) {
      auto h = spmm(adjacency(l), f, &flops);
      auto q = gemm(h, weights_[l], false, false, &flops);
      f = l == num_layers() - 1 ? std::move(q) : relu_forward(q);
    }
    return f;
  }

  Pass forward_backward(int epoch) const {
    const int layers = num_layers();
    Pass out;
    std::vector<DenseMatrix<T>> h(layers), q(layers);
    DenseMatrix<T> f = features_;
    for (int l = 0; l < layers; ++l) {
      h[l] = spmm(adjacency(l), f, &out.spmm_flops);
      q[l] = gemm(h[l], weights_[l], false, false, &out.gemm_flops);
      f = l == layers - 1 ? q[l] : relu_forward(q[l]);
    }
    out.logits = f;

    const int parity = final_output_parity(layers);
    auto sums = softmax_cross_entropy_sums(out.logits,
                                           data_->labels_for_parity(parity),
                                           data_->mask_for_parity(parity));
    const double sum = sums.loss_sum;
    const u64 count = sums.count, correct = sums.correct;
    auto loss = detail::finalize_loss<T>(std::move(sums), sum, count, correct, epoch);
    out.loss = loss.loss;
    out.accuracy = loss.accuracy;

    out.dw.resize(layers);
    DenseMatrix<T> df = std::move(loss.dlogits);
    for (int l = layers - 1; l >= 0; --l) {
      auto dq = l == layers - 1 ? std::move(df) : relu_backward(q[l], df);
      out.dw[l] = gemm(h[l], dq, true, false, &out.gemm_flops);
      auto dh = gemm(dq, weights_[l], false, true, &out.gemm_flops);
      df = spmm(adjacency_t(l), dh, &out.spmm_flops);
    }
    out.df0 = std::move(df);
    return out;
  }

  EpochMetrics run_epoch(int epoch) {
    auto t0 = std::chrono::steady_clock::now();
    auto pass = forward_backward(epoch);
    for (int l = 0; l < num_layers(); ++l)
      adam_step(weights_[l], pass.dw[l], w_states_[l], opts_.adam);
    adam_step(features_, pass.df0, f_state_, opts_.adam);
    EpochMetrics m;
    m.epoch = epoch;
    m.loss = pass.loss;
    m.accuracy = pass.accuracy;
    m.spmm_flops = pass.spmm_flops;
    m.gemm_flops = pass.gemm_flops;
    m.backward_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    return m;
  }

  std::vector<EpochMetrics> train() {
    std::vector<EpochMetrics> out;
    for (int e = 0; e < opts_.epochs; ++e) out.push_back(run_epoch(e));
    return out;
  }

private:
  const CsrMatrix<T>& adjacency(int layer) const {
    return layer % 2 ? data_->a_odd : data_->a_even;
  }
  const CsrMatrix<T>& adjacency_t(int layer) const {
    return layer % 2 ? a_odd_t_ : a_even_t_;
  }

  const PreprocessedDataset<T>* data_;
  TrainOptions opts_;
  std::vector<std::size_t> dims_;
  CsrMatrix<T> a_even_t_, a_odd_t_;
  DenseMatrix<T> features_;
  std::vector<DenseMatrix<T>> weights_;
  std::vector<AdamState<T>> w_states_;
  AdamState<T> f_state_;
};

// ---------------------------------------------------------------------------
// per-rank tensors

template <typename T>
struct RankTensors {
  AdjacencyShardSet<T> adj;
  DenseMatrix<T> f0;          // trainable feature shard
  std::vector<u32> labels;    // final-parity labels for this rank's logit rows
  std::vector<u8> mask;
  u64 bytes_read = 0;
  int files_read = 0;
};

// Label/mask row range: the rank's logit row block in the last layer.
inline std::pair<std::size_t, std::size_t> label_row_range(
    const GridConfig& grid, Coords c, std::size_t n, int num_layers) {
  const LayerLayout last = plan_layouts(num_layers).back();
  const int g = grid.extent(last.row_shard), pos = c.along(last.row_shard);
  return {chunk_start(n, g, pos), chunk_start(n, g, pos + 1)};
}

// In-memory slicing; also the oracle the file loader is tested against.
template <typename T>
RankTensors<T> slice_rank_tensors(const PreprocessedDataset<T>& pre,
                                  const GridConfig& grid, Coords c,
                                  int num_layers) {
  RankTensors<T> out;
  out.adj = build_adjacency_shards(pre.a_even, pre.a_odd, grid, c, num_layers);
  auto fs = feature_slice(grid, c, pre.n, pre.feat_dim);
  out.f0 = pre.features.block(fs.r0, fs.r1, fs.c0, fs.c1);
  const int parity = final_output_parity(num_layers);
  auto [lr0, lr1] = label_row_range(grid, c, pre.n, num_layers);
  const auto& labels = pre.labels_for_parity(parity);
  const auto& mask = pre.mask_for_parity(parity);
  out.labels.assign(labels.begin() + lr0, labels.begin() + lr1);
  out.mask.assign(mask.begin() + lr0, mask.begin() + lr1);
  return out;
}

// File-backed loading: reads only the stripe/section slices overlapping this
// rank's blocks and merges them. Assembled blocks are memoized so planes
// sharing a range do not read twice.
template <typename T>
RankTensors<T> load_rank_shards(const shard_io::ShardManifest& mani,
                                const GridConfig& grid, Coords c,
                                int num_layers) {
  check(mani.precision == shard_io::precision_tag<T>(),
        "load_rank_shards: scalar type does not match manifest precision");
  RankTensors<T> out;
  const std::size_t n = mani.n;

  std::map<std::pair<int, int>, std::unique_ptr<shard_io::ShardFileReader>>
      readers;
  auto reader = [&](int i, int j) -> shard_io::ShardFileReader& {
    auto it = readers.find({i, j});
    if (it == readers.end())
      it = readers
               .emplace(std::make_pair(i, j),
                        std::make_unique<shard_io::ShardFileReader>(mani, i, j))
               .first;
    return *it->second;
  };

  auto assemble_csr = [&](shard_io::Section sec, std::size_t r0, std::size_t r1,
                          std::size_t c0, std::size_t c1) {
    std::vector<u64> row_ptr{0};
    std::vector<u32> col_idx;
    std::vector<T> values;
    for (int i = 0; i < mani.p; ++i) {
      const auto& stripe = mani.file(i, 0);
      const std::size_t sr0 = std::max<std::size_t>(r0, stripe.row0);
      const std::size_t sr1 = std::min<std::size_t>(r1, stripe.row1);
      if (sr0 >= sr1) continue;
      struct Piece {
        const shard_io::ShardFileInfo* info;
        CsrMatrix<T> rows;
      };
      std::vector<Piece> pieces;
      for (int j = 0; j < mani.q; ++j) {
        const auto& info = mani.file(i, j);
        if (info.col1 <= c0 || info.col0 >= c1) continue;
        pieces.push_back({&info, reader(i, j).template read_csr_rows<T>(
                                     sec, sr0 - info.row0, sr1 - info.row0)});
      }
      for (std::size_t row = 0; row < sr1 - sr0; ++row) {
        for (const auto& piece : pieces) {
          const auto& m = piece.rows;
          for (u64 k = m.row_ptr()[row]; k < m.row_ptr()[row + 1]; ++k) {
            const std::size_t gc = piece.info->col0 + m.col_idx()[k];
            if (gc < c0 || gc >= c1) continue;
            col_idx.push_back(static_cast<u32>(gc - c0));
            values.push_back(m.values()[k]);
          }
        }
        row_ptr.push_back(col_idx.size());
      }
    }
    return CsrMatrix<T>(r1 - r0, c1 - c0, std::move(row_ptr),
                        std::move(col_idx), std::move(values));
  };

  // adjacency shards per (plane, parity), memoized by block range
  std::map<std::tuple<int, u64, u64, u64, u64>, CsrMatrix<T>> memo;
  for (auto [plane, parity] : needed_adjacency_keys(num_layers)) {
    const auto sec = parity ? shard_io::kCsrOdd : shard_io::kCsrEven;
    auto r = adjacency_block_range(grid, plane, c, n);
    auto key = std::make_tuple(static_cast<int>(sec), r.row0, r.row1, r.col0, r.col1);
    auto it = memo.find(key);
    if (it == memo.end())
      it = memo.emplace(key, assemble_csr(sec, r.row0, r.row1, r.col0, r.col1))
               .first;
    auto block = it->second;
    auto block_t = block.transpose();
    out.adj.put(plane, parity, {std::move(block), std::move(block_t)});
  }

  // trainable feature shard
  auto fs = feature_slice(grid, c, n, mani.feat_dim);
  out.f0 = DenseMatrix<T>::zeros(fs.r1 - fs.r0, fs.c1 - fs.c0);
  for (int i = 0; i < mani.p; ++i) {
    const auto& stripe = mani.file(i, 0);
    const std::size_t sr0 = std::max<std::size_t>(fs.r0, stripe.row0);
    const std::size_t sr1 = std::min<std::size_t>(fs.r1, stripe.row1);
    if (sr0 >= sr1) continue;
    for (int j = 0; j < mani.q; ++j) {
      const auto& info = mani.file(i, j);
      const std::size_t sc0 = std::max<std::size_t>(fs.c0, info.fcol0);
      const std::size_t sc1 = std::min<std::size_t>(fs.c1, info.fcol1);
      if (sc0 >= sc1) continue;
      auto rows = reader(i, j).template read_feature_rows<T>(sr0 - info.row0,
                                                             sr1 - info.row0);
      for (std::size_t rr = 0; rr < sr1 - sr0; ++rr)
        for (std::size_t cc = sc0; cc < sc1; ++cc)
          out.f0.at(sr0 - fs.r0 + rr, cc - fs.c0) =
              rows.at(rr, cc - info.fcol0);
    }
  }

  // final-parity labels and mask for this rank's logit rows
  const int parity = final_output_parity(num_layers);
  auto [lr0, lr1] = label_row_range(grid, c, n, num_layers);
  out.labels.resize(lr1 - lr0);
  out.mask.resize(lr1 - lr0);
  for (int i = 0; i < mani.p; ++i) {
    const auto& stripe = mani.file(i, 0);
    const std::size_t sr0 = std::max<std::size_t>(lr0, stripe.row0);
    const std::size_t sr1 = std::min<std::size_t>(lr1, stripe.row1);
    if (sr0 >= sr1) continue;
    // labels are duplicated across the stripe; read them from a file this
    // rank's feature columns already overlap
    int j_pick = 0;
    for (int j = 0; j < mani.q; ++j) {
      const auto& info = mani.file(i, j);
      if (info.fcol1 > fs.c0 && info.fcol0 < fs.c1) {
        j_pick = j;
        break;
      }
    }
    auto slice = reader(i, j_pick).read_labels(sr0 - stripe.row0, sr1 - stripe.row0);
    const auto& labels = parity == 0 ? slice.labels_row : slice.labels_col;
    const auto& mask = parity == 0 ? slice.mask_row : slice.mask_col;
    std::copy(labels.begin(), labels.end(), out.labels.begin() + (sr0 - lr0));
    std::copy(mask.begin(), mask.end(), out.mask.begin() + (sr0 - lr0));
  }

  out.files_read = static_cast<int>(readers.size());
  for (const auto& [key, r] : readers) out.bytes_read += r->bytes_read();
  return out;
}

// Reassembles the full preprocessed dataset from shard files (serial oracle
// path and validation); verifies every checksum.
template <typename T>
PreprocessedDataset<T> load_preprocessed(const shard_io::ShardManifest& mani) {
  PreprocessedDataset<T> out;
  out.n = mani.n;
  out.feat_dim = mani.feat_dim;
  out.num_classes = mani.classes;
  out.perm_seed = mani.perm_seed;
  out.features = DenseMatrix<T>::zeros(mani.n, mani.feat_dim);
  out.labels_row_order.resize(mani.n);
  out.labels_col_order.resize(mani.n);
  out.mask_row_order.resize(mani.n);
  out.mask_col_order.resize(mani.n);

  std::vector<u64> even_ptr{0}, odd_ptr{0};
  std::vector<u32> even_idx, odd_idx;
  std::vector<T> even_val, odd_val;
  for (int i = 0; i < mani.p; ++i) {
    std::vector<shard_io::ShardPayload<T>> row_files;
    for (int j = 0; j < mani.q; ++j)
      row_files.push_back(shard_io::read_shard<T>(mani, i, j));
    const auto& first = row_files.front().info;
    for (std::size_t r = 0; r < first.row1 - first.row0; ++r) {
      auto append_row = [&](bool even) {
        auto& idx = even ? even_idx : odd_idx;
        auto& val = even ? even_val : odd_val;
        auto& ptr = even ? even_ptr : odd_ptr;
        for (const auto& pf : row_files) {
          const auto& m = even ? pf.a_even : pf.a_odd;
          for (u64 k = m.row_ptr()[r]; k < m.row_ptr()[r + 1]; ++k) {
            idx.push_back(static_cast<u32>(pf.info.col0 + m.col_idx()[k]));
            val.push_back(m.values()[k]);
          }
        }
        ptr.push_back(idx.size());
      };
      append_row(true);
      append_row(false);
      for (const auto& pf : row_files)
        for (std::size_t cc = 0; cc < pf.features.cols(); ++cc)
          out.features.at(first.row0 + r, pf.info.fcol0 + cc) =
              pf.features.at(r, cc);
      const auto& lab = row_files.front().labels;
      out.labels_row_order[first.row0 + r] = lab.labels_row[r];
      out.labels_col_order[first.row0 + r] = lab.labels_col[r];
      out.mask_row_order[first.row0 + r] = lab.mask_row[r];
      out.mask_col_order[first.row0 + r] = lab.mask_col[r];
    }
  }
  out.a_even = CsrMatrix<T>(mani.n, mani.n, std::move(even_ptr),
                            std::move(even_idx), std::move(even_val));
  out.a_odd = CsrMatrix<T>(mani.n, mani.n, std::move(odd_ptr),
                           std::move(odd_idx), std::move(odd_val));
  return out;
}

// ---------------------------------------------------------------------------
// distributed training

// How workers obtain their tensors plus the dataset's shape metadata.
template <typename T>
struct DatasetHandle {
  std::size_t n = 0;
  std::size_t feat_dim = 0;
  u32 classes = 0;
  std::function<RankTensors<T>(const GridConfig&, Coords, int)> loader;
};

template <typename T>
DatasetHandle<T> memory_handle(const PreprocessedDataset<T>& pre) {
  return {pre.n, pre.feat_dim, pre.num_classes,
          [&pre](const GridConfig& grid, Coords c, int layers) {
            return slice_rank_tensors(pre, grid, c, layers);
          }};
}

template <typename T>
DatasetHandle<T> file_handle(const shard_io::ShardManifest& mani) {
  return {mani.n, mani.feat_dim, mani.classes,
          [&mani](const GridConfig& grid, Coords c, int layers) {
            return load_rank_shards<T>(mani, grid, c, layers);
          }};
}

// One rank's forward + loss + backward (no optimizer step); the body of an
// epoch, also driven directly by the equivalence tests.
template <typename T>
struct RankPass {
  double loss = 0, accuracy = 0;
  DenseMatrix<T> f_out;  // last layer's raw logits shard
  std::vector<DenseMatrix<T>> dw;
  DenseMatrix<T> df0;
};

template <typename T>
RankPass<T> rank_forward_backward(RankCtx& ctx,
                                  const std::vector<LayerLayout>& layouts,
                                  std::vector<GcnLayerState<T>>& states,
                                  const RankTensors<T>& tensors,
                                  const DenseMatrix<T>& f0,
                                  const std::vector<std::size_t>& dims,
                                  const EngineOptions& eopts, int epoch,
                                  PhaseTimers* timers = nullptr) {
  const int layers = static_cast<int>(layouts.size());
  const Coords c = ctx.coords();
  const LayerLayout& last = layouts[layers - 1];
  RankPass<T> out;

  DenseMatrix<T> f = f0;
  for (int l = 0; l < layers; ++l)
    f = forward_layer(ctx, layouts[l], states[l], tensors.adj, f,
                      l == layers - 1, eopts, timers);
  out.f_out = f;

  // loss on full logit rows: gather class chunks along the inner axis
  DenseMatrix<T> logits = ctx.all_gather(f, last.inner, ConcatDim::Cols);
  auto sums = softmax_cross_entropy_sums(logits, tensors.labels, tensors.mask);
  DenseMatrix<double> local_stats(1, 3,
                                  {sums.loss_sum, static_cast<double>(sums.count),
                                   static_cast<double>(sums.correct)});
  auto global_stats = ctx.all_reduce(local_stats, last.row_shard);
  auto loss = detail::finalize_loss<T>(std::move(sums), global_stats.at(0, 0),
                                       static_cast<u64>(global_stats.at(0, 1)),
                                       static_cast<u64>(global_stats.at(0, 2)),
                                       epoch);
  out.loss = loss.loss;
  out.accuracy = loss.accuracy;

  // keep only this rank's class chunk of dlogits
  const int g_in = ctx.grid().extent(last.inner);
  const std::size_t c0 = chunk_start(dims.back(), g_in, c.along(last.inner));
  const std::size_t c1 = chunk_start(dims.back(), g_in, c.along(last.inner) + 1);
  DenseMatrix<T> df = loss.dlogits.block(0, loss.dlogits.rows(), c0, c1);

  out.dw.resize(layers);
  for (int l = layers - 1; l >= 0; --l) {
    auto grads = backward_layer(ctx, layouts[l], states[l], tensors.adj, df,
                                l == layers - 1, timers);
    out.dw[l] = std::move(grads.dw);
    df = std::move(grads.df_in);
  }
  out.df0 = std::move(df);
  return out;
}

template <typename T>
struct TrainResult {
  std::vector<EpochMetrics> global;                 // one per epoch
  std::vector<std::vector<EpochMetrics>> per_rank;  // [rank][epoch]
  std::vector<DenseMatrix<T>> weights;              // reassembled full W
  DenseMatrix<T> features;                          // reassembled full F^{L0}
  std::vector<CommStats> stats;                     // final per-rank counters
  std::vector<u64> bytes_read;                      // loader bytes per rank
  std::vector<int> files_read;
  double load_seconds = 0;  // max over ranks
};

template <typename T>
TrainResult<T> train_distributed(const DatasetHandle<T>& data,
                                 const GridConfig& grid,
                                 const TrainOptions& opts,
                                 const ClusterOptions& cluster_opts = {}) {
  const auto dims = model_dims(data.feat_dim, opts.hidden_dims, data.classes);
  const int layers = static_cast<int>(dims.size()) - 1;
  const auto layouts = plan_layouts(layers);
  const auto global_weights = init_weights<T>(dims, opts.seed);

  struct RankOut {
    std::vector<EpochMetrics> epochs;
    std::vector<DenseMatrix<T>> w_shards;
    DenseMatrix<T> f0;
    u64 bytes_read = 0;
    int files_read = 0;
    double load_s = 0;
  };
  std::vector<RankOut> outs(grid.size());

  Cluster cluster(grid, cluster_opts);
  auto stats = cluster.run([&](RankCtx& ctx) {
    const Coords c = ctx.coords();
    auto& mine = outs[ctx.rank()];

    auto t_load0 = std::chrono::steady_clock::now();
    RankTensors<T> tensors = data.loader(grid, c, layers);
    mine.load_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_load0)
            .count();
    mine.bytes_read = tensors.bytes_read;
    mine.files_read = tensors.files_read;

    std::vector<GcnLayerState<T>> states(layers);
    std::vector<AdamState<T>> w_states;
    for (int l = 0; l < layers; ++l) {
      auto ws = weight_slice(grid, layouts[l], c, dims[l], dims[l + 1]);
      states[l].w = global_weights[l].block(ws.r0, ws.r1, ws.c0, ws.c1);
      w_states.push_back(AdamState<T>::like(states[l].w));
    }
    DenseMatrix<T> f0 = tensors.f0;
    AdamState<T> f_state = AdamState<T>::like(f0);

    CommStats prev_stats;

    for (int e = 0; e < opts.epochs; ++e) {
      PhaseTimers timers;
      EngineOptions eopts;
      eopts.block_count = opts.block_count;
      eopts.fault_skip_h_allreduce = (e == opts.fault_epoch);

      auto pass = rank_forward_backward(ctx, layouts, states, tensors, f0,
                                        dims, eopts, e, &timers);

      {
        detail::ScopedTimer t(&timers.optimizer);
        for (int l = 0; l < layers; ++l)
          adam_step(states[l].w, pass.dw[l], w_states[l], opts.adam);
        adam_step(f0, pass.df0, f_state, opts.adam);
      }

      EpochMetrics m;
      m.epoch = e;
      m.loss = pass.loss;
      m.accuracy = pass.accuracy;
      m.load_s = e == 0 ? mine.load_s : 0;
      m.forward_spmm_s = timers.forward_spmm;
      m.forward_gemm_s = timers.forward_gemm;
      m.backward_s = timers.backward;
      m.optimizer_s = timers.optimizer;
      const CommStats& cur = ctx.stats();
      m.collectives_s = cur.collective_seconds - prev_stats.collective_seconds;
      m.spmm_flops = cur.spmm_flops - prev_stats.spmm_flops;
      m.gemm_flops = cur.gemm_flops - prev_stats.gemm_flops;
      for (int a = 0; a < 3; ++a) {
        Axis axis = static_cast<Axis>(a);
        auto delta = [&](CollOp op) {
          return (static_cast<double>(cur.at(axis, op).ring_numer) -
                  static_cast<double>(prev_stats.at(axis, op).ring_numer)) /
                 grid.extent(axis);
        };
        m.allreduce_bytes += delta(CollOp::AllReduce);
        m.allgather_bytes += delta(CollOp::AllGather);
        m.reducescatter_bytes += delta(CollOp::ReduceScatter);
      }
      prev_stats = cur;
      mine.epochs.push_back(m);
    }

    mine.f0 = std::move(f0);
    mine.w_shards.resize(layers);
    for (int l = 0; l < layers; ++l) mine.w_shards[l] = std::move(states[l].w);
  });

  // host-side reassembly
  TrainResult<T> result;
  result.stats = std::move(stats);
  result.per_rank.resize(grid.size());
  for (int r = 0; r < grid.size(); ++r) {
    result.per_rank[r] = outs[r].epochs;
    result.bytes_read.push_back(outs[r].bytes_read);
    result.files_read.push_back(outs[r].files_read);
    result.load_seconds = std::max(result.load_seconds, outs[r].load_s);
  }
  for (int l = 0; l < layers; ++l) {
    auto w = DenseMatrix<T>::zeros(dims[l], dims[l + 1]);
    for (int r = 0; r < grid.size(); ++r) {
      auto ws = weight_slice(grid, layouts[l], grid.coords_of(r), dims[l],
                             dims[l + 1]);
      const auto& shard = outs[r].w_shards[l];
      for (std::size_t i = 0; i < shard.rows(); ++i)
        for (std::size_t j = 0; j < shard.cols(); ++j)
          w.at(ws.r0 + i, ws.c0 + j) = shard.at(i, j);
    }
    result.weights.push_back(std::move(w));
  }
  result.features = DenseMatrix<T>::zeros(data.n, data.feat_dim);
  for (int r = 0; r < grid.size(); ++r) {
    auto fsl = feature_slice(grid, grid.coords_of(r), data.n, data.feat_dim);
    const auto& shard = outs[r].f0;
    for (std::size_t i = 0; i < shard.rows(); ++i)
      for (std::size_t j = 0; j < shard.cols(); ++j)
        result.features.at(fsl.r0 + i, fsl.c0 + j) = shard.at(i, j);
  }
  for (int e = 0; e < opts.epochs; ++e) {
    EpochMetrics g;
    g.epoch = e;
    g.loss = outs[0].epochs[e].loss;
    g.accuracy = outs[0].epochs[e].accuracy;
    for (int r = 0; r < grid.size(); ++r) {
      const auto& m = outs[r].epochs[e];
      g.load_s = std::max(g.load_s, m.load_s);
      g.forward_spmm_s = std::max(g.forward_spmm_s, m.forward_spmm_s);
      g.forward_gemm_s = std::max(g.forward_gemm_s, m.forward_gemm_s);
      g.backward_s = std::max(g.backward_s, m.backward_s);
      g.optimizer_s = std::max(g.optimizer_s, m.optimizer_s);
      g.collectives_s = std::max(g.collectives_s, m.collectives_s);
      g.spmm_flops += m.spmm_flops;
      g.gemm_flops += m.gemm_flops;
      g.allreduce_bytes += m.allreduce_bytes;
      g.allgather_bytes += m.allgather_bytes;
      g.reducescatter_bytes += m.reducescatter_bytes;
    }
    result.global.push_back(g);
  }
  return result;
}

}  // namespace plexuskit
