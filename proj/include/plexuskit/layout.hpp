#pragma once

// Layer layout algebra: which grid axis plays which role in each layer, and
// the ceil-split chunk arithmetic used everywhere a dimension is sharded.
// Both the engine and the performance model derive buffer shapes from here,
// so their communication volumes agree by construction.

#include <string>
#include <vector>

#include "plexuskit/common.hpp"
#include "plexuskit/grid.hpp"

namespace plexuskit {

// Ceil-split of `total` into `parts` chunks; earlier chunks get the extra
// element. chunk_start/chunk_size describe chunk `idx`.
inline std::size_t chunk_start(std::size_t total, int parts, int idx) {
  const std::size_t base = total / parts, rem = total % parts;
  const std::size_t i = static_cast<std::size_t>(idx);
  return i * base + std::min<std::size_t>(i, rem);
}

inline std::size_t chunk_size(std::size_t total, int parts, int idx) {
  return chunk_start(total, parts, idx + 1) - chunk_start(total, parts, idx);
}

// Role triple for one layer:
//   inner    - shards the SpMM common dimension; partial H is all-reduced here
//   col_shard- shards H/W columns-rows; partial Q is all-reduced here
//   row_shard- shards the adjacency/output rows; W and layer-0 F are
//              additionally split along it
struct LayerLayout {
  int layer = 0;
  Axis inner = Axis::X;
  Axis col_shard = Axis::Y;
  Axis row_shard = Axis::Z;

  // 0 -> ZX plane, 1 -> YZ, 2 -> XY; names the (row_shard, inner) plane the
  // layer's adjacency shard lives on.
  int plane() const { return layer % 3; }
  int parity() const { return layer % 2; }
};

inline const char* plane_name(int plane) {
  switch (plane) {
    case 0: return "ZX";
    case 1: return "YZ";
    default: return "XY";
  }
}

// layout(0) = (X, Y, Z); each next layer rotates the roles so that a layer's
// output lands exactly where the next layer needs its input.
inline std::vector<LayerLayout> plan_layouts(int num_layers) {
  check(num_layers >= 1, "plan_layouts: need at least one layer");
  std::vector<LayerLayout> out;
  out.reserve(num_layers);
  LayerLayout cur;
  for (int l = 0; l < num_layers; ++l) {
    cur.layer = l;
    out.push_back(cur);
    cur = LayerLayout{l + 1, cur.row_shard, cur.inner, cur.col_shard};
  }
  return out;
}

// Shapes of one rank's shards in a given layer. All sizes use the actual
// ceil-split chunk of that rank's coordinates.
struct LayerShapes {
  // adjacency shard
  std::size_t a_rows = 0, a_cols = 0;
  // input features as consumed by the SpMM (after the layer-0 gather)
  std::size_t f_rows = 0, f_cols = 0;
  // weight shard as stored (rows additionally split along row_shard)
  std::size_t w_rows = 0, w_cols = 0;
  // H / Q block shapes
  std::size_t h_rows = 0, h_cols = 0;
  std::size_t q_rows = 0, q_cols = 0;
};

inline LayerShapes layer_shapes(const GridConfig& grid, const LayerLayout& lay,
                                Coords c, std::size_t n, std::size_t d_in,
                                std::size_t d_out) {
  const int g_in = grid.extent(lay.inner);
  const int g_col = grid.extent(lay.col_shard);
  const int g_row = grid.extent(lay.row_shard);
  LayerShapes s;
  s.a_rows = chunk_size(n, g_row, c.along(lay.row_shard));
  s.a_cols = chunk_size(n, g_in, c.along(lay.inner));
  s.f_rows = s.a_cols;
  s.f_cols = chunk_size(d_in, g_col, c.along(lay.col_shard));
  const std::size_t w_rows_plane = s.f_cols;
  s.w_rows = chunk_size(w_rows_plane, g_row, c.along(lay.row_shard));
  s.w_cols = chunk_size(d_out, g_in, c.along(lay.inner));
  s.h_rows = s.a_rows;
  s.h_cols = s.f_cols;
  s.q_rows = s.a_rows;
  s.q_cols = s.w_cols;
  return s;
}

// One collective issued by the engine, with its buffer size in scalar
// elements, as seen by the coordinate-0 rank (exact when shapes divide).
enum class CollOp { AllGather, AllReduce, ReduceScatter };

inline const char* coll_name(CollOp op) {
  switch (op) {
    case CollOp::AllGather: return "all_gather";
    case CollOp::AllReduce: return "all_reduce";
    default: return "reduce_scatter";
  }
}

struct CollectiveVolume {
  int layer = 0;
  bool forward = true;
  CollOp op = CollOp::AllReduce;
  Axis axis = Axis::X;
  u64 elems = 0;  // full buffer size M in elements (pre-scatter for RS)
};

// The per-epoch collective sequence of the forward+backward passes, with
// buffer sizes from the same shape algebra the engine uses. Loss-side
// traffic is not part of the modeled sequence.
inline std::vector<CollectiveVolume> training_collective_volumes(
    const GridConfig& grid, std::size_t n, const std::vector<std::size_t>& dims) {
  check(dims.size() >= 2, "need at least input and output dims");
  const int num_layers = static_cast<int>(dims.size()) - 1;
  auto layouts = plan_layouts(num_layers);
  std::vector<CollectiveVolume> out;
  const Coords origin{0, 0, 0};
  for (int l = 0; l < num_layers; ++l) {
    const auto& lay = layouts[l];
    auto s = layer_shapes(grid, lay, origin, n, dims[l], dims[l + 1]);
    const u64 f_elems = static_cast<u64>(s.f_rows) * s.f_cols;
    const u64 h_elems = static_cast<u64>(s.h_rows) * s.h_cols;
    const u64 q_elems = static_cast<u64>(s.q_rows) * s.q_cols;
    const u64 w_elems = static_cast<u64>(s.f_cols) * s.w_cols;  // gathered W
    // forward
    if (l == 0)
      out.push_back({l, true, CollOp::AllGather, lay.row_shard, f_elems});
    out.push_back({l, true, CollOp::AllReduce, lay.inner, h_elems});
    out.push_back({l, true, CollOp::AllGather, lay.row_shard, w_elems});
    out.push_back({l, true, CollOp::AllReduce, lay.col_shard, q_elems});
    // backward (emitted in reverse-layer execution order by the engine, but
    // order does not matter for volume accounting)
    out.push_back({l, false, CollOp::ReduceScatter, lay.row_shard, w_elems});
    out.push_back({l, false, CollOp::AllGather, lay.row_shard, w_elems});
    out.push_back({l, false, CollOp::AllReduce, lay.inner, h_elems});
    if (l == 0)
      out.push_back({l, false, CollOp::ReduceScatter, lay.row_shard, f_elems});
    else
      out.push_back({l, false, CollOp::AllReduce, lay.row_shard, f_elems});
  }
  return out;
}

}  // namespace plexuskit
