#pragma once

// Dataset ingestion and preprocessing: adjacency normalization, the double
// permutation load balancer, the shard balance metric and synthetic dataset
// generators.

#include <algorithm>
#include <cmath>
#include <tuple>
#include <vector>

#include "plexuskit/csr.hpp"
#include "plexuskit/dense.hpp"
#include "plexuskit/layout.hpp"
#include "plexuskit/rng.hpp"

namespace plexuskit {

template <typename T>
struct GraphDataset {
  std::size_t num_nodes = 0;
  std::vector<std::pair<u32, u32>> edges;  // as ingested; may contain dups
  bool undirected = true;  // symmetrize (store each edge both ways)
  DenseMatrix<T> features;  // num_nodes x D0
  std::vector<u32> labels;
  u32 num_classes = 0;
  std::vector<u8> train_mask;

  void validate() const {
    check(features.rows() == num_nodes, "dataset: features rows != num_nodes");
    check(labels.size() == num_nodes, "dataset: labels length != num_nodes");
    check(train_mask.size() == num_nodes, "dataset: mask length != num_nodes");
    for (auto [u, v] : edges)
      check(u < num_nodes && v < num_nodes, "dataset: edge endpoint out of range");
    for (u32 l : labels)
      check(l < num_classes, "dataset: label out of range");
  }
};

// Self-loops are inserted for every node, duplicate edges are removed, and
// each entry (u,v) is scaled by 1/sqrt(d_u d_v) with degrees counted after
// self-loop insertion. Undirected inputs are symmetrized first; directed
// inputs keep their orientation and use row degrees.
template <typename T>
CsrMatrix<T> normalize_adjacency(const GraphDataset<T>& ds) {
  const std::size_t n = ds.num_nodes;
  std::vector<u64> keys;
  keys.reserve(ds.edges.size() * (ds.undirected ? 2 : 1) + n);
  auto key = [](u32 u, u32 v) { return (static_cast<u64>(u) << 32) | v; };
  for (auto [u, v] : ds.edges) {
    keys.push_back(key(u, v));
    if (ds.undirected) keys.push_back(key(v, u));
  }
  for (std::size_t u = 0; u < n; ++u)
    keys.push_back(key(static_cast<u32>(u), static_cast<u32>(u)));
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());

  std::vector<u64> degree(n, 0);
  for (u64 k : keys) degree[k >> 32]++;

  std::vector<u64> row_ptr(n + 1, 0);
  for (u64 k : keys) row_ptr[(k >> 32) + 1]++;
  for (std::size_t i = 0; i < n; ++i) row_ptr[i + 1] += row_ptr[i];
  std::vector<u32> col_idx(keys.size());
  std::vector<T> values(keys.size());
  for (std::size_t k = 0; k < keys.size(); ++k) {
    const u32 u = static_cast<u32>(keys[k] >> 32);
    const u32 v = static_cast<u32>(keys[k]);
    col_idx[k] = v;
    values[k] = static_cast<T>(
        1.0 / std::sqrt(static_cast<double>(degree[u]) * degree[v]));
  }
  return CsrMatrix<T>(n, n, std::move(row_ptr), std::move(col_idx),
                      std::move(values));
}

struct PermutationPair {
  std::vector<u32> row_perm;  // applied to adjacency rows
  std::vector<u32> col_perm;  // applied to adjacency columns and feature rows
  u64 seed = 0;
};

inline PermutationPair generate_permutation_pair(std::size_t n, u64 seed) {
  check(n >= 1, "generate_permutation_pair: n must be >= 1");
  PermutationPair out;
  out.seed = seed;
  Philox row_rng(seed, 1);
  Philox col_rng(seed, 2);
  out.row_perm = row_rng.permutation(n);
  out.col_perm = col_rng.permutation(n);
  return out;
}

inline std::vector<u32> invert_permutation(const std::vector<u32>& p) {
  std::vector<u32> inv(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) inv[p[i]] = static_cast<u32>(i);
  return inv;
}

// result[i,j] = a[row_perm[i], col_perm[j]]
template <typename T>
CsrMatrix<T> permute_csr(const CsrMatrix<T>& a,
                         const std::vector<u32>& row_perm,
                         const std::vector<u32>& col_perm) {
  check(a.rows() == a.cols(), "permute_csr: matrix must be square");
  check(row_perm.size() == a.rows() && col_perm.size() == a.cols(),
        "permute_csr: permutation length mismatch");
  auto inv_row = invert_permutation(row_perm);
  auto inv_col = invert_permutation(col_perm);
  struct Entry {
    u32 r, c;
    T v;
  };
  std::vector<Entry> entries;
  entries.reserve(a.nnz());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (u64 k = a.row_ptr()[i]; k < a.row_ptr()[i + 1]; ++k)
      entries.push_back({inv_row[i], inv_col[a.col_idx()[k]], a.values()[k]});
  std::sort(entries.begin(), entries.end(), [](const Entry& x, const Entry& y) {
    return std::tie(x.r, x.c) < std::tie(y.r, y.c);
  });
  std::vector<u32> r(entries.size()), c(entries.size());
  std::vector<T> v(entries.size());
  for (std::size_t k = 0; k < entries.size(); ++k) {
    r[k] = entries[k].r;
    c[k] = entries[k].c;
    v[k] = entries[k].v;
  }
  return CsrMatrix<T>::from_sorted_triplets(a.rows(), a.cols(), r, c, v);
}

template <typename T>
struct PermutedAdjacency {
  CsrMatrix<T> even;  // P_r A P_c^T, used by even layers
  CsrMatrix<T> odd;   // P_c A P_r^T, used by odd layers
};

// Input features (and the labels/masks travelling with them) must be
// reordered by col_perm by the caller; even-layer outputs land in row_perm
// order and odd-layer outputs back in col_perm order.
template <typename T>
PermutedAdjacency<T> apply_double_permutation(const CsrMatrix<T>& a,
                                              const PermutationPair& perm) {
  check(a.rows() == a.cols(), "apply_double_permutation: matrix must be square");
  return {permute_csr(a, perm.row_perm, perm.col_perm),
          permute_csr(a, perm.col_perm, perm.row_perm)};
}

// Which ceil-split chunk a coordinate falls into.
inline int chunk_index(std::size_t total, int parts, std::size_t pos) {
  const std::size_t base = total / parts, rem = total % parts;
  if (pos < rem * (base + 1)) return static_cast<int>(pos / (base + 1));
  return static_cast<int>(rem + (pos - rem * (base + 1)) / std::max<std::size_t>(base, 1));
}

// max/mean nonzero count over a p x q block partition; 1.0 is perfect.
template <typename T>
double balance_metric(const CsrMatrix<T>& a, int p, int q) {
  check(p >= 1 && q >= 1, "balance_metric: p and q must be >= 1");
  check(a.nnz() > 0, "balance_metric: matrix has no nonzeros");
  std::vector<u64> block_nnz(static_cast<std::size_t>(p) * q, 0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const int bi = chunk_index(a.rows(), p, i);
    for (u64 k = a.row_ptr()[i]; k < a.row_ptr()[i + 1]; ++k)
      block_nnz[bi * q + chunk_index(a.cols(), q, a.col_idx()[k])]++;
  }
  const u64 mx = *std::max_element(block_nnz.begin(), block_nnz.end());
  const double mean =
      static_cast<double>(a.nnz()) / static_cast<double>(block_nnz.size());
  return static_cast<double>(mx) / mean;
}

// ---------------------------------------------------------------------------
// synthetic datasets

struct SbmParams {
  std::size_t n = 0;
  int communities = 1;
  double p_in = 0.1;
  double p_out = 0.01;
};

struct ErdosParams {
  std::size_t n = 0;
  double p = 0.01;
};

struct RmatParams {
  int scale = 10;  // n = 2^scale
  u64 edges = 0;
  double a = 0.57, b = 0.19, c = 0.19;
};

namespace detail {

inline std::vector<u32> degree_quantile_labels(
    const std::vector<std::pair<u32, u32>>& edges, std::size_t n, u32 classes) {
  // degree = distinct neighbors ignoring direction and self loops
  std::vector<u64> keys;
  keys.reserve(edges.size() * 2);
  for (auto [u, v] : edges) {
    if (u == v) continue;
    keys.push_back((static_cast<u64>(u) << 32) | v);
    keys.push_back((static_cast<u64>(v) << 32) | u);
  }
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  std::vector<u64> degree(n, 0);
  for (u64 k : keys) degree[k >> 32]++;

  // equal-population quantile bins, ties broken by node index
  std::vector<u32> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<u32>(i);
  std::sort(order.begin(), order.end(), [&](u32 x, u32 y) {
    return std::tie(degree[x], x) < std::tie(degree[y], y);
  });
  std::vector<u32> labels(n);
  for (std::size_t pos = 0; pos < n; ++pos)
    labels[order[pos]] = static_cast<u32>(pos * classes / n);
  return labels;
}

template <typename T>
GraphDataset<T> assemble_synth(std::vector<std::pair<u32, u32>> edges,
                               std::size_t n, std::size_t feat_dim, u32 classes,
                               double train_fraction, u64 seed) {
  check(classes >= 1, "synth: need at least one class");
  GraphDataset<T> ds;
  ds.num_nodes = n;
  ds.edges = std::move(edges);
  ds.num_classes = classes;
  Philox feat_rng(seed, 3);
  ds.features = DenseMatrix<T>::zeros(n, feat_dim);
  for (std::size_t i = 0; i < ds.features.size(); ++i)
    ds.features.data()[i] = static_cast<T>(feat_rng.next_double());
  ds.labels = degree_quantile_labels(ds.edges, n, classes);
  ds.train_mask.assign(n, 1);
  if (train_fraction < 1.0) {
    Philox mask_rng(seed, 4);
    for (std::size_t i = 0; i < n; ++i)
      ds.train_mask[i] = mask_rng.next_double() < train_fraction ? 1 : 0;
    if (std::find(ds.train_mask.begin(), ds.train_mask.end(), 1) ==
        ds.train_mask.end())
      ds.train_mask[0] = 1;  // never produce an empty mask
  }
  ds.validate();
  return ds;
}

}  // namespace detail

template <typename T>
GraphDataset<T> synth_sbm(const SbmParams& p, std::size_t feat_dim, u32 classes,
                          u64 seed, double train_fraction = 1.0) {
  check(p.n >= 1, "sbm: n must be >= 1");
  check(p.communities >= 1 && static_cast<std::size_t>(p.communities) <= p.n,
        "sbm: invalid community count");
  check(p.p_in >= 0 && p.p_in <= 1 && p.p_out >= 0 && p.p_out <= 1,
        "sbm: probabilities must be in [0,1]");
  Philox rng(seed, 5);
  std::vector<std::pair<u32, u32>> edges;
  for (std::size_t u = 0; u < p.n; ++u) {
    const int cu = chunk_index(p.n, p.communities, u);
    for (std::size_t v = u + 1; v < p.n; ++v) {
      const double prob =
          cu == chunk_index(p.n, p.communities, v) ? p.p_in : p.p_out;
      if (rng.next_double() < prob)
        edges.emplace_back(static_cast<u32>(u), static_cast<u32>(v));
    }
  }
  return detail::assemble_synth<T>(std::move(edges), p.n, feat_dim, classes,
                                   train_fraction, seed);
}

template <typename T>
GraphDataset<T> synth_erdos(const ErdosParams& p, std::size_t feat_dim,
                            u32 classes, u64 seed, double train_fraction = 1.0) {
  check(p.n >= 1, "erdos: n must be >= 1");
  check(p.p >= 0 && p.p <= 1, "erdos: probability must be in [0,1]");
  Philox rng(seed, 5);
  std::vector<std::pair<u32, u32>> edges;
  for (std::size_t u = 0; u < p.n; ++u)
    for (std::size_t v = u + 1; v < p.n; ++v)
      if (rng.next_double() < p.p)
        edges.emplace_back(static_cast<u32>(u), static_cast<u32>(v));
  return detail::assemble_synth<T>(std::move(edges), p.n, feat_dim, classes,
                                   train_fraction, seed);
}

template <typename T>
GraphDataset<T> synth_rmat(const RmatParams& p, std::size_t feat_dim,
                           u32 classes, u64 seed, double train_fraction = 1.0) {
  check(p.scale >= 1 && p.scale < 31, "rmat: scale out of range");
  check(p.a > 0 && p.b >= 0 && p.c >= 0 && p.a + p.b + p.c < 1.0,
        "rmat: quadrant probabilities must sum below 1");
  const std::size_t n = std::size_t(1) << p.scale;
  const u64 target = p.edges ? p.edges : 8 * n;
  Philox rng(seed, 5);
  std::vector<std::pair<u32, u32>> edges;
  edges.reserve(target);
  for (u64 e = 0; e < target; ++e) {
    u32 u = 0, v = 0;
    for (int bit = 0; bit < p.scale; ++bit) {
      const double r = rng.next_double();
      u <<= 1;
      v <<= 1;
      if (r < p.a) {
      } else if (r < p.a + p.b) {
        v |= 1;
      } else if (r < p.a + p.b + p.c) {
        u |= 1;
      } else {
        u |= 1;
        v |= 1;
      }
    }
    if (u != v) edges.emplace_back(u, v);
  }
  return detail::assemble_synth<T>(std::move(edges), n, feat_dim, classes,
                                   train_fraction, seed);
}

// ---------------------------------------------------------------------------
// preprocessing: normalize + double-permute + align node attributes

// The trained pipeline consumes permuted data: even layers read features in
// col_perm order and emit row_perm order, odd layers the reverse. Labels and
// masks are kept in both orders so the loss can align with the final layer's
// parity without scattering reads.
template <typename T>
struct PreprocessedDataset {
  std::size_t n = 0;
  std::size_t feat_dim = 0;
  u32 num_classes = 0;
  u64 perm_seed = 0;
  CsrMatrix<T> a_even, a_odd;
  DenseMatrix<T> features;            // col_perm order
  std::vector<u32> labels_row_order;  // labels[row_perm[i]]
  std::vector<u32> labels_col_order;  // labels[col_perm[i]]
  std::vector<u8> mask_row_order, mask_col_order;

  // label/mask arrays for the parity the final layer output lands in
  const std::vector<u32>& labels_for_parity(int parity) const {
    return parity == 0 ? labels_row_order : labels_col_order;
  }
  const std::vector<u8>& mask_for_parity(int parity) const {
    return parity == 0 ? mask_row_order : mask_col_order;
  }
};

// Output parity of the last of `num_layers` layers: even layers emit
// row_perm order (parity 0), odd layers col_perm order (parity 1).
inline int final_output_parity(int num_layers) { return (num_layers - 1) % 2; }

template <typename T>
PreprocessedDataset<T> preprocess(const GraphDataset<T>& ds, u64 perm_seed) {
  ds.validate();
  auto a = normalize_adjacency(ds);
  auto perm = generate_permutation_pair(ds.num_nodes, perm_seed);
  auto permuted = apply_double_permutation(a, perm);
  PreprocessedDataset<T> out;
  out.n = ds.num_nodes;
  out.feat_dim = ds.features.cols();
  out.num_classes = ds.num_classes;
  out.perm_seed = perm_seed;
  out.a_even = std::move(permuted.even);
  out.a_odd = std::move(permuted.odd);
  out.features = DenseMatrix<T>::zeros(ds.num_nodes, ds.features.cols());
  out.labels_row_order.resize(ds.num_nodes);
  out.labels_col_order.resize(ds.num_nodes);
  out.mask_row_order.resize(ds.num_nodes);
  out.mask_col_order.resize(ds.num_nodes);
  for (std::size_t i = 0; i < ds.num_nodes; ++i) {
    const u32 pr = perm.row_perm[i], pc = perm.col_perm[i];
    std::copy(ds.features.row(pc).begin(), ds.features.row(pc).end(),
              out.features.row(i).begin());
    out.labels_row_order[i] = ds.labels[pr];
    out.labels_col_order[i] = ds.labels[pc];
    out.mask_row_order[i] = ds.train_mask[pr];
    out.mask_col_order[i] = ds.train_mask[pc];
  }
  return out;
}

}  // namespace plexuskit
