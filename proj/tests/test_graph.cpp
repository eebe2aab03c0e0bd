#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "plexuskit/graph.hpp"
#include "test_helpers.hpp"

using namespace plexuskit;
using namespace pxt;

namespace {

template <typename T>
GraphDataset<T> tiny_dataset(std::size_t n,
                             std::vector<std::pair<u32, u32>> edges,
                             std::size_t feat_dim = 2, u32 classes = 2) {
  GraphDataset<T> ds;
  ds.num_nodes = n;
  ds.edges = std::move(edges);
  ds.num_classes = classes;
  Philox rng(99, 0);
  ds.features = random_dense<T>(n, feat_dim, rng, 0.0, 1.0);
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.labels[i] = i % classes;
  ds.train_mask.assign(n, 1);
  return ds;
}

// merge-sort inversion count for the Kendall tau statistic
u64 count_inversions(std::vector<u32> v) {
  std::vector<u32> tmp(v.size());
  u64 inv = 0;
  for (std::size_t width = 1; width < v.size(); width *= 2) {
    for (std::size_t lo = 0; lo + width < v.size(); lo += 2 * width) {
      std::size_t mid = lo + width, hi = std::min(lo + 2 * width, v.size());
      std::size_t a = lo, b = mid, o = lo;
      while (a < mid && b < hi) {
        if (v[a] <= v[b]) tmp[o++] = v[a++];
        else {
          inv += mid - a;
          tmp[o++] = v[b++];
        }
      }
      while (a < mid) tmp[o++] = v[a++];
      while (b < hi) tmp[o++] = v[b++];
      std::copy(tmp.begin() + lo, tmp.begin() + hi, v.begin() + lo);
    }
  }
  return inv;
}

}  // namespace

TEST_SUITE_BEGIN("graph_prep");

TEST_CASE("normalize: single node becomes [[1]]") {
  auto ds = tiny_dataset<double>(1, {});
  auto a = normalize_adjacency(ds);
  CHECK(a.nnz() == 1);
  CHECK(a.to_dense().at(0, 0) == 1.0);
}

TEST_CASE("normalize: one undirected edge gives four 0.5 entries") {
  auto ds = tiny_dataset<double>(2, {{0, 1}});
  auto dense = normalize_adjacency(ds).to_dense();
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      CHECK(dense.at(i, j) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("normalize: star graph center-to-leaf weight is 1/sqrt(8)") {
  auto ds = tiny_dataset<double>(4, {{0, 1}, {0, 2}, {0, 3}});
  auto dense = normalize_adjacency(ds).to_dense();
  // center degree 4 (3 leaves + self), leaf degree 2
  for (std::size_t leaf = 1; leaf < 4; ++leaf) {
    CHECK(dense.at(0, leaf) == doctest::Approx(1.0 / std::sqrt(8.0)).epsilon(1e-12));
    CHECK(dense.at(leaf, 0) == doctest::Approx(1.0 / std::sqrt(8.0)).epsilon(1e-12));
    CHECK(dense.at(leaf, leaf) == doctest::Approx(0.5).epsilon(1e-12));
  }
  CHECK(dense.at(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("normalize: duplicate edges are deduplicated") {
  auto once = normalize_adjacency(tiny_dataset<double>(3, {{0, 1}}));
  auto dup = normalize_adjacency(tiny_dataset<double>(3, {{0, 1}, {0, 1}, {1, 0}}));
  CHECK(once == dup);
}

TEST_CASE("normalize: undirected output is symmetric with nonzero diagonal") {
  Philox rng(7, 0);
  auto ds = synth_erdos<double>({50, 0.1}, 4, 3, 21);
  auto a = normalize_adjacency(ds);
  auto dense = a.to_dense();
  for (std::size_t i = 0; i < 50; ++i) {
    CHECK(dense.at(i, i) > 0.0);
    for (std::size_t j = 0; j < 50; ++j) CHECK(dense.at(i, j) == dense.at(j, i));
  }
}

TEST_CASE("permutation pair: singleton, determinism, near-zero kendall tau") {
  auto p1 = generate_permutation_pair(1, 42);
  CHECK(p1.row_perm == std::vector<u32>{0});
  CHECK(p1.col_perm == std::vector<u32>{0});

  auto a = generate_permutation_pair(1000, 7);
  auto b = generate_permutation_pair(1000, 7);
  CHECK(a.row_perm == b.row_perm);
  CHECK(a.col_perm == b.col_perm);
  CHECK(a.row_perm != a.col_perm);

  // bijection: sorted image is 0..n-1
  auto sorted = a.row_perm;
  std::sort(sorted.begin(), sorted.end());
  for (u32 i = 0; i < 1000; ++i) CHECK(sorted[i] == i);

  const std::size_t n = 10000;
  auto big = generate_permutation_pair(n, 123);
  const double pairs = static_cast<double>(n) * (n - 1) / 2.0;
  double tau = 1.0 - 2.0 * static_cast<double>(count_inversions(big.row_perm)) / pairs;
  CHECK(std::abs(tau) <= 0.05);
}

TEST_CASE("double permutation: identity perms, nnz conservation") {
  Philox rng(8, 0);
  auto a = random_csr<double>(12, 12, 0.3, rng);
  PermutationPair ident;
  ident.row_perm.resize(12);
  ident.col_perm.resize(12);
  std::iota(ident.row_perm.begin(), ident.row_perm.end(), 0u);
  std::iota(ident.col_perm.begin(), ident.col_perm.end(), 0u);
  auto permuted = apply_double_permutation(a, ident);
  CHECK(permuted.even == a);
  CHECK(permuted.odd == a);

  auto pair = generate_permutation_pair(12, 5);
  auto p2 = apply_double_permutation(a, pair);
  CHECK(p2.even.nnz() == a.nnz());
  CHECK(p2.odd.nnz() == a.nnz());
  // multiset of values preserved
  auto vals_of = [](const CsrMatrix<double>& m) {
    auto v = m.values();
    std::sort(v.begin(), v.end());
    return v;
  };
  CHECK(vals_of(p2.even) == vals_of(a));
  CHECK(vals_of(p2.odd) == vals_of(a));

  auto rect = CsrMatrix<double>::from_sorted_triplets(2, 3, {0}, {1}, {1.0});
  CHECK_THROWS_AS(apply_double_permutation(rect, pair), ContractError);
}

TEST_CASE("permute_csr inverts cleanly") {
  Philox rng(9, 0);
  auto a = random_csr<double>(20, 20, 0.2, rng);
  auto pair = generate_permutation_pair(20, 77);
  auto permuted = permute_csr(a, pair.row_perm, pair.col_perm);
  auto back = permute_csr(permuted, invert_permutation(pair.row_perm),
                          invert_permutation(pair.col_perm));
  CHECK(back == a);
}

TEST_CASE("balance_metric: equal-count blocks score exactly 1") {
  // every 2x2 block holds exactly one nonzero
  auto even = CsrMatrix<double>::from_sorted_triplets(
      4, 4, {0, 0, 2, 2}, {0, 2, 0, 2}, {1.0, 1.0, 1.0, 1.0});
  CHECK(balance_metric(even, 2, 2) == doctest::Approx(1.0));

  // a diagonal matrix concentrates everything in the p diagonal blocks
  std::vector<u32> idx(8);
  std::iota(idx.begin(), idx.end(), 0u);
  auto diag = CsrMatrix<double>::from_sorted_triplets(
      8, 8, idx, idx, std::vector<double>(8, 1.0));
  CHECK(balance_metric(diag, 1, 1) == doctest::Approx(1.0));
  CHECK(balance_metric(diag, 2, 2) == doctest::Approx(2.0));
  CHECK_THROWS_AS(balance_metric(CsrMatrix<double>(), 2, 2), ContractError);
}

TEST_CASE("balance_metric is at least 1") {
  Philox rng(10, 0);
  for (int t = 0; t < 5; ++t) {
    auto a = random_csr<double>(30 + rng.randint(40), 30 + rng.randint(40),
                                0.05 + 0.2 * rng.next_double(), rng);
    if (a.nnz() == 0) continue;
    CHECK(balance_metric(a, 3, 4) >= 1.0);
  }
}

TEST_CASE("double permutation flattens SBM community structure") {
  auto ds = synth_sbm<double>({4096, 8, 0.2, 0.001}, 8, 4, 31);
  auto pre = preprocess(ds, 1234);
  auto a = normalize_adjacency(ds);
  const double original = balance_metric(a, 8, 8);
  const double doubled = balance_metric(pre.a_even, 8, 8);
  // single permutation: same permutation on both sides
  auto pair = generate_permutation_pair(4096, 1234);
  auto single_mat = permute_csr(a, pair.row_perm, pair.row_perm);
  const double single = balance_metric(single_mat, 8, 8);
  CHECK(original > 1.5);
  CHECK(doubled < 1.05);
  CHECK(single > doubled);
  CHECK(single < original);
}

TEST_CASE("synth: one class means all labels zero") {
  auto ds = synth_erdos<double>({40, 0.1}, 3, 1, 5);
  for (u32 l : ds.labels) CHECK(l == 0);
}

TEST_CASE("synth: regular graph still bins labels deterministically") {
  // ring graph: every node has degree 2
  std::vector<std::pair<u32, u32>> edges;
  const u32 n = 16;
  for (u32 i = 0; i < n; ++i) edges.push_back({i, (i + 1) % n});
  auto labels = detail::degree_quantile_labels(edges, n, 4);
  for (u32 i = 0; i < n; ++i) {
    CHECK(labels[i] < 4);
    CHECK(labels[i] == i * 4 / n);  // ties broken by node index
  }
}

TEST_CASE("synth erdos: edge count within 3 sigma of the binomial mean") {
  auto ds = synth_erdos<double>({1000, 0.01}, 4, 2, 7);
  const double mean = 999.0 * 1000.0 / 2.0 * 0.01;
  const double sigma = std::sqrt(mean * 0.99);
  CHECK(std::abs(static_cast<double>(ds.edges.size()) - mean) <= 3 * sigma);
}

TEST_CASE("synth: invalid parameters are rejected") {
  CHECK_THROWS_AS(synth_erdos<double>({0, 0.5}, 2, 2, 1), ContractError);
  CHECK_THROWS_AS(synth_sbm<double>({10, 0, 0.5, 0.1}, 2, 2, 1), ContractError);
  CHECK_THROWS_AS(synth_rmat<double>({0, 10}, 2, 2, 1), ContractError);
}

TEST_CASE("synth rmat: deterministic and in range") {
  auto a = synth_rmat<double>({6, 200}, 4, 3, 9);
  auto b = synth_rmat<double>({6, 200}, 4, 3, 9);
  CHECK(a.edges == b.edges);
  CHECK(a.num_nodes == 64);
  for (auto [u, v] : a.edges) {
    CHECK(u < 64);
    CHECK(v < 64);
    CHECK(u != v);
  }
}

TEST_CASE("preprocess: label parities line up with permutations") {
  auto ds = tiny_dataset<double>(10, {{0, 1}, {2, 3}, {4, 5}}, 3, 5);
  for (std::size_t i = 0; i < 10; ++i) ds.labels[i] = static_cast<u32>(i % 5);
  auto pre = preprocess(ds, 42);
  auto pair = generate_permutation_pair(10, 42);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(pre.labels_row_order[i] == ds.labels[pair.row_perm[i]]);
    CHECK(pre.labels_col_order[i] == ds.labels[pair.col_perm[i]]);
  }
  CHECK(final_output_parity(3) == 0);
  CHECK(final_output_parity(2) == 1);
  CHECK(&pre.labels_for_parity(0) == &pre.labels_row_order);
  CHECK(&pre.labels_for_parity(1) == &pre.labels_col_order);
}

TEST_SUITE_END();
