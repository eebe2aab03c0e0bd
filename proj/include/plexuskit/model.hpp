#pragma once

// Weight initialization and the Adam optimizer. Weights are always
// initialized globally from the seed and then sliced, so every grid
// configuration starts from bitwise-identical full matrices.

#include <cmath>
#include <vector>

#include "plexuskit/dense.hpp"
#include "plexuskit/grid.hpp"
#include "plexuskit/layout.hpp"
#include "plexuskit/rng.hpp"

namespace plexuskit {

// Uniform Glorot-style init in +-sqrt(6/(fan_in+fan_out)); one Philox stream
// per layer so the draw order never depends on other layers.
template <typename T>
std::vector<DenseMatrix<T>> init_weights(const std::vector<std::size_t>& dims,
                                         u64 seed) {
  check(dims.size() >= 2, "init_weights: need at least input and output dims");
  std::vector<DenseMatrix<T>> out;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(dims[l] + dims[l + 1]));
    Philox rng(seed, 100 + l);
    auto w = DenseMatrix<T>::zeros(dims[l], dims[l + 1]);
    for (std::size_t i = 0; i < w.size(); ++i)
      w.data()[i] = static_cast<T>(rng.uniform(-bound, bound));
    out.push_back(std::move(w));
  }
  return out;
}

// The W^{Ll} block owned by one rank: rows split by col_shard then again by
// row_shard, columns split by inner.
struct WeightSlice {
  std::size_t r0, r1, c0, c1;
};

inline WeightSlice weight_slice(const GridConfig& grid, const LayerLayout& lay,
                                Coords c, std::size_t d_in, std::size_t d_out) {
  const int g_col = grid.extent(lay.col_shard), g_row = grid.extent(lay.row_shard);
  const int g_in = grid.extent(lay.inner);
  const std::size_t outer0 = chunk_start(d_in, g_col, c.along(lay.col_shard));
  const std::size_t outer_len = chunk_size(d_in, g_col, c.along(lay.col_shard));
  const std::size_t r0 = outer0 + chunk_start(outer_len, g_row, c.along(lay.row_shard));
  const std::size_t r1 = outer0 + chunk_start(outer_len, g_row, c.along(lay.row_shard) + 1);
  return {r0, r1, chunk_start(d_out, g_in, c.along(lay.inner)),
          chunk_start(d_out, g_in, c.along(lay.inner) + 1)};
}

// The trainable-feature block owned by one rank: rows split by the layer-0
// inner axis (X) then by the layer-0 row_shard axis (Z), cols by Y.
struct FeatureSlice {
  std::size_t r0, r1, c0, c1;
};

inline FeatureSlice feature_slice(const GridConfig& grid, Coords c,
                                  std::size_t n, std::size_t d0) {
  const std::size_t outer0 = chunk_start(n, grid.gx(), c.x);
  const std::size_t outer_len = chunk_size(n, grid.gx(), c.x);
  const std::size_t r0 = outer0 + chunk_start(outer_len, grid.gz(), c.z);
  const std::size_t r1 = outer0 + chunk_start(outer_len, grid.gz(), c.z + 1);
  return {r0, r1, chunk_start(d0, grid.gy(), c.y),
          chunk_start(d0, grid.gy(), c.y + 1)};
}

struct AdamParams {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Moment accumulators are sharded exactly like their parameter.
template <typename T>
struct AdamState {
  DenseMatrix<T> m, v;
  u64 step = 0;

  static AdamState like(const DenseMatrix<T>& param) {
    return {DenseMatrix<T>::zeros(param.rows(), param.cols()),
            DenseMatrix<T>::zeros(param.rows(), param.cols()), 0};
  }
};

template <typename T>
void adam_step(DenseMatrix<T>& param, const DenseMatrix<T>& grad,
               AdamState<T>& state, const AdamParams& opts) {
  check(param.same_shape(grad) && param.same_shape(state.m),
        "adam_step: parameter " + param.shape_str() + ", gradient " +
            grad.shape_str() + " and state shapes must agree");
  state.step++;
  const T b1 = static_cast<T>(opts.beta1), b2 = static_cast<T>(opts.beta2);
  const T bias1 = static_cast<T>(
      1.0 - std::pow(opts.beta1, static_cast<double>(state.step)));
  const T bias2 = static_cast<T>(
      1.0 - std::pow(opts.beta2, static_cast<double>(state.step)));
  const T lr = static_cast<T>(opts.lr), eps = static_cast<T>(opts.eps);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const T g = grad.data()[i];
    T& m = state.m.data()[i];
    T& v = state.v.data()[i];
    m = b1 * m + (T(1) - b1) * g;
    v = b2 * v + (T(1) - b2) * g * g;
    const T m_hat = m / bias1;
    const T v_hat = v / bias2;
    param.data()[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

}  // namespace plexuskit
