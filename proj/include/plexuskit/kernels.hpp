#pragma once

// Dense and sparse compute kernels. All of them are pure functions and
// accumulate in ascending index order so that serial and distributed paths
// can be compared bit-for-bit. FLOP counters are exact integers.

#include <cmath>
#include <utility>
#include <vector>

#include "plexuskit/csr.hpp"
#include "plexuskit/dense.hpp"

namespace plexuskit {

// result[i,j] = sum_k A[i,k] * X[k,j]; flops += 2*nnz(A)*X.cols.
template <typename T>
DenseMatrix<T> spmm(const CsrMatrix<T>& a, const DenseMatrix<T>& x,
                    u64* flops = nullptr) {
  check(a.cols() == x.rows(), "spmm: A is " + a.shape_str() + " but X is " +
                                  x.shape_str());
  auto out = DenseMatrix<T>::zeros(a.rows(), x.cols());
  const auto& rp = a.row_ptr();
  const auto& ci = a.col_idx();
  const auto& vals = a.values();
  const std::size_t n = x.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    T* dst = out.row(i).data();
    for (u64 k = rp[i]; k < rp[i + 1]; ++k) {
      const T v = vals[k];
      const T* src = x.row(ci[k]).data();
      for (std::size_t j = 0; j < n; ++j) dst[j] += v * src[j];
    }
  }
  if (flops) *flops += 2 * a.nnz() * static_cast<u64>(n);
  return out;
}

// Rows [r0, r1) of spmm(A, X) without materializing a row-block copy of A;
// the blocked aggregation path runs on this. flops += 2*nnz(block)*X.cols.
template <typename T>
DenseMatrix<T> spmm_rows(const CsrMatrix<T>& a, const DenseMatrix<T>& x,
                         std::size_t r0, std::size_t r1, u64* flops = nullptr) {
  check(a.cols() == x.rows(), "spmm_rows: A is " + a.shape_str() + " but X is " +
                                  x.shape_str());
  check(r0 <= r1 && r1 <= a.rows(), "spmm_rows: row range out of bounds");
  auto out = DenseMatrix<T>::zeros(r1 - r0, x.cols());
  const auto& rp = a.row_ptr();
  const auto& ci = a.col_idx();
  const auto& vals = a.values();
  const std::size_t n = x.cols();
  for (std::size_t i = r0; i < r1; ++i) {
    T* dst = out.row(i - r0).data();
    for (u64 k = rp[i]; k < rp[i + 1]; ++k) {
      const T v = vals[k];
      const T* src = x.row(ci[k]).data();
      for (std::size_t j = 0; j < n; ++j) dst[j] += v * src[j];
    }
  }
  if (flops) *flops += 2 * (a.row_ptr()[r1] - a.row_ptr()[r0]) * static_cast<u64>(n);
  return out;
}

// C = op(A) * op(B) with op chosen by the transpose flags; operands are never
// materialized transposed, the loops are just reordered. flops += 2*m*n*k.
template <typename T>
DenseMatrix<T> gemm(const DenseMatrix<T>& a, const DenseMatrix<T>& b,
                    bool transpose_a = false, bool transpose_b = false,
                    u64* flops = nullptr) {
  const std::size_t m = transpose_a ? a.cols() : a.rows();
  const std::size_t ka = transpose_a ? a.rows() : a.cols();
  const std::size_t kb = transpose_b ? b.cols() : b.rows();
  const std::size_t n = transpose_b ? b.rows() : b.cols();
  check(ka == kb, "gemm: inner dimensions disagree: " + a.shape_str() +
                      (transpose_a ? "^T" : "") + " * " + b.shape_str() +
                      (transpose_b ? "^T" : ""));
  auto out = DenseMatrix<T>::zeros(m, n);
  auto a_at = [&](std::size_t i, std::size_t k) {
    return transpose_a ? a.at(k, i) : a.at(i, k);
  };
  auto b_at = [&](std::size_t k, std::size_t j) {
    return transpose_b ? b.at(j, k) : b.at(k, j);
  };
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      T acc = 0;
      for (std::size_t k = 0; k < ka; ++k) acc += a_at(i, k) * b_at(k, j);
      out.at(i, j) = acc;
    }
  if (flops) *flops += 2 * static_cast<u64>(m) * n * ka;
  return out;
}

template <typename T>
DenseMatrix<T> relu_forward(const DenseMatrix<T>& q) {
  auto out = DenseMatrix<T>::zeros(q.rows(), q.cols());
  for (std::size_t i = 0; i < q.size(); ++i)
    out.data()[i] = q.data()[i] > T(0) ? q.data()[i] : T(0);
  return out;
}

// Subgradient at exactly 0 is 0, so the mask is strictly-positive.
template <typename T>
DenseMatrix<T> relu_backward(const DenseMatrix<T>& q, const DenseMatrix<T>& df) {
  check(q.same_shape(df), "relu_backward: Q is " + q.shape_str() +
                              " but dF is " + df.shape_str());
  auto out = DenseMatrix<T>::zeros(q.rows(), q.cols());
  for (std::size_t i = 0; i < q.size(); ++i)
    out.data()[i] = q.data()[i] > T(0) ? df.data()[i] : T(0);
  return out;
}

// Row-wise softmax cross-entropy pieces before any averaging. `dlogits` holds
// softmax - onehot for rows inside the mask and zero elsewhere; the caller
// divides by the (possibly global) masked-node count. `correct` counts masked
// rows whose argmax (lowest index on ties) equals the label.
template <typename T>
struct CrossEntropySums {
  double loss_sum = 0;
  u64 count = 0;
  u64 correct = 0;
  DenseMatrix<T> dlogits;
};

template <typename T>
CrossEntropySums<T> softmax_cross_entropy_sums(const DenseMatrix<T>& logits,
                                               const std::vector<u32>& labels,
                                               const std::vector<u8>& mask) {
  check(labels.size() == logits.rows(), "cross entropy: labels length " +
                                            std::to_string(labels.size()) +
                                            " != rows " +
                                            std::to_string(logits.rows()));
  check(mask.size() == logits.rows(), "cross entropy: mask length mismatch");
  const std::size_t c = logits.cols();
  CrossEntropySums<T> out;
  out.dlogits = DenseMatrix<T>::zeros(logits.rows(), c);
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    if (!mask[i]) continue;
    check(labels[i] < c, "cross entropy: label " + std::to_string(labels[i]) +
                             " out of range for " + std::to_string(c) +
                             " classes");
    auto row = logits.row(i);
    T mx = row[0];
    std::size_t argmax = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (row[j] > mx) mx = row[j], argmax = j;
    T denom = 0;
    for (std::size_t j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
    out.loss_sum += static_cast<double>(std::log(denom) - (row[labels[i]] - mx));
    out.count++;
    if (argmax == labels[i]) out.correct++;
    auto drow = out.dlogits.row(i);
    for (std::size_t j = 0; j < c; ++j)
      drow[j] = std::exp(row[j] - mx) / denom;
    drow[labels[i]] -= T(1);
  }
  return out;
}

// Mean masked cross-entropy; errors out when the mask is empty instead of
// producing NaN. dlogits rows are (softmax - onehot)/count, zero when masked.
template <typename T>
std::pair<double, DenseMatrix<T>> softmax_cross_entropy(
    const DenseMatrix<T>& logits, const std::vector<u32>& labels,
    const std::vector<u8>& mask) {
  auto sums = softmax_cross_entropy_sums(logits, labels, mask);
  check(sums.count > 0, "cross entropy: no rows selected by the mask");
  const T inv = T(1) / static_cast<T>(sums.count);
  for (std::size_t i = 0; i < sums.dlogits.size(); ++i)
    sums.dlogits.data()[i] *= inv;
  return {sums.loss_sum / static_cast<double>(sums.count),
          std::move(sums.dlogits)};
}

}  // namespace plexuskit
