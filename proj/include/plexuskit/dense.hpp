#pragma once

// Row-major dense matrix over float or double. Holds features, weights,
// activations and gradients; all kernels and collectives operate on it.

#include <cstring>
#include <new>
#include <span>
#include <string>
#include <vector>

#include "plexuskit/common.hpp"

namespace plexuskit {

template <typename T>
class DenseMatrix {
  static_assert(std::is_floating_point_v<T>);

public:
  DenseMatrix() = default;

  DenseMatrix(std::size_t rows, std::size_t cols, std::vector<T> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    check(data_.size() == rows_ * cols_, "DenseMatrix: data length != rows*cols");
  }

  static DenseMatrix zeros(std::size_t rows, std::size_t cols) {
    DenseMatrix m;
    m.rows_ = rows;
    m.cols_ = cols;
    try {
      m.data_.assign(rows * cols, T(0));
    } catch (const std::bad_alloc&) {
      throw MemoryError("allocation failed for dense matrix " +
                        std::to_string(rows) + "x" + std::to_string(cols));
    }
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  u64 bytes() const { return static_cast<u64>(data_.size()) * sizeof(T); }
  bool same_shape(const DenseMatrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }
  std::string shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

  T& at(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const T& at(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  std::span<T> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const T> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }

  DenseMatrix block(std::size_t r0, std::size_t r1, std::size_t c0,
                    std::size_t c1) const {
    check(r0 <= r1 && r1 <= rows_ && c0 <= c1 && c1 <= cols_,
          "DenseMatrix::block: range out of bounds");
    DenseMatrix out = zeros(r1 - r0, c1 - c0);
    for (std::size_t i = r0; i < r1; ++i)
      std::memcpy(out.row(i - r0).data(), data_.data() + i * cols_ + c0,
                  (c1 - c0) * sizeof(T));
    return out;
  }

  DenseMatrix row_block(std::size_t r0, std::size_t r1) const {
    return block(r0, r1, 0, cols_);
  }

  DenseMatrix transposed() const {
    DenseMatrix out = zeros(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) out.at(j, i) = at(i, j);
    return out;
  }

  bool operator==(const DenseMatrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
  }

  // Stacks blocks on top of each other; all must share the column count.
  static DenseMatrix concat_rows(std::span<const DenseMatrix* const> parts) {
    std::size_t rows = 0, cols = parts.empty() ? 0 : parts[0]->cols();
    for (const auto* p : parts) {
      check(p->cols() == cols, "concat_rows: column mismatch");
      rows += p->rows();
    }
    DenseMatrix out = zeros(rows, cols);
    std::size_t r = 0;
    for (const auto* p : parts) {
      std::memcpy(out.data() + r * cols, p->data(), p->size() * sizeof(T));
      r += p->rows();
    }
    return out;
  }

  static DenseMatrix concat_cols(std::span<const DenseMatrix* const> parts) {
    std::size_t cols = 0, rows = parts.empty() ? 0 : parts[0]->rows();
    for (const auto* p : parts) {
      check(p->rows() == rows, "concat_cols: row mismatch");
      cols += p->cols();
    }
    DenseMatrix out = zeros(rows, cols);
    std::size_t c = 0;
    for (const auto* p : parts) {
      for (std::size_t i = 0; i < rows; ++i)
        std::memcpy(out.data() + i * cols + c, p->row(i).data(),
                    p->cols() * sizeof(T));
      c += p->cols();
    }
    return out;
  }

private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<T> data_;
};

}  // namespace plexuskit
