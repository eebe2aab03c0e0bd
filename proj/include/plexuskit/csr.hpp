#pragma once

// Compressed sparse row matrix; the storage format for adjacency shards.
// Column indices are strictly increasing within each row.

#include <string>
#include <vector>

#include "plexuskit/common.hpp"
#include "plexuskit/dense.hpp"

namespace plexuskit {

template <typename T>
class CsrMatrix {
public:
  CsrMatrix() : row_ptr_(1, 0) {}

  CsrMatrix(std::size_t rows, std::size_t cols, std::vector<u64> row_ptr,
            std::vector<u32> col_idx, std::vector<T> values)
      : rows_(rows),
        cols_(cols),
        row_ptr_(std::move(row_ptr)),
        col_idx_(std::move(col_idx)),
        values_(std::move(values)) {
    validate();
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  u64 nnz() const { return row_ptr_.back(); }

  const std::vector<u64>& row_ptr() const { return row_ptr_; }
  const std::vector<u32>& col_idx() const { return col_idx_; }
  const std::vector<T>& values() const { return values_; }

  void validate() const {
    check(row_ptr_.size() == rows_ + 1, "csr: row_ptr length != rows+1");
    check(row_ptr_.front() == 0, "csr: row_ptr[0] != 0");
    check(row_ptr_.back() == col_idx_.size() && col_idx_.size() == values_.size(),
          "csr: nnz mismatch between row_ptr, col_idx and values");
    for (std::size_t i = 0; i < rows_; ++i) {
      check(row_ptr_[i] <= row_ptr_[i + 1], "csr: row_ptr not monotone");
      for (u64 k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
        check(col_idx_[k] < cols_, "csr: column index out of range");
        if (k > row_ptr_[i])
          check(col_idx_[k - 1] < col_idx_[k],
                "csr: column indices not strictly increasing within a row");
      }
    }
  }

  // Builds from (row, col, value) triplets; duplicates are not allowed.
  static CsrMatrix from_sorted_triplets(std::size_t rows, std::size_t cols,
                                        const std::vector<u32>& r,
                                        const std::vector<u32>& c,
                                        const std::vector<T>& v) {
    check(r.size() == c.size() && c.size() == v.size(),
          "csr: triplet arrays disagree");
    CsrMatrix m;
    m.rows_ = rows;
    m.cols_ = cols;
    m.row_ptr_.assign(rows + 1, 0);
    for (u32 ri : r) m.row_ptr_[ri + 1]++;
    for (std::size_t i = 0; i < rows; ++i) m.row_ptr_[i + 1] += m.row_ptr_[i];
    m.col_idx_.resize(v.size());
    m.values_.resize(v.size());
    std::vector<u64> fill(m.row_ptr_.begin(), m.row_ptr_.end() - 1);
    for (std::size_t k = 0; k < v.size(); ++k) {
      u64 pos = fill[r[k]]++;
      m.col_idx_[pos] = c[k];
      m.values_[pos] = v[k];
    }
    m.validate();
    return m;
  }

  CsrMatrix transpose() const {
    CsrMatrix out;
    out.rows_ = cols_;
    out.cols_ = rows_;
    out.row_ptr_.assign(cols_ + 1, 0);
    for (u32 c : col_idx_) out.row_ptr_[c + 1]++;
    for (std::size_t i = 0; i < cols_; ++i) out.row_ptr_[i + 1] += out.row_ptr_[i];
    out.col_idx_.resize(nnz());
    out.values_.resize(nnz());
    std::vector<u64> fill(out.row_ptr_.begin(), out.row_ptr_.end() - 1);
    for (std::size_t i = 0; i < rows_; ++i)
      for (u64 k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
        u64 pos = fill[col_idx_[k]]++;
        out.col_idx_[pos] = static_cast<u32>(i);
        out.values_[pos] = values_[k];
      }
    return out;
  }

  // Extracts the sub-matrix rows [r0,r1) x cols [c0,c1) with local indices.
  CsrMatrix block(std::size_t r0, std::size_t r1, std::size_t c0,
                  std::size_t c1) const {
    check(r0 <= r1 && r1 <= rows_ && c0 <= c1 && c1 <= cols_,
          "csr block: range out of bounds");
    CsrMatrix out;
    out.rows_ = r1 - r0;
    out.cols_ = c1 - c0;
    out.row_ptr_.assign(out.rows_ + 1, 0);
    for (std::size_t i = r0; i < r1; ++i)
      for (u64 k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k)
        if (col_idx_[k] >= c0 && col_idx_[k] < c1) out.row_ptr_[i - r0 + 1]++;
    for (std::size_t i = 0; i < out.rows_; ++i)
      out.row_ptr_[i + 1] += out.row_ptr_[i];
    out.col_idx_.reserve(out.row_ptr_.back());
    out.values_.reserve(out.row_ptr_.back());
    for (std::size_t i = r0; i < r1; ++i)
      for (u64 k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k)
        if (col_idx_[k] >= c0 && col_idx_[k] < c1) {
          out.col_idx_.push_back(static_cast<u32>(col_idx_[k] - c0));
          out.values_.push_back(values_[k]);
        }
    return out;
  }

  // Keeps only rows [r0,r1); column space unchanged.
  CsrMatrix row_block(std::size_t r0, std::size_t r1) const {
    return block(r0, r1, 0, cols_);
  }

  DenseMatrix<T> to_dense() const {
    auto out = DenseMatrix<T>::zeros(rows_, cols_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (u64 k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k)
        out.at(i, col_idx_[k]) = values_[k];
    return out;
  }

  bool operator==(const CsrMatrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && row_ptr_ == o.row_ptr_ &&
           col_idx_ == o.col_idx_ && values_ == o.values_;
  }

  std::string shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<u64> row_ptr_;
  std::vector<u32> col_idx_;
  std::vector<T> values_;
};

}  // namespace plexuskit
