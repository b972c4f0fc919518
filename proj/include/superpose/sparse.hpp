#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "superpose/error.hpp"

namespace superpose {

struct Triplet {
  std::uint32_t row = 0;
  std::uint32_t col = 0;
  double value = 0.0;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

/// Compressed sparse row matrix of doubles.
///
/// Entries within a row are kept sorted by column and explicit zeros are
/// dropped, so two matrices with equal entries compare equal and serialize
/// to identical bytes.
class SparseMatrix {
 public:
  SparseMatrix() = default;
  SparseMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), row_ptr_(rows + 1, 0) {}

  /// Duplicate coordinates are summed.
  static SparseMatrix from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> entries) {
    for (const auto& t : entries) {
      if (t.row >= rows || t.col >= cols) {
        throw Error(ErrorKind::DimensionMismatch, "triplet outside matrix bounds");
      }
    }
    // Bucket by row, then order each row by column; duplicates sum in input order.
    std::vector<std::size_t> start(rows + 1, 0);
    for (const auto& t : entries) ++start[t.row + 1];
    for (std::size_t r = 0; r < rows; ++r) start[r + 1] += start[r];
    std::vector<Triplet> bucketed(entries.size());
    {
      auto fill = start;
      for (const auto& t : entries) bucketed[fill[t.row]++] = t;
    }
    SparseMatrix out(rows, cols);
    out.cols_idx_.reserve(entries.size());
    out.values_.reserve(entries.size());
    for (std::size_t r = 0; r < rows; ++r) {
      const auto first = bucketed.begin() + static_cast<std::ptrdiff_t>(start[r]);
      const auto last = bucketed.begin() + static_cast<std::ptrdiff_t>(start[r + 1]);
      std::stable_sort(first, last, [](const Triplet& a, const Triplet& b) { return a.col < b.col; });
      for (auto it = first; it != last;) {
        const auto col = it->col;
        double sum = 0.0;
        while (it != last && it->col == col) sum += (it++)->value;
        if (sum != 0.0) {
          out.cols_idx_.push_back(col);
          out.values_.push_back(sum);
        }
      }
      out.row_ptr_[r + 1] = out.cols_idx_.size();
    }
    return out;
  }

  static SparseMatrix from_dense(std::size_t rows, std::size_t cols, std::span<const double> dense) {
    std::vector<Triplet> entries;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) {
        const double v = dense[r * cols + c];
        if (v != 0.0) entries.push_back({static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(c), v});
      }
    }
    return from_triplets(rows, cols, std::move(entries));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t nnz() const { return values_.size(); }

  std::span<const std::uint32_t> row_cols(std::size_t r) const {
    return {cols_idx_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }
  std::span<const double> row_values(std::size_t r) const {
    return {values_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }

  double at(std::size_t r, std::size_t c) const {
    const auto cols = row_cols(r);
    const auto it = std::lower_bound(cols.begin(), cols.end(), static_cast<std::uint32_t>(c));
    if (it == cols.end() || *it != c) return 0.0;
    return row_values(r)[static_cast<std::size_t>(it - cols.begin())];
  }

  /// Row-major sorted coordinate list.
  std::vector<Triplet> triplets() const {
    std::vector<Triplet> out;
    out.reserve(nnz());
    for (std::size_t r = 0; r < rows_; ++r) {
      for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
        out.push_back({static_cast<std::uint32_t>(r), cols_idx_[k], values_[k]});
      }
    }
    return out;
  }

  SparseMatrix transpose() const {
    SparseMatrix out(cols_, rows_);
    for (const auto c : cols_idx_) ++out.row_ptr_[c + 1];
    for (std::size_t c = 0; c < cols_; ++c) out.row_ptr_[c + 1] += out.row_ptr_[c];
    out.cols_idx_.resize(nnz());
    out.values_.resize(nnz());
    auto fill = out.row_ptr_;
    for (std::size_t r = 0; r < rows_; ++r) {
      for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
        const auto dst = fill[cols_idx_[k]]++;
        out.cols_idx_[dst] = static_cast<std::uint32_t>(r);
        out.values_[dst] = values_[k];
      }
    }
    return out;
  }

  /// Gustavson row-by-row product with a dense accumulator.
  SparseMatrix multiply(const SparseMatrix& rhs) const {
    if (cols_ != rhs.rows_) throw Error(ErrorKind::DimensionMismatch, "matrix product inner dimensions differ");
    SparseMatrix out(rows_, rhs.cols_);
    std::vector<double> acc(rhs.cols_, 0.0);
    std::vector<char> touched(rhs.cols_, 0);
    std::vector<std::uint32_t> pattern;
    for (std::size_t r = 0; r < rows_; ++r) {
      pattern.clear();
      for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
        const auto mid = cols_idx_[k];
        const double a = values_[k];
        for (std::size_t q = rhs.row_ptr_[mid]; q < rhs.row_ptr_[mid + 1]; ++q) {
          const auto c = rhs.cols_idx_[q];
          if (!touched[c]) {
            touched[c] = 1;
            pattern.push_back(c);
          }
          acc[c] += a * rhs.values_[q];
        }
      }
      std::sort(pattern.begin(), pattern.end());
      for (const auto c : pattern) {
        if (acc[c] != 0.0) {
          out.cols_idx_.push_back(c);
          out.values_.push_back(acc[c]);
        }
        acc[c] = 0.0;
        touched[c] = 0;
      }
      out.row_ptr_[r + 1] = out.values_.size();
    }
    return out;
  }

  std::vector<double> multiply(std::span<const double> x) const {
    if (x.size() != cols_) throw Error(ErrorKind::DimensionMismatch, "vector length differs from matrix columns");
    std::vector<double> y(rows_, 0.0);
    for (std::size_t r = 0; r < rows_; ++r) {
      double sum = 0.0;
      for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) sum += values_[k] * x[cols_idx_[k]];
      y[r] = sum;
    }
    return y;
  }

  std::vector<double> to_dense() const {
    std::vector<double> d(rows_ * cols_, 0.0);
    for (std::size_t r = 0; r < rows_; ++r) {
      for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) d[r * cols_ + cols_idx_[k]] = values_[k];
    }
    return d;
  }

  friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::uint32_t> cols_idx_;
  std::vector<double> values_;
};

/// Dense y = A x for a row-major dense matrix, used as the reference path.
inline std::vector<double> dense_multiply(std::span<const double> a, std::size_t rows, std::size_t cols,
                                          std::span<const double> x) {
  std::vector<double> y(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < cols; ++c) sum += a[r * cols + c] * x[c];
    y[r] = sum;
  }
  return y;
}

}  // namespace superpose
