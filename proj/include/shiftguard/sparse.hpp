#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <tuple>
#include <vector>

#include "shiftguard/error.hpp"
#include "shiftguard/tensor.hpp"

namespace shiftguard {

/// Square CSR matrix. Column indices are strictly increasing within a row.
class SparseMatrix {
 public:
  struct Entry {
    std::size_t row;
    std::size_t col;
    double value;
  };

  SparseMatrix() : row_ptr_(1, 0) {}

  SparseMatrix(std::size_t n, std::vector<std::size_t> row_ptr, std::vector<std::size_t> col_idx,
               std::vector<double> values)
      : n_(n), row_ptr_(std::move(row_ptr)), col_idx_(std::move(col_idx)), values_(std::move(values)) {
    validate();
  }

  static SparseMatrix identity(std::size_t n) {
    std::vector<std::size_t> ptr(n + 1), col(n);
    for (std::size_t i = 0; i < n; ++i) {
      ptr[i + 1] = i + 1;
      col[i] = i;
    }
    return {n, std::move(ptr), std::move(col), std::vector<double>(n, 1.0)};
  }

  // Duplicate (row, col) pairs are rejected.
  static SparseMatrix from_entries(std::size_t n, std::vector<Entry> entries) {
    std::sort(entries.begin(), entries.end(),
              [](const Entry& a, const Entry& b) { return std::tie(a.row, a.col) < std::tie(b.row, b.col); });
    std::vector<std::size_t> ptr(n + 1, 0), col;
    std::vector<double> val;
    col.reserve(entries.size());
    val.reserve(entries.size());
    for (const auto& e : entries) {
      require(e.row < n && e.col < n, "sparse entry out of range");
      ++ptr[e.row + 1];
      col.push_back(e.col);
      val.push_back(e.value);
    }
    for (std::size_t i = 0; i < n; ++i) ptr[i + 1] += ptr[i];
    return {n, std::move(ptr), std::move(col), std::move(val)};
  }

  static SparseMatrix from_dense(const Tensor& d) {
    require(d.rows() == d.cols(), "from_dense: matrix must be square");
    std::vector<Entry> entries;
    for (std::size_t i = 0; i < d.rows(); ++i)
      for (std::size_t j = 0; j < d.cols(); ++j)
        if (d(i, j) != 0.0) entries.push_back({i, j, d(i, j)});
    return from_entries(d.rows(), std::move(entries));
  }

  std::size_t n() const { return n_; }
  std::size_t nnz() const { return col_idx_.size(); }
  const std::vector<std::size_t>& row_ptr() const { return row_ptr_; }
  const std::vector<std::size_t>& col_idx() const { return col_idx_; }
  const std::vector<double>& values() const { return values_; }

  std::size_t row_nnz(std::size_t i) const { return row_ptr_[i + 1] - row_ptr_[i]; }

  Tensor densify() const {
    Tensor d(n_, n_);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) d(i, col_idx_[p]) = values_[p];
    return d;
  }

  bool is_symmetric() const {
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) {
        const std::size_t j = col_idx_[p];
        const auto b = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[j]);
        const auto e = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[j + 1]);
        const auto it = std::lower_bound(b, e, i);
        if (it == e || *it != i) return false;
        if (values_[static_cast<std::size_t>(it - col_idx_.begin())] != values_[p]) return false;
      }
    }
    return true;
  }

  friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;

 private:
  void validate() const {
    require(row_ptr_.size() == n_ + 1, "csr: row_ptr must have length n+1");
    require(row_ptr_.front() == 0, "csr: row_ptr[0] must be 0");
    require(row_ptr_.back() == col_idx_.size(), "csr: row_ptr[n] != nnz");
    require(values_.size() == col_idx_.size(), "csr: values/col_idx length mismatch");
    for (std::size_t i = 0; i < n_; ++i) {
      require(row_ptr_[i] <= row_ptr_[i + 1], "csr: row_ptr must be nondecreasing");
      for (std::size_t p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) {
        require(col_idx_[p] < n_, "csr: column index out of range");
        require(p == row_ptr_[i] || col_idx_[p - 1] < col_idx_[p],
                "csr: column indices must be strictly increasing within a row");
      }
    }
  }

  std::size_t n_ = 0;
  std::vector<std::size_t> row_ptr_;
  std::vector<std::size_t> col_idx_;
  std::vector<double> values_;
};

/// s * x.
inline Tensor spmm(const SparseMatrix& s, const Tensor& x) {
  if (s.n() != x.rows())
    throw ContractError("spmm: dimension mismatch " + std::to_string(s.n()) + " vs " + shape_str(x));
  Tensor out(x.rows(), x.cols());
  const auto& ptr = s.row_ptr();
  const auto& col = s.col_idx();
  const auto& val = s.values();
  for (std::size_t i = 0; i < s.n(); ++i) {
    auto o = out.row(i);
    for (std::size_t p = ptr[i]; p < ptr[i + 1]; ++p) {
      const auto xr = x.row(col[p]);
      const double v = val[p];
      for (std::size_t j = 0; j < x.cols(); ++j) o[j] += v * xr[j];
    }
  }
  return out;
}

/// s^T * g, scattered row by row in storage order.
inline Tensor spmm_transposed(const SparseMatrix& s, const Tensor& g) {
  if (s.n() != g.rows())
    throw ContractError("spmm_transposed: dimension mismatch " + std::to_string(s.n()) + " vs " + shape_str(g));
  Tensor out(g.rows(), g.cols());
  const auto& ptr = s.row_ptr();
  const auto& col = s.col_idx();
  const auto& val = s.values();
  for (std::size_t i = 0; i < s.n(); ++i) {
    const auto gr = g.row(i);
    for (std::size_t p = ptr[i]; p < ptr[i + 1]; ++p) {
      auto o = out.row(col[p]);
      const double v = val[p];
      for (std::size_t j = 0; j < g.cols(); ++j) o[j] += v * gr[j];
    }
  }
  return out;
}

}  // namespace shiftguard
