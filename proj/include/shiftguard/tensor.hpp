#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "shiftguard/error.hpp"

namespace shiftguard {

/// Dense row-major matrix of doubles. Vectors are n x 1 or 1 x n tensors.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    require(data_.size() == rows_ * cols_, "tensor data length != rows * cols");
  }

  static Tensor zeros(std::size_t rows, std::size_t cols) { return {rows, cols}; }
  static Tensor ones(std::size_t rows, std::size_t cols) { return {rows, cols, 1.0}; }
  static Tensor identity(std::size_t n) {
    Tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
  }
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      require(row.size() == c, "ragged rows");
      data.insert(data.end(), row.begin(), row.end());
    }
    return {r, c, std::move(data)};
  }
  static Tensor column(std::span<const double> values) {
    return {values.size(), 1, std::vector<double>(values.begin(), values.end())};
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline std::string shape_str(const Tensor& t) {
  return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw ContractError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

// ---------------------------------------------------------------------------
// Value-level kernels. Summation orders are fixed so results are bit-stable.

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw ContractError("matmul: dimension mismatch " + shape_str(a) + " x " + shape_str(b));
  Tensor out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto orow = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      const auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

// a^T b without materializing the transpose.
inline Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows())
    throw ContractError("matmul_tn: dimension mismatch " + shape_str(a) + " vs " + shape_str(b));
  Tensor out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const auto arow = a.row(k);
    const auto brow = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = arow[i];
      auto orow = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aki * brow[j];
    }
  }
  return out;
}

// a b^T without materializing the transpose.
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols())
    throw ContractError("matmul_nt: dimension mismatch " + shape_str(a) + " vs " + shape_str(b));
  Tensor out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto arow = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const auto brow = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += arow[k] * brow[k];
      out(i, j) = acc;
    }
  }
  return out;
}

inline Tensor transpose(const Tensor& a) {
  Tensor out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

inline Tensor scale(const Tensor& a, double c) {
  Tensor out = a;
  for (auto& v : out.data()) v *= c;
  return out;
}

inline Tensor relu(const Tensor& a) {
  Tensor out = a;
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

// a + 1 * bias, bias is 1 x cols.
inline Tensor add_row_vector(const Tensor& a, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols())
    throw ContractError("add_row_vector: bias must be 1x" + std::to_string(a.cols()) + ", got " +
                        shape_str(bias));
  Tensor out = a;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < out.cols(); ++j) r[j] += bias[j];
  }
  return out;
}

inline double sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return acc;
}

inline Tensor gather_rows(const Tensor& a, std::span<const std::size_t> idx) {
  Tensor out(idx.size(), a.cols());
  for (std::size_t t = 0; t < idx.size(); ++t) {
    require(idx[t] < a.rows(), "gather_rows: index out of range");
    std::copy_n(a.row(idx[t]).begin(), a.cols(), out.row(t).begin());
  }
  return out;
}

inline Tensor row_softmax(const Tensor& x, double temperature) {
  if (!(temperature > 0.0)) throw ContractError("row_softmax: temperature must be positive");
  Tensor out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const auto in = x.row(i);
    auto o = out.row(i);
    double mx = -INFINITY;
    for (double v : in) mx = std::max(mx, v);
    double z = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp((in[j] - mx) / temperature);
      z += o[j];
    }
    for (double& v : o) v /= z;
  }
  return out;
}

inline constexpr double kKlClamp = 1e-12;
inline constexpr double kProbabilityTolerance = 1e-6;

inline void require_probability_rows(const Tensor& p, const char* which) {
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double s = 0.0;
    for (double v : p.row(i)) {
      if (!(v >= 0.0)) throw ContractError(std::string("kl_rows: negative entry in ") + which);
      s += v;
    }
    if (std::abs(s - 1.0) > kProbabilityTolerance)
      throw ContractError(std::string("kl_rows: row of ") + which + " is not a probability vector");
  }
}

/// Mean over rows of sum_j p_ij ln(p_ij / max(q_ij, 1e-12)). Zero entries of
/// p contribute nothing.
inline double kl_rows(const Tensor& p, const Tensor& q) {
  require_same_shape(p, q, "kl_rows");
  require(p.rows() > 0, "kl_rows: empty input");
  require_probability_rows(p, "p");
  require_probability_rows(q, "q");
  double total = 0.0;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < p.cols(); ++j) {
      const double pij = p(i, j);
      if (pij > 0.0) row += pij * (std::log(pij) - std::log(std::max(q(i, j), kKlClamp)));
    }
    total += row;
  }
  return total / static_cast<double>(p.rows());
}

inline double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }
inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline void require_binary_labels(std::span<const int> labels) {
  for (int y : labels)
    if (y != 0 && y != 1) throw ContractError("label outside {0,1}");
}

/// Mean of -[w*y*log sigmoid(z) + (1-y)*log(1-sigmoid(z))].
inline double bce_with_logits(const Tensor& logits, std::span<const int> labels, double positive_weight) {
  require(logits.cols() == 1, "bce_with_logits: logits must be n x 1");
  require(logits.rows() == labels.size(), "bce_with_logits: length mismatch");
  require(!labels.empty(), "bce_with_logits: empty input");
  require(positive_weight > 0.0, "bce_with_logits: positive_weight must be > 0");
  require_binary_labels(labels);
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double z = logits[i];
    total += labels[i] == 1 ? positive_weight * softplus(-z) : softplus(z);
  }
  return total / static_cast<double>(labels.size());
}

}  // namespace shiftguard
