#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "shiftguard/error.hpp"
#include "shiftguard/graph.hpp"
#include "shiftguard/io.hpp"
#include "shiftguard/tensor.hpp"

namespace shiftguard {

/// Rows of `h` projected onto the top two principal axes (n x 2). Each axis
/// is signed so that its largest-magnitude loading is positive; a missing
/// second axis (r == 1) projects to 0.
inline Tensor pca_2d(const Tensor& h) {
  const std::size_t n = h.rows();
  const std::size_t r = h.cols();
  require(n >= 1 && r >= 1, "pca_2d: empty input");
  Eigen::MatrixXd x(n, r);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < r; ++j) x(i, j) = h(i, j);
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  require(solver.info() == Eigen::Success, "pca_2d: eigendecomposition failed");
  Tensor out(n, 2);
  for (std::size_t axis = 0; axis < std::min<std::size_t>(2, r); ++axis) {
    Eigen::VectorXd v = solver.eigenvectors().col(static_cast<Eigen::Index>(r - 1 - axis));
    Eigen::Index arg = 0;
    for (Eigen::Index j = 1; j < v.size(); ++j)
      if (std::abs(v(j)) > std::abs(v(arg))) arg = j;
    if (v(arg) < 0) v = -v;
    const Eigen::VectorXd proj = x * v;
    for (std::size_t i = 0; i < n; ++i) out(i, axis) = proj(static_cast<Eigen::Index>(i));
  }
  return out;
}

/// CSV with header node_id,x,y,label,unseen; label is empty when the graph
/// is unlabeled.
inline std::string projection_csv(const Graph& g, const Tensor& xy) {
  require(xy.rows() == g.num_nodes() && xy.cols() == 2, "projection_csv: expected num_nodes x 2 coordinates");
  std::string out = "node_id,x,y,label,unseen\n";
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    out += std::to_string(i) + "," + io::format_double(xy(i, 0)) + "," + io::format_double(xy(i, 1)) + ",";
    if (g.labels) out += std::to_string((*g.labels)[i]);
    out += g.unseen[i] ? ",1\n" : ",0\n";
  }
  return out;
}

}  // namespace shiftguard
