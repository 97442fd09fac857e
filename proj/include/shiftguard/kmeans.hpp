#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "shiftguard/error.hpp"
#include "shiftguard/random.hpp"
#include "shiftguard/tensor.hpp"

namespace shiftguard {

struct KMeansResult {
  std::vector<std::size_t> assignment;
  Tensor centers;                // k x d
  std::vector<double> objective;  // within-cluster sum of squares after each update
  std::size_t iterations = 0;
};

namespace detail {

inline double sq_dist(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double t = a[j] - b[j];
    acc += t * t;
  }
  return acc;
}

}  // namespace detail

/// Lloyd's algorithm from a k-means++ seeding. Stops at an assignment fixpoint
/// or after max_iter assignment passes. Empty clusters keep their center;
/// distance ties go to the lower cluster id.
inline KMeansResult kmeans(const Tensor& x, std::size_t k, std::uint64_t seed, std::size_t max_iter = 100) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  require(k >= 1, "kmeans: k must be >= 1");
  require(k <= n, "kmeans: k exceeds the number of rows");
  Rng rng(seed);

  KMeansResult out;
  out.centers = Tensor(k, d);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  const auto set_center = [&](std::size_t c, std::size_t i) {
    std::copy_n(x.row(i).begin(), d, out.centers.row(c).begin());
    for (std::size_t p = 0; p < n; ++p) nearest[p] = std::min(nearest[p], detail::sq_dist(x.row(p), out.centers.row(c)));
  };
  set_center(0, rng.below(n));
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : nearest) total += v;
    std::size_t pick = n - 1;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t p = 0; p < n; ++p) {
        acc += nearest[p];
        if (nearest[p] > 0.0 && acc > target) {
          pick = p;
          break;
        }
      }
      // Rounding can leave the walk short of target; take the last candidate.
      if (acc <= target)
        for (std::size_t p = n; p-- > 0;)
          if (nearest[p] > 0.0) {
            pick = p;
            break;
          }
    } else {
      pick = rng.below(n);
    }
    set_center(c, pick);
  }

  const auto assign = [&] {
    std::vector<std::size_t> a(n);
    for (std::size_t p = 0; p < n; ++p) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double dist = detail::sq_dist(x.row(p), out.centers.row(c));
        if (dist < best) {
          best = dist;
          a[p] = c;
        }
      }
    }
    return a;
  };
  const auto update = [&] {
    Tensor sums(k, d);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t p = 0; p < n; ++p) {
      const std::size_t c = out.assignment[p];
      ++counts[c];
      for (std::size_t j = 0; j < d; ++j) sums(c, j) += x(p, j);
    }
    for (std::size_t c = 0; c < k; ++c)
      if (counts[c] > 0)
        for (std::size_t j = 0; j < d; ++j) out.centers(c, j) = sums(c, j) / static_cast<double>(counts[c]);
    double obj = 0.0;
    for (std::size_t p = 0; p < n; ++p) obj += detail::sq_dist(x.row(p), out.centers.row(out.assignment[p]));
    out.objective.push_back(obj);
  };

  out.assignment = assign();
  out.iterations = 1;
  update();
  while (out.iterations < max_iter) {
    auto next = assign();
    ++out.iterations;
    if (next == out.assignment) break;
    out.assignment = std::move(next);
    update();
  }
  return out;
}

}  // namespace shiftguard
