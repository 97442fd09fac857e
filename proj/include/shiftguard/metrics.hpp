#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "shiftguard/error.hpp"
#include "shiftguard/tensor.hpp"

namespace shiftguard {

namespace detail {

inline std::pair<std::size_t, std::size_t> class_counts(std::span<const double> scores, std::span<const int> labels,
                                                        const char* who) {
  require(scores.size() == labels.size(), std::string(who) + ": scores/labels length mismatch");
  require_binary_labels(labels);
  std::size_t pos = 0;
  for (int y : labels) pos += y == 1 ? 1 : 0;
  const std::size_t neg = labels.size() - pos;
  require(pos > 0 && neg > 0, std::string(who) + ": both classes must be present");
  return {pos, neg};
}

inline std::vector<std::size_t> order_by_score(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  return idx;
}

}  // namespace detail

/// Mann-Whitney statistic with midranks; ties count one half.
inline double auroc(std::span<const double> scores, std::span<const int> labels) {
  const auto [pos, neg] = detail::class_counts(scores, labels, "auroc");
  const auto idx = detail::order_by_score(scores);
  // Twice the positive rank sum keeps midranks integral.
  std::size_t twice_rank_sum = 0;
  for (std::size_t start = 0; start < idx.size();) {
    std::size_t end = start;
    while (end < idx.size() && scores[idx[end]] == scores[idx[start]]) ++end;
    const std::size_t twice_mid = start + 1 + end;  // (start+1) + end, ranks are 1-based
    for (std::size_t t = start; t < end; ++t)
      if (labels[idx[t]] == 1) twice_rank_sum += twice_mid;
    start = end;
  }
  const double twice_u = static_cast<double>(twice_rank_sum) - static_cast<double>(pos * (pos + 1));
  return twice_u / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

/// Average precision: precision at each distinct threshold weighted by the
/// recall gained there; tied scores enter together.
inline double auprc(std::span<const double> scores, std::span<const int> labels) {
  const auto [pos, neg] = detail::class_counts(scores, labels, "auprc");
  (void)neg;
  auto idx = detail::order_by_score(scores);
  std::reverse(idx.begin(), idx.end());
  double ap = 0.0;
  std::size_t tp = 0, seen = 0;
  for (std::size_t start = 0; start < idx.size();) {
    std::size_t end = start;
    std::size_t group_pos = 0;
    while (end < idx.size() && scores[idx[end]] == scores[idx[start]]) {
      group_pos += labels[idx[end]] == 1 ? 1 : 0;
      ++end;
    }
    tp += group_pos;
    seen += end - start;
    if (group_pos > 0)
      ap += (static_cast<double>(tp) / static_cast<double>(seen)) *
            (static_cast<double>(group_pos) / static_cast<double>(pos));
    start = end;
  }
  return ap;
}

}  // namespace shiftguard
