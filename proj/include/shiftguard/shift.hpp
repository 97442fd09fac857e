#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "shiftguard/error.hpp"
#include "shiftguard/graph.hpp"
#include "shiftguard/kmeans.hpp"
#include "shiftguard/random.hpp"

namespace shiftguard {

struct ShiftSpec {
  enum class Method { kKMeansHoldout, kClassHoldout };
  Method method = Method::kKMeansHoldout;
  std::size_t num_clusters = 3;
  double anomaly_class_threshold = 0.05;
  std::uint64_t seed = 0;

  void validate() const {
    if (method == Method::kKMeansHoldout) require(num_clusters >= 2, "shift: num_clusters must be >= 2");
    require(anomaly_class_threshold > 0.0 && anomaly_class_threshold < 1.0,
            "shift: anomaly_class_threshold must be in (0, 1)");
  }
};

/// Flags `unseen` nodes and moves them out of train/val into test.
inline Graph with_unseen(const Graph& g, const Mask& unseen) {
  Graph out = g;
  out.unseen = unseen;
  for (std::size_t i = 0; i < unseen.size(); ++i)
    if (unseen[i]) {
      out.train[i] = false;
      out.val[i] = false;
      out.test[i] = true;
    }
  return out;
}

/// Clusters the normal nodes' features and flags the smallest cluster as
/// unseen normals (lowest cluster id on a size tie).
inline Graph construct_shift_kmeans(const Graph& g, const ShiftSpec& spec) {
  require(spec.method == ShiftSpec::Method::kKMeansHoldout, "construct_shift_kmeans: method must be kmeans_holdout");
  spec.validate();
  const auto& labels = g.require_labels();
  std::vector<std::size_t> normals;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == 0) normals.push_back(i);
  require(normals.size() >= spec.num_clusters, "construct_shift_kmeans: fewer normal nodes than clusters");
  const auto km = kmeans(gather_rows(g.features, normals), spec.num_clusters, spec.seed);
  std::vector<std::size_t> sizes(spec.num_clusters, 0);
  for (std::size_t c : km.assignment) ++sizes[c];
  std::size_t smallest = SIZE_MAX;
  for (std::size_t c = 0; c < sizes.size(); ++c)
    if (sizes[c] > 0 && (smallest == SIZE_MAX || sizes[c] < sizes[smallest])) smallest = c;
  Mask unseen(g.num_nodes(), false);
  for (std::size_t t = 0; t < normals.size(); ++t)
    if (km.assignment[t] == smallest) unseen[normals[t]] = true;
  Graph out = with_unseen(g, unseen);
  out.validate();
  return out;
}

struct ImbalancedConversion {
  std::vector<int> labels;  // 1 = anomaly
  Mask unseen;
};

/// Classes with share strictly below the threshold become anomalies; the
/// largest remaining class becomes the unseen normals (lowest id on a tie).
inline ImbalancedConversion convert_imbalanced(const std::vector<int>& classes, const ShiftSpec& spec) {
  spec.validate();
  std::map<int, std::size_t> counts;
  for (int c : classes) ++counts[c];
  require(counts.size() >= 2, "convert_imbalanced: at least two classes required");
  const double n = static_cast<double>(classes.size());
  std::map<int, bool> anomalous;
  std::size_t n_anom = 0;
  for (auto [c, count] : counts) {
    anomalous[c] = static_cast<double>(count) / n < spec.anomaly_class_threshold;
    n_anom += anomalous[c] ? 1 : 0;
  }
  require(n_anom > 0, "no class below threshold");
  require(n_anom < counts.size(), "all classes below threshold");
  int largest = 0;
  std::size_t largest_count = 0;
  for (auto [c, count] : counts)
    if (!anomalous[c] && count > largest_count) {
      largest = c;
      largest_count = count;
    }
  ImbalancedConversion out;
  out.labels.resize(classes.size());
  out.unseen.assign(classes.size(), false);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    out.labels[i] = anomalous[classes[i]] ? 1 : 0;
    out.unseen[i] = classes[i] == largest;
  }
  return out;
}

/// Relabels g from multi-class labels, flags the unseen class and draws a
/// fresh stratified split over the seen nodes.
inline Graph apply_class_holdout(const Graph& g, const std::vector<int>& classes, const ShiftSpec& spec) {
  require(classes.size() == g.num_nodes(), "class_holdout: class vector length != num_nodes");
  auto conv = convert_imbalanced(classes, spec);
  Graph out = g;
  out.labels = std::move(conv.labels);
  out.unseen = conv.unseen;
  Mask seen(out.num_nodes());
  for (std::size_t i = 0; i < seen.size(); ++i) seen[i] = !out.unseen[i];
  Rng rng(spec.seed);
  stratified_split(out, seen, rng);
  out.validate();
  return out;
}

}  // namespace shiftguard
