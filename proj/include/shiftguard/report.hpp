#pragma once

#include <array>
#include <optional>
#include <vector>

#include "shiftguard/error.hpp"
#include "shiftguard/gad_model.hpp"
#include "shiftguard/graph.hpp"
#include "shiftguard/io.hpp"
#include "shiftguard/metrics.hpp"

namespace shiftguard {

struct ContaminationBin {
  double lo = 0.0;
  double hi = 0.0;
  std::optional<double> mean_delta;  // empty bin: no mean
  std::size_t count = 0;

  friend bool operator==(const ContaminationBin&, const ContaminationBin&) = default;
};

struct MetricReport {
  double auroc = 0.0;
  double auprc = 0.0;
  std::optional<double> auroc_seen_vs_anom;
  std::optional<double> auroc_unseen_vs_anom;
  std::vector<ContaminationBin> contamination_bins;
};

/// Bin edges for the unseen-neighbor fraction: {0}, (0,.25], (.25,.5], (.5,.75], (.75,1].
inline constexpr std::array<double, 5> kBinLo{0.0, 0.0, 0.25, 0.5, 0.75};
inline constexpr std::array<double, 5> kBinHi{0.0, 0.25, 0.5, 0.75, 1.0};

inline std::size_t contamination_bin(double fraction) {
  if (fraction == 0.0) return 0;
  for (std::size_t b = 1; b < kBinHi.size(); ++b)
    if (fraction <= kBinHi[b]) return b;
  return kBinHi.size() - 1;
}

namespace detail {

inline std::optional<double> subset_auroc(const Tensor& scores, const std::vector<int>& labels,
                                          const std::vector<std::size_t>& ids) {
  bool pos = false, neg = false;
  for (std::size_t i : ids) (labels[i] == 1 ? pos : neg) = true;
  if (!pos || !neg) return std::nullopt;
  return auroc(pick(scores, ids), pick(labels, ids));
}

}  // namespace detail

/// Metrics over the test mask. The subset AUROCs compare the anomalies with
/// seen and with unseen normals; a subset without both classes reports null.
inline MetricReport evaluate(const Graph& g, const Tensor& scores) {
  const auto& labels = g.require_labels();
  require(scores.rows() == g.num_nodes() && scores.cols() == 1, "evaluate: scores must be num_nodes x 1");
  std::vector<std::size_t> test, seen, unseen;
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    if (!g.test[i]) continue;
    test.push_back(i);
    if (labels[i] == 1 || !g.unseen[i]) seen.push_back(i);
    if (labels[i] == 1 || g.unseen[i]) unseen.push_back(i);
  }
  MetricReport r;
  const auto test_scores = pick(scores, test);
  const auto test_labels = pick(labels, test);
  r.auroc = auroc(test_scores, test_labels);
  r.auprc = auprc(test_scores, test_labels);
  r.auroc_seen_vs_anom = detail::subset_auroc(scores, labels, seen);
  r.auroc_unseen_vs_anom = detail::subset_auroc(scores, labels, unseen);
  return r;
}

/// Change in anomaly probability of every seen normal between the graph
/// without and with the unseen nodes, grouped by unseen-neighbor fraction.
/// Node i of `before` is the i-th node of `after` that is not unseen.
inline std::vector<ContaminationBin> contamination_study(const Graph& before, const Graph& after, const GadModel& m) {
  const auto& la = after.require_labels();
  const auto& lb = before.require_labels();
  std::vector<std::size_t> to_after;
  for (std::size_t i = 0; i < after.num_nodes(); ++i)
    if (!after.unseen[i]) to_after.push_back(i);
  const auto fail = [](const std::string& why) { throw ContractError("id mapping inconsistency: " + why); };
  if (to_after.size() != before.num_nodes()) fail("node counts differ");
  if (before.feat_dim() != after.feat_dim()) fail("feature dims differ");
  for (std::size_t j = 0; j < before.num_nodes(); ++j) {
    if (before.unseen[j]) fail("before graph contains unseen nodes");
    const std::size_t i = to_after[j];
    if (lb[j] != la[i]) fail("labels differ at node " + std::to_string(j));
    if (!std::equal(before.features.row(j).begin(), before.features.row(j).end(), after.features.row(i).begin()))
      fail("features differ at node " + std::to_string(j));
  }
  if (!(remove_unseen(after).adjacency == before.adjacency)) fail("edges among seen nodes differ");

  const Tensor s_before = detect(encode(sym_normalize(before), before.features, m), m);
  const Tensor s_after = detect(encode(sym_normalize(after), after.features, m), m);
  std::vector<double> sums(kBinLo.size(), 0.0);
  std::vector<std::size_t> counts(kBinLo.size(), 0);
  for (std::size_t j = 0; j < before.num_nodes(); ++j) {
    if (lb[j] != 0) continue;
    const std::size_t i = to_after[j];
    const double delta = sigmoid(s_after[i]) - sigmoid(s_before[j]);
    const std::size_t b = contamination_bin(unseen_neighbor_fraction(after, i));
    sums[b] += delta;
    ++counts[b];
  }
  std::vector<ContaminationBin> bins;
  for (std::size_t b = 0; b < kBinLo.size(); ++b) {
    ContaminationBin bin{kBinLo[b], kBinHi[b], std::nullopt, counts[b]};
    if (counts[b] > 0) bin.mean_delta = sums[b] / static_cast<double>(counts[b]);
    bins.push_back(bin);
  }
  return bins;
}

inline io::Json optional_json(const std::optional<double>& v) { return v ? io::Json(*v) : io::Json(nullptr); }

inline io::Json report_to_json(const MetricReport& r) {
  io::Json j;
  j["auroc"] = r.auroc;
  j["auprc"] = r.auprc;
  j["auroc_seen_vs_anom"] = optional_json(r.auroc_seen_vs_anom);
  j["auroc_unseen_vs_anom"] = optional_json(r.auroc_unseen_vs_anom);
  io::Json bins = io::Json::array();
  for (const auto& b : r.contamination_bins) {
    io::Json jb;
    jb["lo"] = b.lo;
    jb["hi"] = b.hi;
    jb["mean_delta"] = optional_json(b.mean_delta);
    jb["count"] = b.count;
    bins.push_back(std::move(jb));
  }
  j["contamination_bins"] = std::move(bins);
  return j;
}

}  // namespace shiftguard
