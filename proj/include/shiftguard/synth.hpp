#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "shiftguard/error.hpp"
#include "shiftguard/graph.hpp"
#include "shiftguard/random.hpp"

namespace shiftguard {

struct SynthConfig {
  std::vector<std::size_t> cluster_sizes{150, 150, 150};
  std::size_t unseen_size = 150;
  std::size_t anomaly_size = 60;
  std::size_t feat_dim = 16;
  double cluster_spread = 0.5;
  double center_separation = 4.0;
  double intra_p = 0.02;
  double inter_p = 0.002;
  double anomaly_mix = 0.25;
  std::uint64_t seed = 0;

  void validate() const {
    require(!cluster_sizes.empty(), "synth: at least one seen cluster required");
    for (std::size_t s : cluster_sizes) require(s >= 1, "synth: cluster sizes must be >= 1");
    require(unseen_size >= 1, "synth: unseen_size must be >= 1");
    require(anomaly_size >= 1, "synth: anomaly_size must be >= 1");
    require(feat_dim >= 1, "synth: feat_dim must be >= 1");
    require(cluster_spread >= 0.0, "synth: cluster_spread must be >= 0");
    require(center_separation > 0.0, "synth: center_separation must be > 0");
    require(intra_p >= 0.0 && intra_p <= 1.0 && inter_p >= 0.0 && inter_p <= 1.0,
            "synth: edge probabilities must be in [0, 1]");
    require(anomaly_mix > 0.0 && anomaly_mix <= 1.0, "synth: anomaly_mix must be in (0, 1]");
  }

  std::size_t num_nodes() const {
    std::size_t n = unseen_size + anomaly_size;
    for (std::size_t s : cluster_sizes) n += s;
    return n;
  }
};

namespace detail {

// Number of failures before the next success of a Bernoulli(p) sequence.
inline std::size_t geometric_skip(Rng& rng, double log_q) {
  const double s = std::floor(std::log(rng.uniform_open_low()) / log_q);
  return s >= 1e18 ? static_cast<std::size_t>(1e18) : static_cast<std::size_t>(s);
}

// Each unordered pair inside `block` kept with probability p.
inline void sample_within(const std::vector<std::size_t>& block, double p, Rng& rng,
                          std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  const std::size_t m = block.size();
  if (p <= 0.0 || m < 2) return;
  if (p >= 1.0) {
    for (std::size_t v = 1; v < m; ++v)
      for (std::size_t w = 0; w < v; ++w) edges.emplace_back(block[w], block[v]);
    return;
  }
  const double log_q = std::log1p(-p);
  std::size_t v = 1, w = 0;
  bool first = true;
  while (v < m) {
    std::size_t skip = geometric_skip(rng, log_q);
    if (!first) ++skip;
    first = false;
    // advance (v, w) by `skip` positions in the lower-triangular order
    while (skip > 0 && v < m) {
      const std::size_t room = v - w;
      if (skip < room) {
        w += skip;
        skip = 0;
      } else {
        skip -= room;
        ++v;
        w = 0;
      }
    }
    if (v < m) edges.emplace_back(block[w], block[v]);
  }
}

// Each pair (a in a_block, b in b_block) kept with probability p.
inline void sample_between(const std::vector<std::size_t>& a_block, const std::vector<std::size_t>& b_block, double p,
                           Rng& rng, std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  const std::size_t total = a_block.size() * b_block.size();
  if (p <= 0.0 || total == 0) return;
  if (p >= 1.0) {
    for (std::size_t a : a_block)
      for (std::size_t b : b_block) edges.emplace_back(a, b);
    return;
  }
  const double log_q = std::log1p(-p);
  std::size_t t = geometric_skip(rng, log_q);
  while (t < total) {
    edges.emplace_back(a_block[t / b_block.size()], b_block[t % b_block.size()]);
    const std::size_t skip = geometric_skip(rng, log_q);
    if (skip >= total) break;
    t += skip + 1;
  }
}

}  // namespace detail

/// Seeded shifted benchmark. Node order: seen clusters, then the unseen
/// cluster, then anomalies. The unseen center is seen center 0 with a
/// ceil(anomaly_mix * d) coordinate subset redrawn, and unseen nodes share
/// cluster 0's edge block. Anomaly a copies cluster (a mod k) and has the same
/// number of coordinates redrawn, uniformly from [separation/2, separation].
inline Graph synth_graph(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const std::size_t k = cfg.cluster_sizes.size();
  const std::size_t d = cfg.feat_dim;
  const std::size_t n = cfg.num_nodes();
  const double sep = cfg.center_separation;
  const std::size_t n_mix =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(cfg.anomaly_mix * static_cast<double>(d) - 1e-9)));
  const auto redraw = [&](std::span<double> v) {
    for (std::size_t j : rng.choose(d, n_mix)) v[j] = rng.uniform(sep / 2.0, sep);
  };

  Tensor centers(k + 1, d);
  for (std::size_t c = 0; c < k; ++c) {
    auto row = centers.row(c);
    double norm = 0.0;
    for (double& v : row) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : row) v = v / norm * sep;
  }
  std::copy_n(centers.row(0).begin(), d, centers.row(k).begin());
  redraw(centers.row(k));

  Graph g;
  g.features = Tensor(n, d);
  std::vector<int> labels(n, 0);
  g.unseen.assign(n, false);
  std::vector<std::vector<std::size_t>> blocks(k);
  std::size_t next = 0;
  const auto sample_node = [&](std::size_t center) {
    auto row = g.features.row(next);
    for (std::size_t j = 0; j < d; ++j) row[j] = centers(center, j) + cfg.cluster_spread * rng.normal();
    return next++;
  };
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t i = 0; i < cfg.cluster_sizes[c]; ++i) blocks[c].push_back(sample_node(c));
  for (std::size_t i = 0; i < cfg.unseen_size; ++i) {
    const std::size_t v = sample_node(k);
    g.unseen[v] = true;
    blocks[0].push_back(v);
  }
  for (std::size_t a = 0; a < cfg.anomaly_size; ++a) {
    const std::size_t host = a % k;
    const std::size_t v = sample_node(host);
    redraw(g.features.row(v));
    labels[v] = 1;
    blocks[host].push_back(v);
  }
  for (auto& b : blocks) std::sort(b.begin(), b.end());

  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t b = 0; b < k; ++b) {
    detail::sample_within(blocks[b], cfg.intra_p, rng, edges);
    for (std::size_t c = b + 1; c < k; ++c) detail::sample_between(blocks[b], blocks[c], cfg.inter_p, rng, edges);
  }
  g.adjacency = adjacency_from_edges(n, edges);

  g.labels = std::move(labels);
  Mask seen(n);
  for (std::size_t i = 0; i < n; ++i) seen[i] = !g.unseen[i];
  stratified_split(g, seen, rng);
  return g;
}

}  // namespace shiftguard
