#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "shiftguard/adam.hpp"
#include "shiftguard/autodiff.hpp"
#include "shiftguard/error.hpp"
#include "shiftguard/gad_model.hpp"
#include "shiftguard/graph.hpp"
#include "shiftguard/io.hpp"
#include "shiftguard/random.hpp"
#include "shiftguard/tensor.hpp"

namespace shiftguard {

/// Residual feature MLP: X' = X + relu(X W1 + b1) W2 + b2, hidden width d.
struct AlignerParams {
  Tensor W1;  // d x d
  Tensor b1;  // 1 x d
  Tensor W2;  // d x d
  Tensor b2;  // 1 x d

  std::size_t dim() const { return W1.rows(); }

  void validate() const {
    const std::size_t d = dim();
    require(d >= 1, "aligner dim must be >= 1");
    require(W1.cols() == d && W2.rows() == d && W2.cols() == d, "aligner weights must be d x d");
    require(b1.rows() == 1 && b1.cols() == d && b2.rows() == 1 && b2.cols() == d, "aligner biases must be 1 x d");
  }

  friend bool operator==(const AlignerParams&, const AlignerParams&) = default;
};

/// Linear map on aggregation-free representations: H W + b.
struct EstimatorParams {
  Tensor weight;  // r x r
  Tensor bias;    // 1 x r

  void validate() const {
    const std::size_t r = weight.rows();
    require(r >= 1 && weight.cols() == r, "estimator weight must be r x r");
    require(bias.rows() == 1 && bias.cols() == r, "estimator bias must be 1 x r");
  }

  friend bool operator==(const EstimatorParams&, const EstimatorParams&) = default;
};

/// Output layer is exactly zero, so the initial aligner is the identity map.
inline AlignerParams init_aligner(std::size_t d, std::uint64_t seed) {
  require(d >= 1, "aligner dim must be >= 1");
  Rng rng(seed);
  return {glorot_uniform(d, d, rng), Tensor(1, d), Tensor(d, d), Tensor(1, d)};
}

inline EstimatorParams init_estimator(std::size_t r) {
  require(r >= 1, "estimator dim must be >= 1");
  return {Tensor::identity(r), Tensor(1, r)};
}

struct AdaptConfig {
  double k_percent = 0.2;
  std::size_t outer_rounds = 20;
  std::size_t aligner_steps_per_round = 5;
  std::size_t estimator_steps_per_round = 20;
  double lr_align = 3e-4;
  double lr_est = 1e-2;
  double temperature = 2.0;
  bool estimator_enabled = true;
  std::uint64_t seed = 0;

  void validate() const {
    require(k_percent > 0.0 && k_percent <= 1.0, "k_percent must be in (0, 1]");
    require(temperature > 0.0, "temperature must be > 0");
    require(lr_align > 0.0 && lr_est > 0.0, "learning rates must be > 0");
    if (outer_rounds > 0) {
      require(aligner_steps_per_round >= 1, "aligner_steps_per_round must be >= 1");
      if (estimator_enabled) require(estimator_steps_per_round >= 1, "estimator_steps_per_round must be >= 1");
    }
  }
};

struct AlignerVars {
  Var W1, b1, W2, b2;
};

struct EstimatorVars {
  Var weight, bias;
};

inline AlignerVars aligner_vars(Tape& tape, const AlignerParams& a, bool traced) {
  const auto leaf = [&](const Tensor& t) { return traced ? tape.parameter(t) : tape.constant(t); };
  return {leaf(a.W1), leaf(a.b1), leaf(a.W2), leaf(a.b2)};
}

inline EstimatorVars estimator_vars(Tape& tape, const EstimatorParams& e, bool traced) {
  const auto leaf = [&](const Tensor& t) { return traced ? tape.parameter(t) : tape.constant(t); };
  return {leaf(e.weight), leaf(e.bias)};
}

namespace detail {

template <typename T>
T align_impl(const T& x, const T& w1, const T& b1, const T& w2, const T& b2) {
  return add(x, add_row_vector(matmul(relu(add_row_vector(matmul(x, w1), b1)), w2), b2));
}

template <typename T>
T estimate_impl(const T& h, const T& w, const T& b) {
  return add_row_vector(matmul(h, w), b);
}

}  // namespace detail

inline Tensor align(const Tensor& x, const AlignerParams& a) {
  require(x.cols() == a.dim(), "align: feature dim does not match the aligner");
  return detail::align_impl(x, a.W1, a.b1, a.W2, a.b2);
}

inline Var align(Var x, const AlignerVars& a) { return detail::align_impl(x, a.W1, a.b1, a.W2, a.b2); }

template <typename T>
struct BranchOutput {
  T h;
  T s;
};

inline BranchOutput<Tensor> forward_main(const AggregationOperator& op, const Tensor& x_aligned, const GadModel& m) {
  Tensor h = encode(op, x_aligned, m);
  Tensor s = detect(h, m);
  return {std::move(h), std::move(s)};
}

inline BranchOutput<Var> forward_main(const AggregationOperator& op, Var x_aligned, const ModelVars& m) {
  const Var h = encode(op, x_aligned, m);
  return {h, detect(h, m)};
}

inline BranchOutput<Tensor> forward_dual(const Tensor& x_aligned, const GadModel& m, const EstimatorParams& e) {
  require(e.weight.rows() == m.repr_dim, "forward_dual: estimator dim does not match the model");
  Tensor h = detail::estimate_impl(encode_dual(x_aligned, m), e.weight, e.bias);
  Tensor s = detect(h, m);
  return {std::move(h), std::move(s)};
}

inline BranchOutput<Var> forward_dual(Var x_aligned, const ModelVars& m, const EstimatorVars& e) {
  const Var h = detail::estimate_impl(encode_dual(x_aligned, m), e.weight, e.bias);
  return {h, detect(h, m)};
}

inline double alignment_loss(const Tensor& h, const Tensor& h_dual, double temperature) {
  require_same_shape(h, h_dual, "alignment_loss");
  return kl_rows(row_softmax(h, temperature), row_softmax(h_dual, temperature));
}

inline Var alignment_loss(Var h, Var h_dual, double temperature) {
  require_same_shape(h.value(), h_dual.value(), "alignment_loss");
  return kl_rows(row_softmax(h, temperature), row_softmax(h_dual, temperature));
}

/// Intersection of the ceil(k n) lowest-scoring nodes under each score,
/// ties broken by ascending index. Returned in ascending index order.
inline std::vector<std::size_t> select_confident_normals(std::span<const double> s, std::span<const double> s_dual,
                                                         double k_percent) {
  require(s.size() == s_dual.size(), "select_confident_normals: length mismatch");
  require(k_percent > 0.0 && k_percent <= 1.0, "select_confident_normals: k_percent must be in (0, 1]");
  const std::size_t n = s.size();
  if (n == 0) return {};
  // The small slack keeps products like 0.2 * 600 from rounding up a whole node.
  const double raw = std::ceil(k_percent * static_cast<double>(n) - 1e-9);
  const std::size_t count = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(raw, 1.0)), 1, n);
  const auto lowest = [&](std::span<const double> v) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<bool> in(n, false);
    for (std::size_t t = 0; t < count; ++t) in[idx[t]] = true;
    return in;
  };
  const auto a = lowest(s);
  const auto b = lowest(s_dual);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i)
    if (a[i] && b[i]) out.push_back(i);
  return out;
}

inline double estimator_loss(const Tensor& h, const Tensor& h_dual, std::span<const std::size_t> selected,
                             double temperature) {
  require_same_shape(h, h_dual, "estimator_loss");
  if (selected.empty()) throw NoConfidentNormals();
  return alignment_loss(gather_rows(h, selected), gather_rows(h_dual, selected), temperature);
}

inline Var estimator_loss(Var h, Var h_dual, std::span<const std::size_t> selected, double temperature) {
  require_same_shape(h.value(), h_dual.value(), "estimator_loss");
  if (selected.empty()) throw NoConfidentNormals();
  return alignment_loss(gather_rows(h, selected), gather_rows(h_dual, selected), temperature);
}

struct TraceEntry {
  std::size_t round = 0;
  std::string phase;  // "align", "estimate" or "estimate_skipped"
  std::size_t step = 0;
  std::optional<double> loss;
  std::optional<std::size_t> selected_count;

  friend bool operator==(const TraceEntry&, const TraceEntry&) = default;
};

struct AdaptResult {
  AlignerParams aligner;
  EstimatorParams estimator;
  std::vector<TraceEntry> trace;
};

/// Alternating test-time training of the aligner and the estimator around a
/// frozen model. Reads only the adjacency and features of `g`.
inline AdaptResult adapt(const Graph& g, const GadModel& m, const AdaptConfig& cfg) {
  cfg.validate();
  require(m.frozen, "adapt: model must be frozen");
  m.validate();
  require(g.feat_dim() == m.feat_dim(), "adapt: feature dim does not match the model");
  require(g.adjacency.n() == g.num_nodes() && g.num_nodes() >= 1, "adapt: malformed graph");

  const AggregationOperator op = sym_normalize(g);
  AdaptResult out{init_aligner(g.feat_dim(), cfg.seed), init_estimator(m.repr_dim), {}};
  AlignerParams& a = out.aligner;
  EstimatorParams& e = out.estimator;
  std::vector<Tensor*> a_params{&a.W1, &a.b1, &a.W2, &a.b2};
  std::vector<Tensor*> e_params{&e.weight, &e.bias};
  AdamState a_state(a_params);
  AdamState e_state(e_params);
  const double T = cfg.temperature;

  for (std::size_t round = 0; round < cfg.outer_rounds; ++round) {
    for (std::size_t step = 0; step < cfg.aligner_steps_per_round; ++step) {
      Tape tape;
      const ModelVars mv = model_constants(tape, m);
      const AlignerVars av = aligner_vars(tape, a, true);
      const EstimatorVars ev = estimator_vars(tape, e, false);
      const Var xp = align(tape.constant(g.features), av);
      const Var loss = alignment_loss(forward_main(op, xp, mv).h, forward_dual(xp, mv, ev).h, T);
      out.trace.push_back({round, "align", step, loss.value()[0], std::nullopt});
      tape.backward(loss);
      const std::vector<Tensor> grads{*tape.gradient(av.W1), *tape.gradient(av.b1), *tape.gradient(av.W2),
                                      *tape.gradient(av.b2)};
      adam_step(a_params, grads, a_state, cfg.lr_align);
    }
    if (!cfg.estimator_enabled) continue;

    const Tensor xp = align(g.features, a);
    const auto main = forward_main(op, xp, m);
    const Tensor h_free = encode_dual(xp, m);
    const auto dual = forward_dual(xp, m, e);
    const auto selected = select_confident_normals(main.s.data(), dual.s.data(), cfg.k_percent);
    if (selected.empty()) {
      out.trace.push_back({round, "estimate_skipped", 0, std::nullopt, std::size_t{0}});
      continue;
    }
    for (std::size_t step = 0; step < cfg.estimator_steps_per_round; ++step) {
      Tape tape;
      const EstimatorVars ev = estimator_vars(tape, e, true);
      const Var h_dual = detail::estimate_impl(tape.constant(h_free), ev.weight, ev.bias);
      const Var loss = estimator_loss(tape.constant(main.h), h_dual, selected, T);
      out.trace.push_back({round, "estimate", step, loss.value()[0], selected.size()});
      tape.backward(loss);
      const std::vector<Tensor> grads{*tape.gradient(ev.weight), *tape.gradient(ev.bias)};
      adam_step(e_params, grads, e_state, cfg.lr_est);
    }
  }
  return out;
}

/// Scores of the frozen model on aligned features (plain features when no
/// aligner is given).
inline Tensor adapted_scores(const Graph& g, const GadModel& m, const AlignerParams* a = nullptr) {
  const AggregationOperator op = sym_normalize(g);
  return forward_main(op, a ? align(g.features, *a) : g.features, m).s;
}

inline io::Json aligner_to_json(const AlignerParams& a) {
  io::Json j;
  j["W1"] = io::tensor_to_json(a.W1);
  j["b1"] = io::tensor_to_json(a.b1);
  j["W2"] = io::tensor_to_json(a.W2);
  j["b2"] = io::tensor_to_json(a.b2);
  return j;
}

inline AlignerParams aligner_from_json(const io::Json& j, const std::string& where) {
  AlignerParams a{io::tensor_from_json(io::field(j, "W1", where), where + ": W1"),
                  io::tensor_from_json(io::field(j, "b1", where), where + ": b1"),
                  io::tensor_from_json(io::field(j, "W2", where), where + ": W2"),
                  io::tensor_from_json(io::field(j, "b2", where), where + ": b2")};
  try {
    a.validate();
  } catch (const ContractError& e) {
    throw FormatError(where + ": " + e.what());
  }
  return a;
}

inline io::Json estimator_to_json(const EstimatorParams& e) {
  io::Json j;
  j["weight"] = io::tensor_to_json(e.weight);
  j["bias"] = io::tensor_to_json(e.bias);
  return j;
}

inline EstimatorParams estimator_from_json(const io::Json& j, const std::string& where) {
  EstimatorParams e{io::tensor_from_json(io::field(j, "weight", where), where + ": weight"),
                    io::tensor_from_json(io::field(j, "bias", where), where + ": bias")};
  try {
    e.validate();
  } catch (const ContractError& err) {
    throw FormatError(where + ": " + err.what());
  }
  return e;
}

inline io::Json trace_to_json(const std::vector<TraceEntry>& trace) {
  io::Json arr = io::Json::array();
  for (const auto& t : trace) {
    io::Json j;
    j["round"] = t.round;
    j["phase"] = t.phase;
    j["step"] = t.step;
    j["loss"] = t.loss ? io::Json(*t.loss) : io::Json(nullptr);
    j["selected_count"] = t.selected_count ? io::Json(*t.selected_count) : io::Json(nullptr);
    arr.push_back(std::move(j));
  }
  return arr;
}

}  // namespace shiftguard
