#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "shiftguard/adam.hpp"
#include "shiftguard/autodiff.hpp"
#include "shiftguard/error.hpp"
#include "shiftguard/graph.hpp"
#include "shiftguard/io.hpp"
#include "shiftguard/metrics.hpp"
#include "shiftguard/random.hpp"
#include "shiftguard/tensor.hpp"

namespace shiftguard {

/// Two-layer GCN encoder without biases plus a linear detector.
struct GadModel {
  Tensor W1;     // d x h
  Tensor W2;     // h x r
  Tensor w_det;  // r x 1
  Tensor b_det;  // 1 x 1
  std::size_t hidden_dim = 0;
  std::size_t repr_dim = 0;
  bool frozen = false;

  std::size_t feat_dim() const { return W1.rows(); }

  void validate() const {
    require(hidden_dim >= 1 && repr_dim >= 1, "model dims must be >= 1");
    require(W1.cols() == hidden_dim && W1.rows() >= 1, "W1 shape does not match hidden_dim");
    require(W2.rows() == hidden_dim && W2.cols() == repr_dim, "W2 shape does not match hidden_dim x repr_dim");
    require(w_det.rows() == repr_dim && w_det.cols() == 1, "w_det must be repr_dim x 1");
    require(b_det.rows() == 1 && b_det.cols() == 1, "b_det must be 1 x 1");
    for (const Tensor* t : {&W1, &W2, &w_det, &b_det}) require(t->all_finite(), "non-finite model weight");
  }

  friend bool operator==(const GadModel&, const GadModel&) = default;
};

struct PretrainConfig {
  std::size_t hidden_dim = 32;
  std::size_t repr_dim = 16;
  std::size_t epochs = 200;
  double lr = 1e-2;
  std::optional<double> positive_weight;  // nullopt = train normal:anomaly ratio
  std::size_t patience = 20;
  std::uint64_t seed = 0;
};

/// The model weights as tape nodes; traced for pretraining, constant otherwise.
struct ModelVars {
  Var W1, W2, w_det, b_det;
};

inline ModelVars model_constants(Tape& tape, const GadModel& m) {
  return {tape.constant(m.W1), tape.constant(m.W2), tape.constant(m.w_det), tape.constant(m.b_det)};
}

inline ModelVars model_parameters(Tape& tape, const GadModel& m) {
  return {tape.parameter(m.W1), tape.parameter(m.W2), tape.parameter(m.w_det), tape.parameter(m.b_det)};
}

namespace detail {

// Shared by the Tensor and Var paths so both evaluate in the same order.
template <typename T>
T encode_impl(const SparseMatrix& op, const T& x, const T& w1, const T& w2) {
  return spmm(op, matmul(relu(spmm(op, matmul(x, w1))), w2));
}

template <typename T>
T encode_dual_impl(const T& x, const T& w1, const T& w2) {
  return matmul(relu(matmul(x, w1)), w2);
}

template <typename T>
T detect_impl(const T& h, const T& w, const T& b) {
  return add_row_vector(matmul(h, w), b);
}

inline void check_encode(std::size_t op_n, std::size_t rows, std::size_t cols, const GadModel& m) {
  require(cols == m.feat_dim(), "encode: feature dim does not match the model");
  require(op_n == rows, "encode: operator size does not match the feature rows");
}

}  // namespace detail

inline Tensor encode(const AggregationOperator& op, const Tensor& x, const GadModel& m) {
  detail::check_encode(op.matrix.n(), x.rows(), x.cols(), m);
  return detail::encode_impl(op.matrix, x, m.W1, m.W2);
}

inline Var encode(const AggregationOperator& op, Var x, const ModelVars& m) {
  require(op.matrix.n() == x.rows(), "encode: operator size does not match the feature rows");
  return detail::encode_impl(op.matrix, x, m.W1, m.W2);
}

inline Tensor encode_dual(const Tensor& x, const GadModel& m) {
  require(x.cols() == m.feat_dim(), "encode_dual: feature dim does not match the model");
  return detail::encode_dual_impl(x, m.W1, m.W2);
}

inline Var encode_dual(Var x, const ModelVars& m) { return detail::encode_dual_impl(x, m.W1, m.W2); }

inline Tensor detect(const Tensor& h, const GadModel& m) {
  require(h.cols() == m.repr_dim, "detect: representation dim does not match the model");
  return detail::detect_impl(h, m.w_det, m.b_det);
}

inline Var detect(Var h, const ModelVars& m) { return detail::detect_impl(h, m.w_det, m.b_det); }

inline Tensor glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor t(rows, cols);
  for (double& v : t.data()) v = rng.uniform(-limit, limit);
  return t;
}

inline GadModel init_model(std::size_t feat_dim, std::size_t hidden_dim, std::size_t repr_dim, std::uint64_t seed) {
  require(feat_dim >= 1 && hidden_dim >= 1 && repr_dim >= 1, "model dims must be >= 1");
  Rng rng(seed);
  GadModel m;
  m.W1 = glorot_uniform(feat_dim, hidden_dim, rng);
  m.W2 = glorot_uniform(hidden_dim, repr_dim, rng);
  m.w_det = glorot_uniform(repr_dim, 1, rng);
  m.b_det = Tensor(1, 1);
  m.hidden_dim = hidden_dim;
  m.repr_dim = repr_dim;
  return m;
}

inline std::vector<std::size_t> mask_indices(const Mask& mask) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) out.push_back(i);
  return out;
}

inline std::vector<int> pick(const std::vector<int>& v, const std::vector<std::size_t>& idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(v[i]);
  return out;
}

inline std::vector<double> pick(const Tensor& column, const std::vector<std::size_t>& idx) {
  std::vector<double> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(column[i]);
  return out;
}

/// #normals / #anomalies; both classes must be present.
inline double auto_positive_weight(std::span<const int> labels) {
  require_binary_labels(labels);
  std::size_t pos = 0;
  for (int y : labels) pos += y == 1 ? 1 : 0;
  require(pos > 0 && pos < labels.size(), "both classes required for the automatic positive weight");
  return static_cast<double>(labels.size() - pos) / static_cast<double>(pos);
}

struct PretrainResult {
  GadModel model;
  std::vector<double> train_loss;  // per epoch, before that epoch's update
  std::vector<double> val_auroc;   // per epoch, after the update
  std::size_t best_epoch = 0;
};

inline PretrainResult pretrain_with_history(const Graph& g, const PretrainConfig& cfg) {
  const auto& labels = g.require_labels();
  g.validate();
  require(cfg.epochs >= 1, "pretrain: epochs must be >= 1");
  require(cfg.lr > 0.0, "pretrain: lr must be > 0");
  const auto train = mask_indices(g.train);
  const auto val = mask_indices(g.val);
  require(!train.empty(), "pretrain: empty train mask");
  require(!val.empty(), "pretrain: empty val mask");
  for (std::size_t i : train) require(!g.unseen[i], "pretrain: train split contains an unseen node");
  const auto train_y = pick(labels, train);
  const auto val_y = pick(labels, val);
  const auto has_both = [](const std::vector<int>& y) {
    return std::find(y.begin(), y.end(), 0) != y.end() && std::find(y.begin(), y.end(), 1) != y.end();
  };
  require(has_both(train_y), "pretrain: train split contains only one class");
  require(has_both(val_y), "pretrain: val split contains only one class");
  const double w = cfg.positive_weight ? *cfg.positive_weight : auto_positive_weight(train_y);
  require(w > 0.0, "pretrain: positive_weight must be > 0");

  const AggregationOperator op = sym_normalize(g);
  GadModel m = init_model(g.feat_dim(), cfg.hidden_dim, cfg.repr_dim, cfg.seed);
  std::vector<Tensor*> params{&m.W1, &m.W2, &m.w_det, &m.b_det};
  AdamState adam(params);

  PretrainResult out;
  GadModel best = m;
  double best_auroc = -1.0;
  std::size_t stale = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Tape tape;
    const ModelVars mv = model_parameters(tape, m);
    const Var s = detect(encode(op, tape.constant(g.features), mv), mv);
    const Var loss = bce_with_logits(gather_rows(s, train), train_y, w);
    out.train_loss.push_back(loss.value()[0]);
    tape.backward(loss);
    const std::vector<Tensor> grads{*tape.gradient(mv.W1), *tape.gradient(mv.W2), *tape.gradient(mv.w_det),
                                    *tape.gradient(mv.b_det)};
    adam_step(params, grads, adam, cfg.lr);

    const Tensor scores = detect(encode(op, g.features, m), m);
    const double a = auroc(pick(scores, val), val_y);
    out.val_auroc.push_back(a);
    if (a > best_auroc) {
      best_auroc = a;
      best = m;
      out.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      break;
    }
  }
  best.frozen = true;
  out.model = std::move(best);
  return out;
}

inline GadModel pretrain(const Graph& g, const PretrainConfig& cfg) { return pretrain_with_history(g, cfg).model; }

/// Weighted BCE of the scores against labels, weight = normal:anomaly ratio.
/// Evaluation only; adaptation never calls this.
inline double supervised_loss_diagnostic(const Tensor& scores, std::span<const int> labels) {
  return bce_with_logits(scores, labels, auto_positive_weight(labels));
}

inline io::Json model_to_json(const GadModel& m) {
  io::Json j;
  j["hidden_dim"] = m.hidden_dim;
  j["repr_dim"] = m.repr_dim;
  j["W1"] = io::tensor_to_json(m.W1);
  j["W2"] = io::tensor_to_json(m.W2);
  j["w_det"] = io::tensor_to_json(m.w_det);
  j["b_det"] = io::tensor_to_json(m.b_det);
  return j;
}

/// Checkpoints hold pretrained weights, so the loaded model is frozen.
inline GadModel model_from_json(const io::Json& j, const std::string& where) {
  GadModel m;
  const auto dim = [&](const char* key) {
    const auto& v = io::field(j, key, where);
    if (!v.is_number_unsigned()) throw FormatError(where + ": '" + key + "' must be a non-negative integer");
    return v.get<std::size_t>();
  };
  m.hidden_dim = dim("hidden_dim");
  m.repr_dim = dim("repr_dim");
  m.W1 = io::tensor_from_json(io::field(j, "W1", where), where + ": W1");
  m.W2 = io::tensor_from_json(io::field(j, "W2", where), where + ": W2");
  m.w_det = io::tensor_from_json(io::field(j, "w_det", where), where + ": w_det");
  m.b_det = io::tensor_from_json(io::field(j, "b_det", where), where + ": b_det");
  m.frozen = true;
  try {
    m.validate();
  } catch (const ContractError& e) {
    throw FormatError(where + ": " + e.what());
  }
  return m;
}

inline void save_model(const GadModel& m, const std::filesystem::path& path) { io::write_json(path, model_to_json(m)); }

inline GadModel load_model(const std::filesystem::path& path) {
  return model_from_json(io::read_json(path), path.string());
}

}  // namespace shiftguard
