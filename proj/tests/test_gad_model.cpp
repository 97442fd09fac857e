#include <gtest/gtest.h>

#include "test_support.hpp"

namespace {

using namespace sgtest;

GadModel random_model(std::size_t d, std::size_t h, std::size_t r, Rng& rng) {
  GadModel m;
  m.W1 = random_tensor(d, h, rng);
  m.W2 = random_tensor(h, r, rng);
  m.w_det = random_tensor(r, 1, rng);
  m.b_det = random_tensor(1, 1, rng);
  m.hidden_dim = h;
  m.repr_dim = r;
  return m;
}

Tensor dense_matmul(const Tensor& a, const Tensor& b) {
  Tensor c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      c(i, j) = acc;
    }
  return c;
}

// Two well separated Gaussian clusters; anomalies are the smaller one.
Graph separable_graph(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n = 200, anomalies = 40, d = 4;
  Graph g = random_graph(n, d, 0.0, rng);
  g.labels = std::vector<int>(n, 0);
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t i = 0; i < n; ++i) {
    const bool anom = i >= n - anomalies;
    (*g.labels)[i] = anom;
    for (std::size_t k = 0; k < d; ++k) g.features(i, k) = (anom ? 2.0 : -2.0) + 0.5 * rng.normal();
    for (std::size_t j = i + 1; j < n; ++j)
      if ((j >= n - anomalies) == anom && rng.uniform() < 0.03) edges.emplace_back(i, j);
  }
  g.adjacency = adjacency_from_edges(n, edges);
  stratified_split(g, Mask(n, true), rng);
  return g;
}

TEST(Encode, SingleNodeOperatorsAgree) {
  Rng rng(1);
  const GadModel m = random_model(3, 4, 2, rng);
  const Graph g = random_graph(1, 3, 0.0, rng);
  EXPECT_EQ(encode(sym_normalize(g), g.features, m), encode(identity_operator(1), g.features, m));
}

TEST(Encode, ZeroFeaturesGiveZero) {
  Rng rng(2);
  const GadModel m = random_model(3, 4, 2, rng);
  const Graph g = random_graph(6, 3, 0.5, rng);
  const Tensor h = encode(sym_normalize(g), Tensor(6, 3), m);
  for (double v : h.data()) EXPECT_EQ(v, 0.0);
}

TEST(Encode, PathGraphDenseOracle) {
  Rng rng(3);
  const GadModel m = random_model(2, 3, 2, rng);
  Graph g = random_graph(3, 2, 0.0, rng);
  g.adjacency = adjacency_from_edges(3, {{0, 1}, {1, 2}});
  // degrees with self-loops: 2, 3, 2
  const double a = 1.0 / 2.0, b = 1.0 / std::sqrt(6.0), c = 1.0 / 3.0;
  const Tensor op(3, 3, {a, b, 0.0, b, c, b, 0.0, b, a});
  const Tensor want = dense_matmul(op, dense_matmul(relu(dense_matmul(op, dense_matmul(g.features, m.W1))), m.W2));
  EXPECT_LE(max_abs_diff(encode(sym_normalize(g), g.features, m), want), 1e-14);
}

TEST(Encode, ShapeMismatchRejected) {
  Rng rng(4);
  const GadModel m = random_model(3, 4, 2, rng);
  EXPECT_THROW(encode(identity_operator(5), Tensor(5, 2), m), ContractError);
  EXPECT_THROW(encode(identity_operator(4), Tensor(5, 3), m), ContractError);
  EXPECT_THROW(detect(Tensor(5, 3), m), ContractError);
}

TEST(EncodeDual, EqualsIdentityOperatorBitwise) {
  Rng rng(5);
  for (int t = 0; t < 10; ++t) {
    const GadModel m = random_model(4, 5, 3, rng);
    const Tensor x = random_tensor(9, 4, rng);
    EXPECT_EQ(encode_dual(x, m), encode(identity_operator(9), x, m));
  }
}

TEST(EncodeDual, EdgeDeletionInvariant) {
  Rng rng(6);
  const GadModel m = random_model(4, 5, 3, rng);
  const Graph dense = random_graph(15, 4, 0.6, rng);
  Graph bare = dense;
  bare.adjacency = adjacency_from_edges(15, {});
  EXPECT_EQ(encode_dual(dense.features, m), encode_dual(bare.features, m));
  EXPECT_NE(encode(sym_normalize(dense), dense.features, m), encode(sym_normalize(bare), bare.features, m));
}

TEST(EncodeDual, RowLocality) {
  Rng rng(7);
  const GadModel m = random_model(4, 5, 3, rng);
  Tensor x = random_tensor(8, 4, rng);
  const Tensor h = encode_dual(x, m);
  for (std::size_t k = 0; k < 4; ++k) x(5, k) += 3.0;
  const Tensor h2 = encode_dual(x, m);
  for (std::size_t i = 0; i < 8; ++i)
    if (i != 5) {
      for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(h(i, j), h2(i, j));
    }
}

TEST(EncodeDual, PermutationEquivariant) {
  Rng rng(8);
  const GadModel m = random_model(4, 5, 3, rng);
  const Tensor x = random_tensor(10, 4, rng);
  std::vector<std::size_t> perm(10);
  for (std::size_t i = 0; i < 10; ++i) perm[i] = i;
  rng.shuffle(perm);
  const Tensor h = encode_dual(x, m);
  const Tensor hp = encode_dual(gather_rows(x, perm), m);
  EXPECT_EQ(hp, gather_rows(h, perm));
}

TEST(Detect, Examples) {
  Rng rng(9);
  GadModel m = random_model(2, 2, 2, rng);
  m.b_det = Tensor(1, 1);
  const Tensor zero = detect(Tensor(3, 2), m);
  for (double v : zero.data()) EXPECT_EQ(v, 0.0);

  m.w_det = Tensor(2, 1, {1.0, -2.0});
  m.b_det = Tensor(1, 1, {0.5});
  const Tensor s = detect(Tensor(2, 2, {1.0, 2.0, 3.0, 4.0}), m);
  EXPECT_DOUBLE_EQ(s[0], 1.0 - 4.0 + 0.5);
  EXPECT_DOUBLE_EQ(s[1], 3.0 - 8.0 + 0.5);

  Tensor h(1, 2, {0.3, 0.1});
  const double before = detect(h, m)[0];
  h(0, 0) += 0.01 * m.w_det[0];
  h(0, 1) += 0.01 * m.w_det[1];
  EXPECT_GT(detect(h, m)[0], before);
}

TEST(Pretrain, SeparableGraphReachesHighValAuroc) {
  const Graph g = separable_graph(10);
  PretrainConfig cfg;
  cfg.seed = 3;
  const auto res = pretrain_with_history(g, cfg);
  EXPECT_TRUE(res.model.frozen);
  EXPECT_GE(*std::max_element(res.val_auroc.begin(), res.val_auroc.end()), 0.95);
  const auto val = mask_indices(g.val);
  const Tensor s = detect(encode(sym_normalize(g), g.features, res.model), res.model);
  EXPECT_GE(auroc(pick(s, val), pick(*g.labels, val)), 0.95);
}

TEST(Pretrain, LossNonIncreasingEarly) {
  const Graph g = separable_graph(11);
  PretrainConfig cfg;
  cfg.seed = 4;
  cfg.patience = 1000;
  const auto res = pretrain_with_history(g, cfg);
  ASSERT_GE(res.train_loss.size(), 5u);
  for (std::size_t e = 1; e < 5; ++e) EXPECT_LE(res.train_loss[e], res.train_loss[e - 1]);
}

TEST(Pretrain, Deterministic) {
  const Graph g = separable_graph(12);
  PretrainConfig cfg;
  cfg.seed = 5;
  cfg.epochs = 30;
  EXPECT_EQ(pretrain(g, cfg), pretrain(g, cfg));
}

TEST(Pretrain, Rejections) {
  const Graph g = separable_graph(13);
  PretrainConfig cfg;
  cfg.epochs = 0;
  EXPECT_THROW(pretrain(g, cfg), ContractError);
  cfg.epochs = 5;
  cfg.lr = 0.0;
  EXPECT_THROW(pretrain(g, cfg), ContractError);
  cfg.lr = 1e-2;

  Graph unlabeled = g;
  unlabeled.labels.reset();
  EXPECT_THROW(pretrain(unlabeled, cfg), ContractError);

  Graph no_val = g;
  for (std::size_t i = 0; i < g.num_nodes(); ++i)
    if (no_val.val[i]) {
      no_val.val[i] = false;
      no_val.test[i] = true;
    }
  EXPECT_THROW(pretrain(no_val, cfg), ContractError);

  Graph one_class = g;
  for (std::size_t i = 0; i < g.num_nodes(); ++i)
    if (one_class.train[i] && (*one_class.labels)[i] == 1) {
      one_class.train[i] = false;
      one_class.test[i] = true;
    }
  EXPECT_THROW(pretrain(one_class, cfg), ContractError);
}

TEST(Diagnostic, Examples) {
  const std::vector<int> y{0, 1, 0, 1, 0};
  const Tensor perfect(5, 1, {-40.0, 40.0, -40.0, 40.0, -40.0});
  EXPECT_LT(supervised_loss_diagnostic(perfect, y), 1e-8);
  const Tensor good(5, 1, {-1.0, 1.0, -1.0, 1.0, -1.0});
  EXPECT_GT(supervised_loss_diagnostic(scale(good, -1.0), y), supervised_loss_diagnostic(good, y));
  EXPECT_EQ(supervised_loss_diagnostic(good, y), bce_with_logits(good, y, 1.5));
}

TEST(Checkpoint, RoundTripExact) {
  Rng rng(14);
  GadModel m = random_model(5, 4, 3, rng);
  m.W1(0, 0) = 0.1;
  m.W2(1, 1) = 1.0 / 3.0;
  m.frozen = true;
  const auto dir = scratch_dir("model_ckpt");
  save_model(m, dir / "model.json");
  EXPECT_EQ(load_model(dir / "model.json"), m);

  auto j = model_to_json(m);
  j["repr_dim"] = 7;
  EXPECT_THROW(model_from_json(j, "x"), FormatError);
  j = model_to_json(m);
  j.erase("w_det");
  EXPECT_THROW(model_from_json(j, "x"), FormatError);
}

TEST(Checkpoint, KeysInOrder) {
  Rng rng(15);
  const auto j = model_to_json(random_model(2, 2, 2, rng));
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"hidden_dim", "repr_dim", "W1", "W2", "w_det", "b_det"}));
}

}  // namespace
