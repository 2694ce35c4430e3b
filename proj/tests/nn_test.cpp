#include "fakeshield/nn/checkpoint.hpp"
#include "fakeshield/nn/layers.hpp"
#include "fakeshield/nn/optim.hpp"
#include "fakeshield/vlm.hpp"
#include "grad_check.hpp"

#include <gtest/gtest.h>

#include <filesystem>

namespace fakeshield::nn {
namespace {

using testing::max_grad_error;
using Inputs = std::vector<Var>;

Matrix random(Rng& rng, Eigen::Index r, Eigen::Index c) { return rng.normal_matrix(r, c, 1.0); }

TEST(OpsGradientTest, DenseOps) {
  Rng rng(1);
  Inputs in{Var(random(rng, 3, 4)), Var(random(rng, 4, 5)), Var(random(rng, 1, 5))};
  EXPECT_LT(max_grad_error(in,
                           [](const Inputs& v) {
                             Var y = add_row(matmul(v[0], v[1]), v[2]);
                             return mean_all(mul(gelu(y), sigmoid(y)));
                           }),
            1e-6);
  Inputs nt{Var(random(rng, 3, 4)), Var(random(rng, 5, 4)), Var(random(rng, 3, 1))};
  EXPECT_LT(max_grad_error(nt,
                           [](const Inputs& v) {
                             Var y = mul_col(matmul_nt(v[0], v[1]), v[2]);
                             return sum_all(relu(add_col(y, v[2])));
                           }),
            1e-6);
}

TEST(OpsGradientTest, NormAndSoftmax) {
  Rng rng(2);
  Inputs in{Var(random(rng, 4, 6)), Var(random(rng, 1, 6)), Var(random(rng, 1, 6)),
            Var(random(rng, 4, 6))};
  EXPECT_LT(max_grad_error(in,
                           [](const Inputs& v) {
                             Var n = layer_norm(v[0], v[1], v[2]);
                             return sum_all(mul(n, v[3]));
                           }),
            1e-6);
  Inputs sm{Var(random(rng, 4, 4)), Var(random(rng, 4, 4))};
  for (bool causal : {false, true}) {
    EXPECT_LT(max_grad_error(sm,
                             [causal](const Inputs& v) {
                               return sum_all(mul(softmax_rows(v[0], causal), v[1]));
                             }),
              1e-6);
  }
}

TEST(OpsGradientTest, ShapeOps) {
  Rng rng(3);
  Inputs in{Var(random(rng, 5, 3)), Var(random(rng, 2, 3)), Var(random(rng, 8, 4))};
  const int ids[] = {4, 0, 4};
  EXPECT_LT(max_grad_error(in,
                           [&](const Inputs& v) {
                             const Var rows[] = {slice_rows(v[0], 1, 3), v[1], gather_rows(v[0], ids)};
                             const Var cols[] = {concat_rows(rows), slice_cols(v[2], 1, 2)};
                             Var wide = concat_cols(cols);
                             Var sq = reshape(transpose(wide), 4, 10);
                             return mean_all(mul(sq, sq));
                           }),
            1e-6);
}

TEST(OpsGradientTest, SpatialOps) {
  Rng rng(4);
  Inputs in{Var(random(rng, 2, 36)), Var(random(rng, 3, 18))};
  EXPECT_LT(max_grad_error(in,
                           [](const Inputs& v) {
                             Var y = conv2d(v[0], 6, 6, v[1], 3, 1, 1);        // [3, 36]
                             Var p = max_pool2(y, 6, 6);                      // [3, 9]
                             Var u = upsample_bilinear(p, 3, 3, 5, 7);        // [3, 35]
                             Var m = mean_cols(u);
                             return sum_all(mul(m, m));
                           }),
            1e-5);
  Inputs strided{Var(random(rng, 2, 25)), Var(random(rng, 4, 8))};
  EXPECT_LT(max_grad_error(strided,
                           [](const Inputs& v) {
                             Var y = conv2d(v[0], 5, 5, v[1], 2, 2, 0);
                             return sum_all(mul(y, y));
                           }),
            1e-6);
}

TEST(OpsGradientTest, Losses) {
  Rng rng(5);
  Inputs ce{Var(random(rng, 5, 7))};
  const int targets[] = {1, -1, 6, 0, 3};
  EXPECT_LT(max_grad_error(ce, [&](const Inputs& v) { return cross_entropy(v[0], targets); }), 1e-6);

  Matrix gt = (random(rng, 4, 4).array() > 0).cast<double>();
  Inputs bce{Var(random(rng, 4, 4))};
  EXPECT_LT(max_grad_error(bce, [&](const Inputs& v) { return bce_with_logits(v[0], gt); }), 1e-6);
  EXPECT_LT(max_grad_error(bce, [&](const Inputs& v) { return soft_dice(sigmoid(v[0]), gt, 1.0); }),
            1e-6);
}

TEST(OpsTest, CrossEntropyRejectsFullyMaskedTargets) {
  Var logits(Matrix::Zero(2, 3));
  const int targets[] = {-1, -1};
  EXPECT_THROW(cross_entropy(logits, targets), std::invalid_argument);
}

TEST(OpsTest, UpsampleIdentityAtSameSize) {
  Rng rng(6);
  Var x(random(rng, 2, 12));
  EXPECT_TRUE(upsample_bilinear(x, 3, 4, 3, 4).value().isApprox(x.value(), 0.0));
}

TEST(LayersTest, ZeroAdapterLeavesOutputBitIdentical) {
  Rng rng(7);
  Linear plain(6, 4, rng);
  Var x(random(rng, 3, 6));
  const Matrix before = plain.forward(x).value();
  plain.attach_adapter(2, 4.0, rng);
  EXPECT_EQ(plain.forward(x).value(), before);
  plain.adapter()->up.mutable_value().setConstant(0.5);
  EXPECT_NE(plain.forward(x).value(), before);
  plain.adapter()->zero();
  EXPECT_EQ(plain.forward(x).value(), before);
}

TEST(OptimTest, ZeroLearningRateKeepsWeights) {
  Rng rng(8);
  Var w(random(rng, 3, 3), true);
  const Matrix before = w.value();
  Adam opt({{"w", w}}, {.lr = 0.0});
  sum_all(mul(w, w)).backward();
  opt.step();
  EXPECT_EQ(w.value(), before);
}

TEST(OptimTest, AdamDescends) {
  Var w(Matrix::Constant(1, 1, 3.0), true);
  Adam opt({{"w", w}}, {.lr = 0.1});
  for (int i = 0; i < 200; ++i) {
    opt.zero_grad();
    sum_all(mul(w, w)).backward();
    opt.step();
  }
  EXPECT_LT(std::abs(w.item()), 0.05);
}

TEST(CheckpointTest, RoundTrip) {
  Rng rng(9);
  Checkpoint ckpt;
  ckpt.meta = {{"weights_version", "t1"}};
  ckpt.tensors.emplace_back("a", random(rng, 2, 3));
  ckpt.tensors.emplace_back("b", random(rng, 1, 1));
  const auto path = std::filesystem::temp_directory_path() / "fs_ckpt_roundtrip.ckpt";
  ckpt.save(path);
  Checkpoint back = Checkpoint::load(path);
  EXPECT_EQ(back.meta, ckpt.meta);
  EXPECT_EQ(back.tensor("a"), ckpt.tensor("a"));
  EXPECT_EQ(back.tensor("b"), ckpt.tensor("b"));
  std::filesystem::remove(path);
}

TEST(TinyLmTest, CachedDecodingMatchesFullPass) {
  Rng rng(10);
  LmConfig cfg{.d_model = 16, .layers = 2, .heads = 2, .mlp_hidden = 32, .max_seq = 32};
  TinyLm lm(cfg, 20, rng);
  nn::AdapterConfig ad{.rank = 2, .alpha = 4.0};
  lm.attach_adapters(ad, rng);
  const int ids[] = {1, 5, 7, 3, 9, 2};
  Matrix full = lm.logits(lm.hidden(lm.embed(ids))).value();
  auto dec = lm.decoder();
  const int prefix[] = {1, 5, 7};
  RowVector l = dec->prefill(lm.embed(prefix));
  EXPECT_LT((l - full.row(2)).cwiseAbs().maxCoeff(), 1e-10);
  for (int i = 3; i < 6; ++i) {
    l = dec->step(ids[i]);
    EXPECT_LT((l - full.row(i)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(TinyLmTest, GradientThroughTransformer) {
  Rng rng(11);
  LmConfig cfg{.d_model = 8, .layers = 1, .heads = 2, .mlp_hidden = 8, .max_seq = 8};
  TinyLm lm(cfg, 6, rng);
  Inputs in{Var(random(rng, 4, 8))};
  const int targets[] = {1, 2, -1, 5};
  EXPECT_LT(max_grad_error(in, [&](const Inputs& v) { return cross_entropy(lm.logits(lm.hidden(v[0])), targets); }),
            1e-5);
}

}  // namespace
}  // namespace fakeshield::nn
