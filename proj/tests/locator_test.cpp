#include "fakeshield/errors.hpp"
#include "fakeshield/locator/locator.hpp"
#include "fakeshield/mmtd/client.hpp"
#include "fakeshield/toy.hpp"
#include "fixtures.hpp"
#include "grad_check.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace fakeshield;
using namespace fakeshield::locator;
using nn::Matrix;
using nn::Var;

namespace {

const LmConfig kSmallLm{.d_model = 64, .layers = 2, .heads = 4, .mlp_hidden = 128};
const SegConfig kSmallSeg{.mask_size = 64, .channels = {8, 16, 16}, .prompt_width = 16, .decoder_width = 16};

Var identity(const Var& x) { return x; }

Matrix counting_states(int rows, int width) {
  Matrix m(rows, width);
  for (int i = 0; i < rows; ++i) m.row(i).setConstant(i);
  return m;
}

double iou(const Matrix& a, const Matrix& b) {
  const double inter = (a.array() * b.array()).sum();
  const double uni = ((a.array() + b.array()) > 0.5).cast<double>().sum();
  return uni == 0.0 ? 1.0 : inter / uni;
}

std::vector<LocatorExample> triplets(int size) {
  std::vector<LocatorExample> out;
  for (const auto& s : toy::make_tampered_set(1, size)) {
    out.push_back({s.rgb, s.mask, s.domain,
                   mmtd::fixture_description(s.domain, false, s.mask)});
  }
  return out;
}

}  // namespace

TEST(Extract, ReturnsProjectedStateAtSegPosition) {
  const std::vector<int> ids{1, 2, 3, 260, 5};
  const Var out = extract_seg_embedding(Var(counting_states(5, 4)), ids, 260, identity);
  EXPECT_TRUE(out.value().isApproxToConstant(3.0));
  EXPECT_EQ(out.cols(), 4);
}

TEST(Extract, FirstSegWins) {
  const std::vector<int> ids{1, 260, 3, 260, 5};
  const Var out = extract_seg_embedding(Var(counting_states(5, 4)), ids, 260, identity);
  EXPECT_TRUE(out.value().isApproxToConstant(1.0));
}

TEST(Extract, MissingSegThrows) {
  const std::vector<int> ids{1, 2, 3};
  EXPECT_THROW(extract_seg_embedding(Var(counting_states(3, 4)), ids, 260, identity), std::invalid_argument);
  const std::vector<int> longer{1, 260, 3, 4};
  EXPECT_THROW(extract_seg_embedding(Var(counting_states(3, 4)), longer, 260, identity), std::invalid_argument);
}

TEST(Extract, PermutingOtherRowsLeavesResultUnchanged) {
  nn::Rng rng(3);
  SegProjector mlp(8, 5, rng);
  const Matrix states = rng.normal_matrix(7, 8, 1.0);
  const std::vector<int> ids{1, 2, 3, 4, 260, 6, 7};
  const Matrix base = extract_seg_embedding(Var(states), ids, 260, mlp).value();
  const std::vector<int> perm{6, 0, 5, 1, 4, 3, 2};  // row 4 stays put
  for (int trial = 0; trial < 3; ++trial) {
    Matrix p(7, 8);
    std::vector<int> order = perm;
    std::rotate(order.begin(), order.begin() + trial, order.end());
    std::vector<int> others;
    for (int r : order) {
      if (r != 4) others.push_back(r);
    }
    for (int i = 0, k = 0; i < 7; ++i) p.row(i) = i == 4 ? states.row(4) : states.row(others[static_cast<size_t>(k++)]);
    EXPECT_EQ(extract_seg_embedding(Var(p), ids, 260, mlp).value(), base);
  }
}

TEST(Dice, PerfectPredictionIsNearZero) {
  Matrix g = Matrix::Zero(64, 64);
  g.block(10, 10, 20, 20).setOnes();
  EXPECT_LT(dice_loss(Var(g), g).item(), 1e-3);
}

TEST(Dice, AllOnesAgainstEmptyMatchesClosedForm) {
  const double scalar = 1.0 - 1.0 / (4096.0 + 1.0);
  EXPECT_NEAR(dice_loss(Var(Matrix::Ones(64, 64)), Matrix::Zero(64, 64)).item(), scalar, 1e-12);
  EXPECT_NEAR(scalar, 0.99976, 1e-5);
}

TEST(Dice, HalfProbabilitiesMatchScalarLoop) {
  Matrix g = Matrix::Zero(16, 16);
  g.topRows(8).setOnes();
  const Matrix p = Matrix::Constant(16, 16, 0.5);
  double pg = 0, ps = 0, gs = 0;
  for (int r = 0; r < 16; ++r) {
    for (int c = 0; c < 16; ++c) {
      pg += p(r, c) * g(r, c);
      ps += p(r, c);
      gs += g(r, c);
    }
  }
  EXPECT_NEAR(dice_loss(Var(p), g).item(), 1.0 - (2 * pg + 1.0) / (ps + gs + 1.0), 1e-6);
}

TEST(Dice, ShapeMismatchThrows) {
  EXPECT_THROW(dice_loss(Var(Matrix::Ones(4, 4)), Matrix::Ones(4, 5)), std::invalid_argument);
}

TEST(Loss, BceDiceGradientMatchesFiniteDifferences) {
  nn::Rng rng(21);
  Matrix g = Matrix::Zero(1, 64);
  for (int i = 0; i < 64; ++i) g(0, i) = (i % 8 < 3 && i / 8 > 2) ? 1.0 : 0.0;
  std::vector<Var> in{Var(rng.normal_matrix(1, 64, 1.0), true)};
  const double err = fakeshield::testing::max_grad_error(in, [&](const std::vector<Var>& v) {
    return nn::add(nn::scale(nn::bce_with_logits(v[0], g), 2.0), nn::scale(dice_loss(nn::sigmoid(v[0]), g), 0.5));
  });
  EXPECT_LT(err, 1e-4);
}

TEST(Loss, ComponentsSumToTotal) {
  nn::Rng rng(4);
  const Var txt(rng.normal_matrix(4, 261, 1.0));
  const std::vector<int> targets{-1, 73, 260, 257};
  const Var mask(rng.normal_matrix(1, 64, 1.0));
  Matrix g = Matrix::Zero(1, 64);
  g.leftCols(20).setOnes();
  const auto parts = localization_loss(txt, targets, 260, mask, g, 2.0, 0.5);
  EXPECT_NEAR(parts.ce + parts.bce_weighted + parts.dice_weighted, parts.total.item(), 1e-6);
  EXPECT_GE(parts.total.item(), 0.0);
}

TEST(Loss, ZeroWeightsLeaveTextTerm) {
  nn::Rng rng(5);
  const Var txt(rng.normal_matrix(3, 261, 1.0));
  const std::vector<int> targets{73, 260, 257};
  const auto parts = localization_loss(txt, targets, 260, Var(rng.normal_matrix(1, 16, 1.0)), Matrix::Ones(1, 16), 0, 0);
  EXPECT_NEAR(parts.total.item(), nn::cross_entropy(txt, targets).item(), 1e-12);
}

TEST(Loss, PerfectPredictionsGiveNearZero) {
  Matrix txt = Matrix::Constant(3, 261, -50.0);
  const std::vector<int> targets{73, 260, 257};
  for (int r = 0; r < 3; ++r) txt(r, targets[static_cast<size_t>(r)]) = 50.0;
  Matrix g = Matrix::Zero(1, 64);
  g.leftCols(32).setOnes();
  const Matrix logits = (g.array() * 100.0 - 50.0).matrix();
  EXPECT_LT(localization_loss(Var(txt), targets, 260, Var(logits), g, 2.0, 0.5).total.item(), 1e-3);
}

TEST(Loss, PromptWithoutSegThrows) {
  const std::vector<int> targets{73, 74, 257};
  EXPECT_THROW(localization_loss(Var(Matrix::Zero(3, 261)), targets, 260, Var(Matrix::Zero(1, 4)), Matrix::Zero(1, 4), 1, 1),
               std::invalid_argument);
}

TEST(Loss, GroundTruthPromptIsLiteral) {
  EXPECT_EQ(kGroundTruthPrompt, "It is <SEG>");
  const ByteTokenizer tok;
  const auto ids = tok.encode(kGroundTruthPrompt);
  EXPECT_EQ(std::count(ids.begin(), ids.end(), tok.seg_id()), 1);
  EXPECT_EQ(ids.back(), tok.seg_id());
}

TEST(Mask, ThresholdIsMonotone) {
  nn::Rng rng(8);
  const Matrix probs = rng.normal_matrix(32, 32, 1.0).array().abs().min(1.0).matrix();
  double prev = std::numeric_limits<double>::infinity();
  for (double t = 0.0; t <= 1.0; t += 0.05) {
    const auto m = TamperMask::from_probs(probs, t);
    EXPECT_TRUE(((m.binary.array() == 1.0) == (probs.array() >= t)).all());
    EXPECT_LE(m.binary.sum(), prev);
    prev = m.binary.sum();
  }
}

TEST(Mask, SaturatedLogitsGiveFullMask) {
  const Var logits(Matrix::Constant(1, 16 * 16, std::numeric_limits<double>::infinity()));
  for (int out : {16, 40}) {
    const auto m = mask_from_logits(logits, 16, out, out, 0.5);
    EXPECT_EQ(m.binary.rows(), out);
    EXPECT_TRUE(m.binary.isOnes());
    EXPECT_TRUE(m.probs.allFinite());
  }
}

TEST(Seg, DecoderShapeAndWidthCheck) {
  SegBackbone seg(kSmallSeg, {}, 3);
  nn::NoGradGuard guard;
  const auto e = seg.encode(image_to_planar(testing_support::noise_image(64, 1), 64));
  EXPECT_EQ(seg.decode(e, Var(Matrix::Ones(1, 16))).cols(), 64 * 64);
  EXPECT_THROW(seg.decode(e, Var(Matrix::Ones(1, 15))), ConfigError);
  EXPECT_THROW(localize(seg, testing_support::noise_image(48, 1), Var(Matrix::Ones(1, 15))), ConfigError);
}

TEST(Seg, LocalizeIsDeterministicAndInRange) {
  SegBackbone seg(kSmallSeg, {.rank = 2, .alpha = 4}, 3);
  const cv::Mat img = testing_support::noise_image(80, 2);
  const Var prompt(Matrix::Constant(1, 16, 0.3));
  const auto a = localize(seg, img, prompt);
  const auto b = localize(seg, img, prompt);
  EXPECT_EQ(a.probs, b.probs);
  EXPECT_EQ(a.probs.rows(), 80);
  EXPECT_GE(a.probs.minCoeff(), 0.0);
  EXPECT_LE(a.probs.maxCoeff(), 1.0);
}

TEST(Model, ZeroedAdaptersMatchBase) {
  auto adapted = MflmModel::create({}, kSmallLm, {.rank = 4, .alpha = 8}, kSmallSeg, {.rank = 4, .alpha = 8}, 9);
  auto base = MflmModel::create({}, kSmallLm, {}, kSmallSeg, {}, 9);
  nn::Rng rng(1);
  nn::ParamList adapters;
  adapted.tcm.lm->collect_adapters(adapters);
  for (auto& p : adapted.seg.adapter_params()) adapters.push_back(p);
  for (auto& p : adapters) p.var.mutable_value() = rng.normal_matrix(p.var.rows(), p.var.cols(), 0.5);

  const auto img = toy::make_tampered_set(1, 64).front().rgb;
  const auto text = std::string("VERDICT: tampered\nLOCATION: center\nBASIS: edges");
  nn::NoGradGuard guard;
  const Matrix planar = image_to_planar(img, 64);
  const Var prompt(Matrix::Constant(1, 16, 0.2));
  auto seg_logits = [&](const MflmModel& m) { return m.seg.decode(m.seg.encode(planar), prompt).value(); };
  auto states = [&](const MflmModel& m) {
    TcmContext ctx{detector::encode_image(m.tcm, img), text, m.instruction, std::nullopt};
    return m.tcm.lm->hidden(tcm_prompt_embeddings(m.tcm, m.config.inputs, ctx)).value();
  };
  EXPECT_NE(seg_logits(adapted), seg_logits(base));
  EXPECT_NE(states(adapted), states(base));
  adapted.zero_adapters();
  EXPECT_EQ(seg_logits(adapted), seg_logits(base));
  EXPECT_EQ(states(adapted), states(base));
  const auto ra = locate(adapted, img, text, std::nullopt);
  const auto rb = locate(base, img, text, std::nullopt);
  EXPECT_EQ(ra.tcm_text, rb.tcm_text);
  EXPECT_EQ(ra.mask.probs, rb.mask.probs);
}

TEST(Model, UntrainedModelFallsBackToEmptyMask) {
  auto model = MflmModel::create({}, kSmallLm, {}, kSmallSeg, {}, 2);
  model.generation.max_new_tokens = 0;  // nothing can be generated, so no <SEG> either
  const auto img = testing_support::noise_image(72, 3);
  const auto r = locate(model, img, "VERDICT: tampered\nLOCATION: center\nBASIS: edges", std::nullopt);
  ASSERT_TRUE(r.has_flag("no_seg"));
  EXPECT_EQ(r.mask.binary.rows(), 72);
  EXPECT_TRUE(r.mask.binary.isZero());
}

TEST(Model, PromptLayoutsFollowInputSelection) {
  const ByteTokenizer tok;
  TcmContext ctx;
  ctx.detection_text = "odet";
  ctx.instruction = "ins";
  ctx.tag = make_domain_tag(DomainCategory::deepfake);
  const int tag_len = static_cast<int>(tok.encode(ctx.tag->sentence).size());
  EXPECT_EQ(tcm_prompt_ids(tok, MflmInputs::odet_img, ctx, 4).size(), 1u + 4 + 4 + 1);
  EXPECT_EQ(tcm_prompt_ids(tok, MflmInputs::ins_img, ctx, 4).size(), 1u + 4 + 3 + 1);
  EXPECT_EQ(tcm_prompt_ids(tok, MflmInputs::ins_tag, ctx, 4).size(), static_cast<size_t>(1 + tag_len + 3 + 1));
  EXPECT_EQ(tcm_prompt_ids(tok, MflmInputs::ins_tag_img, ctx, 4).size(), static_cast<size_t>(1 + 4 + tag_len + 3 + 1));
  ctx.tag.reset();
  EXPECT_THROW(tcm_prompt_ids(tok, MflmInputs::ins_tag, ctx, 4), std::invalid_argument);
  for (auto m : {MflmInputs::odet_img, MflmInputs::ins_img, MflmInputs::ins_tag, MflmInputs::ins_tag_img}) {
    EXPECT_EQ(parse_mflm_inputs(mflm_inputs_name(m)), m);
  }
  EXPECT_THROW(parse_mflm_inputs("nope"), ConfigError);
}

TEST(Train, MissingMaskIsAnError) {
  auto model = MflmModel::create({}, kSmallLm, {}, kSmallSeg, {}, 2);
  auto ex = triplets(64);
  ex[3].mask = cv::Mat();
  EXPECT_THROW(train_mflm(model, ex, {.epochs = 1}), InputError);
}

TEST(Train, DatasetRecordWithoutMaskIsAnError) {
  testing_support::TempDir dir("loc");
  mmtd::AnalysisRecord r;
  r.id = "a";
  r.image_path = "images/a.png";
  r.domain = DomainCategory::photoshop;
  r.authentic = false;
  r.description = mmtd::parse_description(mmtd::fixture_description(r.domain, false, cv::Mat()));
  mmtd::Dataset ds{dir.path(), {r}};
  EXPECT_THROW(examples_from_dataset(ds), InputError);
}

TEST(Train, OverfitsEightTriplets) {
  auto model = MflmModel::create({}, {}, {.rank = 4, .alpha = 8}, {}, {.rank = 4, .alpha = 8}, 3);
  const auto ex = triplets(128);
  const auto report = train_mflm(model, ex, {.epochs = 100, .lr = 3e-3, .batch_size = 1});
  EXPECT_EQ(report.frozen_checksum_before, report.frozen_checksum_after);
  EXPECT_LT(report.epoch_loss.back(), 0.1 * report.initial_loss);
  double total = 0.0;
  for (const auto& e : ex) {
    const auto r = locate(model, e.rgb, e.detection_text, make_domain_tag(e.domain));
    EXPECT_FALSE(r.has_flag("no_seg"));
    EXPECT_EQ(r.tcm_text, "It is <SEG>");
    total += iou(r.mask.binary, mask_to_matrix(e.mask, e.mask.rows, e.mask.cols));
  }
  EXPECT_GE(total / static_cast<double>(ex.size()), 0.9);
}

TEST(Train, DescriptionsAreConsumedVerbatim) {
  auto ex = triplets(64);
  ex.resize(1);
  ex[0].detection_text = "VERDICT: tampered\nLOCATION: nowhere in particular\nBASIS: a  deliberately  odd   text";
  const auto copy = ex[0].detection_text;
  auto model = MflmModel::create({}, kSmallLm, {}, kSmallSeg, {}, 2);
  train_mflm(model, ex, {.epochs = 1});
  EXPECT_EQ(ex[0].detection_text, copy);
  const ByteTokenizer tok;
  TcmContext ctx;
  ctx.detection_text = copy;
  const auto ids = tcm_prompt_ids(tok, MflmInputs::odet_img, ctx, 0);
  EXPECT_EQ(tok.decode(std::span<const int>(ids).subspan(1, ids.size() - 2)), copy);
}

TEST(Checkpoint, RoundTripsTrainableState) {
  testing_support::TempDir dir("loc");
  auto model = MflmModel::create({}, kSmallLm, {.rank = 2, .alpha = 4}, kSmallSeg, {.rank = 2, .alpha = 4}, 6);
  nn::Rng rng(2);
  for (auto& p : model.trainable_params()) p.var.mutable_value() += rng.normal_matrix(p.var.rows(), p.var.cols(), 0.1);
  model.save(dir / "loc.ckpt");
  const auto back = MflmModel::load(dir / "loc.ckpt");
  EXPECT_EQ(back.weights_version(), model.weights_version());
  EXPECT_EQ(nn::checksum(back.frozen_params()), nn::checksum(model.frozen_params()));
  EXPECT_THROW(MflmModel::load(dir / "missing.ckpt"), std::exception);
}
