#include "fakeshield/detector/detector.hpp"
#include "fakeshield/errors.hpp"
#include "fakeshield/mmtd/client.hpp"
#include "fakeshield/toy.hpp"
#include "fixtures.hpp"
#include "grad_check.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace fakeshield;
using namespace fakeshield::detector;

namespace {

// Whitespace tokenizer for counting spans: one id per word.
class WordTokenizer final : public Tokenizer {
 public:
  std::vector<int> encode(std::string_view text) const override {
    std::istringstream in{std::string(text)};
    std::vector<int> ids;
    std::string w;
    while (in >> w) ids.push_back(static_cast<int>(std::hash<std::string>{}(w) % 200));
    return ids;
  }
  std::string decode(std::span<const int>) const override { return {}; }
  int vocab_size() const override { return 261; }
  int bos_id() const override { return 256; }
  int eos_id() const override { return 257; }
  int sep_id() const override { return 258; }
  int image_id() const override { return 259; }
  int seg_id() const override { return 260; }
};

// Replays a fixed token script regardless of input.
class ScriptedDecoder final : public Decoder {
 public:
  ScriptedDecoder(std::vector<int> script, int vocab) : script_(std::move(script)), vocab_(vocab) {}
  nn::RowVector prefill(const nn::Var&) override { return next(); }
  nn::RowVector step(int) override { return next(); }

 private:
  nn::RowVector next() {
    nn::RowVector l = nn::RowVector::Zero(vocab_);
    l(script_[std::min(pos_++, script_.size() - 1)]) = 10.0;
    return l;
  }
  std::vector<int> script_;
  int vocab_;
  size_t pos_ = 0;
};

VlmBackbone small_backbone(int rank = 4) {
  return VlmBackbone::create({}, {.d_model = 64, .layers = 2, .heads = 4, .mlp_hidden = 128}, {.rank = rank, .alpha = 2.0 * rank}, 5);
}

// -log softmax(row)[t] with plain loops.
double scalar_ce_row(const nn::Matrix& logits, Eigen::Index r, int t) {
  double m = -1e300;
  for (Eigen::Index c = 0; c < logits.cols(); ++c) m = std::max(m, logits(r, c));
  double z = 0.0;
  for (Eigen::Index c = 0; c < logits.cols(); ++c) z += std::exp(logits(r, c) - m);
  return -(logits(r, t) - m - std::log(z));
}

std::vector<DetectorExample> toy_examples() {
  std::vector<DetectorExample> out;
  for (const auto& s : toy::make_toy_set(1, 128)) {
    out.push_back({s.rgb, s.domain, mmtd::fixture_description(s.domain, s.authentic, s.mask)});
  }
  return out;
}

}  // namespace

TEST(EncodeImage, ShapeAndDeterminism) {
  const auto bb = small_backbone();
  nn::NoGradGuard g;
  const auto a = encode_image(bb, testing_support::noise_image(80, 1));
  EXPECT_EQ(a.tokens.rows(), 16);
  EXPECT_EQ(a.tokens.cols(), 64);
  EXPECT_TRUE(a.tokens.value().allFinite());
  EXPECT_EQ(a.tokens.value(), encode_image(bb, testing_support::noise_image(80, 1)).tokens.value());
  const cv::Mat black(64, 64, CV_8UC3, cv::Scalar(0, 0, 0)), white(64, 64, CV_8UC3, cv::Scalar(255, 255, 255));
  EXPECT_NE(encode_image(bb, black).tokens.value(), encode_image(bb, white).tokens.value());
  EXPECT_THROW(encode_image(bb, cv::Mat()), InputError);
}

TEST(AssemblePrompt, SpanLengthsWithWordTokenizer) {
  const auto bb = small_backbone();
  WordTokenizer words;
  const DomainTag tag{DomainCategory::photoshop, "one two three four five six seven eight nine ten eleven twelve"};
  const std::string ins = "a b c d e f g h i";
  nn::NoGradGuard g;
  const auto img = encode_image(bb, testing_support::noise_image(64, 2));
  const auto p = assemble_prompt(*bb.lm, words, ins, &tag, img);
  EXPECT_EQ(p.image.length, 16);
  EXPECT_EQ(p.tag.length, 12);
  EXPECT_EQ(p.instruction.length, 9);
  // bos + 37 + sep
  EXPECT_EQ(p.ids.size(), 39u);
  EXPECT_EQ(p.embeddings.rows(), 39);
  EXPECT_EQ(p.image.start, 1);
  EXPECT_EQ(p.tag.start, 17);
  EXPECT_EQ(p.instruction.start, 29);
}

TEST(AssemblePrompt, SpliceIntegrityAndTagLocality) {
  const auto bb = small_backbone();
  nn::NoGradGuard g;
  const auto img = encode_image(bb, testing_support::noise_image(64, 3));
  const auto tag_a = make_domain_tag(DomainCategory::photoshop);
  const auto tag_b = make_domain_tag(DomainCategory::aigc);
  const auto a = assemble_prompt(bb, kCanonicalInstruction, &tag_a, img);
  const auto b = assemble_prompt(bb, kCanonicalInstruction, &tag_b, img);
  auto text = [&](const AssembledPrompt& p, Span s) {
    return bb.tokenizer.decode(std::span(p.ids).subspan(static_cast<size_t>(s.start), static_cast<size_t>(s.length)));
  };
  EXPECT_EQ(text(a, a.tag), tag_a.sentence);
  EXPECT_EQ(text(a, a.instruction), kCanonicalInstruction);
  EXPECT_EQ(text(b, b.tag), tag_b.sentence);
  // Image rows are the projected tokens themselves.
  EXPECT_EQ(a.embeddings.value().middleRows(a.image.start, a.image.length), img.tokens.value());
  // Everything outside the tag span matches (compared from each end).
  const auto& ea = a.embeddings.value();
  const auto& eb = b.embeddings.value();
  EXPECT_EQ(ea.topRows(a.tag.start), eb.topRows(b.tag.start));
  const auto tail_a = ea.rows() - (a.tag.start + a.tag.length);
  const auto tail_b = eb.rows() - (b.tag.start + b.tag.length);
  ASSERT_EQ(tail_a, tail_b);
  EXPECT_EQ(ea.bottomRows(tail_a), eb.bottomRows(tail_b));
  EXPECT_NE(text(a, a.tag), text(b, b.tag));
}

TEST(AssemblePrompt, Errors) {
  const auto bb = small_backbone();
  nn::NoGradGuard g;
  const auto img = encode_image(bb, testing_support::noise_image(64, 3));
  const auto tag = make_domain_tag(DomainCategory::deepfake);
  EXPECT_THROW(assemble_prompt(bb, "", &tag, img), std::invalid_argument);
  const ImageTokens narrow{nn::Var(nn::Matrix::Zero(16, 32))};
  EXPECT_THROW(assemble_prompt(bb, kCanonicalInstruction, &tag, narrow), ConfigError);
}

TEST(Generate, ScriptedDecoderGivesTamperedVerdict) {
  ByteTokenizer tok;
  auto script = tok.encode("VERDICT: tampered\nLOCATION: top left corner\nBASIS: halo at the edge");
  script.push_back(tok.eos_id());
  ScriptedDecoder dec(script, tok.vocab_size());
  AssembledPrompt p;
  p.embeddings = nn::Var(nn::Matrix::Zero(3, 8));
  const auto out = generate_detection(dec, tok, p, {});
  EXPECT_EQ(out.parsed.verdict, mmtd::Verdict::tampered);
  EXPECT_EQ(out.parsed.location_text, "top left corner");
  EXPECT_TRUE(out.flags.empty());
  EXPECT_EQ(mmtd::parse_description(out.raw_text), out.parsed);
}

TEST(Generate, FallbackAndTruncation) {
  ByteTokenizer tok;
  ScriptedDecoder dec(tok.encode("looks tampered to me"), tok.vocab_size());
  AssembledPrompt p;
  p.embeddings = nn::Var(nn::Matrix::Zero(2, 8));
  const auto out = generate_detection(dec, tok, p, {.max_new_tokens = 20});
  EXPECT_EQ(out.raw_text, "looks tampered to me");
  EXPECT_TRUE(out.has_flag("truncated"));
  EXPECT_TRUE(out.has_flag("low_confidence"));
  EXPECT_EQ(out.parsed.verdict, mmtd::Verdict::tampered);
  EXPECT_EQ(interpret_detection("all clear", false).parsed.verdict, mmtd::Verdict::authentic);
}

TEST(Generate, InvalidBytesBecomeReplacementCharacters) {
  const std::vector<std::pair<std::string, std::string>> cases{
      {"\xE2\x82", "\xEF\xBF\xBD"},
      {"\xC0\xAF", "\xEF\xBF\xBD\xEF\xBF\xBD"},
      {"\xED\xA0\x80", "\xEF\xBF\xBD\xEF\xBF\xBD\xEF\xBF\xBD"},
      {"\xF0\x9F\x98" "A", "\xEF\xBF\xBD" "A"},
      {"ok\xE2\x82\xAC\xFF", "ok\xE2\x82\xAC\xEF\xBF\xBD"},
      {"\xF4\x90\x80\x80", "\xEF\xBF\xBD\xEF\xBF\xBD\xEF\xBF\xBD\xEF\xBF\xBD"},
      {"plain \xF0\x9F\x98\x80", "plain \xF0\x9F\x98\x80"},
  };
  for (const auto& [in, want] : cases) EXPECT_EQ(sanitize_utf8(in), want);

  ByteTokenizer tok;
  std::vector<int> script{'V', 0xB2, 0x88};
  script.push_back(tok.eos_id());
  ScriptedDecoder dec(script, tok.vocab_size());
  AssembledPrompt p;
  p.embeddings = nn::Var(nn::Matrix::Zero(2, 8));
  const auto out = generate_detection(dec, tok, p, {});
  EXPECT_EQ(out.raw_text, "V\xEF\xBF\xBD\xEF\xBF\xBD");
  EXPECT_NO_THROW(nlohmann::json(out.raw_text).dump());
}

TEST(Generate, GreedyIsDeterministic) {
  const auto bb = small_backbone();
  nn::NoGradGuard g;
  const auto tag = make_domain_tag(DomainCategory::aigc);
  const auto p = assemble_prompt(bb, kCanonicalInstruction, &tag, encode_image(bb, testing_support::noise_image(64, 4)));
  const auto a = generate_detection(bb, p, {.max_new_tokens = 24});
  const auto b = generate_detection(bb, p, {.max_new_tokens = 24});
  EXPECT_EQ(a.raw_text, b.raw_text);
}

TEST(DetectionLoss, MatchesScalarOracle) {
  nn::Rng rng(3);
  const nn::Matrix logits = rng.normal_matrix(5, 7, 2.0);
  const int targets[] = {-1, 3, 0, 6, -1};
  nn::Matrix tag(1, 3);
  tag << 0.2, -1.0, 0.7;
  const double lambda = 0.6;
  const auto parts = detection_loss(nn::Var(logits), targets, nn::Var(tag), 2, lambda);
  double text = 0.0;
  int n = 0;
  for (int r = 0; r < 5; ++r) {
    if (targets[r] < 0) continue;
    text += scalar_ce_row(logits, r, targets[r]);
    ++n;
  }
  text /= n;
  const double tag_ce = scalar_ce_row(tag, 0, 2);
  EXPECT_NEAR(parts.text, text, 1e-9);
  EXPECT_NEAR(parts.tag, tag_ce, 1e-9);
  EXPECT_NEAR(parts.total.item(), text + lambda * tag_ce, 1e-6);

  const auto text_only = detection_loss(nn::Var(logits), targets, nn::Var(tag), 2, 0.0);
  EXPECT_NEAR(text_only.total.item(), text, 1e-12);
}

TEST(DetectionLoss, OneHotIsZeroAndMaskedIsError) {
  nn::Matrix logits = nn::Matrix::Constant(3, 5, -1e4);
  const int targets[] = {1, 4, 0};
  for (int r = 0; r < 3; ++r) logits(r, targets[r]) = 1e4;
  nn::Matrix tag = nn::Matrix::Constant(1, 3, -1e4);
  tag(0, 1) = 1e4;
  EXPECT_NEAR(detection_loss(nn::Var(logits), targets, nn::Var(tag), 1, 1.0).total.item(), 0.0, 1e-12);
  const int none[] = {-1, -1, -1};
  EXPECT_THROW(detection_loss(nn::Var(logits), none, nn::Var(), 0, 1.0), std::invalid_argument);
}

TEST(DetectionLoss, FiniteDifferenceOnSlab) {
  nn::Rng rng(9);
  nn::Var slab(rng.normal_matrix(3, 5, 1.0), true);
  nn::Var tag(rng.normal_matrix(1, 3, 1.0), true);
  const int targets[] = {2, -1, 4};
  const double err = fakeshield::testing::max_grad_error({slab, tag}, [&](const std::vector<nn::Var>& v) {
    return detection_loss(v[0], targets, v[1], 1, 0.5).total;
  });
  EXPECT_LT(err, 1e-4);
}

TEST(TrainingSequence, MasksPromptPositions) {
  const auto bb = small_backbone();
  nn::NoGradGuard g;
  const auto tag = make_domain_tag(DomainCategory::aigc);
  auto p = assemble_prompt(bb, kCanonicalInstruction, &tag, encode_image(bb, testing_support::noise_image(64, 4)));
  const size_t n = p.ids.size();
  const auto seq = build_training_sequence(bb, std::move(p), "ab");
  ASSERT_EQ(seq.targets.size(), n + 3);
  for (size_t i = 0; i + 1 < n; ++i) EXPECT_EQ(seq.targets[i], -1);
  EXPECT_EQ(seq.targets[n - 1], 'a');
  EXPECT_EQ(seq.targets[n], 'b');
  EXPECT_EQ(seq.targets[n + 1], bb.tokenizer.eos_id());
  EXPECT_EQ(seq.targets[n + 2], -1);
}

TEST(Adapters, ZeroedAdaptersMatchBase) {
  auto model = DetectorModel::create({}, {.d_model = 64, .layers = 2, .heads = 4, .mlp_hidden = 128},
                                     {.rank = 4, .alpha = 8}, 21);
  auto base = DetectorModel::create({}, {.d_model = 64, .layers = 2, .heads = 4, .mlp_hidden = 128},
                                    {.rank = 0}, 21);
  // Perturb the adapters, then zero them.
  nn::ParamList adapters;
  model.backbone.lm->collect_adapters(adapters);
  ASSERT_FALSE(adapters.empty());
  nn::Rng rng(99);
  for (auto& p : adapters) p.var.mutable_value() = rng.normal_matrix(p.var.rows(), p.var.cols(), 0.5);
  const auto tag0 = make_domain_tag(DomainCategory::photoshop);
  model.generation.max_new_tokens = 40;
  const auto perturbed = detect(model, testing_support::noise_image(64, 8), &tag0).raw_text;
  model.backbone.lm->zero_adapters();
  const auto tag = make_domain_tag(DomainCategory::photoshop);
  const auto img = testing_support::noise_image(64, 8);
  model.generation.max_new_tokens = base.generation.max_new_tokens = 40;
  EXPECT_EQ(detect(model, img, &tag).raw_text, detect(base, img, &tag).raw_text);
  EXPECT_NE(perturbed, detect(base, img, &tag).raw_text);
}

TEST(Train, RankZeroIsFlatAndFrozenWeightsStay) {
  auto model = DetectorModel::create({}, {.d_model = 64, .layers = 2, .heads = 4, .mlp_hidden = 128}, {.rank = 0}, 4);
  auto examples = toy_examples();
  examples.resize(2);
  // Projector frozen too, so nothing can move.
  nn::set_trainable(model.backbone.trainable_params(), false);
  const auto report = train_dte_fdm(model, examples, {.epochs = 2, .lr = 1e-2, .sample_instructions = false});
  EXPECT_EQ(report.frozen_checksum_before, report.frozen_checksum_after);
  for (double l : report.epoch_loss) EXPECT_NEAR(l, report.initial_loss, 1e-9);
}

TEST(Train, OverfitsToySet) {
  auto model = DetectorModel::create({}, {}, {.rank = 8, .alpha = 16}, 1);
  const auto examples = toy_examples();
  const auto report =
      train_dte_fdm(model, examples, {.epochs = 50, .lr = 6e-3, .batch_size = 1, .sample_instructions = false});
  EXPECT_EQ(report.frozen_checksum_before, report.frozen_checksum_after);
  EXPECT_LT(report.epoch_loss.back(), 0.1 * report.initial_loss);
  int correct = 0;
  for (const auto& e : examples) {
    const auto tag = make_domain_tag(e.domain);
    const auto out = detect(model, e.rgb, &tag);
    correct += out.parsed.verdict == mmtd::parse_description(e.target_text).verdict;
  }
  EXPECT_EQ(correct, 8);
}

TEST(Checkpoint, RoundTrip) {
  testing_support::TempDir dir("det");
  auto model = DetectorModel::create({}, {.d_model = 64, .layers = 2, .heads = 4, .mlp_hidden = 128}, {.rank = 2, .alpha = 4}, 3);
  for (auto& p : model.backbone.trainable_params()) p.var.mutable_value().array() += 0.01;
  model.save(dir / "det.ckpt");
  const auto loaded = DetectorModel::load(dir / "det.ckpt");
  EXPECT_EQ(loaded.weights_version(), model.weights_version());
  EXPECT_EQ(nn::checksum(loaded.backbone.frozen_params()), nn::checksum(model.backbone.frozen_params()));
  const auto tag = make_domain_tag(DomainCategory::deepfake);
  model.generation.max_new_tokens = 30;
  auto copy = DetectorModel::load(dir / "det.ckpt");
  copy.generation.max_new_tokens = 30;
  const auto img = testing_support::noise_image(64, 5);
  EXPECT_EQ(detect(model, img, &tag).raw_text, detect(copy, img, &tag).raw_text);
}
