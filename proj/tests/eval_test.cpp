#include "fakeshield/errors.hpp"
#include "fakeshield/eval/css.hpp"
#include "fakeshield/eval/degrade.hpp"
#include "fakeshield/eval/lexicon.hpp"
#include "fakeshield/eval/metrics.hpp"
#include "fakeshield/eval/suite.hpp"
#include "fakeshield/image.hpp"
#include "fakeshield/mmtd/client.hpp"
#include "fakeshield/nn/rng.hpp"
#include "fakeshield/toy.hpp"
#include "fixtures.hpp"

#include <gtest/gtest.h>
#include <httplib.h>

#include <thread>

using namespace fakeshield;
using namespace fakeshield::eval;
using mmtd::Verdict;
using nn::Matrix;

namespace {

// Maps a fixed set of strings to fixed vectors.
class TableEmbedder final : public Embedder {
 public:
  std::string id() const override { return "table"; }
  Eigen::VectorXd embed(std::string_view text) const override {
    Eigen::VectorXd v(2);
    if (text == "x") v << 1, 0;
    else v << 0, 1;
    return v;
  }
};

Matrix random_mask(nn::Rng& rng, int h, int w) {
  Matrix m(h, w);
  for (int i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
  return m;
}

// Writes a toy split to disk and returns it as a dataset.
mmtd::Dataset toy_dataset(const std::filesystem::path& root) {
  std::filesystem::create_directories(root / "images");
  std::filesystem::create_directories(root / "masks");
  mmtd::Dataset ds{root, {}};
  int k = 0;
  for (const auto& s : toy::make_toy_set(2, 64)) {
    mmtd::AnalysisRecord r;
    r.id = s.name;
    r.image_path = "images/" + s.name + ".png";
    testing_support::write_png(root / r.image_path, s.rgb);
    if (!s.authentic) {
      r.mask_path = "masks/" + s.name + ".png";
      testing_support::write_png(root / *r.mask_path, s.mask);
    }
    r.domain = s.domain;
    r.authentic = s.authentic;
    r.source_name = k++ % 2 ? "set-b" : "set-a";
    r.description = mmtd::parse_description(mmtd::fixture_description(s.domain, s.authentic, s.mask));
    ds.records.push_back(r);
  }
  return ds;
}

// Answers with the ground truth of each record.
class PerfectSource final : public PredictionSource {
 public:
  explicit PerfectSource(const mmtd::Dataset& ds) : ds_(ds) {}
  std::string id() const override { return "perfect"; }
  bool available(const AblationFlags&, const DegradationSpec&) const override { return true; }
  Prediction predict(const AblationFlags&, const DegradationSpec&, const mmtd::AnalysisRecord& r,
                     const cv::Mat& image) const override {
    EXPECT_FALSE(image.empty());
    Prediction p;
    p.verdict = r.authentic ? Verdict::authentic : Verdict::tampered;
    p.text = mmtd::serialize_description(r.description);
    if (!r.authentic) {
      const cv::Mat m = read_mask(ds_.mask_file(r));
      p.mask = mask_to_matrix(m, m.rows, m.cols);
    }
    return p;
  }

 private:
  const mmtd::Dataset& ds_;
};

}  // namespace

TEST(Detection, AllCorrect) {
  const auto e = eval_detection({Verdict::tampered, Verdict::authentic, Verdict::tampered, Verdict::authentic},
                                {false, true, false, true});
  EXPECT_DOUBLE_EQ(e.acc, 1.0);
  EXPECT_DOUBLE_EQ(e.f1, 1.0);
}

TEST(Detection, HandCountedConfusion) {
  std::vector<Verdict> p;
  std::vector<bool> g;
  auto add = [&](int n, Verdict v, bool authentic) {
    for (int i = 0; i < n; ++i) {
      p.push_back(v);
      g.push_back(authentic);
    }
  };
  add(3, Verdict::tampered, false);
  add(1, Verdict::tampered, true);
  add(4, Verdict::authentic, true);
  add(2, Verdict::authentic, false);
  const auto e = eval_detection(p, g);
  EXPECT_EQ(e.confusion.tp, 3);
  EXPECT_EQ(e.confusion.fp, 1);
  EXPECT_EQ(e.confusion.tn, 4);
  EXPECT_EQ(e.confusion.fn, 2);
  EXPECT_DOUBLE_EQ(e.acc, 0.7);
  EXPECT_NEAR(e.f1, 6.0 / 9.0, 1e-12);
}

TEST(Detection, AllMissed) {
  const auto e = eval_detection({Verdict::authentic, Verdict::authentic}, {false, false});
  EXPECT_EQ(e.acc, 0.0);
  EXPECT_EQ(e.f1, 0.0);
  EXPECT_THROW(eval_detection({Verdict::authentic}, {false, true}), std::invalid_argument);
}

TEST(Detection, MatchesExhaustiveCountsOnSmallLists) {
  nn::Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const size_t n = 1 + rng.below(10);
    std::vector<Verdict> p;
    std::vector<bool> g;
    int correct = 0, tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < n; ++i) {
      p.push_back(rng.uniform() < 0.5 ? Verdict::tampered : Verdict::authentic);
      g.push_back(rng.uniform() < 0.5);
      const bool said = p.back() == Verdict::tampered, is = !g.back();
      correct += said == is;
      tp += said && is;
      fp += said && !is;
      fn += !said && is;
    }
    const auto e = eval_detection(p, g);
    EXPECT_EQ(e.acc, static_cast<double>(correct) / static_cast<double>(n));
    if (2 * tp + fp + fn > 0) EXPECT_EQ(e.f1, 2.0 * tp / (2 * tp + fp + fn));
  }
}

TEST(Localization, IdenticalAndEmptyMasks) {
  Matrix m = Matrix::Zero(8, 8);
  m.block(2, 2, 3, 3).setOnes();
  EXPECT_EQ(score_mask(m, m).iou, 1.0);
  EXPECT_EQ(score_mask(m, m).f1, 1.0);
  EXPECT_EQ(score_mask(Matrix::Zero(8, 8), Matrix::Zero(8, 8)).iou, 1.0);
  EXPECT_EQ(score_mask(Matrix::Zero(8, 8), Matrix::Zero(8, 8)).f1, 1.0);
  EXPECT_THROW(score_mask(Matrix::Zero(8, 8), Matrix::Zero(8, 4)), std::invalid_argument);
}

TEST(Localization, LeftHalfAgainstTopHalf) {
  Matrix left = Matrix::Zero(8, 8), top = Matrix::Zero(8, 8);
  left.leftCols(4).setOnes();
  top.topRows(4).setOnes();
  const auto s = score_mask(left, top);
  EXPECT_DOUBLE_EQ(s.iou, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(s.f1, 0.5);
}

TEST(Localization, MatchesScalarLoops) {
  nn::Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix p = random_mask(rng, 8, 8), g = random_mask(rng, 8, 8);
    int inter = 0, uni = 0, np = 0, ng = 0;
    for (int r = 0; r < 8; ++r) {
      for (int c = 0; c < 8; ++c) {
        const bool a = p(r, c) > 0.5, b = g(r, c) > 0.5;
        inter += a && b;
        uni += a || b;
        np += a;
        ng += b;
      }
    }
    const auto s = score_mask(p, g);
    if (uni == 0) continue;
    EXPECT_EQ(s.iou, static_cast<double>(inter) / uni);
    EXPECT_EQ(s.f1, 2.0 * inter / (np + ng));
  }
}

TEST(Localization, ThresholdsProbabilitiesAndResizesGroundTruth) {
  Matrix gt = Matrix::Zero(4, 4);
  gt.leftCols(2).setOnes();
  Matrix probs = Matrix::Constant(8, 8, 0.2);
  probs.leftCols(4).setConstant(0.5);
  const auto e = eval_localization({probs}, {gt});
  EXPECT_EQ(e.mean_iou, 1.0);
  EXPECT_EQ(e.per_image.size(), 1u);
  const Matrix up = resize_nearest(gt, 8, 8);
  EXPECT_TRUE(((up.array() == 0) || (up.array() == 1)).all());
  EXPECT_EQ(up.sum(), 32.0);
}

TEST(Css, IdentityOrthogonalitySymmetry) {
  const HashEmbedder h;
  const std::string a = "Edge artifacts around the patch", b = "Lighting is inconsistent near the face";
  EXPECT_NEAR(cosine(h.embed(a), h.embed(a)), 1.0, 1e-9);
  EXPECT_NEAR(cosine(h.embed(a), h.embed(b)), cosine(h.embed(b), h.embed(a)), 1e-9);
  const TableEmbedder t;
  EXPECT_EQ(eval_css({"x"}, {"y"}, t).mean_css, 0.0);
  EXPECT_EQ(eval_css({"x"}, {"x"}, t).mean_css, 1.0);
  EXPECT_EQ(eval_css({"x"}, {"x"}, t).embedder_id, "table");
}

TEST(Css, HashEmbedderMatchesScalarOracle) {
  const HashEmbedder h(64);
  const std::string a = mmtd::fixture_description(DomainCategory::photoshop, false, testing_support::square_mask(32, 0, 0, 8));
  const std::string b = mmtd::fixture_description(DomainCategory::aigc, false, testing_support::square_mask(32, 20, 20, 8));
  const auto va = h.embed(a), vb = h.embed(b);
  double dot = 0, na = 0, nb = 0;
  for (int i = 0; i < 64; ++i) {
    dot += va(i) * vb(i);
    na += va(i) * va(i);
    nb += vb(i) * vb(i);
  }
  EXPECT_NEAR(eval_css({a}, {b}, h).mean_css, dot / std::sqrt(na * nb), 1e-6);
}

TEST(Css, EmptyPredictionScoresZeroAndIsFlagged) {
  const auto e = eval_css({"", "edge"}, {"edge", "edge"}, HashEmbedder());
  EXPECT_EQ(e.flagged_empty, 1);
  EXPECT_EQ(e.per_pair[0], 0.0);
  EXPECT_NEAR(e.mean_css, 0.5, 1e-9);
  EXPECT_THROW(eval_css({"a"}, {}, HashEmbedder()), std::invalid_argument);
}

TEST(Css, LiveEmbedderTalksToEmbeddingService) {
  httplib::Server server;
  std::string seen_auth;
  server.Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    const auto body = nlohmann::json::parse(req.body);
    const double x = body.at("input") == "x" ? 1.0 : 0.0;
    res.set_content(nlohmann::json{{"data", {{{"embedding", {x, 1.0 - x}}}}}}.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  setenv("FAKESHIELD_TEST_EMBED_KEY", "k123", 1);
  const auto e = make_live_embedder({.endpoint = "http://127.0.0.1:" + std::to_string(port), .model = "m",
                                     .credential_env = "FAKESHIELD_TEST_EMBED_KEY"});
  EXPECT_EQ(e->id(), "live:m");
  EXPECT_EQ(eval_css({"x", "x"}, {"x", "y"}, *e).mean_css, 0.5);
  EXPECT_EQ(seen_auth, "Bearer k123");
  server.stop();
  t.join();
  EXPECT_THROW(e->embed("x"), UnavailableError);
}

TEST(Degrade, ZeroVarianceIsIdentityAndSeedsAreDeterministic) {
  const cv::Mat img = testing_support::noise_image(32, 4);
  const cv::Mat same = degrade_image(img, {DegradationKind::gaussian, 0}, 1);
  EXPECT_EQ(cv::norm(img, same, cv::NORM_INF), 0.0);
  const cv::Mat a = degrade_image(img, {DegradationKind::gaussian, 5}, 9);
  const cv::Mat b = degrade_image(img, {DegradationKind::gaussian, 5}, 9);
  const cv::Mat c = degrade_image(img, {DegradationKind::gaussian, 5}, 10);
  EXPECT_EQ(cv::norm(a, b, cv::NORM_INF), 0.0);
  EXPECT_GT(cv::norm(a, c, cv::NORM_INF), 0.0);
}

TEST(Degrade, GaussianVarianceOnConstantGray) {
  const cv::Mat gray(256, 256, CV_8UC3, cv::Scalar(128, 128, 128));
  for (double var : {5.0, 10.0}) {
    const cv::Mat out = degrade_image(gray, {DegradationKind::gaussian, var}, 3);
    double sum = 0, sq = 0;
    const auto* p = out.ptr<uint8_t>(0);
    const size_t n = out.total() * 3;
    for (size_t i = 0; i < n; ++i) {
      const double d = p[i] - 128.0;
      sum += d;
      sq += d * d;
    }
    const double mean = sum / static_cast<double>(n);
    const double v = sq / static_cast<double>(n) - mean * mean;
    EXPECT_NEAR(v, var, 0.1 * var);
  }
}

TEST(Degrade, JpegChangesPixelsAndShrinksFile) {
  const cv::Mat img = testing_support::noise_image(64, 5);
  const cv::Mat out = degrade_image(img, {DegradationKind::jpeg, 70}, 0);
  EXPECT_GT(cv::norm(img, out, cv::NORM_L1), 0.0);
  EXPECT_LT(encode_jpeg(img, 70).size(), encode_png(img).size());
  EXPECT_THROW(degrade_image(img, {DegradationKind::jpeg, 0}, 0), std::invalid_argument);
  EXPECT_THROW(degrade_image(img, {DegradationKind::jpeg, 101}, 0), std::invalid_argument);
}

TEST(Degrade, LabelsAndParsing) {
  const auto specs = default_degradations();
  std::vector<std::string> labels;
  for (const auto& s : specs) labels.push_back(s.label());
  EXPECT_EQ(labels, (std::vector<std::string>{"Original", "JPEG 70", "JPEG 80", "Gaussian 5", "Gaussian 10"}));
  EXPECT_EQ(parse_degradation("jpeg:80"), (DegradationSpec{DegradationKind::jpeg, 80}));
  EXPECT_EQ(parse_degradation("gaussian:10").slug(), "gaussian_10");
  EXPECT_THROW(parse_degradation("jpeg:120"), ConfigError);
  EXPECT_THROW(parse_degradation("blur:3"), ConfigError);
  EXPECT_THROW(parse_degradation("jpeg:7x"), ConfigError);
}

TEST(Lexicon, CountsAndOrdering) {
  const auto p = answer_lexicon_profile({"edge edge resolution"}, LexiconTagger());
  ASSERT_EQ(p.size(), 2u);
  EXPECT_EQ(p[0].word, "edge");
  EXPECT_EQ(p[0].count, 2);
  EXPECT_EQ(p[1].word, "resolution");
  EXPECT_EQ(p[1].count, 1);
  EXPECT_TRUE(answer_lexicon_profile({}, LexiconTagger()).empty());
}

TEST(Lexicon, FixtureDescriptionsMentionCoreCues) {
  std::vector<std::string> texts;
  for (const auto& s : toy::make_toy_set(1, 64)) texts.push_back(mmtd::fixture_description(s.domain, s.authentic, s.mask));
  const auto top = answer_lexicon_profile(texts, LexiconTagger(), 20);
  for (const char* w : {"edge", "lighting", "texture"}) {
    EXPECT_TRUE(std::any_of(top.begin(), top.end(), [&](const auto& e) { return e.word == w; })) << w;
  }
}

TEST(Suite, AblationFlagsAreValidated) {
  EXPECT_THROW(parse_ablation({{"disable_dtg", true}, {"use_magic", 1}}), ConfigError);
  EXPECT_THROW(parse_ablation({{"mflm_inputs", "T_img"}}), ConfigError);
  const auto a = parse_ablation({{"mflm_inputs", "T_ins+T_tag"}, {"train_on_correct_O_det", false}});
  EXPECT_EQ(a.variant.mflm_inputs, locator::MflmInputs::ins_tag);
  EXPECT_FALSE(a.variant.locator_on_correct_odet);
  EXPECT_EQ(parse_ablation(ablation_to_json(a)).variant, a.variant);
  EXPECT_THROW(SuiteConfig::from_json({{"degradations", {"original"}}, {"ablation", nlohmann::json::array()}}), ConfigError);
  EXPECT_EQ(input_ablations().size(), 4u);
  EXPECT_EQ(dtg_ablations()[1].label(), "no_dtg");
}

TEST(Suite, PerfectPredictionsScoreOneEverywhere) {
  testing_support::TempDir dir("eval");
  const auto ds = toy_dataset(dir / "ds");
  PerfectSource src(ds);
  SuiteConfig cfg;
  cfg.workers = 3;
  const auto report = run_suite(src, ds, cfg);
  for (const auto& r : report.rows) {
    EXPECT_EQ(r.metrics.acc, 1.0) << r.group;
    EXPECT_EQ(r.metrics.f1, 1.0) << r.group;
    if (r.metrics.n_tampered > 0) {
      EXPECT_EQ(r.metrics.iou, 1.0) << r.group;
      EXPECT_EQ(r.metrics.pixel_f1, 1.0) << r.group;
    }
    EXPECT_NEAR(r.metrics.css, 1.0, 1e-9) << r.group;
  }
  for (const char* row : {"Original", "JPEG 70", "JPEG 80", "Gaussian 5", "Gaussian 10"}) {
    for (const char* g : {"all", "domain:PhotoShop", "domain:DeepFake", "domain:AIGC-Editing", "source:set-a", "source:set-b"}) {
      EXPECT_NE(report.find("full", row, g), nullptr) << row << " " << g;
    }
  }
  EXPECT_NE(report.text().find("per source dataset"), std::string::npos);
  EXPECT_NE(report.csv().find("hash-bow-512"), std::string::npos);
}

TEST(Suite, RerunsGiveIdenticalReportBytes) {
  testing_support::TempDir dir("eval");
  const auto ds = toy_dataset(dir / "ds");
  PerfectSource src(ds);
  SuiteConfig cfg;
  cfg.degradations = {parse_degradation("original"), parse_degradation("gaussian:10")};
  write_report(run_suite(src, ds, cfg), dir / "a");
  cfg.workers = 4;
  write_report(run_suite(src, ds, cfg), dir / "b");
  for (const char* f : {"report.csv", "report.txt", "lexicon.csv"}) {
    EXPECT_EQ(read_file(dir / "a" / f), read_file(dir / "b" / f)) << f;
  }
}

TEST(Suite, IngestsPredictionDirectories) {
  testing_support::TempDir dir("eval");
  const auto ds = toy_dataset(dir / "ds");
  const auto preds = dir / "preds";
  std::filesystem::create_directories(preds / "masks");
  std::string csv = "id,verdict,text\n";
  int tampered = 0;
  for (const auto& r : ds.records) {
    // Every tampered image is found; the first one gets an empty mask.
    csv += r.id + "," + (r.authentic ? "authentic" : "tampered") + ",\"Edge, \"\"quoted\"\" text\"\n";
    if (!r.authentic && tampered++ > 0) testing_support::write_png(preds / "masks" / (r.id + ".png"), read_mask(ds.mask_file(r)));
  }
  write_file_atomic(preds / "verdicts.csv", std::span(reinterpret_cast<const uint8_t*>(csv.data()), csv.size()));
  DirectorySource src(preds);
  SuiteConfig cfg;
  cfg.ablations = {AblationFlags{}, dtg_ablations()[1]};
  const auto report = run_suite(src, ds, cfg);
  const auto* all = report.find("full", "Original", "all");
  ASSERT_NE(all, nullptr);
  EXPECT_EQ(all->metrics.acc, 1.0);
  EXPECT_NEAR(all->metrics.iou, (tampered - 1.0) / tampered, 1e-12);
  EXPECT_EQ(report.find("full", "JPEG 70", "all"), nullptr);
  EXPECT_EQ(report.notes.size(), 4u + 5u);
  EXPECT_EQ(report.lexicon.front().word, "edge");
}

TEST(Suite, CsvReaderHandlesQuoting) {
  const auto rows = parse_csv("a,\"b,c\",\"d \"\"e\"\"\"\r\nx,\"multi\nline\",\n");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"a", "b,c", "d \"e\""}));
  EXPECT_EQ(rows[1], (std::vector<std::string>{"x", "multi\nline", ""}));
  EXPECT_THROW(parse_csv("\"open"), InputError);
}

TEST(Suite, EmptySplitIsAnError) {
  testing_support::TempDir dir("eval");
  mmtd::Dataset ds{dir.path(), {}};
  PerfectSource src(ds);
  EXPECT_THROW(run_suite(src, ds, SuiteConfig{}), ConfigError);
}
