#pragma once

// Evaluation runs: every (ablation, degradation) pair is scored overall,
// per domain and per source dataset, and written as CSV plus text tables.

#include "fakeshield/eval/css.hpp"
#include "fakeshield/eval/degrade.hpp"
#include "fakeshield/eval/lexicon.hpp"
#include "fakeshield/eval/metrics.hpp"
#include "fakeshield/mmtd/record.hpp"
#include "fakeshield/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace fakeshield::eval {

struct AblationFlags {
  std::string name;  // row label; derived from the flags when empty
  PipelineVariant variant;

  std::string label() const;
  bool operator==(const AblationFlags&) const = default;
};

// Accepts the keys name, disable_dtg, mflm_inputs, train_on_correct_O_det;
// anything else is a ConfigError.
AblationFlags parse_ablation(const nlohmann::json& j);
nlohmann::json ablation_to_json(const AblationFlags& a);

// The flag matrices behind the with/without-tag, correct-vs-generated
// description and input-combination comparisons.
std::vector<AblationFlags> dtg_ablations();
std::vector<AblationFlags> odet_source_ablations();
std::vector<AblationFlags> input_ablations();

struct SuiteConfig {
  std::string split = "eval";
  std::vector<DegradationSpec> degradations = default_degradations();
  std::vector<AblationFlags> ablations{AblationFlags{}};
  std::string embedder = "hash";  // "hash" or "live"
  int hash_dim = 512;
  LiveEmbedderConfig live;
  uint64_t seed = 7;
  int workers = 1;
  size_t lexicon_top = 20;

  // Unknown keys are a ConfigError.
  static SuiteConfig from_json(const nlohmann::json& j);
  static SuiteConfig load(const std::filesystem::path& path);
  std::unique_ptr<Embedder> make_embedder() const;
};

struct Prediction {
  mmtd::Verdict verdict = mmtd::Verdict::authentic;
  std::optional<nn::Matrix> mask;  // probabilities [H, W]; absent means empty
  std::string text;
};

class PredictionSource {
 public:
  virtual ~PredictionSource() = default;
  virtual std::string id() const = 0;
  // False when the source holds nothing for this combination; the row is
  // then skipped and listed in the report notes.
  virtual bool available(const AblationFlags& ablation, const DegradationSpec& spec) const = 0;
  virtual bool needs_image() const { return true; }
  // Called once per ablation before any predict() for it.
  virtual void prepare(const AblationFlags& ablation) { (void)ablation; }
  // Must be safe to call concurrently after prepare().
  virtual Prediction predict(const AblationFlags& ablation, const DegradationSpec& spec,
                             const mmtd::AnalysisRecord& record, const cv::Mat& image) const = 0;
};

// Runs the model pipeline from a models directory, one variant per ablation.
class PipelineSource final : public PredictionSource {
 public:
  explicit PipelineSource(std::filesystem::path models_dir) : dir_(std::move(models_dir)) {}
  std::string id() const override { return "pipeline:" + dir_.string(); }
  bool available(const AblationFlags&, const DegradationSpec&) const override { return true; }
  void prepare(const AblationFlags& ablation) override;
  Prediction predict(const AblationFlags& ablation, const DegradationSpec& spec, const mmtd::AnalysisRecord& record,
                     const cv::Mat& image) const override;

 private:
  std::filesystem::path dir_;
  std::map<std::string, PipelineModels> loaded_;
};

// External predictions: <dir>/verdicts.csv (id,verdict[,text]) and
// <dir>/masks/<id>.png for the original images; degraded rows read the same
// layout from <dir>/<slug>/. Only the default ablation is available.
class DirectorySource final : public PredictionSource {
 public:
  explicit DirectorySource(std::filesystem::path dir) : dir_(std::move(dir)) {}
  std::string id() const override { return "predictions:" + dir_.string(); }
  bool available(const AblationFlags& ablation, const DegradationSpec& spec) const override;
  bool needs_image() const override { return false; }
  void prepare(const AblationFlags& ablation) override;
  Prediction predict(const AblationFlags& ablation, const DegradationSpec& spec, const mmtd::AnalysisRecord& record,
                     const cv::Mat& image) const override;

 private:
  struct Entry {
    mmtd::Verdict verdict;
    std::string text;
  };
  std::filesystem::path root_for(const DegradationSpec& spec) const;
  const std::map<std::string, Entry>& verdicts(const DegradationSpec& spec) const;

  std::filesystem::path dir_;
  mutable std::mutex mu_;
  mutable std::map<std::string, std::map<std::string, Entry>> cache_;
};

// Minimal RFC 4180 reader (quoted fields, doubled quotes, embedded newlines).
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

struct GroupMetrics {
  int n = 0;
  int n_tampered = 0;
  double acc = 0.0;           // all images
  double acc_tampered = 0.0;  // tampered images only
  double f1 = 0.0;
  double iou = 0.0;       // tampered images only
  double pixel_f1 = 0.0;  // tampered images only
  double css = 0.0;
  int css_empty = 0;
};

struct ReportRow {
  std::string ablation;
  std::string degradation;  // DegradationSpec::label()
  std::string group;        // "all", "domain:<name>", "source:<name>"
  GroupMetrics metrics;
};

struct SuiteReport {
  std::string source_id;
  std::string embedder_id;
  std::vector<ReportRow> rows;
  std::vector<std::string> notes;
  std::vector<LexiconEntry> lexicon;  // predicted texts, first ablation, original images

  const ReportRow* find(std::string_view ablation, std::string_view degradation, std::string_view group) const;
  std::string csv() const;
  std::string text() const;
};

// Throws ConfigError for an empty split.
SuiteReport run_suite(PredictionSource& source, const mmtd::Dataset& dataset, const SuiteConfig& config);

// report.csv, report.txt and lexicon.csv, each written atomically.
void write_report(const SuiteReport& report, const std::filesystem::path& out_dir);

}  // namespace fakeshield::eval
