#pragma once

#include "fakeshield/mmtd/client.hpp"
#include "fakeshield/mmtd/manifest.hpp"
#include "fakeshield/mmtd/record.hpp"
#include "fakeshield/mmtd/templates.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace fakeshield::mmtd {

struct GenerationOptions {
  int retry_limit = 3;          // retries after the first attempt
  double retry_backoff_s = 0.0; // doubled after each failed attempt
};

struct GenerationResult {
  std::optional<StructuredDescription> description;
  std::string raw;     // last response text, empty when none arrived
  std::string error;   // set when description is empty
  int attempts = 0;
};

// Calls the client, retrying transient failures, then parses the response.
// Never throws for service or parse failures; they land in `error`.
GenerationResult generate_description(const DescriptionRequest& request,
                                      DescriptionServiceClient& client,
                                      const GenerationOptions& options);

// Entries whose source_name is listed go to eval; the rest go to train.
struct SplitSpec {
  std::set<std::string> eval_sources;
};

struct BuildOptions {
  int workers = 4;
  GenerationOptions generation;
};

struct Reject {
  std::string id;
  std::string image_path;
  std::string reason;
  int attempts = 0;
};

struct DomainCounts {
  size_t tampered = 0;
  size_t authentic = 0;
};

// Per split, per domain counts plus tampered/authentic ratios.
struct BuildReport {
  std::map<std::string, std::map<std::string, DomainCounts>> counts;  // split -> domain -> counts
  size_t rejects = 0;

  nlohmann::json to_json() const;
};

// Ratio of tampered to authentic records; null JSON when there are no
// authentic records.
std::optional<double> balance_ratio(const DomainCounts& c);
std::map<std::string, DomainCounts> count_by_domain(const std::vector<AnalysisRecord>& records);

struct BuildResult {
  std::vector<AnalysisRecord> train;
  std::vector<AnalysisRecord> eval;
  std::vector<Reject> rejects;
  std::map<std::string, std::string> raw_responses;  // id -> raw text
  BuildReport report;
  // id -> source files, copied under the output root by write_dataset.
  std::map<std::string, std::pair<std::filesystem::path, std::optional<std::filesystem::path>>> sources;
};

// Throws ConfigError on an empty manifest, duplicate ids, or an image that
// would land in both splits. Record-level problems become rejects.
BuildResult build_dataset(SourceManifest manifest, const TemplateSet& templates,
                          DescriptionServiceClient& client, const SplitSpec& split,
                          const BuildOptions& options);

// Writes train.jsonl, eval.jsonl, rejects.jsonl, report.json, raw/<id>.txt,
// images/ and masks/ under `out`.
void write_dataset(const BuildResult& result, const std::filesystem::path& out);

}  // namespace fakeshield::mmtd
