#pragma once

#include "fakeshield/domain.hpp"
#include "fakeshield/mmtd/description.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace fakeshield::mmtd {

// One image-mask-description triplet. Paths are relative to the dataset root.
struct AnalysisRecord {
  std::string id;
  std::string image_path;
  std::optional<std::string> mask_path;
  DomainCategory domain = DomainCategory::photoshop;
  bool authentic = false;
  std::string source_name;
  StructuredDescription description;

  bool operator==(const AnalysisRecord&) const = default;
};

void to_json(nlohmann::json& j, const AnalysisRecord& r);
void from_json(const nlohmann::json& j, AnalysisRecord& r);

// JSON Lines I/O. write_records is byte-stable for identical input.
std::string records_to_jsonl(const std::vector<AnalysisRecord>& records);
void write_records(const std::filesystem::path& path, const std::vector<AnalysisRecord>& records);
std::vector<AnalysisRecord> read_records(const std::filesystem::path& path);

// A split loaded from a built dataset directory ("<root>/<split>.jsonl").
struct Dataset {
  std::filesystem::path root;
  std::vector<AnalysisRecord> records;

  static Dataset load(const std::filesystem::path& root, const std::string& split);
  std::filesystem::path image_file(const AnalysisRecord& r) const { return root / r.image_path; }
  std::filesystem::path mask_file(const AnalysisRecord& r) const;
};

}  // namespace fakeshield::mmtd
