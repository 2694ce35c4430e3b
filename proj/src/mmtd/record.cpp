#include "fakeshield/mmtd/record.hpp"

#include "fakeshield/errors.hpp"
#include "fakeshield/image.hpp"

#include <fstream>

namespace fakeshield::mmtd {

void to_json(nlohmann::json& j, const AnalysisRecord& r) {
  j = nlohmann::json::object();
  j["id"] = r.id;
  j["image_path"] = r.image_path;
  j["mask_path"] = r.mask_path ? nlohmann::json(*r.mask_path) : nlohmann::json(nullptr);
  j["domain"] = domain_id(r.domain);
  j["authentic"] = r.authentic;
  j["source_name"] = r.source_name;
  j["description"] = r.description;
}

void from_json(const nlohmann::json& j, AnalysisRecord& r) {
  r.id = j.at("id").get<std::string>();
  r.image_path = j.at("image_path").get<std::string>();
  const auto& m = j.at("mask_path");
  r.mask_path = m.is_null() ? std::nullopt : std::optional(m.get<std::string>());
  r.domain = parse_domain(j.at("domain").get<std::string>());
  r.authentic = j.at("authentic").get<bool>();
  r.source_name = j.value("source_name", std::string());
  r.description = j.at("description").get<StructuredDescription>();
}

std::string records_to_jsonl(const std::vector<AnalysisRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += nlohmann::json(r).dump();
    out += '\n';
  }
  return out;
}

void write_records(const std::filesystem::path& path, const std::vector<AnalysisRecord>& records) {
  const std::string text = records_to_jsonl(records);
  write_file_atomic(path, std::span(reinterpret_cast<const uint8_t*>(text.data()), text.size()));
}

std::vector<AnalysisRecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open record file " + path.string());
  std::vector<AnalysisRecord> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<AnalysisRecord>());
    } catch (const std::exception& e) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

Dataset Dataset::load(const std::filesystem::path& root, const std::string& split) {
  Dataset d;
  d.root = root;
  d.records = read_records(root / (split + ".jsonl"));
  return d;
}

std::filesystem::path Dataset::mask_file(const AnalysisRecord& r) const {
  if (!r.mask_path) throw NotFoundError("record " + r.id + " has no mask");
  return root / *r.mask_path;
}

}  // namespace fakeshield::mmtd
