#include "fakeshield/mmtd/manifest.hpp"

#include "fakeshield/errors.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <set>

namespace fakeshield::mmtd {

namespace {

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_';
    out += ok ? c : '_';
  }
  return out;
}

}  // namespace

SourceManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    std::filesystem::path fp(p);
    return fp.is_absolute() ? fp : base / fp;
  };

  SourceManifest m;
  size_t index = 0;
  for (const auto& e : j.at("entries")) {
    ManifestEntry entry;
    entry.id = e.value("id", std::string());
    entry.image_path = resolve(e.at("image_path").get<std::string>());
    if (e.contains("mask_path") && !e.at("mask_path").is_null()) {
      entry.mask_path = resolve(e.at("mask_path").get<std::string>());
    }
    entry.domain = parse_domain(e.at("domain").get<std::string>());
    entry.authentic = e.at("authentic").get<bool>();
    entry.source_name = e.at("source_name").get<std::string>();
    entry.provenance = e.value("provenance", std::string());
    const std::string where = "manifest entry " + std::to_string(index);
    if (!entry.authentic && !entry.mask_path) throw ConfigError(where + ": tampered entry without mask_path");
    if (entry.authentic && entry.mask_path) throw ConfigError(where + ": authentic entry with mask_path");
    if (entry.source_name.empty()) throw ConfigError(where + ": empty source_name");
    m.entries.push_back(std::move(entry));
    ++index;
  }
  return m;
}

void assign_ids(SourceManifest& manifest) {
  std::set<std::string> seen;
  for (auto& e : manifest.entries) {
    if (e.id.empty()) e.id = sanitize(e.source_name + "_" + e.image_path.stem().string());
    if (!seen.insert(e.id).second) throw ConfigError("duplicate record id: " + e.id);
  }
}

}  // namespace fakeshield::mmtd
