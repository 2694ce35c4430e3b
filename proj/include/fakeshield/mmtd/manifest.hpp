#pragma once

#include "fakeshield/domain.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace fakeshield::mmtd {

struct ManifestEntry {
  std::string id;  // optional in the file; derived from source + file stem when absent
  std::filesystem::path image_path;
  std::optional<std::filesystem::path> mask_path;
  DomainCategory domain = DomainCategory::photoshop;
  bool authentic = false;
  std::string source_name;
  std::string provenance;  // free text, e.g. how a generative edit was produced
};

struct SourceManifest {
  std::vector<ManifestEntry> entries;
};

// Reads {"entries": [...]}. Relative paths resolve against the manifest's
// directory. Throws ConfigError when an entry breaks the mask pairing rule
// (tampered entries need a mask, authentic entries must not have one).
SourceManifest load_manifest(const std::filesystem::path& path);

// Fills in missing ids and throws ConfigError on duplicates.
void assign_ids(SourceManifest& manifest);

}  // namespace fakeshield::mmtd
