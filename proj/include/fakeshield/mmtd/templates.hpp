#pragma once

#include "fakeshield/domain.hpp"
#include "fakeshield/mmtd/manifest.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace fakeshield::mmtd {

class TemplateError : public std::runtime_error {
 public:
  TemplateError(std::string placeholder, const std::string& what)
      : std::runtime_error(what), placeholder_(std::move(placeholder)) {}
  const std::string& placeholder() const { return placeholder_; }

 private:
  std::string placeholder_;
};

// Body text uses {{name}} placeholders. Recognised names: image, mask,
// domain, source.
struct PromptTemplate {
  DomainCategory domain = DomainCategory::photoshop;
  bool authentic = false;
  std::string body;

  std::vector<std::string> placeholders() const;
};

// The six templates, one per (domain, authentic) pair.
class TemplateSet {
 public:
  // Loads "<domain>_tampered.txt" and "<domain>_authentic.txt" for every
  // domain. Throws ConfigError when a file is missing or empty, or when a
  // tampered template lacks the image or mask placeholder.
  static TemplateSet load(const std::filesystem::path& dir);
  static TemplateSet from(std::vector<PromptTemplate> templates);

  const PromptTemplate& get(DomainCategory domain, bool authentic) const;
  const std::vector<PromptTemplate>& all() const { return templates_; }

 private:
  std::vector<PromptTemplate> templates_;
};

std::string template_file_name(DomainCategory domain, bool authentic);

// Fills the placeholders from the entry. The image and mask placeholders
// become attachment file names. Throws TemplateError naming the first
// placeholder with no value, and std::invalid_argument when template and
// entry disagree on domain or authenticity.
std::string render_prompt(const PromptTemplate& t, const ManifestEntry& entry);

}  // namespace fakeshield::mmtd
