#include "fakeshield/mmtd/templates.hpp"

#include "fakeshield/errors.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace fakeshield::mmtd {

namespace {

void validate(const PromptTemplate& t, const std::string& where) {
  if (t.body.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw ConfigError(where + ": empty template body");
  }
  const auto names = t.placeholders();
  auto has = [&](const char* n) { return std::find(names.begin(), names.end(), n) != names.end(); };
  if (!t.authentic && (!has("image") || !has("mask"))) {
    throw ConfigError(where + ": tampered template must reference both {{image}} and {{mask}}");
  }
  if (t.authentic && has("mask")) {
    throw ConfigError(where + ": authentic template must not reference {{mask}}");
  }
}

}  // namespace

std::vector<std::string> PromptTemplate::placeholders() const {
  std::vector<std::string> out;
  size_t pos = 0;
  while ((pos = body.find("{{", pos)) != std::string::npos) {
    const size_t end = body.find("}}", pos + 2);
    if (end == std::string::npos) break;
    out.push_back(body.substr(pos + 2, end - pos - 2));
    pos = end + 2;
  }
  return out;
}

std::string template_file_name(DomainCategory domain, bool authentic) {
  return std::string(domain_id(domain)) + (authentic ? "_authentic.txt" : "_tampered.txt");
}

TemplateSet TemplateSet::load(const std::filesystem::path& dir) {
  std::vector<PromptTemplate> all;
  for (auto d : kAllDomains) {
    for (bool authentic : {false, true}) {
      const auto path = dir / template_file_name(d, authentic);
      std::ifstream in(path, std::ios::binary);
      if (!in) throw ConfigError("missing prompt template " + path.string());
      std::ostringstream ss;
      ss << in.rdbuf();
      all.push_back({d, authentic, ss.str()});
    }
  }
  return from(std::move(all));
}

TemplateSet TemplateSet::from(std::vector<PromptTemplate> templates) {
  if (templates.size() != 6) {
    throw ConfigError("expected exactly six prompt templates, got " + std::to_string(templates.size()));
  }
  TemplateSet set;
  for (const auto& t : templates) {
    const std::string where = template_file_name(t.domain, t.authentic);
    validate(t, where);
    for (const auto& other : set.templates_) {
      if (other.domain == t.domain && other.authentic == t.authentic) {
        throw ConfigError("duplicate prompt template " + where);
      }
    }
    set.templates_.push_back(t);
  }
  return set;
}

const PromptTemplate& TemplateSet::get(DomainCategory domain, bool authentic) const {
  for (const auto& t : templates_) {
    if (t.domain == domain && t.authentic == authentic) return t;
  }
  throw ConfigError("no template for " + template_file_name(domain, authentic));
}

std::string render_prompt(const PromptTemplate& t, const ManifestEntry& entry) {
  if (t.domain != entry.domain || t.authentic != entry.authentic) {
    throw std::invalid_argument("template " + template_file_name(t.domain, t.authentic) +
                                " does not match entry " + entry.id);
  }
  auto value = [&](const std::string& name) -> std::string {
    if (name == "image") return entry.image_path.filename().string();
    if (name == "mask") {
      if (!entry.mask_path) throw TemplateError(name, "no value for placeholder {{mask}}");
      return entry.mask_path->filename().string();
    }
    if (name == "domain") return std::string(domain_display_name(entry.domain));
    if (name == "source") return entry.source_name;
    throw TemplateError(name, "no value for placeholder {{" + name + "}}");
  };
  std::string out;
  size_t pos = 0;
  while (true) {
    const size_t open = t.body.find("{{", pos);
    const size_t close = open == std::string::npos ? open : t.body.find("}}", open + 2);
    if (close == std::string::npos) {
      out.append(t.body, pos);
      break;
    }
    out.append(t.body, pos, open - pos);
    out += value(t.body.substr(open + 2, close - open - 2));
    pos = close + 2;
  }
  return out;
}

}  // namespace fakeshield::mmtd
