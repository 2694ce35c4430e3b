#include "fakeshield/domain.hpp"

#include "fakeshield/errors.hpp"

namespace fakeshield {

std::string_view domain_id(DomainCategory d) {
  switch (d) {
    case DomainCategory::photoshop: return "photoshop";
    case DomainCategory::deepfake: return "deepfake";
    case DomainCategory::aigc: return "aigc";
  }
  throw InputError("invalid domain code");
}

DomainCategory parse_domain(std::string_view id) {
  for (auto d : kAllDomains) {
    if (domain_id(d) == id) return d;
  }
  throw InputError("unknown domain '" + std::string(id) + "'");
}

std::string_view domain_display_name(DomainCategory d) {
  switch (d) {
    case DomainCategory::photoshop: return "PhotoShop";
    case DomainCategory::deepfake: return "DeepFake";
    case DomainCategory::aigc: return "AIGC-Editing";
  }
  throw InputError("invalid domain code");
}

DomainCategory domain_from_code(int code) {
  if (code < 0 || code > 2) throw InputError("domain code out of range: " + std::to_string(code));
  return static_cast<DomainCategory>(code);
}

}  // namespace fakeshield
