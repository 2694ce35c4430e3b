#pragma once

#include <array>
#include <string>
#include <string_view>

namespace fakeshield {

// Tamper domain. The integer codes are the class indices used by the
// domain classifier's cross-entropy.
enum class DomainCategory : int { photoshop = 0, deepfake = 1, aigc = 2 };

inline constexpr std::array<DomainCategory, 3> kAllDomains{
    DomainCategory::photoshop, DomainCategory::deepfake, DomainCategory::aigc};

// Lower-case identifier used in manifests, records and file names.
std::string_view domain_id(DomainCategory d);
// Throws InputError for anything outside {photoshop, deepfake, aigc}.
DomainCategory parse_domain(std::string_view id);
// Human spelling substituted into the domain tag sentence.
std::string_view domain_display_name(DomainCategory d);

inline int domain_code(DomainCategory d) { return static_cast<int>(d); }
DomainCategory domain_from_code(int code);

}  // namespace fakeshield
