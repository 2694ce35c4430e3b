#pragma once

// Synthetic corpora for smoke runs, tests and the acceptance gate. Each
// domain has its own visual style so a small classifier can separate them.

#include "fakeshield/domain.hpp"

#include <opencv2/core.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace fakeshield::toy {

struct ToySample {
  std::string name;
  cv::Mat rgb;
  cv::Mat mask;  // empty for authentic samples
  DomainCategory domain = DomainCategory::photoshop;
  bool authentic = false;
  std::string source_name = "toy";
};

ToySample make_sample(DomainCategory domain, bool authentic, uint64_t seed, int size = 128);

// Two tampered images per domain plus one authentic photoshop and one
// authentic aigc image: eight in total.
std::vector<ToySample> make_toy_set(uint64_t seed = 1, int size = 128);

// Eight tampered images cycling through the domains (3/3/2), for the
// localisation overfit runs.
std::vector<ToySample> make_tampered_set(uint64_t seed = 1, int size = 128);

// `per_domain` images per domain, alternating tampered/authentic.
std::vector<ToySample> make_domain_set(int per_domain, uint64_t seed, int size = 128);

// Tampered images holding two identical patches in different quadrants;
// only the mask (and so the description) tells which one was edited.
std::vector<ToySample> make_decoy_set(int count, uint64_t seed, int size = 128);

// Writes <name>.png (+ <name>_mask.png) and manifest.json into `dir`.
// Returns the manifest path.
std::filesystem::path write_corpus(const std::vector<ToySample>& samples, const std::filesystem::path& dir);

}  // namespace fakeshield::toy
