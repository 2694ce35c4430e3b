#include "fakeshield/mmtd/builder.hpp"

#include "fakeshield/errors.hpp"
#include "fakeshield/image.hpp"

#include <fmt/core.h>

#include <atomic>
#include <chrono>
#include <thread>

namespace fakeshield::mmtd {

GenerationResult generate_description(const DescriptionRequest& request,
                                      DescriptionServiceClient& client,
                                      const GenerationOptions& options) {
  GenerationResult result;
  double backoff = options.retry_backoff_s;
  for (int attempt = 0; attempt <= options.retry_limit; ++attempt) {
    ++result.attempts;
    try {
      result.raw = client.describe(request);
    } catch (const ServiceError& e) {
      result.error = e.what();
      if (!e.transient()) return result;
      if (attempt < options.retry_limit && backoff > 0) {
        std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
        backoff *= 2;
      }
      continue;
    }
    try {
      result.description = parse_description(result.raw);
      result.error.clear();
    } catch (const ParseError& e) {
      result.error = std::string("unparseable response: ") + e.what();
    }
    return result;
  }
  result.error = "gave up after " + std::to_string(result.attempts) + " attempts: " + result.error;
  return result;
}

std::optional<double> balance_ratio(const DomainCounts& c) {
  if (c.authentic == 0) return std::nullopt;
  return static_cast<double>(c.tampered) / static_cast<double>(c.authentic);
}

std::map<std::string, DomainCounts> count_by_domain(const std::vector<AnalysisRecord>& records) {
  std::map<std::string, DomainCounts> out;
  for (auto d : kAllDomains) out[std::string(domain_id(d))];
  for (const auto& r : records) {
    auto& c = out[std::string(domain_id(r.domain))];
    (r.authentic ? c.authentic : c.tampered) += 1;
  }
  return out;
}

nlohmann::json BuildReport::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [split, domains] : counts) {
    DomainCounts total;
    for (const auto& [domain, c] : domains) {
      const auto ratio = balance_ratio(c);
      j[split][domain] = {{"tampered", c.tampered},
                          {"authentic", c.authentic},
                          {"balance", ratio ? nlohmann::json(*ratio) : nlohmann::json(nullptr)}};
      total.tampered += c.tampered;
      total.authentic += c.authentic;
    }
    const auto ratio = balance_ratio(total);
    j[split]["all"] = {{"tampered", total.tampered},
                       {"authentic", total.authentic},
                       {"balance", ratio ? nlohmann::json(*ratio) : nlohmann::json(nullptr)}};
  }
  j["rejects"] = rejects;
  return j;
}

namespace {

// Cheap structural checks before any service call.
std::string check_files(const ManifestEntry& e) {
  cv::Mat image;
  try {
    image = read_image(e.image_path);
  } catch (const std::exception& ex) {
    return std::string("unreadable image: ") + ex.what();
  }
  if (e.mask_path) {
    cv::Mat mask;
    try {
      mask = read_mask(*e.mask_path);
    } catch (const std::exception& ex) {
      return std::string("unreadable mask: ") + ex.what();
    }
    if (mask.rows != image.rows || mask.cols != image.cols) {
      return fmt::format("mask is {}x{} but image is {}x{}", mask.cols, mask.rows, image.cols, image.rows);
    }
  }
  return {};
}

struct Outcome {
  std::optional<AnalysisRecord> record;
  std::optional<Reject> reject;
  std::string raw;
};

Outcome process(const ManifestEntry& e, const TemplateSet& templates, DescriptionServiceClient& client,
                const GenerationOptions& options) {
  Outcome out;
  auto reject = [&](std::string reason, int attempts) {
    out.reject = Reject{e.id, e.image_path.string(), std::move(reason), attempts};
    return out;
  };
  if (auto problem = check_files(e); !problem.empty()) return reject(problem, 0);

  DescriptionRequest request;
  try {
    request.prompt = render_prompt(templates.get(e.domain, e.authentic), e);
  } catch (const TemplateError& ex) {
    return reject(ex.what(), 0);
  }
  request.image_path = e.image_path;
  request.mask_path = e.mask_path;
  request.domain = e.domain;
  request.authentic = e.authentic;

  auto gen = generate_description(request, client, options);
  out.raw = gen.raw;
  if (!gen.description) return reject(gen.error, gen.attempts);
  if (auto why = validate_description(*gen.description, e.authentic); !why.empty()) {
    return reject(why, gen.attempts);
  }

  AnalysisRecord r;
  r.id = e.id;
  r.image_path = "images/" + e.id + e.image_path.extension().string();
  if (e.mask_path) r.mask_path = "masks/" + e.id + ".png";
  r.domain = e.domain;
  r.authentic = e.authentic;
  r.source_name = e.source_name;
  r.description = *gen.description;
  out.record = std::move(r);
  return out;
}

}  // namespace

BuildResult build_dataset(SourceManifest manifest, const TemplateSet& templates,
                          DescriptionServiceClient& client, const SplitSpec& split,
                          const BuildOptions& options) {
  if (manifest.entries.empty()) throw ConfigError("manifest has no entries");
  assign_ids(manifest);

  std::map<std::filesystem::path, std::string> image_split;
  for (const auto& e : manifest.entries) {
    const std::string s = split.eval_sources.count(e.source_name) ? "eval" : "train";
    const auto key = std::filesystem::weakly_canonical(e.image_path);
    auto [it, inserted] = image_split.emplace(key, s);
    if (!inserted && it->second != s) {
      throw ConfigError("image " + e.image_path.string() + " would appear in both splits");
    }
  }

  const size_t n = manifest.entries.size();
  std::vector<Outcome> outcomes(n);
  std::atomic<size_t> next{0};
  auto work = [&] {
    for (size_t i = next++; i < n; i = next++) {
      try {
        outcomes[i] = process(manifest.entries[i], templates, client, options.generation);
      } catch (const std::exception& ex) {
        outcomes[i].reject = Reject{manifest.entries[i].id, manifest.entries[i].image_path.string(), ex.what(), 0};
      }
    }
  };
  const size_t width = std::clamp<size_t>(static_cast<size_t>(std::max(options.workers, 1)), 1, n);
  std::vector<std::thread> pool;
  for (size_t w = 1; w < width; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();

  BuildResult result;
  for (size_t i = 0; i < n; ++i) {
    const auto& e = manifest.entries[i];
    auto& o = outcomes[i];
    if (!o.raw.empty()) result.raw_responses[e.id] = o.raw;
    if (o.reject) {
      result.rejects.push_back(*o.reject);
      continue;
    }
    result.sources[e.id] = {e.image_path, e.mask_path};
    (split.eval_sources.count(e.source_name) ? result.eval : result.train).push_back(std::move(*o.record));
  }
  result.report.counts["train"] = count_by_domain(result.train);
  result.report.counts["eval"] = count_by_domain(result.eval);
  result.report.rejects = result.rejects.size();
  return result;
}

void write_dataset(const BuildResult& result, const std::filesystem::path& out) {
  namespace fs = std::filesystem;
  fs::create_directories(out / "images");
  fs::create_directories(out / "masks");
  fs::create_directories(out / "raw");
  auto put_text = [](const fs::path& p, const std::string& text) {
    write_file_atomic(p, std::span(reinterpret_cast<const uint8_t*>(text.data()), text.size()));
  };
  for (const auto* split : {&result.train, &result.eval}) {
    for (const auto& r : *split) {
      const auto& [image, mask] = result.sources.at(r.id);
      write_file_atomic(out / r.image_path, read_file(image));
      // Masks are normalised to single-channel 8-bit 0/255.
      if (mask) {
        cv::Mat m = read_mask(*mask);
        cv::Mat bin = m > 0;
        write_file_atomic(out / *r.mask_path, encode_png(bin));
      }
    }
  }
  write_records(out / "train.jsonl", result.train);
  write_records(out / "eval.jsonl", result.eval);
  std::string rejects;
  for (const auto& r : result.rejects) {
    rejects += nlohmann::json{{"id", r.id}, {"image_path", r.image_path}, {"reason", r.reason},
                              {"attempts", r.attempts}}
                   .dump();
    rejects += '\n';
  }
  put_text(out / "rejects.jsonl", rejects);
  put_text(out / "report.json", result.report.to_json().dump(2) + "\n");
  for (const auto& [id, raw] : result.raw_responses) put_text(out / "raw" / (id + ".txt"), raw);
}

}  // namespace fakeshield::mmtd
