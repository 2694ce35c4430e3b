#include "fakeshield/toy.hpp"

#include "fakeshield/image.hpp"
#include "fakeshield/nn/rng.hpp"

#include <nlohmann/json.hpp>
#include <opencv2/imgproc.hpp>

#include <fmt/core.h>

#include <fstream>

namespace fakeshield::toy {

namespace {

int uniform_int(nn::Rng& rng, int lo, int hi) { return lo + static_cast<int>(rng.below(static_cast<size_t>(hi - lo + 1))); }

cv::Vec3b jitter(nn::Rng& rng, cv::Vec3b base, int spread) {
  cv::Vec3b out;
  for (int c = 0; c < 3; ++c) out[c] = cv::saturate_cast<uint8_t>(base[c] + uniform_int(rng, -spread, spread));
  return out;
}

// Blocky, high-frequency texture in muted greys and browns.
cv::Mat photoshop_background(nn::Rng& rng, int size) {
  cv::Mat img(size, size, CV_8UC3);
  const int cell = 8;
  for (int y = 0; y < size; y += cell) {
    for (int x = 0; x < size; x += cell) {
      const auto c = jitter(rng, cv::Vec3b(120, 110, 95), 40);
      img(cv::Rect(x, y, std::min(cell, size - x), std::min(cell, size - y))).setTo(cv::Scalar(c[0], c[1], c[2]));
    }
  }
  return img;
}

// Dark backdrop with a skin-toned ellipse.
cv::Mat deepfake_background(nn::Rng& rng, int size, cv::RotatedRect& face) {
  cv::Mat img(size, size, CV_8UC3, cv::Scalar(30 + uniform_int(rng, 0, 20), 35, 50));
  const cv::Point2f centre(static_cast<float>(size * (0.35 + 0.3 * rng.uniform())),
                           static_cast<float>(size * (0.35 + 0.3 * rng.uniform())));
  face = cv::RotatedRect(centre, cv::Size2f(size * 0.42f, size * 0.55f), 0.f);
  cv::ellipse(img, face, cv::Scalar(225, 180, 150), cv::FILLED);
  return img;
}

// Smooth bluish gradient.
cv::Mat aigc_background(nn::Rng& rng, int size) {
  cv::Mat img(size, size, CV_8UC3);
  const double phase = rng.uniform() * 3.0;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double t = std::sin(phase + (x + 0.5 * y) * 3.0 / size);
      img.at<cv::Vec3b>(y, x) = cv::Vec3b(cv::saturate_cast<uint8_t>(70 + 40 * t),
                                          cv::saturate_cast<uint8_t>(120 + 30 * t), 210);
    }
  }
  return img;
}

cv::Rect random_square(nn::Rng& rng, int size) {
  const int side = uniform_int(rng, size * 5 / 16, size * 7 / 16);
  return {uniform_int(rng, 0, size - side), uniform_int(rng, 0, size - side), side, side};
}

void noisy_fill(cv::Mat& region, nn::Rng& rng, cv::Vec3b base, int spread) {
  for (int y = 0; y < region.rows; ++y) {
    for (int x = 0; x < region.cols; ++x) region.at<cv::Vec3b>(y, x) = jitter(rng, base, spread);
  }
}

}  // namespace

ToySample make_sample(DomainCategory domain, bool authentic, uint64_t seed, int size) {
  nn::Rng rng(seed * 7919 + static_cast<uint64_t>(domain_code(domain)) * 104729 + (authentic ? 1 : 0));
  ToySample s;
  s.domain = domain;
  s.authentic = authentic;
  s.name = fmt::format("{}_{}_{}", domain_id(domain), authentic ? "authentic" : "tampered", seed);
  if (!authentic) s.mask = cv::Mat::zeros(size, size, CV_8UC1);
  switch (domain) {
    case DomainCategory::photoshop: {
      s.rgb = photoshop_background(rng, size);
      if (!authentic) {
        // Spliced patch: bright, finely textured, foreign palette.
        const cv::Rect r = random_square(rng, size);
        cv::Mat patch = s.rgb(r);
        noisy_fill(patch, rng, cv::Vec3b(230, 60, 40), 25);
        s.mask(r).setTo(255);
      }
      break;
    }
    case DomainCategory::deepfake: {
      cv::RotatedRect face;
      s.rgb = deepfake_background(rng, size, face);
      if (!authentic) {
        // Swapped face: different tone inside the ellipse.
        cv::ellipse(s.rgb, face, cv::Scalar(150, 210, 120), cv::FILLED);
        cv::ellipse(s.mask, face, cv::Scalar(255), cv::FILLED);
      }
      break;
    }
    case DomainCategory::aigc: {
      s.rgb = aigc_background(rng, size);
      if (!authentic) {
        // Inpainted area: flat warm fill.
        const cv::Rect r = random_square(rng, size);
        s.rgb(r).setTo(cv::Scalar(240, 220, 90));
        s.mask(r).setTo(255);
      }
      break;
    }
  }
  return s;
}

std::vector<ToySample> make_toy_set(uint64_t seed, int size) {
  std::vector<ToySample> out;
  for (auto d : kAllDomains) {
    for (uint64_t k = 0; k < 2; ++k) out.push_back(make_sample(d, false, seed * 100 + k, size));
  }
  out.push_back(make_sample(DomainCategory::photoshop, true, seed * 100 + 50, size));
  out.push_back(make_sample(DomainCategory::aigc, true, seed * 100 + 51, size));
  return out;
}

std::vector<ToySample> make_tampered_set(uint64_t seed, int size) {
  std::vector<ToySample> out;
  for (int k = 0; k < 8; ++k) {
    out.push_back(make_sample(kAllDomains[static_cast<size_t>(k % 3)], false, seed * 100 + 60 + static_cast<uint64_t>(k), size));
  }
  return out;
}

std::vector<ToySample> make_domain_set(int per_domain, uint64_t seed, int size) {
  std::vector<ToySample> out;
  for (auto d : kAllDomains) {
    for (int k = 0; k < per_domain; ++k) out.push_back(make_sample(d, k % 2 == 1, seed * 1000 + static_cast<uint64_t>(k), size));
  }
  return out;
}

std::vector<ToySample> make_decoy_set(int count, uint64_t seed, int size) {
  std::vector<ToySample> out;
  const int half = size / 2;
  const int side = size * 3 / 8;
  const int inset = (half - side) / 2;
  for (int i = 0; i < count; ++i) {
    nn::Rng rng(seed * 31337 + static_cast<uint64_t>(i));
    ToySample s;
    s.domain = DomainCategory::photoshop;
    s.name = fmt::format("decoy_{}_{}", seed, i);
    s.source_name = "decoy";
    s.rgb = photoshop_background(rng, size);
    s.mask = cv::Mat::zeros(size, size, CV_8UC1);
    const int a = static_cast<int>(rng.below(4));
    int b = static_cast<int>(rng.below(3));
    if (b >= a) ++b;
    cv::Mat texture(side, side, CV_8UC3);
    noisy_fill(texture, rng, cv::Vec3b(230, 60, 40), 25);
    for (int q : {a, b}) {
      const cv::Rect r((q % 2) * half + inset, (q / 2) * half + inset, side, side);
      texture.copyTo(s.rgb(r));
      if (q == a) s.mask(r).setTo(255);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::filesystem::path write_corpus(const std::vector<ToySample>& samples, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& s : samples) {
    write_file_atomic(dir / (s.name + ".png"), encode_png(s.rgb));
    nlohmann::json e = {{"id", s.name},
                        {"image_path", s.name + ".png"},
                        {"domain", domain_id(s.domain)},
                        {"authentic", s.authentic},
                        {"source_name", s.source_name},
                        {"provenance", "synthetic toy generator"}};
    if (!s.mask.empty()) {
      write_file_atomic(dir / (s.name + "_mask.png"), encode_png(s.mask));
      e["mask_path"] = s.name + "_mask.png";
    } else {
      e["mask_path"] = nullptr;
    }
    entries.push_back(e);
  }
  const auto path = dir / "manifest.json";
  std::ofstream(path) << nlohmann::json{{"entries", entries}}.dump(2) << '\n';
  return path;
}

}  // namespace fakeshield::toy
