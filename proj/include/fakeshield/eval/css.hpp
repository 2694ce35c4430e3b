#pragma once

// Cosine semantic similarity between explanation texts under a pluggable
// sentence embedder.

#include <Eigen/Core>

#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace fakeshield::eval {

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::string id() const = 0;
  virtual Eigen::VectorXd embed(std::string_view text) const = 0;
};

// Deterministic bag of hashed lowercase words and word bigrams.
class HashEmbedder final : public Embedder {
 public:
  explicit HashEmbedder(int dim = 512) : dim_(dim) {}
  std::string id() const override;
  Eigen::VectorXd embed(std::string_view text) const override;

 private:
  int dim_;
};

struct LiveEmbedderConfig {
  std::string endpoint;  // base URL of an OpenAI-style /v1/embeddings service
  std::string model;
  std::string credential_env = "FAKESHIELD_API_KEY";
  int timeout_seconds = 30;
};

// Throws UnavailableError on transport or service failures.
std::unique_ptr<Embedder> make_live_embedder(const LiveEmbedderConfig& config);

// 0 when either vector is zero.
double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

struct ExplanationEval {
  double mean_css = 0.0;
  std::string embedder_id;
  std::vector<double> per_pair;
  int flagged_empty = 0;  // empty predictions, scored 0
};

// Throws std::invalid_argument when the lists differ in length.
ExplanationEval eval_css(const std::vector<std::string>& preds, const std::vector<std::string>& gts,
                         const Embedder& embedder);

}  // namespace fakeshield::eval
