#include "fakeshield/dtg.hpp"

#include "fakeshield/errors.hpp"
#include "fakeshield/image.hpp"
#include "fakeshield/log.hpp"
#include "fakeshield/nn/checkpoint.hpp"
#include "fakeshield/nn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace fakeshield {

std::string render_domain_tag(DomainCategory category) {
  return "This is a suspected " + std::string(domain_display_name(category)) + "-tampered picture.";
}

DomainTag make_domain_tag(DomainCategory category) { return {category, render_domain_tag(category)}; }

DomainPrediction prediction_from_logits(const nn::RowVector& logits) {
  if (logits.size() != 3) throw std::invalid_argument("domain logits must have length 3");
  const double m = logits.maxCoeff();
  std::array<double, 3> e{};
  double z = 0.0;
  for (int i = 0; i < 3; ++i) z += e[i] = std::exp(logits(i) - m);
  DomainPrediction p;
  int best = 0;
  for (int i = 0; i < 3; ++i) {
    p.probs[i] = e[i] / z;
    if (logits(i) > logits(best)) best = i;
  }
  p.category = domain_from_code(best);
  return p;
}

ConvDomainBackbone::ConvDomainBackbone(const ConvDomainConfig& config) : config_(config) {
  if (config.channels.empty()) throw ConfigError("domain classifier needs at least one conv block");
  if (config.input_size >> config.channels.size() < 1) {
    throw ConfigError("input_size too small for the number of pooling blocks");
  }
  nn::Rng rng(config.seed);
  int in = 3;
  for (int c : config.channels) {
    convs_.emplace_back(in, c, 3, 1, 1, rng);
    in = c;
  }
  head_ = nn::Linear(in, 3, rng);
  nn::set_trainable(params(), true);
}

nn::Matrix ConvDomainBackbone::prepare(const cv::Mat& rgb) const {
  return image_to_planar(rgb, config_.input_size);
}

nn::Var ConvDomainBackbone::forward(const nn::Matrix& planar) const {
  nn::FeatureMap x{nn::Var(planar), config_.input_size, config_.input_size};
  for (const auto& conv : convs_) {
    x = conv.forward(x);
    x.data = nn::max_pool2(nn::relu(x.data), x.height, x.width);
    x.height /= 2;
    x.width /= 2;
  }
  return head_.forward(nn::transpose(nn::mean_cols(x.data)));
}

nn::ParamList ConvDomainBackbone::params() const {
  nn::ParamList out;
  for (size_t i = 0; i < convs_.size(); ++i) convs_[i].collect_base("conv." + std::to_string(i), out);
  head_.collect_base("head", out);
  return out;
}

nlohmann::json ConvDomainBackbone::describe() const { return {{"kind", "conv"}, {"config", config_}}; }

namespace {

std::string version_of(const DomainBackbone& b) { return "dtg-" + nn::checksum(b.params()).substr(0, 12); }

}  // namespace

DtgModel DtgModel::create(const ConvDomainConfig& config) {
  DtgModel m;
  m.backbone = std::make_shared<ConvDomainBackbone>(config);
  m.weights_version = version_of(*m.backbone);
  return m;
}

void DtgModel::save(const std::filesystem::path& path) const {
  nn::Checkpoint ckpt;
  ckpt.meta = {{"kind", "dtg"}, {"backbone", backbone->describe()}, {"weights_version", weights_version}};
  ckpt.tensors = nn::snapshot(backbone->params());
  ckpt.save(path);
}

DtgModel DtgModel::load(const std::filesystem::path& path) {
  const auto ckpt = nn::Checkpoint::load(path);
  if (ckpt.meta.value("kind", "") != "dtg") throw ConfigError(path.string() + " is not a domain classifier checkpoint");
  const auto& desc = ckpt.meta.at("backbone");
  if (desc.value("kind", "") != "conv") throw ConfigError("unsupported domain backbone in " + path.string());
  DtgModel m = create(desc.at("config").get<ConvDomainConfig>());
  nn::load_values(m.backbone->params(), ckpt.tensors);
  m.weights_version = ckpt.meta.at("weights_version").get<std::string>();
  return m;
}

DomainPrediction classify_domain(const DtgModel& model, const cv::Mat& rgb) {
  nn::NoGradGuard guard;
  return prediction_from_logits(model.backbone->logits(rgb).value().row(0));
}

DomainPrediction classify_domain(const DtgModel& model, std::span<const uint8_t> image_bytes) {
  return classify_domain(model, decode_image(image_bytes));
}

DtgTrainReport train_dtg(DtgModel& model, const std::vector<LabeledImage>& images, const DtgTrainConfig& config) {
  if (images.empty()) throw std::invalid_argument("no training images for the domain classifier");
  DtgTrainReport report;
  std::set<DomainCategory> classes;
  for (const auto& im : images) classes.insert(im.domain);
  if (classes.size() == 1) {
    report.warnings.push_back("training set holds a single domain class");
    log_warn("domain classifier: training set holds a single domain class");
  }

  const auto& bb = *model.backbone;
  std::vector<nn::Matrix> inputs;
  inputs.reserve(images.size());
  for (const auto& im : images) inputs.push_back(bb.prepare(im.rgb));

  auto loss_of = [&](size_t i) {
    const int target[] = {domain_code(images[i].domain)};
    return nn::cross_entropy(bb.forward(inputs[i]), target);
  };
  {
    nn::NoGradGuard guard;
    double total = 0.0;
    for (size_t i = 0; i < inputs.size(); ++i) total += loss_of(i).item();
    report.initial_loss = total / static_cast<double>(inputs.size());
  }

  nn::Adam opt(bb.params(), {.lr = config.lr, .grad_clip = 5.0});
  nn::Rng rng(config.seed);
  std::vector<size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), 0);
  const size_t batch = static_cast<size_t>(std::max(config.batch_size, 1));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double total = 0.0;
    for (size_t start = 0; start < order.size(); start += batch) {
      const size_t end = std::min(order.size(), start + batch);
      opt.zero_grad();
      for (size_t k = start; k < end; ++k) {
        nn::Var loss = loss_of(order[k]);
        total += loss.item();
        loss.backward();
      }
      opt.step(static_cast<int>(end - start));
    }
    report.epoch_loss.push_back(total / static_cast<double>(order.size()));
    log_info("dtg epoch {} loss {:.5f}", epoch + 1, report.epoch_loss.back());
  }
  model.weights_version = version_of(bb);
  return report;
}

void to_json(nlohmann::json& j, const ConvDomainConfig& c) {
  j = {{"input_size", c.input_size}, {"channels", c.channels}, {"seed", c.seed}};
}
void from_json(const nlohmann::json& j, ConvDomainConfig& c) {
  c.input_size = j.value("input_size", c.input_size);
  c.channels = j.value("channels", c.channels);
  c.seed = j.value("seed", c.seed);
}
void to_json(nlohmann::json& j, const DtgTrainConfig& c) {
  j = {{"epochs", c.epochs}, {"lr", c.lr}, {"batch_size", c.batch_size}, {"seed", c.seed}};
}
void from_json(const nlohmann::json& j, DtgTrainConfig& c) {
  c.epochs = j.value("epochs", c.epochs);
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
}

}  // namespace fakeshield
