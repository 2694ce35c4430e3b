#include "fakeshield/pipeline.hpp"

#include "fakeshield/errors.hpp"

#include <algorithm>
#include <span>

namespace fakeshield {

std::string_view mflm_inputs_slug(locator::MflmInputs inputs) {
  switch (inputs) {
    case locator::MflmInputs::odet_img: return "odet_img";
    case locator::MflmInputs::ins_img: return "ins_img";
    case locator::MflmInputs::ins_tag: return "ins_tag";
    case locator::MflmInputs::ins_tag_img: return "ins_tag_img";
  }
  return "?";
}

std::string detector_checkpoint_name(bool use_dtg) { return use_dtg ? "detector.ckpt" : "detector.no_dtg.ckpt"; }

std::string locator_checkpoint_name(locator::MflmInputs inputs, bool on_correct_odet) {
  if (inputs == locator::MflmInputs::odet_img && on_correct_odet) return "locator.ckpt";
  return "locator." + std::string(mflm_inputs_slug(inputs)) + (on_correct_odet ? "" : ".det_odet") + ".ckpt";
}

namespace {

std::filesystem::path require(const std::filesystem::path& p) {
  if (!std::filesystem::is_regular_file(p)) throw NotFoundError("missing checkpoint " + p.string());
  return p;
}

bool needs_tag(locator::MflmInputs m) {
  return m == locator::MflmInputs::ins_tag || m == locator::MflmInputs::ins_tag_img;
}

}  // namespace

PipelineModels PipelineModels::load(const std::filesystem::path& dir, const PipelineVariant& variant) {
  PipelineModels m;
  m.detector = std::make_shared<const detector::DetectorModel>(
      detector::DetectorModel::load(require(dir / detector_checkpoint_name(variant.use_dtg))));
  auto loc = std::make_shared<locator::MflmModel>(
      locator::MflmModel::load(require(dir / locator_checkpoint_name(variant.mflm_inputs, variant.locator_on_correct_odet))));
  if (loc->config.inputs != variant.mflm_inputs) throw ConfigError("locator checkpoint was trained on other inputs");
  m.locator = std::move(loc);
  if (variant.use_dtg || needs_tag(variant.mflm_inputs)) {
    m.dtg = std::make_shared<const DtgModel>(DtgModel::load(require(dir / "dtg.ckpt")));
  }
  m.validate();
  return m;
}

void PipelineModels::validate() const {
  if (!detector || !locator) throw ConfigError("pipeline needs a detector and a locator");
  if (detector->use_domain_tag && !dtg) throw ConfigError("detector expects a domain tag but no tag generator is loaded");
  if (needs_tag(locator->config.inputs) && !dtg) throw ConfigError("locator inputs need a domain tag");
}

nlohmann::json PipelineModels::versions() const {
  nlohmann::json j = {{"detector", detector ? detector->weights_version() : ""},
                      {"locator", locator ? locator->weights_version() : ""}};
  j["dtg"] = dtg ? dtg->weights_version : "";
  return j;
}

AnalysisResult analyze_image(const PipelineModels& models, const cv::Mat& rgb) {
  if (rgb.empty()) throw InputError("empty image");
  models.validate();
  AnalysisResult r;
  if (models.dtg) {
    r.domain = classify_domain(*models.dtg, rgb);
    r.tag = make_domain_tag(r.domain->category);
  }
  const DomainTag* det_tag = models.detector->use_domain_tag && r.tag ? &*r.tag : nullptr;
  r.detection = detector::detect(*models.detector, rgb, det_tag);
  r.flags = r.detection.flags;
  if (r.detection.parsed.verdict == mmtd::Verdict::tampered) {
    r.localization = locator::locate(*models.locator, rgb, r.detection.raw_text, r.tag);
    for (const auto& f : r.localization->flags) r.flags.push_back(f);
  }
  return r;
}

namespace {
constexpr int kFollowUpReserve = 48;
}  // namespace

std::string answer_follow_up(const PipelineModels& models, const cv::Mat& rgb, const std::optional<DomainTag>& tag,
                             const std::string& detection_text, const std::vector<QaTurn>& prior,
                             const std::string& question) {
  if (question.empty()) throw InputError("follow-up question is empty");
  nn::NoGradGuard guard;
  const auto& det = *models.detector;
  std::vector<detector::Turn> history;
  std::string previous = detection_text;
  for (const auto& t : prior) {
    history.push_back({t.question, previous});
    previous = t.answer;
  }
  history.push_back({question, previous});
  const DomainTag* det_tag = det.use_domain_tag && tag ? &*tag : nullptr;
  const auto img = detector::encode_image(det.backbone, rgb);
  // Oldest turns are dropped until the answer has room in the context.
  const int want = det.backbone.lm->config().max_seq - std::min(det.generation.max_new_tokens, kFollowUpReserve);
  std::span<const detector::Turn> window(history);
  auto prompt = detector::assemble_prompt(det.backbone, det.instructions.front(), det_tag, img, window);
  while (prompt.embeddings.rows() > want && window.size() > 1) {
    window = window.subspan(1);
    prompt = detector::assemble_prompt(det.backbone, det.instructions.front(), det_tag, img, window);
  }
  return detector::generate_answer(det.backbone, prompt, det.generation);
}

}  // namespace fakeshield
