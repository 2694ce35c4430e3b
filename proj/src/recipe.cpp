#include "fakeshield/recipe.hpp"

#include "fakeshield/errors.hpp"
#include "fakeshield/image.hpp"
#include "fakeshield/log.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <set>

namespace fakeshield {

namespace {

nlohmann::json dtg_json(const DtgRecipe& r) { return {{"model", r.model}, {"train", r.train}}; }

nlohmann::json detector_json(const DetectorRecipe& r) {
  return {{"vision", r.vision},         {"lm", r.lm},          {"adapter", r.adapter}, {"seed", r.seed},
          {"generation", r.generation}, {"joint_dtg", r.joint_dtg}, {"train", r.train}};
}

nlohmann::json locator_json(const LocatorRecipe& r) {
  return {{"vision", r.vision}, {"lm", r.lm},     {"adapter", r.adapter},       {"seg", r.seg},
          {"seg_adapter", r.seg_adapter}, {"seed", r.seed}, {"mflm", r.mflm}, {"generation", r.generation},
          {"train", r.train}};
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void reject_unknown_keys(const nlohmann::json& given, const nlohmann::json& known, const std::string& where) {
  if (!given.is_object()) return;
  if (!known.is_object()) throw ConfigError(where + " must not be an object");
  for (const auto& [key, value] : given.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!known.contains(key)) throw ConfigError("unknown config key '" + path + "'");
    reject_unknown_keys(value, known.at(key), path);
  }
}

Recipe Recipe::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("recipe must be a JSON object");
  Recipe r;
  reject_unknown_keys(j, r.to_json(), "");
  try {
    if (j.contains("dtg")) {
      const auto& d = j["dtg"];
      read(d, "model", r.dtg.model);
      read(d, "train", r.dtg.train);
    }
    if (j.contains("detector")) {
      const auto& d = j["detector"];
      auto& o = r.detector;
      read(d, "vision", o.vision);
      read(d, "lm", o.lm);
      read(d, "adapter", o.adapter);
      read(d, "seed", o.seed);
      read(d, "generation", o.generation);
      read(d, "joint_dtg", o.joint_dtg);
      read(d, "train", o.train);
    }
    if (j.contains("locator")) {
      const auto& d = j["locator"];
      auto& o = r.locator;
      read(d, "vision", o.vision);
      read(d, "lm", o.lm);
      read(d, "adapter", o.adapter);
      read(d, "seg", o.seg);
      read(d, "seg_adapter", o.seg_adapter);
      read(d, "seed", o.seed);
      read(d, "mflm", o.mflm);
      read(d, "generation", o.generation);
      read(d, "train", o.train);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad recipe: ") + e.what());
  }
  return r;
}

Recipe Recipe::load(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const auto j = nlohmann::json::parse(bytes.begin(), bytes.end(), nullptr, false);
  if (j.is_discarded()) throw ConfigError(path.string() + " is not valid JSON");
  return from_json(j);
}

nlohmann::json Recipe::to_json() const {
  return {{"dtg", dtg_json(dtg)}, {"detector", detector_json(detector)}, {"locator", locator_json(locator)}};
}

std::vector<LabeledImage> dtg_examples(const mmtd::Dataset& dataset) {
  std::vector<LabeledImage> out;
  for (const auto& r : dataset.records) out.push_back({read_image(dataset.image_file(r)), r.domain});
  return out;
}

DtgModel train_dtg_model(const mmtd::Dataset& dataset, const DtgRecipe& recipe, DtgTrainReport* report) {
  auto model = DtgModel::create(recipe.model);
  auto rep = train_dtg(model, dtg_examples(dataset), recipe.train);
  if (report) *report = std::move(rep);
  return model;
}

detector::DetectorModel train_detector_model(const mmtd::Dataset& dataset, const DetectorRecipe& recipe, bool use_tag,
                                             DtgModel* joint, detector::DetectorTrainReport* report) {
  auto model = detector::DetectorModel::create(recipe.vision, recipe.lm, recipe.adapter, recipe.seed);
  model.generation = recipe.generation;
  model.use_domain_tag = use_tag;
  const auto examples = detector::examples_from_dataset(dataset);
  auto rep = detector::train_dte_fdm(model, examples, recipe.train, recipe.joint_dtg && use_tag ? joint : nullptr);
  if (report) *report = std::move(rep);
  return model;
}

locator::MflmModel train_locator_model(const mmtd::Dataset& dataset, const LocatorRecipe& recipe,
                                       locator::MflmInputs inputs, const detector::DetectorModel* odet_from,
                                       locator::MflmTrainReport* report) {
  auto config = recipe.mflm;
  config.inputs = inputs;
  auto model = locator::MflmModel::create(recipe.vision, recipe.lm, recipe.adapter, recipe.seg, recipe.seg_adapter,
                                          recipe.seed, config);
  model.generation = recipe.generation;
  auto examples = locator::examples_from_dataset(dataset);
  if (odet_from) locator::use_detector_outputs(examples, *odet_from);
  auto rep = locator::train_mflm(model, examples, recipe.train);
  if (report) *report = std::move(rep);
  return model;
}

std::vector<std::filesystem::path> train_model_set(const mmtd::Dataset& dataset, const Recipe& recipe,
                                                   const std::vector<PipelineVariant>& variants,
                                                   const std::filesystem::path& out_dir) {
  if (variants.empty()) throw ConfigError("no pipeline variants to train");
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  auto save = [&](const std::string& name, const auto& model) {
    const auto path = out_dir / name;
    model.save(path);
    written.push_back(path);
    log_info("wrote {}", path.string());
  };

  std::optional<DtgModel> dtg;
  const bool needs_dtg = std::any_of(variants.begin(), variants.end(), [](const PipelineVariant& v) {
    return v.use_dtg || locator::uses_tag(v.mflm_inputs);
  });
  if (needs_dtg) {
    log_info("training the domain tag generator");
    dtg = train_dtg_model(dataset, recipe.dtg);
  }

  std::map<bool, detector::DetectorModel> detectors;
  for (const bool use_tag : {true, false}) {
    const bool wanted =
        std::any_of(variants.begin(), variants.end(), [&](const PipelineVariant& v) { return v.use_dtg == use_tag; });
    if (!wanted) continue;
    log_info("training the detector {} domain tags", use_tag ? "with" : "without");
    detectors.emplace(use_tag, train_detector_model(dataset, recipe.detector, use_tag, dtg ? &*dtg : nullptr));
    save(detector_checkpoint_name(use_tag), detectors.at(use_tag));
  }
  // Joint training may have moved the DTG, so it is saved last.
  if (dtg) save("dtg.ckpt", *dtg);

  std::set<std::string> done;
  for (const auto& v : variants) {
    const auto name = locator_checkpoint_name(v.mflm_inputs, v.locator_on_correct_odet);
    if (!done.insert(name).second) continue;
    log_info("training the locator {}", name);
    const detector::DetectorModel* source = v.locator_on_correct_odet ? nullptr : &detectors.at(v.use_dtg);
    save(name, train_locator_model(dataset, recipe.locator, v.mflm_inputs, source));
  }
  return written;
}

}  // namespace fakeshield
