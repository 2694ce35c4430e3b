#include "fakeshield/eval/suite.hpp"

#include "fakeshield/errors.hpp"
#include "fakeshield/image.hpp"
#include "fakeshield/log.hpp"

#include <fmt/format.h>

#include <atomic>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

namespace fakeshield::eval {

using locator::MflmInputs;

std::string AblationFlags::label() const {
  if (!name.empty()) return name;
  std::vector<std::string> parts;
  if (!variant.use_dtg) parts.emplace_back("no_dtg");
  if (variant.mflm_inputs != MflmInputs::odet_img) {
    parts.push_back("inputs=" + std::string(locator::mflm_inputs_name(variant.mflm_inputs)));
  }
  if (!variant.locator_on_correct_odet) parts.emplace_back("generated_odet");
  if (parts.empty()) return "full";
  std::string out = parts.front();
  for (size_t i = 1; i < parts.size(); ++i) out += "," + parts[i];
  return out;
}

AblationFlags parse_ablation(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("an ablation must be a JSON object");
  AblationFlags a;
  for (const auto& [key, value] : j.items()) {
    if (key == "name") {
      a.name = value.get<std::string>();
    } else if (key == "disable_dtg") {
      a.variant.use_dtg = !value.get<bool>();
    } else if (key == "mflm_inputs") {
      a.variant.mflm_inputs = locator::parse_mflm_inputs(value.get<std::string>());
    } else if (key == "train_on_correct_O_det") {
      a.variant.locator_on_correct_odet = value.get<bool>();
    } else {
      throw ConfigError("unknown ablation flag '" + key + "'");
    }
  }
  return a;
}

nlohmann::json ablation_to_json(const AblationFlags& a) {
  return {{"name", a.label()},
          {"disable_dtg", !a.variant.use_dtg},
          {"mflm_inputs", locator::mflm_inputs_name(a.variant.mflm_inputs)},
          {"train_on_correct_O_det", a.variant.locator_on_correct_odet}};
}

std::vector<AblationFlags> dtg_ablations() {
  AblationFlags off;
  off.variant.use_dtg = false;
  return {AblationFlags{}, off};
}

std::vector<AblationFlags> odet_source_ablations() {
  AblationFlags generated;
  generated.variant.locator_on_correct_odet = false;
  return {AblationFlags{}, generated};
}

std::vector<AblationFlags> input_ablations() {
  std::vector<AblationFlags> out;
  for (auto m : {MflmInputs::odet_img, MflmInputs::ins_img, MflmInputs::ins_tag, MflmInputs::ins_tag_img}) {
    AblationFlags a;
    a.variant.mflm_inputs = m;
    out.push_back(a);
  }
  return out;
}

SuiteConfig SuiteConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("suite file must hold a JSON object");
  SuiteConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "split") {
        c.split = value.get<std::string>();
      } else if (key == "degradations") {
        c.degradations.clear();
        for (const auto& d : value) c.degradations.push_back(parse_degradation(d.get<std::string>()));
      } else if (key == "ablations") {
        c.ablations.clear();
        for (const auto& a : value) c.ablations.push_back(parse_ablation(a));
      } else if (key == "embedder") {
        c.embedder = value.value("kind", c.embedder);
        c.hash_dim = value.value("dim", c.hash_dim);
        c.live.endpoint = value.value("endpoint", c.live.endpoint);
        c.live.model = value.value("model", c.live.model);
        c.live.credential_env = value.value("credential_env", c.live.credential_env);
      } else if (key == "seed") {
        c.seed = value.get<uint64_t>();
      } else if (key == "workers") {
        c.workers = value.get<int>();
      } else if (key == "lexicon_top") {
        c.lexicon_top = value.get<size_t>();
      } else {
        throw ConfigError("unknown suite key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad suite file: ") + e.what());
  }
  if (c.embedder != "hash" && c.embedder != "live") throw ConfigError("embedder kind must be hash or live");
  if (c.ablations.empty()) throw ConfigError("suite needs at least one ablation");
  if (c.degradations.empty()) throw ConfigError("suite needs at least one degradation");
  std::set<std::string> labels;
  for (const auto& a : c.ablations) {
    if (!labels.insert(a.label()).second) throw ConfigError("duplicate ablation '" + a.label() + "'");
  }
  return c;
}

SuiteConfig SuiteConfig::load(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const auto j = nlohmann::json::parse(bytes.begin(), bytes.end(), nullptr, false);
  if (j.is_discarded()) throw ConfigError(path.string() + " is not valid JSON");
  return from_json(j);
}

std::unique_ptr<Embedder> SuiteConfig::make_embedder() const {
  if (embedder == "live") return make_live_embedder(live);
  return std::make_unique<HashEmbedder>(hash_dim);
}

void PipelineSource::prepare(const AblationFlags& ablation) {
  const auto key = ablation.label();
  if (!loaded_.contains(key)) loaded_.emplace(key, PipelineModels::load(dir_, ablation.variant));
}

Prediction PipelineSource::predict(const AblationFlags& ablation, const DegradationSpec&, const mmtd::AnalysisRecord&,
                                   const cv::Mat& image) const {
  const auto result = analyze_image(loaded_.at(ablation.label()), image);
  Prediction p;
  p.verdict = result.detection.parsed.verdict;
  p.text = result.detection.raw_text;
  if (result.localization) p.mask = result.localization->mask.probs;
  return p;
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      quoted = any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field.push_back(c);
      any = true;
    }
  }
  if (quoted) throw InputError("unterminated quoted CSV field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::filesystem::path DirectorySource::root_for(const DegradationSpec& spec) const {
  return spec.kind == DegradationKind::none ? dir_ : dir_ / spec.slug();
}

bool DirectorySource::available(const AblationFlags& ablation, const DegradationSpec& spec) const {
  return ablation.variant == PipelineVariant{} && std::filesystem::is_regular_file(root_for(spec) / "verdicts.csv");
}

void DirectorySource::prepare(const AblationFlags&) {
  if (!std::filesystem::is_regular_file(dir_ / "verdicts.csv")) {
    throw NotFoundError("no verdicts.csv in " + dir_.string());
  }
}

const std::map<std::string, DirectorySource::Entry>& DirectorySource::verdicts(const DegradationSpec& spec) const {
  std::lock_guard lock(mu_);
  const auto slug = spec.slug();
  if (auto it = cache_.find(slug); it != cache_.end()) return it->second;
  const auto path = root_for(spec) / "verdicts.csv";
  const auto bytes = read_file(path);
  const auto rows = parse_csv(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  std::map<std::string, Entry> out;
  for (size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (i == 0 && !r.empty() && r[0] == "id") continue;
    if (r.size() < 2) throw InputError(fmt::format("{}: row {} needs id and verdict", path.string(), i + 1));
    mmtd::Verdict v;
    if (r[1] == "tampered") v = mmtd::Verdict::tampered;
    else if (r[1] == "authentic") v = mmtd::Verdict::authentic;
    else throw InputError(fmt::format("{}: row {} has verdict '{}'", path.string(), i + 1, r[1]));
    out[r[0]] = {v, r.size() > 2 ? r[2] : std::string()};
  }
  return cache_.emplace(slug, std::move(out)).first->second;
}

Prediction DirectorySource::predict(const AblationFlags&, const DegradationSpec& spec,
                                    const mmtd::AnalysisRecord& record, const cv::Mat&) const {
  const auto& table = verdicts(spec);
  const auto it = table.find(record.id);
  if (it == table.end()) throw NotFoundError("no prediction for record " + record.id);
  Prediction p;
  p.verdict = it->second.verdict;
  p.text = it->second.text;
  const auto mask_path = root_for(spec) / "masks" / (record.id + ".png");
  if (std::filesystem::is_regular_file(mask_path)) {
    const cv::Mat m = read_mask(mask_path);
    p.mask = mask_to_matrix(m, m.rows, m.cols);
  }
  return p;
}

namespace {

uint64_t fnv1a(std::string_view s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

struct Scored {
  const mmtd::AnalysisRecord* record;
  mmtd::Verdict verdict;
  MaskScore mask;  // tampered records only
  double css = 0.0;
  bool css_empty = false;
  std::string text;
};

GroupMetrics aggregate(const std::vector<const Scored*>& items) {
  GroupMetrics g;
  Confusion c;
  double iou = 0, f1 = 0, css = 0;
  int tampered_right = 0;
  for (const auto* s : items) {
    ++g.n;
    const bool is_tampered = !s->record->authentic;
    const bool said = s->verdict == mmtd::Verdict::tampered;
    if (is_tampered) {
      ++g.n_tampered;
      iou += s->mask.iou;
      f1 += s->mask.f1;
      tampered_right += said;
      said ? ++c.tp : ++c.fn;
    } else {
      said ? ++c.fp : ++c.tn;
    }
    css += s->css;
    g.css_empty += s->css_empty;
  }
  const auto det = detection_from_confusion(c);
  g.acc = det.acc;
  g.f1 = det.f1;
  if (g.n_tampered > 0) {
    g.acc_tampered = static_cast<double>(tampered_right) / g.n_tampered;
    g.iou = iou / g.n_tampered;
    g.pixel_f1 = f1 / g.n_tampered;
  }
  if (g.n > 0) g.css = css / g.n;
  return g;
}

}  // namespace

SuiteReport run_suite(PredictionSource& source, const mmtd::Dataset& dataset, const SuiteConfig& config) {
  if (dataset.records.empty()) throw ConfigError("evaluation split '" + config.split + "' is empty");
  const auto embedder = config.make_embedder();
  SuiteReport report;
  report.source_id = source.id();
  report.embedder_id = embedder->id();

  std::vector<cv::Mat> originals(dataset.records.size());
  std::vector<nn::Matrix> gts(dataset.records.size());
  std::vector<std::string> gt_texts;
  for (size_t i = 0; i < dataset.records.size(); ++i) {
    const auto& r = dataset.records[i];
    if (source.needs_image()) originals[i] = read_image(dataset.image_file(r));
    if (!r.authentic) {
      const cv::Mat m = read_mask(dataset.mask_file(r));
      gts[i] = mask_to_matrix(m, m.rows, m.cols);
    }
    gt_texts.push_back(mmtd::serialize_description(r.description));
  }

  for (size_t ai = 0; ai < config.ablations.size(); ++ai) {
    const auto& ablation = config.ablations[ai];
    source.prepare(ablation);
    for (const auto& spec : config.degradations) {
      if (!source.available(ablation, spec)) {
        report.notes.push_back(fmt::format("skipped {} / {}: no predictions", ablation.label(), spec.label()));
        continue;
      }
      std::vector<Scored> scored(dataset.records.size());
      std::vector<std::string> errors(dataset.records.size());
      std::atomic<size_t> next{0};
      auto work = [&] {
        for (size_t i = next++; i < scored.size(); i = next++) {
          const auto& r = dataset.records[i];
          try {
            cv::Mat image;
            if (source.needs_image()) image = degrade_image(originals[i], spec, config.seed * 0x9E3779B97F4A7C15ULL ^ fnv1a(r.id));
            const auto p = source.predict(ablation, spec, r, image);
            Scored s{&r, p.verdict, {}, 0.0, p.text.empty(), p.text};
            if (!r.authentic) {
              const auto& gt = gts[i];
              nn::Matrix pred = p.verdict == mmtd::Verdict::tampered && p.mask
                                    ? nn::Matrix((p.mask->array() >= 0.5).cast<double>().matrix())
                                    : nn::Matrix::Zero(gt.rows(), gt.cols());
              s.mask = score_mask(pred, resize_nearest(gt, static_cast<int>(pred.rows()), static_cast<int>(pred.cols())));
            }
            if (!p.text.empty()) s.css = cosine(embedder->embed(p.text), embedder->embed(gt_texts[i]));
            scored[i] = std::move(s);
          } catch (const std::exception& e) {
            errors[i] = r.id + ": " + e.what();
          }
        }
      };
      const int n_workers = std::max(1, std::min<int>(config.workers, static_cast<int>(scored.size())));
      std::vector<std::thread> pool;
      for (int w = 1; w < n_workers; ++w) pool.emplace_back(work);
      work();
      for (auto& t : pool) t.join();
      for (const auto& e : errors) {
        if (!e.empty()) throw std::runtime_error("evaluation failed for " + e);
      }

      std::map<std::string, std::vector<const Scored*>> groups;
      for (const auto& s : scored) {
        groups["all"].push_back(&s);
        groups["domain:" + std::string(domain_display_name(s.record->domain))].push_back(&s);
        groups["source:" + s.record->source_name].push_back(&s);
      }
      auto emit = [&](const std::string& name) {
        report.rows.push_back({ablation.label(), spec.label(), name, aggregate(groups.at(name))});
      };
      emit("all");
      for (const auto& [name, items] : groups) {
        if (name.starts_with("domain:")) emit(name);
      }
      for (const auto& [name, items] : groups) {
        if (name.starts_with("source:")) emit(name);
      }
      if (ai == 0 && spec.kind == DegradationKind::none) {
        std::vector<std::string> texts;
        for (const auto& s : scored) texts.push_back(s.text);
        report.lexicon = answer_lexicon_profile(texts, LexiconTagger(), config.lexicon_top);
      }
      log_info("evaluated {} / {}", ablation.label(), spec.label());
    }
  }
  return report;
}

const ReportRow* SuiteReport::find(std::string_view ablation, std::string_view degradation,
                                   std::string_view group) const {
  for (const auto& r : rows) {
    if (r.ablation == ablation && r.degradation == degradation && r.group == group) return &r;
  }
  return nullptr;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  return out + "\"";
}

}  // namespace

std::string SuiteReport::csv() const {
  std::string out = "ablation,degradation,group,n,n_tampered,acc,acc_tampered,f1,iou,pixel_f1,css,css_empty,embedder\n";
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    out += fmt::format("{},{},{},{},{},{:.4f},{:.4f},{:.4f},{:.4f},{:.4f},{:.4f},{},{}\n", csv_field(r.ablation),
                       csv_field(r.degradation), csv_field(r.group), m.n, m.n_tampered, m.acc, m.acc_tampered, m.f1,
                       m.iou, m.pixel_f1, m.css, m.css_empty, csv_field(embedder_id));
  }
  return out;
}

std::string SuiteReport::text() const {
  std::string out = fmt::format("Predictions: {}\nCSS embedder: {}\n", source_id, embedder_id);
  std::vector<std::string> ablations;
  for (const auto& r : rows) {
    if (std::find(ablations.begin(), ablations.end(), r.ablation) == ablations.end()) ablations.push_back(r.ablation);
  }
  const auto header = fmt::format("{:<14}{:<28}{:>5}{:>8}{:>8}{:>8}{:>8}{:>8}{:>8}\n", "Degradation", "Group", "N", "ACC",
                                  "ACC(t)", "F1", "IoU", "pF1", "CSS");
  for (const auto& a : ablations) {
    for (const char* kind : {"all", "domain:", "source:"}) {
      const std::string k = kind;
      out += fmt::format("\n[{}] {}\n", a,
                         k == "all" ? "overall" : (k == "domain:" ? "per tamper domain" : "per source dataset"));
      out += header;
      for (const auto& r : rows) {
        if (r.ablation != a) continue;
        if (k == "all" ? r.group != "all" : !r.group.starts_with(k)) continue;
        const auto& m = r.metrics;
        out += fmt::format("{:<14}{:<28}{:>5}{:>8.4f}{:>8.4f}{:>8.4f}{:>8.4f}{:>8.4f}{:>8.4f}\n", r.degradation,
                           k == "all" ? r.group : r.group.substr(k.size()), m.n, m.acc, m.acc_tampered, m.f1, m.iou,
                           m.pixel_f1, m.css);
      }
    }
  }
  if (!notes.empty()) {
    out += "\nNotes\n";
    for (const auto& n : notes) out += "  " + n + "\n";
  }
  if (!lexicon.empty()) {
    out += "\nMost frequent nouns and adjectives in predicted explanations\n";
    for (const auto& e : lexicon) out += fmt::format("  {:<16}{:<10}{:>5}\n", e.word, pos_name(e.pos), e.count);
  }
  return out;
}

void write_report(const SuiteReport& report, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  auto put = [&](const std::string& name, const std::string& s) {
    write_file_atomic(out_dir / name, std::span(reinterpret_cast<const uint8_t*>(s.data()), s.size()));
  };
  put("report.csv", report.csv());
  put("report.txt", report.text());
  std::string lex = "word,pos,count\n";
  for (const auto& e : report.lexicon) lex += fmt::format("{},{},{}\n", e.word, pos_name(e.pos), e.count);
  put("lexicon.csv", lex);
}

}  // namespace fakeshield::eval
