#include "fakeshield/errors.hpp"
#include "fakeshield/eval/suite.hpp"
#include "fakeshield/image.hpp"
#include "fakeshield/log.hpp"
#include "fakeshield/mmtd/builder.hpp"
#include "fakeshield/mmtd/client.hpp"
#include "fakeshield/mmtd/manifest.hpp"
#include "fakeshield/mmtd/templates.hpp"
#include "fakeshield/pipeline.hpp"
#include "fakeshield/recipe.hpp"
#include "fakeshield/service/http.hpp"
#include "fakeshield/service/service.hpp"
#include "fakeshield/toy.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <iostream>
#include <thread>

namespace fs = std::filesystem;
using namespace fakeshield;

namespace {

nlohmann::json load_json(const fs::path& path) {
  const auto bytes = read_file(path);
  auto j = nlohmann::json::parse(bytes.begin(), bytes.end(), nullptr, false);
  if (j.is_discarded()) throw ConfigError(path.string() + " is not valid JSON");
  return j;
}

Recipe load_recipe(const std::string& path) { return path.empty() ? Recipe{} : Recipe::load(path); }

void write_json(const fs::path& path, const nlohmann::json& j) {
  const auto text = j.dump(2) + "\n";
  write_file_atomic(path, Bytes(text.begin(), text.end()));
}

// build-dataset ------------------------------------------------------------

struct BuildArgs {
  std::string manifest, templates, out, client = "fixture", config, transcript, record;
  std::vector<std::string> eval_sources;
  int workers = 0;
};

int build_dataset_cmd(const BuildArgs& a) {
  // Config keys: client {endpoint, model, credential_env, timeout_seconds},
  // workers, retry_limit, retry_backoff_s, eval_sources.
  nlohmann::json cfg = a.config.empty() ? nlohmann::json::object() : load_json(a.config);
  reject_unknown_keys(cfg,
                      {{"client", {{"endpoint", 0}, {"model", 0}, {"credential_env", 0}, {"timeout_seconds", 0}}},
                       {"workers", 0},
                       {"retry_limit", 0},
                       {"retry_backoff_s", 0},
                       {"eval_sources", 0}},
                      "");
  mmtd::BuildOptions options;
  options.workers = cfg.value("workers", options.workers);
  options.generation.retry_limit = cfg.value("retry_limit", options.generation.retry_limit);
  options.generation.retry_backoff_s = cfg.value("retry_backoff_s", options.generation.retry_backoff_s);
  if (a.workers > 0) options.workers = a.workers;
  mmtd::SplitSpec split;
  for (const auto& s : cfg.value("eval_sources", std::vector<std::string>{})) split.eval_sources.insert(s);
  for (const auto& s : a.eval_sources) split.eval_sources.insert(s);

  std::unique_ptr<mmtd::DescriptionServiceClient> client;
  if (a.client == "fixture") {
    client = std::make_unique<mmtd::FixtureClient>();
  } else if (a.client == "replay") {
    if (a.transcript.empty()) throw ConfigError("--client replay needs --transcript");
    client = std::make_unique<mmtd::ReplayClient>(a.transcript);
  } else {
    mmtd::LiveClientConfig live;
    const auto c = cfg.value("client", nlohmann::json::object());
    live.endpoint = c.value("endpoint", live.endpoint);
    live.model = c.value("model", live.model);
    live.credential_env = c.value("credential_env", live.credential_env);
    live.timeout_seconds = c.value("timeout_seconds", live.timeout_seconds);
    client = mmtd::make_live_client(live);
  }
  std::unique_ptr<mmtd::RecordingClient> recorder;
  mmtd::DescriptionServiceClient* used = client.get();
  if (!a.record.empty()) {
    recorder = std::make_unique<mmtd::RecordingClient>(*client, a.record);
    used = recorder.get();
  }

  const auto templates = mmtd::TemplateSet::load(a.templates);
  auto result = mmtd::build_dataset(mmtd::load_manifest(a.manifest), templates, *used, split, options);
  mmtd::write_dataset(result, a.out);
  std::cout << result.report.to_json().dump(2) << "\n";
  return 0;
}

// make-toy -----------------------------------------------------------------

struct ToyArgs {
  std::string out, kind = "toy";
  int count = 8, size = 128;
  uint64_t seed = 1;
};

int make_toy_cmd(const ToyArgs& a) {
  std::vector<toy::ToySample> samples;
  if (a.kind == "toy") {
    samples = toy::make_toy_set(a.seed, a.size);
  } else if (a.kind == "tampered") {
    samples = toy::make_tampered_set(a.seed, a.size);
  } else if (a.kind == "domain") {
    samples = toy::make_domain_set(a.count, a.seed, a.size);
  } else {
    samples = toy::make_decoy_set(a.count, a.seed, a.size);
  }
  std::cout << toy::write_corpus(samples, a.out).string() << "\n";
  return 0;
}

// training -----------------------------------------------------------------

struct TrainArgs {
  std::string dataset, config, out, split = "train";
  bool no_tag = false;
  std::string dtg, inputs, odet_from, variants = "full";
};

int train_dtg_cmd(const TrainArgs& a) {
  const auto ds = mmtd::Dataset::load(a.dataset, a.split);
  DtgTrainReport report;
  const auto model = train_dtg_model(ds, load_recipe(a.config).dtg, &report);
  model.save(a.out);
  std::cout << nlohmann::json{{"weights_version", model.weights_version},
                              {"initial_loss", report.initial_loss},
                              {"epoch_loss", report.epoch_loss}}
                   .dump()
            << "\n";
  return 0;
}

int train_detector_cmd(const TrainArgs& a) {
  const auto ds = mmtd::Dataset::load(a.dataset, a.split);
  const auto recipe = load_recipe(a.config);
  std::optional<DtgModel> dtg;
  if (!a.dtg.empty()) dtg = DtgModel::load(a.dtg);
  if (recipe.detector.joint_dtg && !a.no_tag && !dtg) throw ConfigError("joint_dtg needs --dtg <checkpoint>");
  detector::DetectorTrainReport report;
  const auto model = train_detector_model(ds, recipe.detector, !a.no_tag, dtg ? &*dtg : nullptr, &report);
  model.save(a.out);
  // Joint training updates the DTG in place.
  if (dtg && recipe.detector.joint_dtg && !a.no_tag) dtg->save(a.dtg);
  std::cout << nlohmann::json{{"weights_version", model.weights_version()},
                              {"initial_loss", report.initial_loss},
                              {"epoch_loss", report.epoch_loss},
                              {"frozen_unchanged", report.frozen_checksum_before == report.frozen_checksum_after}}
                   .dump()
            << "\n";
  return 0;
}

int train_locator_cmd(const TrainArgs& a) {
  const auto ds = mmtd::Dataset::load(a.dataset, a.split);
  const auto recipe = load_recipe(a.config);
  const auto inputs = a.inputs.empty() ? recipe.locator.mflm.inputs : locator::parse_mflm_inputs(a.inputs);
  std::optional<detector::DetectorModel> source;
  if (!a.odet_from.empty()) source = detector::DetectorModel::load(a.odet_from);
  locator::MflmTrainReport report;
  const auto model = train_locator_model(ds, recipe.locator, inputs, source ? &*source : nullptr, &report);
  model.save(a.out);
  std::cout << nlohmann::json{{"weights_version", model.weights_version()},
                              {"initial_loss", report.initial_loss},
                              {"epoch_loss", report.epoch_loss},
                              {"frozen_unchanged", report.frozen_checksum_before == report.frozen_checksum_after}}
                   .dump()
            << "\n";
  return 0;
}

std::vector<PipelineVariant> variant_set(const std::string& name) {
  if (name == "full") return {PipelineVariant{}};
  if (name != "ablations") throw ConfigError("--variants must be full or ablations");
  std::vector<PipelineVariant> out;
  for (const auto& list : {eval::dtg_ablations(), eval::odet_source_ablations(), eval::input_ablations()}) {
    for (const auto& a : list) out.push_back(a.variant);
  }
  return out;
}

int train_all_cmd(const TrainArgs& a) {
  const auto ds = mmtd::Dataset::load(a.dataset, a.split);
  const auto written = train_model_set(ds, load_recipe(a.config), variant_set(a.variants), a.out);
  for (const auto& p : written) std::cout << p.string() << "\n";
  return 0;
}

// inference ----------------------------------------------------------------

struct PredictArgs {
  std::string ckpt_dir, image, out;
};

int predict_cmd(const PredictArgs& a) {
  const auto models = PipelineModels::load(a.ckpt_dir);
  const auto result = analyze_image(models, read_image(a.image));
  fs::create_directories(a.out);
  nlohmann::json j{{"verdict", mmtd::verdict_name(result.detection.parsed.verdict)},
                   {"location", result.detection.parsed.location_text},
                   {"basis", result.detection.parsed.basis_text},
                   {"raw_text", result.detection.raw_text},
                   {"flags", result.flags},
                   {"model_versions", models.versions()}};
  if (result.domain) j["domain"] = domain_id(result.domain->category);
  if (result.localization) {
    write_file_atomic(fs::path(a.out) / "mask.png", locator::mask_png(result.localization->mask));
    write_file_atomic(fs::path(a.out) / "mask_prob.png", locator::probability_png(result.localization->mask));
    j["mask"] = "mask.png";
    j["probability_map"] = "mask_prob.png";
  }
  write_json(fs::path(a.out) / "result.json", j);
  std::cout << j.dump(2) << "\n";
  return 0;
}

struct EvalArgs {
  std::string dataset, preds, suite, out, ckpt_dir = "checkpoints";
};

int evaluate_cmd(const EvalArgs& a) {
  const auto suite = eval::SuiteConfig::load(a.suite);
  const auto ds = mmtd::Dataset::load(a.dataset, suite.split);
  std::unique_ptr<eval::PredictionSource> source;
  if (a.preds == "pipeline") {
    source = std::make_unique<eval::PipelineSource>(a.ckpt_dir);
  } else {
    source = std::make_unique<eval::DirectorySource>(a.preds);
  }
  const auto report = eval::run_suite(*source, ds, suite);
  eval::write_report(report, a.out);
  std::cout << report.text();
  return 0;
}

// serve --------------------------------------------------------------------

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

struct ServeArgs {
  std::string config, ckpt_dir, host = "127.0.0.1";
  int port = 8080;
};

int serve_cmd(const ServeArgs& a) {
  service::ServiceConfig config;
  if (!a.config.empty()) config = load_json(a.config).get<service::ServiceConfig>();
  service::ForensicsService svc(config);
  try {
    svc.set_analyzer(std::make_shared<service::PipelineAnalyzer>(PipelineModels::load(a.ckpt_dir)));
  } catch (const std::exception& e) {
    // The service still answers health checks and reports 503 for analyses.
    log_warn("models not loaded: {}", e.what());
  }
  service::HttpServer http(svc);
  const int port = http.bind(a.host, a.port);
  log_info("listening on {}:{}", a.host, port);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  http.start();
  auto next_purge = std::chrono::steady_clock::now();
  while (!g_stop) {
    if (std::chrono::steady_clock::now() >= next_purge) {
      svc.purge_expired();
      next_purge += std::chrono::minutes(5);
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
  }
  log_info("shutting down");
  http.stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Explainable image forgery detection and localisation"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Only print warnings and errors");

  BuildArgs build;
  auto* b = app.add_subcommand("build-dataset", "Build image-mask-description records from a manifest");
  b->add_option("--manifest", build.manifest)->required()->check(CLI::ExistingFile);
  b->add_option("--templates", build.templates)->required()->check(CLI::ExistingDirectory);
  b->add_option("--out", build.out)->required();
  b->add_option("--client", build.client)->check(CLI::IsMember({"live", "replay", "fixture"}));
  b->add_option("--config", build.config, "Builder config (client endpoint, credential variable name, workers)")
      ->check(CLI::ExistingFile);
  b->add_option("--transcript", build.transcript, "Transcript for the replay client")->check(CLI::ExistingFile);
  b->add_option("--record", build.record, "Append every answered request to this transcript");
  b->add_option("--eval-sources", build.eval_sources, "Source names that go to the eval split");
  b->add_option("--workers", build.workers);

  ToyArgs toy_args;
  auto* t = app.add_subcommand("make-toy", "Write a synthetic corpus and its manifest");
  t->add_option("--out", toy_args.out)->required();
  t->add_option("--kind", toy_args.kind)->check(CLI::IsMember({"toy", "tampered", "domain", "decoy"}));
  t->add_option("--count", toy_args.count, "Images per domain (domain) or in total (decoy)");
  t->add_option("--seed", toy_args.seed);
  t->add_option("--size", toy_args.size);

  TrainArgs train;
  auto add_train = [&](const char* name, const char* help, bool needs_config) {
    auto* s = app.add_subcommand(name, help);
    s->add_option("--dataset", train.dataset)->required()->check(CLI::ExistingDirectory);
    auto* c = s->add_option("--config", train.config, "Recipe file")->check(CLI::ExistingFile);
    if (needs_config) c->required();
    s->add_option("--split", train.split);
    return s;
  };
  auto* td = add_train("train-dtg", "Train the domain tag generator", false);
  td->add_option("--out", train.out)->required();
  auto* tdet = add_train("train-detector", "Train the explainable detector", true);
  tdet->add_option("--out", train.out)->required();
  tdet->add_flag("--no-tag", train.no_tag, "Train without domain tags");
  tdet->add_option("--dtg", train.dtg, "DTG checkpoint, updated in place when the recipe trains it jointly")
      ->check(CLI::ExistingFile);
  auto* tloc = add_train("train-locator", "Train the localisation module", true);
  tloc->add_option("--out", train.out)->required();
  tloc->add_option("--inputs", train.inputs, "O_det+T_img, T_ins+T_img, T_ins+T_tag or T_ins+T_tag+T_img");
  tloc->add_option("--odet-from", train.odet_from, "Detector checkpoint whose generations replace O_det")
      ->check(CLI::ExistingFile);
  auto* tall = add_train("train-all", "Train every checkpoint a pipeline needs", true);
  tall->add_option("--out", train.out, "Checkpoint directory")->required();
  tall->add_option("--variants", train.variants, "full, or ablations for every evaluation variant")
      ->check(CLI::IsMember({"full", "ablations"}));

  PredictArgs predict;
  auto* p = app.add_subcommand("predict", "Analyse one image with trained checkpoints");
  p->add_option("--ckpt-dir", predict.ckpt_dir)->required()->check(CLI::ExistingDirectory);
  p->add_option("--image", predict.image)->required()->check(CLI::ExistingFile);
  p->add_option("--out", predict.out)->required();

  EvalArgs ev;
  auto* e = app.add_subcommand("evaluate", "Run the evaluation suite");
  e->add_option("--dataset", ev.dataset)->required()->check(CLI::ExistingDirectory);
  e->add_option("--preds", ev.preds, "Prediction directory, or 'pipeline' to run the checkpoints")->required();
  e->add_option("--suite", ev.suite)->required()->check(CLI::ExistingFile);
  e->add_option("--out", ev.out)->required();
  e->add_option("--ckpt-dir", ev.ckpt_dir, "Checkpoints for --preds pipeline");

  ServeArgs serve;
  auto* s = app.add_subcommand("serve", "Run the forensics HTTP service");
  s->add_option("--config", serve.config, "Service config")->check(CLI::ExistingFile);
  s->add_option("--ckpt-dir", serve.ckpt_dir)->required();
  s->add_option("--port", serve.port);
  s->add_option("--host", serve.host);

  CLI11_PARSE(app, argc, argv);
  if (quiet) set_log_level(LogLevel::warn);

  try {
    if (*b) return build_dataset_cmd(build);
    if (*t) return make_toy_cmd(toy_args);
    if (*td) return train_dtg_cmd(train);
    if (*tdet) return train_detector_cmd(train);
    if (*tloc) return train_locator_cmd(train);
    if (*tall) return train_all_cmd(train);
    if (*p) return predict_cmd(predict);
    if (*e) return evaluate_cmd(ev);
    if (*s) return serve_cmd(serve);
  } catch (const ConfigError& ex) {
    std::cerr << "config error: " << ex.what() << "\n";
    return 2;
  } catch (const InputError& ex) {
    std::cerr << "input error: " << ex.what() << "\n";
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
