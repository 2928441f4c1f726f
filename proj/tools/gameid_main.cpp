#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <iostream>

#include "gameid/catalog.hpp"
#include "gameid/curation.hpp"
#include "gameid/error.hpp"
#include "gameid/evaluation.hpp"
#include "gameid/identify.hpp"
#include "gameid/serve.hpp"
#include "gameid/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gameid;

namespace {

fs::path catalog_file(const fs::path& cache_dir, const std::string& system) {
  return cache_dir / "catalog" / (sanitize_component(system) + ".json");
}

fs::path default_manifest(const fs::path& cache_dir, const std::string& system) {
  return cache_dir / "manifests" / (sanitize_component(system) + ".jsonl");
}

SystemId resolve_system(CatalogProvider& provider, const std::string& name) {
  for (const auto& sys : provider.list_systems())
    if (sys.display_name == name || sys.provider_id == name) return sys;
  raise(ErrorCode::not_found, "system not listed by the provider: " + name);
}

std::unique_ptr<CatalogProvider> build_provider(const std::string& fixture_dir,
                                                const std::string& base_url,
                                                const std::string& api_key,
                                                const ProviderOptions& opts) {
  if (!fixture_dir.empty()) return make_fixture_provider(fixture_dir, opts);
  if (base_url.empty())
    raise(ErrorCode::invalid_argument, "either --fixture-dir or --base-url is required");
  if (api_key.empty())
    raise(ErrorCode::auth_rejected, "no API key: pass --api-key or set MOBYGAMES_API_KEY");
  return make_api_provider(make_http_transport(base_url, api_key), opts);
}

int cmd_fetch(const std::string& system_name, const std::string& fixture_dir,
              const std::string& base_url, const std::string& api_key, const fs::path& cache_dir,
              const ProviderOptions& popts, const FetchOptions& fopts) {
  auto provider = build_provider(fixture_dir, base_url, api_key, popts);
  const SystemId system = resolve_system(*provider, system_name);
  CatalogCache cache(cache_dir);

  const auto catalog = fetch_system_catalog(*provider, system, fopts.page_size);
  write_catalog_json(catalog, system, catalog_file(cache_dir, system.display_name));
  const FetchReport report = fetch_images(*provider, system, catalog, cache, fopts.workers);

  json j{{"system", system.display_name},
         {"games", report.games},
         {"screenshots_listed", report.screenshots_listed},
         {"downloaded", report.downloaded},
         {"cache_hits", report.cache_hits},
         {"skipped", report.skipped.size()},
         {"catalog_file", catalog_file(cache_dir, system.display_name).string()}};
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_curate(const std::string& system_name, std::uint64_t seed, const fs::path& cache_dir,
               int min_screenshots, int k, fs::path out) {
  SystemId system;
  const auto catalog = read_catalog_json(catalog_file(cache_dir, system_name), &system);
  CatalogCache cache(cache_dir);

  const CurationRule rule{min_screenshots};
  const CuratedSet curated = select_games(catalog, rule);
  const FoldAssignment folds = assign_folds(curated, k, seed);
  const DatasetManifest manifest = build_manifest(
      curated, folds, seed, rule, [&](const ScreenshotRecord& shot) {
        return fs::relative(cache.path_of(shot.screenshot_id), cache.root()).generic_string();
      });
  if (out.empty()) out = default_manifest(cache_dir, system.display_name);
  write_manifest(manifest, out);

  json j{{"system", system.display_name},
         {"games_total", catalog.size()},
         {"games_selected", curated.games.size()},
         {"screenshots_selected", curated.total_screenshots()},
         {"k", k},
         {"manifest", out.string()}};
  std::cout << j.dump() << "\n";
  return 0;
}

TrainingConfig make_training_config(const std::string& weights, std::uint64_t seed, int epochs,
                                    int batch_size, double val_fraction,
                                    const fs::path& arcade_artifact, fs::path pretrained_dir,
                                    bool freeze_backbone) {
  TrainingConfig config;
  config.seed = seed;
  config.max_epochs = epochs;
  config.batch_size = batch_size;
  config.val_fraction = val_fraction;
  config.freeze_backbone = freeze_backbone;
  config.weights_label = weights;
  if (weights == "random") {
    config.init_mode = InitMode::random;
  } else if (weights == "imagenet") {
    config.init_mode = InitMode::generic_pretrained;
    if (pretrained_dir.empty())
      if (const char* env = std::getenv("GAMEID_PRETRAINED_DIR")) pretrained_dir = env;
    config.pretrained_dir = pretrained_dir;
  } else if (weights == "arcade") {
    config.init_mode = InitMode::transferred;
    if (arcade_artifact.empty())
      raise(ErrorCode::invalid_argument, "--weights arcade requires --arcade-artifact");
    config.transfer_source = arcade_artifact;
  } else {
    raise(ErrorCode::invalid_argument, "unknown weights mode: " + weights);
  }
  return config;
}

fs::path artifact_dir_for(const fs::path& out_root, const std::string& system,
                          const std::string& backbone, const std::string& weights, int fold) {
  const std::string leaf = sanitize_component(backbone) + "_" + weights +
                           (fold >= 0 ? "_fold" + std::to_string(fold) : "_full");
  return out_root / sanitize_component(system) / leaf;
}

int cmd_train(const std::string& system_name, const std::string& backbone,
              const std::string& weights, int fold, fs::path manifest_path,
              const fs::path& cache_dir, const fs::path& out_root, const TrainingConfig& config,
              bool pretrain_mode) {
  if (manifest_path.empty()) manifest_path = default_manifest(cache_dir, system_name);
  const DatasetManifest manifest = read_manifest(manifest_path);
  if (!system_name.empty() && manifest.system.display_name != system_name &&
      manifest.system.provider_id != system_name)
    raise(ErrorCode::invalid_argument, "manifest belongs to system " +
                                           manifest.system.display_name + ", not " + system_name);
  const BackboneSpec& spec = get_backbone_spec(backbone);
  const fs::path artifact =
      artifact_dir_for(out_root, manifest.system.display_name, backbone, weights,
                       pretrain_mode ? -1 : fold);

  const TrainOutcome outcome =
      pretrain_mode ? pretrain_reference(manifest, spec, config, cache_dir, artifact)
                    : train_fold(manifest, fold, spec, config, cache_dir, artifact);

  const auto& last = outcome.log.rows.back();
  json j{{"artifact", outcome.artifact_dir.string()},
         {"epochs_run", outcome.log.epochs_run()},
         {"stop_reason", outcome.log.stop_reason},
         {"best_epoch", outcome.best_epoch},
         {"best_val_loss", outcome.best_val_loss},
         {"final_train_acc", last.train_acc},
         {"final_val_acc", last.val_acc}};
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_eval(const std::string& system_name, fs::path manifest_path, const fs::path& cache_dir,
             const fs::path& artifacts_root, fs::path out, int batch_size) {
  if (manifest_path.empty()) manifest_path = default_manifest(cache_dir, system_name);
  const DatasetManifest manifest = read_manifest(manifest_path);
  const fs::path system_dir = artifacts_root / sanitize_component(manifest.system.display_name);
  if (!fs::exists(system_dir))
    raise(ErrorCode::not_found, "no artifacts under " + system_dir.string());

  std::vector<FoldResult> results;
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(system_dir))
    if (entry.is_directory() && fs::exists(entry.path() / "meta.json")) dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());

  for (const auto& dir : dirs) {
    const ArtifactMeta meta = read_artifact_meta(dir);
    const json training = json::parse(meta.training_config_json.empty() ? "{}"
                                                                        : meta.training_config_json);
    const int fold = training.value("held_out_fold", -1);
    if (fold < 0) continue;  // reference pretraining artifacts have no test fold
    FoldResult r;
    r.system = meta.system_display_name;
    r.architecture = meta.backbone;
    r.weights_mode = training.value("weights_label", "random");
    r.fold = fold;
    r.epochs_run = meta.epochs_run;
    r.accuracy = score_fold_artifact(dir, manifest, fold, cache_dir, batch_size).accuracy;
    results.push_back(std::move(r));
  }
  if (results.empty())
    raise(ErrorCode::not_found, "no fold artifacts found in " + system_dir.string());

  if (out.empty()) out = system_dir / "fold_results.csv";
  write_fold_results_csv(results, out);
  json j{{"system", manifest.system.display_name},
         {"artifacts_scored", results.size()},
         {"results", out.string()}};
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_report(const std::vector<std::string>& results_files, const std::string& summaries_dir,
               const std::string& format, const fs::path& out_dir, int k) {
  std::vector<GroupSummary> groups;
  if (!summaries_dir.empty())
    groups = load_group_summaries_dir(summaries_dir);

  std::map<GroupKey, std::vector<FoldResult>> grouped;
  for (const auto& file : results_files)
    for (auto& r : read_fold_results_csv(file))
      grouped[{r.system, r.architecture, r.weights_mode}].push_back(std::move(r));
  for (auto& [key, folds] : grouped) groups.push_back(aggregate_system(folds, k).summary);

  if (groups.empty())
    raise(ErrorCode::invalid_argument, "report needs --results and/or --summaries");
  const BestCombination best = select_best_combination(groups);
  const auto files = render_report(groups, best, format, out_dir);

  json written = json::array();
  for (const auto& f : files) written.push_back(f.string());
  json j{{"groups", groups.size()},
         {"overall_best_mean", best.overall_mean},
         {"files", written}};
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_identify(const fs::path& artifact, const fs::path& image, int top_k) {
  IdentificationModel model = load_artifact(artifact);
  const Prediction pred = identify_screenshot_file(model, image, top_k);
  std::cout << prediction_to_json(pred, model) << "\n";
  return 0;
}

int cmd_serve(const fs::path& artifact, const std::string& host, int port) {
  auto model = std::make_shared<IdentificationModel>(artifact);
  IdentifyServer server(model);
  std::cerr << "serving " << model->meta().system_display_name << " ("
            << model->meta().backbone << ") on " << host << ":" << port << "\n";
  if (!server.listen(host, port))
    raise(ErrorCode::io_error, "cannot listen on " + host + ":" + std::to_string(port));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"screenshot-to-title identification pipeline"};
  app.require_subcommand(1);

  // fetch
  auto* fetch = app.add_subcommand("fetch", "fetch catalog metadata and screenshot images");
  std::string f_system, f_fixture, f_base_url, f_api_key;
  fs::path f_cache = "cache";
  ProviderOptions popts;
  FetchOptions fopts;
  long backoff_ms = 250;
  fetch->add_option("--system", f_system, "system display name or provider id")->required();
  fetch->add_option("--fixture-dir", f_fixture, "replay a recorded fixture directory");
  fetch->add_option("--base-url", f_base_url, "provider base URL");
  fetch->add_option("--api-key", f_api_key, "provider API key")->envname("MOBYGAMES_API_KEY");
  fetch->add_option("--cache-dir", f_cache, "image cache root");
  fetch->add_option("--page-size", fopts.page_size, "games per listing page");
  fetch->add_option("--rate-limit", popts.requests_per_second, "max requests per second");
  fetch->add_option("--workers", fopts.workers, "concurrent image downloads");
  fetch->add_option("--retries", popts.max_retries, "max retries on 429/5xx");
  fetch->add_option("--backoff-ms", backoff_ms, "initial retry backoff in milliseconds");

  // curate
  auto* curate = app.add_subcommand("curate", "apply the selection rule and assign folds");
  std::string c_system;
  std::uint64_t c_seed = 0;
  fs::path c_cache = "cache", c_out;
  int c_min = 5, c_k = 5;
  curate->add_option("--system", c_system, "system display name")->required();
  curate->add_option("--seed", c_seed, "deterministic shuffle seed")->required();
  curate->add_option("--cache-dir", c_cache, "image cache root");
  curate->add_option("--min-screenshots", c_min, "selection threshold");
  curate->add_option("--folds", c_k, "fold count");
  curate->add_option("--out", c_out, "manifest output path");

  // train / pretrain share options
  std::string t_system, t_backbone, t_weights = "random";
  int t_fold = 0, t_epochs = 50, t_batch = 32;
  std::uint64_t t_seed = 0;
  double t_val_fraction = 0.2;
  fs::path t_manifest, t_cache = "cache", t_out = "artifacts", t_arcade, t_pretrained;
  bool t_freeze = false;

  auto add_train_options = [&](CLI::App* cmd, bool with_fold) {
    cmd->add_option("--system", t_system, "system display name");
    cmd->add_option("--backbone", t_backbone, "architecture name")->required();
    cmd->add_option("--weights", t_weights, "random | imagenet | arcade");
    if (with_fold) cmd->add_option("--fold", t_fold, "held-out fold index")->required();
    cmd->add_option("--manifest", t_manifest, "dataset manifest path");
    cmd->add_option("--cache-dir", t_cache, "image cache root");
    cmd->add_option("--out", t_out, "artifacts output root");
    cmd->add_option("--seed", t_seed, "training seed");
    cmd->add_option("--epochs", t_epochs, "epoch cap");
    cmd->add_option("--batch-size", t_batch, "batch size");
    cmd->add_option("--val-fraction", t_val_fraction, "validation fraction");
    cmd->add_option("--arcade-artifact", t_arcade, "transfer source artifact dir");
    cmd->add_option("--pretrained-dir", t_pretrained, "generic pretrained weight store");
    cmd->add_flag("--freeze-backbone", t_freeze, "train the head only");
  };
  auto* train = app.add_subcommand("train", "train one fold of a system");
  add_train_options(train, true);
  auto* pretrain = app.add_subcommand("pretrain", "train a transfer-source model on a full manifest");
  add_train_options(pretrain, false);

  // eval
  auto* eval = app.add_subcommand("eval", "score fold artifacts on their held-out folds");
  std::string e_system;
  fs::path e_manifest, e_cache = "cache", e_artifacts = "artifacts", e_out;
  int e_batch = 32;
  eval->add_option("--system", e_system, "system display name")->required();
  eval->add_option("--manifest", e_manifest, "dataset manifest path");
  eval->add_option("--cache-dir", e_cache, "image cache root");
  eval->add_option("--artifacts", e_artifacts, "artifacts root");
  eval->add_option("--out", e_out, "fold results csv path");
  eval->add_option("--batch-size", e_batch, "scoring batch size");

  // report
  auto* report = app.add_subcommand("report", "aggregate results into report tables");
  std::vector<std::string> r_results;
  std::string r_summaries, r_format = "csv";
  fs::path r_out = "reports";
  int r_k = 5;
  report->add_option("--results", r_results, "fold results csv files");
  report->add_option("--summaries", r_summaries, "directory of group summary csv files");
  report->add_option("--format", r_format, "csv | markdown");
  report->add_option("--out", r_out, "report output directory");
  report->add_option("--folds", r_k, "expected folds per group");

  // identify
  auto* identify = app.add_subcommand("identify", "classify a screenshot against an artifact");
  fs::path i_artifact, i_image;
  int i_top_k = 5;
  identify->add_option("--artifact", i_artifact, "trained artifact directory")->required();
  identify->add_option("--top-k", i_top_k, "ranked results to return");
  identify->add_option("image", i_image, "screenshot file")->required();

  // serve
  auto* serve = app.add_subcommand("serve", "read-only identification http endpoint");
  fs::path s_artifact;
  std::string s_host = "127.0.0.1";
  int s_port = 8080;
  serve->add_option("--artifact", s_artifact, "trained artifact directory")->required();
  serve->add_option("--host", s_host, "bind address");
  serve->add_option("--port", s_port, "bind port");

  CLI11_PARSE(app, argc, argv);

  try {
    if (fetch->parsed()) {
      popts.backoff_base = std::chrono::milliseconds(backoff_ms);
      return cmd_fetch(f_system, f_fixture, f_base_url, f_api_key, f_cache, popts, fopts);
    }
    if (curate->parsed()) return cmd_curate(c_system, c_seed, c_cache, c_min, c_k, c_out);
    if (train->parsed() || pretrain->parsed()) {
      const TrainingConfig config = make_training_config(
          t_weights, t_seed, t_epochs, t_batch, t_val_fraction, t_arcade, t_pretrained, t_freeze);
      return cmd_train(t_system, t_backbone, t_weights, t_fold, t_manifest, t_cache, t_out,
                       config, pretrain->parsed());
    }
    if (eval->parsed()) return cmd_eval(e_system, e_manifest, e_cache, e_artifacts, e_out, e_batch);
    if (report->parsed()) return cmd_report(r_results, r_summaries, r_format, r_out, r_k);
    if (identify->parsed()) return cmd_identify(i_artifact, i_image, i_top_k);
    if (serve->parsed()) return cmd_serve(s_artifact, s_host, s_port);
  } catch (const Error& e) {
    std::cerr << json{{"error", {{"code", e.code_name()}, {"message", e.what()}}}}.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", {{"code", "internal"}, {"message", e.what()}}}}.dump() << "\n";
    return 1;
  }
  return 0;
}
