#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "gameid/catalog.hpp"
#include "gameid/curation.hpp"
#include "gameid/error.hpp"
#include "gameid/evaluation.hpp"
#include "gameid/identify.hpp"
#include "gameid/training.hpp"

namespace py = pybind11;
using namespace gameid;

namespace {

py::dict spec_to_dict(const BackboneSpec& spec) {
  py::dict d;
  d["name"] = spec.name;
  d["input_resolution"] = spec.input_resolution;
  if (spec.feature_shape.is_1d()) {
    d["feature_shape"] = py::make_tuple(spec.feature_shape.token_dim);
  } else {
    d["feature_shape"] = py::make_tuple(spec.feature_shape.w, spec.feature_shape.y,
                                        spec.feature_shape.z);
  }
  d["param_count_m"] = spec.param_count_m;
  d["preprocessing_id"] = spec.preprocessing_id;
  d["pooled"] = spec.pooled;
  return d;
}

CuratedSet curated_from_py(const py::list& games) {
  CuratedSet set;
  for (const auto& item : games) {
    const py::dict g = item.cast<py::dict>();
    CuratedGame game;
    game.game_id = g["game_id"].cast<std::string>();
    game.title = g.contains("title") ? g["title"].cast<std::string>() : game.game_id;
    for (const auto& sid : g["screenshots"].cast<py::list>()) {
      ScreenshotRecord r;
      r.screenshot_id = sid.cast<std::string>();
      r.game_id = game.game_id;
      game.screenshots.push_back(std::move(r));
    }
    set.games.push_back(std::move(game));
  }
  return set;
}

TrainingConfig config_from_kwargs(std::uint64_t seed, int max_epochs, int batch_size,
                                  double val_fraction, const std::string& weights,
                                  const std::string& transfer_source) {
  TrainingConfig config;
  config.seed = seed;
  config.max_epochs = max_epochs;
  config.batch_size = batch_size;
  config.val_fraction = val_fraction;
  config.weights_label = weights;
  if (weights == "random") {
    config.init_mode = InitMode::random;
  } else if (weights == "arcade") {
    config.init_mode = InitMode::transferred;
    config.transfer_source = transfer_source;
  } else if (weights == "imagenet") {
    config.init_mode = InitMode::generic_pretrained;
  } else {
    raise(ErrorCode::invalid_argument, "unknown weights mode: " + weights);
  }
  return config;
}

py::dict outcome_to_dict(const TrainOutcome& outcome) {
  py::dict d;
  d["artifact"] = outcome.artifact_dir.string();
  d["epochs_run"] = outcome.log.epochs_run();
  d["stop_reason"] = outcome.log.stop_reason;
  d["best_epoch"] = outcome.best_epoch;
  py::list lrs;
  for (const auto& row : outcome.log.rows) lrs.append(row.lr);
  d["lr_column"] = lrs;
  d["final_train_acc"] = outcome.log.rows.back().train_acc;
  return d;
}

}  // namespace

PYBIND11_MODULE(_gameid, m) {
  m.doc() = "screenshot-to-title identification pipeline";

  py::register_exception<Error>(m, "GameidError");

  // registry
  m.def("list_architectures", []() {
    py::list out;
    for (const auto& spec : backbone_registry()) out.append(spec_to_dict(spec));
    return out;
  });
  m.def("get_backbone_spec",
        [](const std::string& name) { return spec_to_dict(get_backbone_spec(name)); },
        py::arg("name"));

  // curation
  m.def(
      "select_games",
      [](const py::list& catalog, int min_screenshots) {
        std::vector<GameRecord> records;
        for (const auto& item : catalog) {
          const py::dict g = item.cast<py::dict>();
          GameRecord rec;
          rec.game_id = g["game_id"].cast<std::string>();
          rec.title = g.contains("title") ? g["title"].cast<std::string>() : rec.game_id;
          for (const auto& sid : g["screenshots"].cast<py::list>()) {
            ScreenshotRecord s;
            s.screenshot_id = sid.cast<std::string>();
            s.game_id = rec.game_id;
            rec.screenshots.push_back(std::move(s));
          }
          records.push_back(std::move(rec));
        }
        const CuratedSet curated = select_games(records, CurationRule{min_screenshots});
        py::list out;
        for (const auto& g : curated.games) {
          py::dict d;
          d["game_id"] = g.game_id;
          py::list shots;
          for (const auto& s : g.screenshots) shots.append(s.screenshot_id);
          d["screenshots"] = shots;
          out.append(d);
        }
        return out;
      },
      py::arg("catalog"), py::arg("min_screenshots") = 5);

  m.def(
      "assign_folds",
      [](const py::list& curated_games, int k, std::uint64_t seed) {
        const FoldAssignment folds = assign_folds(curated_from_py(curated_games), k, seed);
        py::dict out;
        for (const auto& [id, fold] : folds.fold_of) out[py::str(id)] = fold;
        return out;
      },
      py::arg("curated_games"), py::arg("k") = 5, py::arg("seed") = 0);

  m.def("read_manifest_header", [](const std::filesystem::path& file) {
    const DatasetManifest manifest = read_manifest(file);
    py::dict d;
    d["system"] = manifest.system.display_name;
    d["seed"] = manifest.seed;
    d["k"] = manifest.k;
    d["min_screenshots"] = manifest.rule.min_screenshots;
    d["records"] = manifest.records.size();
    d["classes"] = manifest.class_order.size();
    return d;
  });

  m.def(
      "split_train_val",
      [](const std::filesystem::path& manifest_file, int held_out_fold, double val_fraction,
         std::uint64_t seed) {
        const DatasetManifest manifest = read_manifest(manifest_file);
        const SplitSpec spec = split_train_val(manifest, held_out_fold, val_fraction, seed);
        py::dict out;
        for (const auto& [id, subset] : spec.subset_of) out[py::str(id)] = subset_name(subset);
        return out;
      },
      py::arg("manifest"), py::arg("held_out_fold"), py::arg("val_fraction") = 0.2,
      py::arg("seed") = 0);

  // schedule
  m.def(
      "simulate_plateau",
      [](const std::vector<double>& accuracies, double initial_lr, double factor, int patience,
         double min_lr) {
        PlateauConfig cfg{initial_lr, factor, patience, min_lr};
        ScheduleState state;
        state.current_lr = initial_lr;
        std::vector<double> lrs;
        for (double acc : accuracies) {
          state = plateau_step(state, acc, cfg);
          lrs.push_back(state.current_lr);
        }
        return lrs;
      },
      py::arg("accuracies"), py::arg("initial_lr") = 1e-3, py::arg("factor") = 0.5,
      py::arg("patience") = 2, py::arg("min_lr") = 1e-5);

  m.def("early_stop_should_stop", &early_stop_should_stop, py::arg("val_loss_history"),
        py::arg("patience") = 10);

  // evaluation
  m.def(
      "aggregate_system",
      [](const py::list& folds, int expect_k) {
        std::vector<FoldResult> results;
        for (const auto& item : folds) {
          const py::dict f = item.cast<py::dict>();
          FoldResult r;
          r.system = f["system"].cast<std::string>();
          r.architecture = f["architecture"].cast<std::string>();
          r.weights_mode = f["weights"].cast<std::string>();
          r.fold = f["fold"].cast<int>();
          r.accuracy = f["accuracy"].cast<double>();
          r.epochs_run = f.contains("epochs") ? f["epochs"].cast<int>() : 0;
          results.push_back(std::move(r));
        }
        const SystemReport report = aggregate_system(results, expect_k);
        py::dict d;
        d["mean_accuracy"] = report.summary.mean_accuracy;
        d["std_accuracy"] = report.summary.std_accuracy;
        d["mean_epochs"] = report.summary.mean_epochs;
        d["std_epochs"] = report.summary.std_epochs;
        return d;
      },
      py::arg("folds"), py::arg("expect_k") = 5);

  m.def(
      "select_best_combination",
      [](const py::list& groups) {
        std::vector<GroupSummary> summaries;
        for (const auto& item : groups) {
          const py::dict g = item.cast<py::dict>();
          GroupSummary s;
          s.key = {g["system"].cast<std::string>(), g["architecture"].cast<std::string>(),
                   g["weights"].cast<std::string>()};
          s.mean_accuracy = g["mean_accuracy"].cast<double>();
          summaries.push_back(std::move(s));
        }
        const BestCombination best = select_best_combination(summaries);
        py::list per_system;
        for (const auto& entry : best.per_system) {
          py::dict d;
          d["system"] = entry.system;
          py::list winners;
          for (const auto& [arch, weights] : entry.winners)
            winners.append(py::make_tuple(arch, weights));
          d["winners"] = winners;
          d["accuracy"] = entry.accuracy;
          per_system.append(d);
        }
        py::dict out;
        out["per_system"] = per_system;
        out["overall_mean"] = best.overall_mean;
        return out;
      },
      py::arg("groups"));

  m.def("load_group_summaries", [](const std::filesystem::path& file) {
    py::list out;
    for (const auto& g : load_group_summaries_csv(file)) {
      py::dict d;
      d["system"] = g.key.system;
      d["architecture"] = g.key.architecture;
      d["weights"] = g.key.weights_mode;
      d["mean_accuracy"] = g.mean_accuracy;
      d["std_accuracy"] = g.std_accuracy;
      if (g.has_epochs) {
        d["mean_epochs"] = g.mean_epochs;
        d["std_epochs"] = g.std_epochs;
      }
      out.append(d);
    }
    return out;
  });

  // training / scoring / identification on paths
  m.def(
      "train_fold",
      [](const std::filesystem::path& manifest_file, int held_out_fold,
         const std::string& backbone, const std::filesystem::path& cache_dir,
         const std::filesystem::path& out_dir, std::uint64_t seed, int max_epochs, int batch_size,
         double val_fraction, const std::string& weights, const std::string& transfer_source) {
        const DatasetManifest manifest = read_manifest(manifest_file);
        const TrainingConfig config = config_from_kwargs(seed, max_epochs, batch_size,
                                                         val_fraction, weights, transfer_source);
        return outcome_to_dict(train_fold(manifest, held_out_fold, get_backbone_spec(backbone),
                                          config, cache_dir, out_dir));
      },
      py::arg("manifest"), py::arg("held_out_fold"), py::arg("backbone"), py::arg("cache_dir"),
      py::arg("out_dir"), py::arg("seed") = 0, py::arg("max_epochs") = 50,
      py::arg("batch_size") = 32, py::arg("val_fraction") = 0.2, py::arg("weights") = "random",
      py::arg("transfer_source") = "");

  m.def(
      "pretrain_reference",
      [](const std::filesystem::path& manifest_file, const std::string& backbone,
         const std::filesystem::path& cache_dir, const std::filesystem::path& out_dir,
         std::uint64_t seed, int max_epochs, int batch_size, double val_fraction) {
        const DatasetManifest manifest = read_manifest(manifest_file);
        const TrainingConfig config =
            config_from_kwargs(seed, max_epochs, batch_size, val_fraction, "random", "");
        return outcome_to_dict(pretrain_reference(manifest, get_backbone_spec(backbone), config,
                                                  cache_dir, out_dir));
      },
      py::arg("manifest"), py::arg("backbone"), py::arg("cache_dir"), py::arg("out_dir"),
      py::arg("seed") = 0, py::arg("max_epochs") = 50, py::arg("batch_size") = 32,
      py::arg("val_fraction") = 0.2);

  m.def(
      "score_fold",
      [](const std::filesystem::path& artifact, const std::filesystem::path& manifest_file,
         int fold, const std::filesystem::path& cache_dir, int batch_size) {
        const DatasetManifest manifest = read_manifest(manifest_file);
        const ScoredFold scored = score_fold_artifact(artifact, manifest, fold, cache_dir,
                                                      batch_size);
        py::dict d;
        d["accuracy"] = scored.accuracy;
        d["correct"] = scored.correct;
        d["total"] = scored.total;
        return d;
      },
      py::arg("artifact"), py::arg("manifest"), py::arg("fold"), py::arg("cache_dir"),
      py::arg("batch_size") = 32);

  m.def(
      "identify",
      [](const std::filesystem::path& artifact, const std::filesystem::path& image, int top_k) {
        IdentificationModel model = load_artifact(artifact);
        const Prediction pred = identify_screenshot_file(model, image, top_k);
        py::list out;
        for (const auto& e : pred.entries) {
          py::dict d;
          d["game_id"] = e.game_id;
          d["title"] = e.title;
          d["probability"] = e.probability;
          out.append(d);
        }
        return out;
      },
      py::arg("artifact"), py::arg("image"), py::arg("top_k") = 5);
}
