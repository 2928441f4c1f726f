#include "gameid/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "gameid/error.hpp"
#include "gameid/image.hpp"

namespace gameid {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Canonical orders
// ---------------------------------------------------------------------------

const std::vector<std::string>& canonical_system_order() {
  static const std::vector<std::string> order = {
      "Atari 2600",      "NES",          "Master System",  "PC Engine",
      "Mega Drive",      "Super Nintendo", "Sega Saturn",  "PlayStation",
      "Nintendo 64",     "Dreamcast",    "PlayStation 2",  "GameCube",
      "Xbox",            "Xbox 360",     "PlayStation 3",  "Wii",
      "Wii U",           "PlayStation 4", "Xbox One",      "Nintendo Switch",
      "Xbox Series X/S", "PlayStation 5",
  };
  return order;
}

std::vector<std::string> canonical_architecture_order() {
  std::vector<std::string> out;
  for (const auto& spec : backbone_registry()) out.push_back(spec.name);
  return out;
}

const std::vector<std::string>& canonical_weights_order() {
  static const std::vector<std::string> order = {"random", "imagenet", "arcade"};
  return order;
}

namespace {

int order_index(const std::vector<std::string>& order, const std::string& name) {
  for (std::size_t i = 0; i < order.size(); ++i)
    if (order[i] == name) return static_cast<int>(i);
  return static_cast<int>(order.size());
}

// canonical position first, unknown names alphabetically after
bool canonical_less(const std::vector<std::string>& order, const std::string& a,
                    const std::string& b) {
  const int ia = order_index(order, a), ib = order_index(order, b);
  if (ia != ib) return ia < ib;
  return a < b;
}

}  // namespace

std::string format_percent(double fraction) {
  const double pp = fraction * 100.0;
  const double rounded = std::floor(pp * 100.0 + 0.5) / 100.0;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", rounded);
  return buf;
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

SystemReport aggregate_system(const std::vector<FoldResult>& results, int expect_k) {
  if (results.empty()) raise(ErrorCode::invalid_argument, "no fold results to aggregate");
  const GroupKey key{results.front().system, results.front().architecture,
                     results.front().weights_mode};
  for (const auto& r : results) {
    if (GroupKey{r.system, r.architecture, r.weights_mode} != key)
      raise(ErrorCode::invalid_argument, "mixed group keys in aggregation");
    if (r.accuracy < 0.0 || r.accuracy > 1.0)
      raise(ErrorCode::invalid_argument, "fold accuracy out of [0,1]");
  }
  if (static_cast<int>(results.size()) != expect_k)
    raise(ErrorCode::invalid_argument,
          "expected " + std::to_string(expect_k) + " fold results, got " +
              std::to_string(results.size()));

  auto mean_of = [&](auto&& get) {
    double s = 0.0;
    for (const auto& r : results) s += get(r);
    return s / static_cast<double>(results.size());
  };
  auto pop_std = [&](auto&& get, double mean) {
    double s = 0.0;
    for (const auto& r : results) {
      const double d = get(r) - mean;
      s += d * d;
    }
    return std::sqrt(s / static_cast<double>(results.size()));
  };

  SystemReport report;
  report.folds = results;
  std::sort(report.folds.begin(), report.folds.end(),
            [](const auto& a, const auto& b) { return a.fold < b.fold; });
  report.summary.key = key;
  report.summary.n = static_cast<int>(results.size());
  report.summary.mean_accuracy = mean_of([](const FoldResult& r) { return r.accuracy; });
  report.summary.std_accuracy =
      pop_std([](const FoldResult& r) { return r.accuracy; }, report.summary.mean_accuracy);
  report.summary.mean_epochs =
      mean_of([](const FoldResult& r) { return static_cast<double>(r.epochs_run); });
  report.summary.std_epochs = pop_std(
      [](const FoldResult& r) { return static_cast<double>(r.epochs_run); },
      report.summary.mean_epochs);
  report.summary.has_epochs = true;
  return report;
}

BestCombination select_best_combination(const std::vector<GroupSummary>& groups) {
  if (groups.empty()) raise(ErrorCode::invalid_argument, "no groups to select from");

  std::map<std::string, std::vector<const GroupSummary*>> by_system;
  for (const auto& g : groups) by_system[g.key.system].push_back(&g);

  std::vector<std::string> systems;
  for (const auto& [system, _] : by_system) systems.push_back(system);
  std::sort(systems.begin(), systems.end(), [](const std::string& a, const std::string& b) {
    return canonical_less(canonical_system_order(), a, b);
  });

  BestCombination best;
  double acc_sum = 0.0;
  const auto arch_order = canonical_architecture_order();
  for (const auto& system : systems) {
    const auto& members = by_system[system];
    double max_acc = -1.0;
    for (const auto* g : members) max_acc = std::max(max_acc, g->mean_accuracy);

    BestEntry entry;
    entry.system = system;
    entry.accuracy = max_acc;
    for (const auto* g : members)
      if (std::abs(g->mean_accuracy - max_acc) <= 1e-12)
        entry.winners.emplace_back(g->key.architecture, g->key.weights_mode);
    std::sort(entry.winners.begin(), entry.winners.end(),
              [&](const auto& a, const auto& b) {
                const int ia = order_index(arch_order, a.first);
                const int ib = order_index(arch_order, b.first);
                if (ia != ib) return ia < ib;
                return order_index(canonical_weights_order(), a.second) <
                       order_index(canonical_weights_order(), b.second);
              });
    acc_sum += max_acc;
    best.per_system.push_back(std::move(entry));
  }
  best.overall_mean = acc_sum / static_cast<double>(best.per_system.size());
  return best;
}

// ---------------------------------------------------------------------------
// Fold scoring
// ---------------------------------------------------------------------------

ScoredFold score_fold(ClassifierModel& model, const DatasetManifest& manifest, int fold,
                      const fs::path& cache_root, int batch_size) {
  if (fold < 0 || fold >= manifest.k)
    raise(ErrorCode::invalid_argument, "fold index out of range");
  std::unordered_map<std::string, int> label_of;
  for (std::size_t i = 0; i < model.class_order().size(); ++i)
    label_of[model.class_order()[i]] = static_cast<int>(i);

  std::vector<const ManifestRecord*> members;
  for (const auto& r : manifest.records)
    if (r.fold == fold) members.push_back(&r);
  if (members.empty()) raise(ErrorCode::invalid_argument, "fold is empty");
  for (const auto* r : members)
    if (!label_of.count(r->game_id))
      raise(ErrorCode::invalid_argument,
            "fold contains game unknown to the model: " + r->game_id);

  const int res = model.spec().input_resolution;
  nn::FwdContext ctx;
  ScoredFold scored;
  scored.total = members.size();

  for (std::size_t begin = 0; begin < members.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(members.size(), begin + static_cast<std::size_t>(batch_size));
    nn::Tensor batch({static_cast<int>(end - begin), 3, res, res});
    std::vector<int> labels;
    const std::size_t stride = static_cast<std::size_t>(3) * res * res;
    for (std::size_t i = begin; i < end; ++i) {
      const fs::path file = cache_root / members[i]->path;
      std::ifstream in(file, std::ios::binary);
      if (!in)
        raise(ErrorCode::missing_image, "image missing from cache: " + members[i]->screenshot_id);
      ImageBlob bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      nn::Tensor img = preprocess_image(bytes, res, model.spec().preprocessing_id);
      std::copy(img.data.begin(), img.data.end(), batch.data.begin() + (i - begin) * stride);
      labels.push_back(label_of.at(members[i]->game_id));
    }
    nn::Tensor probs = model.probabilities(batch, ctx);
    const int g = probs.dim(1);
    for (std::size_t i = 0; i < end - begin; ++i) {
      const float* row = probs.data.data() + i * static_cast<std::size_t>(g);
      int arg = 0;
      for (int c = 1; c < g; ++c)
        if (row[c] > row[arg]) arg = c;
      if (arg == labels[i]) ++scored.correct;
    }
  }
  scored.accuracy = static_cast<double>(scored.correct) / static_cast<double>(scored.total);
  return scored;
}

ScoredFold score_fold_artifact(const fs::path& artifact_dir, const DatasetManifest& manifest,
                               int fold, const fs::path& cache_root, int batch_size) {
  ClassifierModel model = load_classifier_artifact(artifact_dir);
  return score_fold(model, manifest, fold, cache_root, batch_size);
}

// ---------------------------------------------------------------------------
// Results io
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

}  // namespace

void write_fold_results_csv(const std::vector<FoldResult>& results, const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::trunc);
  if (!out) raise(ErrorCode::io_error, "cannot write " + file.string());
  out << "system,architecture,weights,fold,accuracy,epochs\n";
  char buf[64];
  for (const auto& r : results) {
    std::snprintf(buf, sizeof(buf), ",%d,%.10g,%d\n", r.fold, r.accuracy, r.epochs_run);
    out << r.system << ',' << r.architecture << ',' << r.weights_mode << buf;
  }
}

std::vector<FoldResult> read_fold_results_csv(const fs::path& file) {
  std::ifstream in(file);
  if (!in) raise(ErrorCode::io_error, "cannot open " + file.string());
  std::string line;
  if (!std::getline(in, line)) raise(ErrorCode::unknown_format, "empty results file");
  std::vector<FoldResult> out;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto cols = split_csv_line(line);
    if (cols.size() != 6)
      raise(ErrorCode::unknown_format, "bad results row: " + line);
    FoldResult r;
    r.system = trim(cols[0]);
    r.architecture = trim(cols[1]);
    r.weights_mode = trim(cols[2]);
    r.fold = std::stoi(cols[3]);
    r.accuracy = std::stod(cols[4]);
    r.epochs_run = std::stoi(cols[5]);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<GroupSummary> load_group_summaries_csv(const fs::path& file) {
  std::ifstream in(file);
  if (!in) raise(ErrorCode::io_error, "cannot open " + file.string());
  std::string line;
  if (!std::getline(in, line)) raise(ErrorCode::unknown_format, "empty summary file");
  const auto header = split_csv_line(line);
  if (header.size() < 5 || trim(header[0]) != "system")
    raise(ErrorCode::unknown_format, "unexpected summary header in " + file.string());
  const bool with_epochs = header.size() >= 7;

  std::map<GroupKey, GroupSummary> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto cols = split_csv_line(line);
    if (cols.size() < 5) raise(ErrorCode::unknown_format, "bad summary row: " + line);
    GroupSummary g;
    g.key = {trim(cols[0]), trim(cols[1]), trim(cols[2])};
    g.mean_accuracy = std::stod(cols[3]) / 100.0;
    g.std_accuracy = std::stod(cols[4]) / 100.0;
    if (with_epochs && cols.size() >= 7 && !trim(cols[5]).empty()) {
      g.mean_epochs = std::stod(cols[5]);
      g.std_epochs = std::stod(cols[6]);
      g.has_epochs = true;
    }
    auto [it, inserted] = rows.emplace(g.key, g);
    if (!inserted) {
      const auto& prev = it->second;
      const bool same = std::abs(prev.mean_accuracy - g.mean_accuracy) <= 1e-12 &&
                        std::abs(prev.std_accuracy - g.std_accuracy) <= 1e-12;
      if (!same)
        raise(ErrorCode::unknown_format,
              "conflicting duplicate summary for " + g.key.system + "/" + g.key.architecture +
                  "/" + g.key.weights_mode);
    }
  }
  std::vector<GroupSummary> out;
  for (auto& [_, g] : rows) out.push_back(g);
  return out;
}

std::vector<GroupSummary> load_group_summaries_dir(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".csv") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) raise(ErrorCode::io_error, "no summary csv files in " + dir.string());

  std::map<GroupKey, GroupSummary> merged;
  for (const auto& file : files) {
    for (auto& g : load_group_summaries_csv(file)) {
      auto [it, inserted] = merged.emplace(g.key, g);
      if (!inserted) {
        const auto& prev = it->second;
        if (std::abs(prev.mean_accuracy - g.mean_accuracy) > 1e-12)
          raise(ErrorCode::unknown_format,
                "conflicting duplicate summary for " + g.key.system + "/" +
                    g.key.architecture + "/" + g.key.weights_mode);
        if (!prev.has_epochs && g.has_epochs) it->second = g;
      }
    }
  }
  std::vector<GroupSummary> out;
  for (auto& [_, g] : merged) out.push_back(g);
  return out;
}

// ---------------------------------------------------------------------------
// Report rendering
// ---------------------------------------------------------------------------

namespace {

struct Grid {
  std::vector<std::string> systems;
  std::vector<std::string> architectures;
  std::map<std::pair<std::string, std::string>, const GroupSummary*> cells;
};

Grid build_grid(const std::vector<GroupSummary>& groups, const std::string& mode) {
  Grid grid;
  std::set<std::string> systems, archs;
  for (const auto& g : groups) {
    if (g.key.weights_mode != mode) continue;
    systems.insert(g.key.system);
    archs.insert(g.key.architecture);
    grid.cells[{g.key.system, g.key.architecture}] = &g;
  }
  grid.systems.assign(systems.begin(), systems.end());
  grid.architectures.assign(archs.begin(), archs.end());
  std::sort(grid.systems.begin(), grid.systems.end(), [](const auto& a, const auto& b) {
    return canonical_less(canonical_system_order(), a, b);
  });
  const auto arch_order = canonical_architecture_order();
  std::sort(grid.architectures.begin(), grid.architectures.end(),
            [&](const auto& a, const auto& b) { return canonical_less(arch_order, a, b); });
  return grid;
}

std::string epochs_cell(const GroupSummary& g) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f (%.1f)", g.mean_epochs, g.std_epochs);
  return buf;
}

std::string accuracy_cell(const GroupSummary& g) {
  return format_percent(g.mean_accuracy) + " (" + format_percent(g.std_accuracy) + ")";
}

void write_table(const fs::path& file, const std::string& format, const std::string& corner,
                 const Grid& grid, const std::function<std::string(const GroupSummary&)>& cell) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorCode::io_error, "cannot write " + file.string());
  const bool md = format == "markdown";
  const std::string missing = md ? "&mdash;" : "-";

  if (md) {
    out << "| " << corner;
    for (const auto& a : grid.architectures) out << " | " << a;
    out << " |\n|";
    for (std::size_t i = 0; i <= grid.architectures.size(); ++i) out << " --- |";
    out << "\n";
  } else {
    out << corner;
    for (const auto& a : grid.architectures) out << ',' << a;
    out << "\n";
  }
  for (const auto& s : grid.systems) {
    if (md) out << "| ";
    out << s;
    for (const auto& a : grid.architectures) {
      auto it = grid.cells.find({s, a});
      const std::string text = it == grid.cells.end() ? missing : cell(*it->second);
      out << (md ? " | " : ",") << text;
    }
    out << (md ? " |\n" : "\n");
  }
}

}  // namespace

std::vector<fs::path> render_report(const std::vector<GroupSummary>& groups,
                                    const BestCombination& best, const std::string& format,
                                    const fs::path& out_dir) {
  if (format != "csv" && format != "markdown")
    raise(ErrorCode::unknown_format, "unknown report format: " + format);
  const std::string ext = format == "csv" ? ".csv" : ".md";
  fs::create_directories(out_dir);
  std::vector<fs::path> written;

  for (const auto& mode : canonical_weights_order()) {
    Grid grid = build_grid(groups, mode);
    if (grid.cells.empty()) continue;
    const fs::path acc_file = out_dir / ("accuracy_" + mode + ext);
    write_table(acc_file, format, "system", grid, accuracy_cell);
    written.push_back(acc_file);

    bool any_epochs = false;
    for (const auto& [_, g] : grid.cells) any_epochs |= g->has_epochs;
    if (any_epochs) {
      Grid epochs_grid = grid;
      for (auto it = epochs_grid.cells.begin(); it != epochs_grid.cells.end();)
        it = it->second->has_epochs ? std::next(it) : epochs_grid.cells.erase(it);
      const fs::path ep_file = out_dir / ("epochs_" + mode + ext);
      write_table(ep_file, format, "system", epochs_grid, epochs_cell);
      written.push_back(ep_file);
    }
  }

  const fs::path best_file = out_dir / ("best_combination" + ext);
  {
    std::ofstream out(best_file, std::ios::binary | std::ios::trunc);
    const bool md = format == "markdown";
    if (md)
      out << "| system | architecture | weights | accuracy |\n| --- | --- | --- | --- |\n";
    else
      out << "system,architecture,weights,accuracy\n";
    for (const auto& entry : best.per_system) {
      std::string archs;
      std::vector<std::string> modes;
      for (std::size_t i = 0; i < entry.winners.size(); ++i) {
        if (i) archs += " / ";
        archs += entry.winners[i].first;
        if (std::find(modes.begin(), modes.end(), entry.winners[i].second) == modes.end())
          modes.push_back(entry.winners[i].second);
      }
      std::string weights;
      for (std::size_t i = 0; i < modes.size(); ++i) {
        if (i) weights += " / ";
        weights += modes[i];
      }
      if (md)
        out << "| " << entry.system << " | " << archs << " | " << weights << " | "
            << format_percent(entry.accuracy) << " |\n";
      else
        out << entry.system << ',' << archs << ',' << weights << ','
            << format_percent(entry.accuracy) << "\n";
    }
    if (md)
      out << "| average |  |  | " << format_percent(best.overall_mean) << " |\n";
    else
      out << "average,,," << format_percent(best.overall_mean) << "\n";
  }
  written.push_back(best_file);
  return written;
}

}  // namespace gameid
