#include "cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "cellloc/classify.hpp"
#include "cellloc/dataset.hpp"
#include "cellloc/error.hpp"
#include "cellloc/eval.hpp"
#include "cellloc/postprocess.hpp"
#include "cellloc/synth.hpp"
#include "manifest.hpp"

namespace cellloc::cli {

const char* const kToolVersion = "cellloc 0.3.0";

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Small IO helpers

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed for " + path.string());
}

json parse_json_file(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void reject_unknown(const json& cfg, const std::set<std::string>& known,
                    const std::string& what) {
  if (!cfg.is_object()) throw ConfigError(what + " config must be a JSON object");
  for (const auto& [key, _] : cfg.items()) {
    if (!known.count(key)) throw ConfigError(what + " config: unknown key '" + key + "'");
  }
}

template <class Fn>
auto config_field(const char* what, Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
}

fs::path resolve_data_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kDataDirEnv); env && *env) return env;
  throw ConfigError(std::string("no data directory: pass --data or set ") +
                    kDataDirEnv);
}

std::vector<MeasurementSet> load_sets(const fs::path& dir, RunManifest* manifest) {
  auto sets = load_directory(dir);
  if (manifest) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) manifest->add_input(f, f.filename().string());
  }
  return sets;
}

// ---------------------------------------------------------------------------
// Shared config pieces. Every execute_* takes a fully resolved config (all
// defaults filled in) so that the manifest snapshot alone reproduces a run.

json knn_defaults(const json& in) {
  json k = {{"k", 5}, {"standardize", true}};
  if (in.contains("knn")) {
    reject_unknown(in.at("knn"), {"k", "standardize"}, "knn");
    k.update(in.at("knn"));
  }
  return k;
}

KnnParams parse_knn(const json& k) {
  return config_field("knn", [&] {
    KnnParams p;
    p.k = k.at("k").get<std::size_t>();
    p.standardize = k.at("standardize").get<bool>();
    if (p.k == 0) throw ConfigError("knn.k must be >= 1");
    return p;
  });
}

FilterSpec parse_filter(const std::string& text, double epsilon) {
  FilterSpec f = FilterSpec::parse(text);
  if (f.kind == FilterKind::hmm) f.epsilon = epsilon;
  return f;
}

std::vector<SplitPlan> parse_splits(const json& cfg,
                                    const std::vector<MeasurementSet>& sets) {
  const json& s = cfg.at("splits");
  if (s.is_string()) {
    if (s.get<std::string>() != "all") {
      throw ConfigError("splits must be \"all\" or a list of {train, validation}");
    }
    std::vector<std::string> ids;
    for (const auto& set : sets) ids.push_back(set.id());
    const auto n_train = cfg.at("n_train").get<std::size_t>();
    if (n_train >= ids.size()) {
      throw ConfigError("n_train " + std::to_string(n_train) + " needs more than " +
                        std::to_string(ids.size()) + " sets");
    }
    return enumerate_splits(ids, n_train);
  }
  std::vector<SplitPlan> out;
  config_field("splits", [&] {
    for (const auto& item : s) {
      reject_unknown(item, {"train", "validation"}, "split");
      SplitPlan p{item.at("train").get<std::vector<std::string>>(),
                  item.at("validation").get<std::string>()};
      validate_split(p);
      out.push_back(std::move(p));
    }
    return 0;
  });
  if (out.empty()) throw ConfigError("empty split list");
  return out;
}

std::optional<NodeMask> parse_node_names(const json& nodes,
                                         const std::vector<std::string>& labels) {
  if (nodes.is_null()) return std::nullopt;
  return NodeMask::from_names(
      config_field("nodes", [&] { return nodes.get<std::vector<std::string>>(); }),
      labels);
}

/// "all" -> every mask, "full" -> the full mask, or a list of name lists.
std::vector<NodeMask> parse_masks(const json& masks,
                                  const std::vector<std::string>& labels) {
  if (masks.is_string()) {
    const auto m = masks.get<std::string>();
    if (m == "all") {
      if (labels.size() > kMaxEnumeratedNodes) {
        throw ConfigError("too many nodes (" + std::to_string(labels.size()) +
                          ") to sweep all masks; list masks explicitly");
      }
      return enumerate_node_masks(labels.size());
    }
    if (m == "full") return {NodeMask::full(labels.size())};
    throw ConfigError("masks must be \"all\", \"full\" or a list of node lists");
  }
  std::vector<NodeMask> out;
  for (const auto& item : masks) {
    out.push_back(*parse_node_names(item, labels));
  }
  if (out.empty()) throw ConfigError("empty mask list");
  return out;
}

void require_two_sets(const std::vector<MeasurementSet>& sets) {
  if (sets.size() < 2) {
    throw DataError("need at least two measurement sets, found " +
                    std::to_string(sets.size()));
  }
}

void finish_manifest(RunManifest& m, const fs::path& out_dir,
                     const std::vector<std::string>& outputs) {
  for (const auto& name : outputs) m.add_output(out_dir / name, name);
  write_text(out_dir / kManifestName, m.to_json().dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// generate

json resolve_generate(const std::optional<fs::path>& scenario_path,
                      std::optional<std::size_t> count,
                      std::optional<std::uint64_t> seed, const std::string& prefix) {
  Scenario sc = scenario_path ? Scenario::from_json(read_text(*scenario_path))
                              : Scenario::defaults();
  json cfg;
  cfg["scenario"] = json::parse(sc.to_json());
  cfg["count"] = count.value_or(6);
  cfg["seed"] = seed.value_or(sc.channel.seed);
  cfg["prefix"] = prefix;
  return cfg;
}

RunManifest execute_generate(const json& cfg, const fs::path& out_dir,
                             std::ostream& out) {
  reject_unknown(cfg, {"scenario", "count", "seed", "prefix"}, "generate");
  const Scenario sc = Scenario::from_json(cfg.at("scenario").dump());
  const auto count = config_field("count", [&] { return cfg.at("count").get<std::size_t>(); });
  const auto seed = config_field("seed", [&] { return cfg.at("seed").get<std::uint64_t>(); });
  const auto prefix = config_field("prefix", [&] { return cfg.at("prefix").get<std::string>(); });
  if (count == 0) throw ConfigError("count must be >= 1");

  fs::create_directories(out_dir);
  RunManifest m{"generate", kToolVersion, cfg, seed, {}, std::nullopt, {}, {}};
  std::vector<std::string> outputs;
  for (std::size_t i = 0; i < count; ++i) {
    std::ostringstream name;
    name << prefix << '_' << std::setw(2) << std::setfill('0') << (i + 1);
    ChannelParams ch = sc.channel;
    ch.seed = seed + i;
    const auto set = generate(sc.geometry, ch, sc.trajectory, name.str());
    const std::string file = name.str() + ".csv";
    save_set(out_dir / file, set);
    outputs.push_back(file);
  }
  finish_manifest(m, out_dir, outputs);
  out << "generated " << count << " set(s) in " << out_dir.string() << '\n';
  return m;
}

// ---------------------------------------------------------------------------
// evaluate

const std::set<std::string> kEvaluateKeys = {"nodes",  "moment_L",   "knn",
                                             "filter", "hmm_epsilon", "splits",
                                             "n_train", "seed",      "save_models"};

json resolve_evaluate(json in) {
  reject_unknown(in, kEvaluateKeys, "evaluate");
  json cfg = {{"nodes", nullptr},  {"moment_L", 1},   {"filter", "none"},
              {"hmm_epsilon", 1e-6}, {"splits", "all"}, {"n_train", 3},
              {"seed", 0},         {"save_models", false}};
  cfg["knn"] = knn_defaults(in);
  in.erase("knn");
  cfg.update(in);
  return cfg;
}

RunManifest execute_evaluate(const json& cfg, const fs::path& data_dir,
                             const fs::path& out_dir, std::size_t jobs,
                             std::ostream& out) {
  (void)jobs;  // splits run sequentially; reports are small
  reject_unknown(cfg, kEvaluateKeys, "evaluate");
  RunManifest m{"evaluate", kToolVersion, cfg, 0, data_dir, std::nullopt, {}, {}};
  const auto sets = load_sets(data_dir, &m);
  require_two_sets(sets);
  const auto& labels = sets.front().node_labels();

  PipelineConfig pc;
  config_field("evaluate", [&] {
    pc.node_mask = parse_node_names(cfg.at("nodes"), labels);
    pc.moment_L = cfg.at("moment_L").get<std::size_t>();
    pc.knn = parse_knn(cfg.at("knn"));
    pc.filter = parse_filter(cfg.at("filter").get<std::string>(),
                             cfg.at("hmm_epsilon").get<double>());
    pc.seed = cfg.at("seed").get<std::uint64_t>();
    return 0;
  });
  pc.validate();
  m.seed = pc.seed;
  const auto splits = parse_splits(cfg, sets);
  const bool save_models = cfg.at("save_models").get<bool>();

  fs::create_directories(out_dir);
  std::vector<std::string> outputs;
  json reports = json::array();
  double sum = 0.0;
  for (std::size_t k = 0; k < splits.size(); ++k) {
    const auto rep = run_pipeline(sets, splits[k], pc);
    sum += rep.accuracy;
    reports.push_back(json::parse(report_to_json(rep)));

    std::ostringstream pred;
    write_predictions_csv(pred, rep);
    std::ostringstream idx;
    idx << std::setw(3) << std::setfill('0') << k;
    const std::string pred_name = "predictions/" + idx.str() + ".csv";
    write_text(out_dir / pred_name, pred.str());
    outputs.push_back(pred_name);
    if (k == 0) {
      write_text(out_dir / "predictions.csv", pred.str());
      outputs.push_back("predictions.csv");
    }
    if (rep.hmm) {
      const std::string name = "models/hmm_" + idx.str() + ".json";
      write_text(out_dir / name, rep.hmm->to_json() + "\n");
      outputs.push_back(name);
    }
    if (save_models) {
      const std::string name = "models/knn_" + idx.str() + ".json";
      write_text(out_dir / name, fit_stage1(sets, splits[k], pc).to_json() + "\n");
      outputs.push_back(name);
    }
  }
  const double mean = sum / static_cast<double>(splits.size());

  json report;
  report["tool_version"] = kToolVersion;
  report["summary"] = {{"mean_accuracy", mean}, {"splits", splits.size()}};
  report["reports"] = std::move(reports);
  write_text(out_dir / "report.json", report.dump(2) + "\n");
  outputs.insert(outputs.begin(), "report.json");
  finish_manifest(m, out_dir, outputs);

  out << "mean accuracy " << format_double(mean) << " over " << splits.size()
      << " split(s)\n";
  return m;
}

// ---------------------------------------------------------------------------
// sweeps

const std::set<std::string> kSweepLKeys = {"L",       "filters", "masks",
                                           "knn",     "hmm_epsilon", "splits",
                                           "n_train", "seed"};
const std::set<std::string> kSweepNodesKeys = {"L",          "filter", "masks",
                                               "knn",        "hmm_epsilon", "splits",
                                               "n_train",    "seed", "bin_width"};

json resolve_sweep(json in, bool nodes) {
  reject_unknown(in, nodes ? kSweepNodesKeys : kSweepLKeys,
                 nodes ? "sweep-nodes" : "sweep-l");
  json cfg = {{"masks", "all"}, {"hmm_epsilon", 1e-6},
              {"splits", "all"}, {"n_train", 3}, {"seed", 0}};
  if (nodes) {
    cfg["L"] = 2;
    cfg["filter"] = "none";
    cfg["bin_width"] = 0.02;
  } else {
    cfg["L"] = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    cfg["filters"] = {"none", "median:1", "median:5", "median:10", "hmm"};
  }
  cfg["knn"] = knn_defaults(in);
  in.erase("knn");
  cfg.update(in);
  return cfg;
}

SweepOptions sweep_options(const json& cfg, const std::vector<MeasurementSet>& sets,
                           std::size_t jobs) {
  SweepOptions o;
  o.splits = parse_splits(cfg, sets);
  o.masks = parse_masks(cfg.at("masks"), sets.front().node_labels());
  o.knn = parse_knn(cfg.at("knn"));
  o.seed = config_field("seed", [&] { return cfg.at("seed").get<std::uint64_t>(); });
  o.jobs = jobs;
  return o;
}

void write_cells_csv(std::ostream& out, const std::vector<SweepCell>& cells,
                     const std::vector<std::string>& labels) {
  out << "split,mask,nodes,L,filter,accuracy\n";
  for (const auto& c : cells) {
    out << c.split.describe() << ',' << c.mask.bits() << ',' << c.mask.describe(labels)
        << ',' << c.moment_L << ',' << c.filter.name() << ','
        << format_double(c.accuracy) << '\n';
  }
}

RunManifest execute_sweep_l(const json& cfg, const fs::path& data_dir,
                            const fs::path& out_dir, std::size_t jobs,
                            std::ostream& out) {
  reject_unknown(cfg, kSweepLKeys, "sweep-l");
  RunManifest m{"sweep-l", kToolVersion, cfg, 0, data_dir, std::nullopt, {}, {}};
  const auto sets = load_sets(data_dir, &m);
  require_two_sets(sets);

  std::vector<std::size_t> Ls;
  std::vector<FilterSpec> filters;
  config_field("sweep-l", [&] {
    Ls = cfg.at("L").get<std::vector<std::size_t>>();
    const double eps = cfg.at("hmm_epsilon").get<double>();
    for (const auto& f : cfg.at("filters").get<std::vector<std::string>>()) {
      filters.push_back(parse_filter(f, eps));
    }
    return 0;
  });
  if (Ls.empty()) throw ConfigError("sweep-l: L list is empty");
  if (filters.empty()) throw ConfigError("sweep-l: filter list is empty");
  const auto opts = sweep_options(cfg, sets, jobs);
  m.seed = opts.seed;

  const auto res = sweep_L(sets, Ls, filters, opts);
  fs::create_directories(out_dir);
  std::ostringstream table, cells;
  write_l_sweep_csv(table, res);
  write_cells_csv(cells, res.cells, sets.front().node_labels());
  write_text(out_dir / "accuracy_vs_L.csv", table.str());
  write_text(out_dir / "sweep_cells.csv", cells.str());
  finish_manifest(m, out_dir, {"accuracy_vs_L.csv", "sweep_cells.csv"});

  for (const auto& r : res.rows) {
    out << "L=" << r.moment_L << ' ' << r.filter.name() << ' '
        << format_double(r.mean_accuracy) << '\n';
  }
  return m;
}

RunManifest execute_sweep_nodes(const json& cfg, const fs::path& data_dir,
                                const fs::path& out_dir, std::size_t jobs,
                                std::ostream& out) {
  reject_unknown(cfg, kSweepNodesKeys, "sweep-nodes");
  RunManifest m{"sweep-nodes", kToolVersion, cfg, 0, data_dir, std::nullopt, {}, {}};
  const auto sets = load_sets(data_dir, &m);
  require_two_sets(sets);

  std::size_t L = 0;
  FilterSpec filter;
  double bin_width = 0;
  config_field("sweep-nodes", [&] {
    L = cfg.at("L").get<std::size_t>();
    filter = parse_filter(cfg.at("filter").get<std::string>(),
                          cfg.at("hmm_epsilon").get<double>());
    bin_width = cfg.at("bin_width").get<double>();
    return 0;
  });
  if (L == 0) throw ConfigError("sweep-nodes: L must be >= 1");
  const auto opts = sweep_options(cfg, sets, jobs);
  m.seed = opts.seed;

  const auto res = sweep_node_masks(sets, L, filter, opts, bin_width);
  fs::create_directories(out_dir);
  std::ostringstream masks, hist, cells;
  write_mask_accuracy_csv(masks, res);
  write_histogram_csv(hist, res.histogram);
  write_cells_csv(cells, res.cells, res.node_labels);
  write_text(out_dir / "mask_accuracy.csv", masks.str());
  write_text(out_dir / "mask_histogram.csv", hist.str());
  write_text(out_dir / "sweep_cells.csv", cells.str());
  finish_manifest(m, out_dir, {"mask_accuracy.csv", "mask_histogram.csv", "sweep_cells.csv"});

  const auto best = std::max_element(
      res.rows.begin(), res.rows.end(),
      [](const auto& a, const auto& b) { return a.mean_accuracy < b.mean_accuracy; });
  out << res.rows.size() << " masks; best " << best->mask.describe(res.node_labels)
      << ' ' << format_double(best->mean_accuracy) << '\n';
  return m;
}

// ---------------------------------------------------------------------------
// filter / validate / import

struct PredictionTable {
  std::vector<std::int64_t> t;
  std::vector<std::optional<Label>> truth;
  std::vector<Label> y_hat;
};

PredictionTable read_predictions(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.rfind("t,truth,y_hat", 0) != 0) {
    throw DataError(path.string() + ": header must start with t,truth,y_hat");
  }
  PredictionTable tab;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    if (line.back() == ',') cells.emplace_back();
    if (cells.size() < 3) throw DataError(path.string() + ": malformed row " + std::to_string(row));
    try {
      std::size_t used = 0;
      tab.t.push_back(std::stoll(cells[0], &used));
      if (used != cells[0].size()) throw std::invalid_argument("t");
      if (cells[1].empty()) {
        tab.truth.emplace_back();
      } else {
        tab.truth.emplace_back(std::stoi(cells[1], &used));
        if (used != cells[1].size()) throw std::invalid_argument("truth");
      }
      tab.y_hat.push_back(std::stoi(cells[2], &used));
      if (used != cells[2].size()) throw std::invalid_argument("y_hat");
    } catch (const std::logic_error&) {
      throw DataError(path.string() + ": malformed value at row " + std::to_string(row));
    }
  }
  if (tab.y_hat.empty()) throw DataError(path.string() + ": no rows");
  return tab;
}

int cmd_filter(const fs::path& input, const std::string& hmm_path,
               std::optional<std::size_t> median_m, const std::string& out_path,
               std::ostream& out) {
  if (hmm_path.empty() == !median_m) {
    throw ConfigError("filter: pass exactly one of --hmm or --median");
  }
  const auto tab = read_predictions(input);
  std::vector<Label> z;
  if (median_m) {
    z = median_filter(tab.y_hat, *median_m);
  } else {
    z = hmm_filter(tab.y_hat, Hmm::from_json(read_text(hmm_path)));
  }
  std::ostringstream csv;
  csv << "t,truth,y_hat,z_hat\n";
  std::vector<Label> truth, scored;
  for (std::size_t i = 0; i < z.size(); ++i) {
    csv << tab.t[i] << ',';
    if (tab.truth[i]) {
      csv << *tab.truth[i];
      truth.push_back(*tab.truth[i]);
      scored.push_back(z[i]);
    }
    csv << ',' << tab.y_hat[i] << ',' << z[i] << '\n';
  }
  if (out_path.empty()) {
    out << csv.str();
    return kExitOk;
  }
  write_text(out_path, csv.str());
  out << "filtered " << z.size() << " frame(s)";
  if (!truth.empty()) out << "; accuracy " << format_double(accuracy(truth, scored));
  out << '\n';
  return kExitOk;
}

int cmd_validate(const fs::path& dir, std::ostream& out) {
  const auto sets = load_directory(dir);
  if (sets.empty()) throw DataError("no *.csv sets in " + dir.string());
  for (const auto& s : sets) {
    if (s.node_labels() != sets.front().node_labels()) {
      throw DataError("set '" + s.id() + "' has different node columns than '" +
                      sets.front().id() + "'");
    }
    std::size_t labeled = 0, missing = 0;
    for (const auto& f : s.frames()) {
      labeled += f.label.has_value();
      for (double v : f.rssi) missing += v == kMissingLinkDbm;
    }
    out << s.id() << ": " << s.size() << " frames, " << s.node_count() << " nodes, "
        << labeled << " labeled, " << missing << " missing links\n";
  }
  out << "ok: " << sets.size() << " set(s)\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

RunManifest dispatch(const std::string& command, const json& cfg,
                     const fs::path& data_dir, const fs::path& out_dir,
                     std::size_t jobs, std::ostream& out) {
  if (command == "generate") return execute_generate(cfg, out_dir, out);
  if (command == "evaluate") return execute_evaluate(cfg, data_dir, out_dir, jobs, out);
  if (command == "sweep-l") return execute_sweep_l(cfg, data_dir, out_dir, jobs, out);
  if (command == "sweep-nodes") {
    return execute_sweep_nodes(cfg, data_dir, out_dir, jobs, out);
  }
  throw ConfigError("manifest names unknown command '" + command + "'");
}

int run_app(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Cell-level RSSI localization: synthesis, evaluation and sweeps",
               "cellloc"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  std::string data_flag, config_path, out_dir;
  std::size_t jobs = 1;

  // generate
  auto* gen = app.add_subcommand("generate", "Write synthetic measurement sets");
  std::string scenario_path, prefix = "set";
  std::optional<std::size_t> count;
  std::optional<std::uint64_t> gen_seed;
  gen->add_option("--scenario", scenario_path, "Scenario JSON (defaults if omitted)")
      ->check(CLI::ExistingFile);
  gen->add_option("--out", out_dir, "Output directory")->required();
  gen->add_option("--count", count, "Number of sets (default 6)");
  gen->add_option("--seed", gen_seed, "Base seed; set i uses seed + i");
  gen->add_option("--prefix", prefix, "File name prefix");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Run the two-stage pipeline per split");
  std::optional<std::size_t> ev_L, ev_k;
  std::optional<std::string> ev_filter, ev_nodes;
  std::optional<std::uint64_t> ev_seed;
  ev->add_option("--data", data_flag, "Dataset directory");
  ev->add_option("--config", config_path, "Pipeline config JSON")->check(CLI::ExistingFile);
  ev->add_option("--out", out_dir, "Output directory")->required();
  ev->add_option("--L", ev_L, "Moment window (1 = raw RSSI)");
  ev->add_option("--filter", ev_filter, "none | median:<M> | hmm | hmm:forbid");
  ev->add_option("--nodes", ev_nodes, "Comma-separated sniffer names");
  ev->add_option("--k", ev_k, "KNN neighbors");
  ev->add_option("--seed", ev_seed, "Seed recorded in reports");
  ev->add_option("--jobs", jobs, "Worker threads");

  // sweep-l
  auto* sl = app.add_subcommand("sweep-l", "Mean accuracy over L and filters");
  std::optional<std::string> sl_L, sl_filters, sl_masks;
  sl->add_option("--data", data_flag, "Dataset directory");
  sl->add_option("--config", config_path, "Sweep config JSON")->check(CLI::ExistingFile);
  sl->add_option("--out", out_dir, "Output directory")->required();
  sl->add_option("--L", sl_L, "Comma-separated L values");
  sl->add_option("--filters", sl_filters, "Comma-separated filters");
  sl->add_option("--masks", sl_masks, "all | full");
  sl->add_option("--jobs", jobs, "Worker threads");

  // sweep-nodes
  auto* sn = app.add_subcommand("sweep-nodes", "Mean accuracy per sniffer combination");
  std::optional<std::size_t> sn_L;
  std::optional<std::string> sn_filter;
  std::optional<double> sn_bin;
  sn->add_option("--data", data_flag, "Dataset directory");
  sn->add_option("--config", config_path, "Sweep config JSON")->check(CLI::ExistingFile);
  sn->add_option("--out", out_dir, "Output directory")->required();
  sn->add_option("--L", sn_L, "Moment window");
  sn->add_option("--filter", sn_filter, "Second-stage filter");
  sn->add_option("--bin-width", sn_bin, "Histogram bin width");
  sn->add_option("--jobs", jobs, "Worker threads");

  // filter
  auto* fl = app.add_subcommand("filter", "Apply a saved HMM or a median filter to predictions");
  std::string pred_path, hmm_path, fl_out;
  std::optional<std::size_t> median_m;
  fl->add_option("--predictions", pred_path, "CSV with t,truth,y_hat")
      ->required()
      ->check(CLI::ExistingFile);
  fl->add_option("--hmm", hmm_path, "HMM JSON")->check(CLI::ExistingFile);
  fl->add_option("--median", median_m, "Median window M");
  fl->add_option("--out", fl_out, "Output CSV (stdout if omitted)");

  // validate
  auto* va = app.add_subcommand("validate", "Check a dataset directory");
  va->add_option("--data", data_flag, "Dataset directory");

  // import
  auto* im = app.add_subcommand("import", "Convert a SAL-RB style export to the canonical CSV");
  std::string im_in;
  std::optional<std::string> im_nodes;
  im->add_option("--in", im_in, "Source CSV")->required()->check(CLI::ExistingFile);
  im->add_option("--out", out_dir, "Output directory")->required();
  im->add_option("--nodes", im_nodes, "Comma-separated column order");

  // replay
  auto* rp = app.add_subcommand("replay", "Rerun a command from its manifest");
  std::string manifest_path;
  rp->add_option("--manifest", manifest_path, "manifest.json")
      ->required()
      ->check(CLI::ExistingFile);
  rp->add_option("--out", out_dir, "Output directory")->required();
  rp->add_option("--data", data_flag, "Override the recorded data directory");
  rp->add_option("--jobs", jobs, "Worker threads");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  auto load_config = [&]() -> json {
    return config_path.empty() ? json::object() : parse_json_file(config_path);
  };
  auto with_source = [&](RunManifest m, const fs::path& dir) {
    if (!config_path.empty()) {
      m.config_source.emplace(config_path, sha256_file(config_path));
      write_text(dir / kManifestName, m.to_json().dump(2) + "\n");
    }
    return kExitOk;
  };

  if (*gen) {
    const auto cfg = resolve_generate(
        scenario_path.empty() ? std::nullopt : std::optional<fs::path>(scenario_path),
        count, gen_seed, prefix);
    auto m = execute_generate(cfg, out_dir, out);
    if (!scenario_path.empty()) {
      m.config_source.emplace(scenario_path, sha256_file(scenario_path));
      write_text(fs::path(out_dir) / kManifestName, m.to_json().dump(2) + "\n");
    }
    return kExitOk;
  }
  if (*ev) {
    json cfg = resolve_evaluate(load_config());
    if (ev_L) cfg["moment_L"] = *ev_L;
    if (ev_filter) cfg["filter"] = *ev_filter;
    if (ev_nodes) cfg["nodes"] = split_list(*ev_nodes);
    if (ev_k) cfg["knn"]["k"] = *ev_k;
    if (ev_seed) cfg["seed"] = *ev_seed;
    return with_source(
        execute_evaluate(cfg, resolve_data_dir(data_flag), out_dir, jobs, out), out_dir);
  }
  if (*sl) {
    json cfg = resolve_sweep(load_config(), false);
    if (sl_L) {
      std::vector<std::size_t> Ls;
      for (const auto& s : split_list(*sl_L)) {
        try {
          Ls.push_back(std::stoul(s));
        } catch (const std::logic_error&) {
          throw ConfigError("invalid L value '" + s + "'");
        }
      }
      cfg["L"] = Ls;
    }
    if (sl_filters) cfg["filters"] = split_list(*sl_filters);
    if (sl_masks) cfg["masks"] = *sl_masks;
    return with_source(
        execute_sweep_l(cfg, resolve_data_dir(data_flag), out_dir, jobs, out), out_dir);
  }
  if (*sn) {
    json cfg = resolve_sweep(load_config(), true);
    if (sn_L) cfg["L"] = *sn_L;
    if (sn_filter) cfg["filter"] = *sn_filter;
    if (sn_bin) cfg["bin_width"] = *sn_bin;
    return with_source(
        execute_sweep_nodes(cfg, resolve_data_dir(data_flag), out_dir, jobs, out),
        out_dir);
  }
  if (*fl) return cmd_filter(pred_path, hmm_path, median_m, fl_out, out);
  if (*va) return cmd_validate(resolve_data_dir(data_flag), out);
  if (*im) {
    const auto set =
        import_salrb(im_in, im_nodes ? split_list(*im_nodes) : std::vector<std::string>{});
    fs::create_directories(out_dir);
    const auto dest = fs::path(out_dir) / (set.id() + ".csv");
    save_set(dest, set);
    out << "imported " << set.size() << " frames, " << set.node_count() << " nodes -> "
        << dest.string() << '\n';
    return kExitOk;
  }
  if (*rp) {
    const auto m = RunManifest::from_json(parse_json_file(manifest_path));
    const fs::path data_dir = data_flag.empty() ? m.data_dir : fs::path(data_flag);
    if (m.command != "generate") m.verify_inputs(data_dir);
    auto again = dispatch(m.command, m.config, data_dir, out_dir, jobs, out);
    if (m.config_source) {
      again.config_source = m.config_source;
      write_text(fs::path(out_dir) / kManifestName, again.to_json().dump(2) + "\n");
    }
    return kExitOk;
  }
  throw InvariantError("no subcommand dispatched");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    return run_app(args, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const InvariantError& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}

}  // namespace cellloc::cli
