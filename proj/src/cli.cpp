#include "coco/cli.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "coco/checkpoint.hpp"
#include "coco/graph.hpp"
#include "coco/kernels.hpp"
#include "coco/selfcheck.hpp"
#include "coco/toygen.hpp"
#include "coco/trainer.hpp"

namespace coco {

namespace {

using json = nlohmann::ordered_json;

std::string fmt_double(double value) {
  char buffer[40];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, result.ptr);
}

std::string config_hash(const std::string& text) {
  std::uint64_t hash = 1469598103934665603ull;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 1099511628211ull;
  }
  char buffer[17];
  std::snprintf(buffer, sizeof(buffer), "%016llx", static_cast<unsigned long long>(hash));
  return std::string(buffer);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError("failed while writing '" + path + "'");
}

bool env_seed(std::uint64_t& seed) {
  const char* raw = std::getenv("COCO_SEED");
  if (raw == nullptr || *raw == '\0') return false;
  std::uint64_t value = 0;
  const char* end = raw + std::string(raw).size();
  const auto result = std::from_chars(raw, end, value);
  if (result.ec != std::errc() || result.ptr != end)
    throw ConfigError("COCO_SEED must be an unsigned integer, got '" + std::string(raw) + "'");
  seed = value;
  return true;
}

// ---------------------------------------------------------------------------
// train

struct RunConfig {
  TrainConfig train;
  std::string source_dir;
  std::string source_name;
  std::string target_dir;
  std::string target_name;
  std::string out_dir;
  int workers = 1;
};

json run_config_to_json(const RunConfig& rc) {
  json j;
  j["source_dir"] = rc.source_dir;
  j["source_name"] = rc.source_name;
  j["target_dir"] = rc.target_dir;
  j["target_name"] = rc.target_name;
  j["out_dir"] = rc.out_dir;
  j["workers"] = rc.workers;
  j["epochs"] = rc.train.epochs;
  j["batch_size"] = rc.train.batch_size;
  j["lr"] = rc.train.lr;
  j["tau"] = rc.train.tau;
  j["rho"] = rc.train.rho;
  j["num_filters"] = rc.train.num_filters;
  j["r"] = rc.train.r;
  j["wl_iterations"] = rc.train.wl_iterations;
  j["quantizer_k"] = rc.train.quantizer_k;
  j["hidden"] = rc.train.hidden;
  j["seed"] = rc.train.seed;
  j["ablation"] = ablation_name(rc.train.ablation);
  j["negative_pool"] = negative_pool_name(rc.train.negative_pool);
  j["ascent_accept"] = rc.train.ascent_accept;
  j["confidence_threshold"] = rc.train.confidence_threshold;
  j["min_filter_size"] = rc.train.min_filter_size;
  j["max_filter_size"] = rc.train.max_filter_size;
  j["quantizer_sample_cap"] = rc.train.quantizer_sample_cap;
  j["early_stop_delta"] = rc.train.early_stop_delta;
  j["early_stop_patience"] = rc.train.early_stop_patience;
  return j;
}

template <typename T>
void take(const json& j, const char* key, T& out) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type");
  }
}

void apply_config_file(const std::string& path, RunConfig& rc) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file is not valid JSON: " + std::string(e.what()));
  }
  if (!j.is_object()) throw ConfigError("config file must hold a JSON object");

  static const std::set<std::string> known = {
      "source_dir",        "source_name",        "target_dir",
      "target_name",       "out_dir",            "workers",
      "epochs",            "batch_size",         "lr",
      "tau",               "rho",                "num_filters",
      "r",                 "wl_iterations",      "quantizer_k",
      "hidden",            "seed",               "ablation",
      "negative_pool",     "ascent_accept", "confidence_threshold",
      "min_filter_size",   "max_filter_size",    "quantizer_sample_cap",
      "early_stop_delta",  "early_stop_patience"};
  for (const auto& item : j.items())
    if (known.count(item.key()) == 0)
      throw ConfigError("unknown config key '" + item.key() + "'");

  take(j, "source_dir", rc.source_dir);
  take(j, "source_name", rc.source_name);
  take(j, "target_dir", rc.target_dir);
  take(j, "target_name", rc.target_name);
  take(j, "out_dir", rc.out_dir);
  take(j, "workers", rc.workers);
  take(j, "epochs", rc.train.epochs);
  take(j, "batch_size", rc.train.batch_size);
  take(j, "lr", rc.train.lr);
  take(j, "tau", rc.train.tau);
  take(j, "rho", rc.train.rho);
  take(j, "num_filters", rc.train.num_filters);
  take(j, "r", rc.train.r);
  take(j, "wl_iterations", rc.train.wl_iterations);
  take(j, "quantizer_k", rc.train.quantizer_k);
  take(j, "hidden", rc.train.hidden);
  take(j, "seed", rc.train.seed);
  std::string ablation;
  take(j, "ablation", ablation);
  if (!ablation.empty()) rc.train.ablation = parse_ablation(ablation);
  std::string pool;
  take(j, "negative_pool", pool);
  if (!pool.empty()) rc.train.negative_pool = parse_negative_pool(pool);
  take(j, "ascent_accept", rc.train.ascent_accept);
  take(j, "confidence_threshold", rc.train.confidence_threshold);
  take(j, "min_filter_size", rc.train.min_filter_size);
  take(j, "max_filter_size", rc.train.max_filter_size);
  take(j, "quantizer_sample_cap", rc.train.quantizer_sample_cap);
  take(j, "early_stop_delta", rc.train.early_stop_delta);
  take(j, "early_stop_patience", rc.train.early_stop_patience);
}

struct TrainCli {
  CLI::App* cmd = nullptr;
  std::string config_path;
  RunConfig flags;
  std::string ablation;
  std::string negative_pool;

  bool passed(const std::string& name) const { return cmd->count(name) > 0; }
};

void add_train_options(TrainCli& t) {
  CLI::App* cmd = t.cmd;
  cmd->add_option("--config", t.config_path, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--source-dir", t.flags.source_dir, "Source dataset directory");
  cmd->add_option("--source-name", t.flags.source_name, "Source dataset prefix");
  cmd->add_option("--target-dir", t.flags.target_dir, "Target dataset directory");
  cmd->add_option("--target-name", t.flags.target_name, "Target dataset prefix");
  cmd->add_option("--out", t.flags.out_dir, "Output directory");
  cmd->add_option("--workers", t.flags.workers, "Worker count (evaluation stays deterministic)");
  cmd->add_option("--epochs", t.flags.train.epochs, "Training epochs");
  cmd->add_option("--batch-size", t.flags.train.batch_size, "Mini-batch size per domain");
  cmd->add_option("--lr", t.flags.train.lr, "Learning rate");
  cmd->add_option("--tau", t.flags.train.tau, "Contrastive temperature");
  cmd->add_option("--rho", t.flags.train.rho, "Pooling keep ratio");
  cmd->add_option("--num-filters", t.flags.train.num_filters, "Filters per kernel layer");
  cmd->add_option("--r", t.flags.train.r, "Subgraph hop radius");
  cmd->add_option("--wl-iterations", t.flags.train.wl_iterations, "Kernel refinement rounds");
  cmd->add_option("--quantizer-k", t.flags.train.quantizer_k, "Attribute quantizer clusters");
  cmd->add_option("--hidden", t.flags.train.hidden, "Hidden width");
  cmd->add_option("--seed", t.flags.train.seed, "Random seed");
  cmd->add_option("--ablation", t.ablation,
                  "full, no_cb, no_cd, source_only, gin_gin, hgkn_hgkn");
  cmd->add_option("--negative-pool", t.negative_pool, "union_batch or target_only");
  cmd->add_flag("--ascent-accept", t.flags.train.ascent_accept,
                "Accept filter edits with a positive first-order estimate");
  cmd->add_option("--confidence-threshold", t.flags.train.confidence_threshold,
                  "Pseudo-label confidence cutoff");
  cmd->add_option("--min-filter-size", t.flags.train.min_filter_size, "Smallest filter size");
  cmd->add_option("--max-filter-size", t.flags.train.max_filter_size, "Largest filter size");
  cmd->add_option("--quantizer-sample-cap", t.flags.train.quantizer_sample_cap,
                  "Graphs per domain used to fit quantizers");
  cmd->add_option("--early-stop-delta", t.flags.train.early_stop_delta,
                  "Minimum epoch-loss improvement");
  cmd->add_option("--early-stop-patience", t.flags.train.early_stop_patience,
                  "Epochs without improvement before stopping");
}

RunConfig resolve_train_config(const TrainCli& t) {
  RunConfig rc;
  if (!t.config_path.empty()) apply_config_file(t.config_path, rc);

  if (t.passed("--source-dir")) rc.source_dir = t.flags.source_dir;
  if (t.passed("--source-name")) rc.source_name = t.flags.source_name;
  if (t.passed("--target-dir")) rc.target_dir = t.flags.target_dir;
  if (t.passed("--target-name")) rc.target_name = t.flags.target_name;
  if (t.passed("--out")) rc.out_dir = t.flags.out_dir;
  if (t.passed("--workers")) rc.workers = t.flags.workers;
  if (t.passed("--epochs")) rc.train.epochs = t.flags.train.epochs;
  if (t.passed("--batch-size")) rc.train.batch_size = t.flags.train.batch_size;
  if (t.passed("--lr")) rc.train.lr = t.flags.train.lr;
  if (t.passed("--tau")) rc.train.tau = t.flags.train.tau;
  if (t.passed("--rho")) rc.train.rho = t.flags.train.rho;
  if (t.passed("--num-filters")) rc.train.num_filters = t.flags.train.num_filters;
  if (t.passed("--r")) rc.train.r = t.flags.train.r;
  if (t.passed("--wl-iterations")) rc.train.wl_iterations = t.flags.train.wl_iterations;
  if (t.passed("--quantizer-k")) rc.train.quantizer_k = t.flags.train.quantizer_k;
  if (t.passed("--hidden")) rc.train.hidden = t.flags.train.hidden;
  if (t.passed("--seed")) rc.train.seed = t.flags.train.seed;
  if (t.passed("--ablation")) rc.train.ablation = parse_ablation(t.ablation);
  if (t.passed("--negative-pool")) rc.train.negative_pool = parse_negative_pool(t.negative_pool);
  if (t.passed("--ascent-accept"))
    rc.train.ascent_accept = t.flags.train.ascent_accept;
  if (t.passed("--confidence-threshold"))
    rc.train.confidence_threshold = t.flags.train.confidence_threshold;
  if (t.passed("--min-filter-size")) rc.train.min_filter_size = t.flags.train.min_filter_size;
  if (t.passed("--max-filter-size")) rc.train.max_filter_size = t.flags.train.max_filter_size;
  if (t.passed("--quantizer-sample-cap"))
    rc.train.quantizer_sample_cap = t.flags.train.quantizer_sample_cap;
  if (t.passed("--early-stop-delta"))
    rc.train.early_stop_delta = t.flags.train.early_stop_delta;
  if (t.passed("--early-stop-patience"))
    rc.train.early_stop_patience = t.flags.train.early_stop_patience;

  env_seed(rc.train.seed);

  if (rc.source_dir.empty() || rc.source_name.empty())
    throw ConfigError("source dataset is required (source_dir + source_name)");
  if (rc.target_dir.empty() || rc.target_name.empty())
    throw ConfigError("target dataset is required (target_dir + target_name)");
  if (rc.out_dir.empty()) throw ConfigError("out_dir is required");
  if (rc.workers < 1) throw ConfigError("workers must be positive");
  rc.train.validate();
  return rc;
}

std::string history_csv(const TrainHistory& history) {
  std::string text = "step,epoch,l_cb,l_cd,l_s,total\n";
  for (const StepRecord& record : history.steps) {
    text += std::to_string(record.step) + "," + std::to_string(record.epoch) + "," +
            fmt_double(record.loss.l_cb) + "," + fmt_double(record.loss.l_cd) + "," +
            fmt_double(record.loss.l_s) + "," + fmt_double(record.loss.total) + "\n";
  }
  return text;
}

std::string epochs_csv(const TrainHistory& history) {
  std::string text = history.has_target_diagnostics
                         ? "epoch,mean_loss,target_accuracy,pseudo_accuracy\n"
                         : "epoch,mean_loss\n";
  for (std::size_t e = 0; e < history.epoch_mean_loss.size(); ++e) {
    text += std::to_string(e) + "," + fmt_double(history.epoch_mean_loss[e]);
    if (history.has_target_diagnostics)
      text += "," + fmt_double(history.epoch_target_accuracy[e]) + "," +
              fmt_double(history.epoch_pseudo_accuracy[e]);
    text += "\n";
  }
  return text;
}

int cmd_train(const TrainCli& t) {
  const RunConfig rc = resolve_train_config(t);

  Dataset source = parse_tudataset(rc.source_dir, rc.source_name);
  Dataset target = parse_tudataset(rc.target_dir, rc.target_name);
  DomainPair data = DomainPair::make(std::move(source), std::move(target));

  std::filesystem::create_directories(rc.out_dir);
  const std::string resolved = run_config_to_json(rc).dump(2) + "\n";
  write_text(rc.out_dir + "/resolved_config.json", resolved);
  std::cout << resolved;

  const TrainResult result = train(rc.train, data);

  save_model(result.model, rc.out_dir + "/checkpoint.json");
  write_text(rc.out_dir + "/history.csv", history_csv(result.history));
  write_text(rc.out_dir + "/epochs.csv", epochs_csv(result.history));

  json metrics;
  metrics["dataset"] = rc.source_name + "->" + rc.target_name;
  metrics["config_hash"] = config_hash(resolved);
  metrics["seed"] = rc.train.seed;
  metrics["ablation"] = ablation_name(rc.train.ablation);
  if (data.has_target_labels())
    metrics["target_accuracy"] = evaluate(result.model, data.labeled_target());
  else
    metrics["target_accuracy"] = nullptr;
  metrics["epochs_run"] = result.history.epochs_run;
  const std::string metrics_text = metrics.dump(2) + "\n";
  write_text(rc.out_dir + "/metrics.json", metrics_text);
  std::cout << metrics_text;
  return 0;
}

// ---------------------------------------------------------------------------
// split

int cmd_split(const std::string& data_dir, const std::string& name, int parts,
              const std::string& out_dir, const std::string& density_mode) {
  if (parts < 1) throw ConfigError("parts must be positive");
  DensityMode mode;
  if (density_mode == "average_degree")
    mode = DensityMode::average_degree;
  else if (density_mode == "edge_ratio")
    mode = DensityMode::edge_ratio;
  else
    throw ConfigError("density mode must be average_degree or edge_ratio");

  const Dataset dataset = parse_tudataset(data_dir, name);
  std::vector<Dataset> split;
  if (parts == 1)
    split.push_back(dataset);
  else
    split = split_by_edge_density(dataset, parts, mode);

  std::filesystem::create_directories(out_dir);
  json resolved;
  resolved["data_dir"] = data_dir;
  resolved["name"] = name;
  resolved["parts"] = parts;
  resolved["out_dir"] = out_dir;
  resolved["density_mode"] = density_mode;
  std::cout << resolved.dump(2) << "\n";

  json manifest;
  manifest["dataset"] = name;
  manifest["parts"] = parts;
  manifest["density_mode"] = density_mode;
  json part_info = json::array();
  for (std::size_t p = 0; p < split.size(); ++p) {
    const std::string part_name = name + "_part" + std::to_string(p);
    serialize_tudataset(split[p], out_dir, part_name);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const Graph& g : split[p].graphs) {
      const double d = graph_density(g, mode);
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
    json entry;
    entry["name"] = part_name;
    entry["graphs"] = split[p].graphs.size();
    entry["density_min"] = lo;
    entry["density_max"] = hi;
    part_info.push_back(std::move(entry));
  }
  manifest["part_info"] = std::move(part_info);
  write_text(out_dir + "/manifest.json", manifest.dump(2) + "\n");
  std::cout << "wrote " << split.size() << " parts to " << out_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval

int cmd_eval(const std::string& checkpoint_path, const std::string& data_dir,
             const std::string& name) {
  json resolved;
  resolved["checkpoint"] = checkpoint_path;
  resolved["data_dir"] = data_dir;
  resolved["name"] = name;
  std::cout << resolved.dump(2) << "\n";

  const Model model = load_model(checkpoint_path);
  const Dataset dataset = parse_tudataset(data_dir, name);
  json out;
  out["dataset"] = name;
  out["graphs"] = dataset.graphs.size();
  out["accuracy"] = evaluate(model, dataset);
  std::cout << out.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// kernel

int cmd_kernel(const std::string& data_dir, const std::string& name, int iterations,
               bool normalized, const std::string& out_path) {
  if (iterations < 0) throw ConfigError("h must be non-negative");
  json resolved;
  resolved["data_dir"] = data_dir;
  resolved["name"] = name;
  resolved["h"] = iterations;
  resolved["normalized"] = normalized;
  resolved["out"] = out_path;
  std::cout << resolved.dump(2) << "\n";

  const Dataset dataset = parse_tudataset(data_dir, name);
  WLRefiner refiner;
  std::vector<WLFeatureMap> maps;
  maps.reserve(dataset.graphs.size());
  for (const Graph& g : dataset.graphs) maps.push_back(wl_feature_map(g, iterations, refiner));

  const std::size_t n = maps.size();
  std::string csv;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (j > 0) csv += ",";
      csv += fmt_double(wl_kernel(maps[i], maps[j], normalized));
    }
    csv += "\n";
  }
  write_text(out_path, csv);
  std::cout << "wrote " << n << "x" << n << " kernel matrix to " << out_path << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// selfcheck

int cmd_selfcheck(std::uint64_t seed, bool inject_fault) {
  SelfCheckOptions options;
  options.seed = seed;
  env_seed(options.seed);
  options.inject_gradient_fault = inject_fault;
  json resolved;
  resolved["seed"] = options.seed;
  resolved["inject_gradient_fault"] = options.inject_gradient_fault;
  std::cout << resolved.dump(2) << "\n";

  const SelfCheckReport report = run_selfcheck(options);
  for (const SuiteResult& suite : report.suites)
    std::cout << suite.name << ": passed " << suite.passed << ", failed " << suite.failed
              << "\n";
  std::cout << "total: passed " << report.total_passed() << ", failed " << report.total_failed()
            << "\n";
  return report.ok() ? 0 : 1;
}

// ---------------------------------------------------------------------------
// gen-toy

int cmd_gen_toy(std::uint64_t seed, const std::string& out_dir) {
  std::uint64_t resolved_seed = seed;
  env_seed(resolved_seed);
  json resolved;
  resolved["seed"] = resolved_seed;
  resolved["out_dir"] = out_dir;
  std::cout << resolved.dump(2) << "\n";

  write_toy(out_dir, resolved_seed);
  std::cout << "wrote toy_source and toy_target to " << out_dir << "\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Coupled-branch contrastive domain adaptation for graph classification"};
  app.require_subcommand(1);

  TrainCli train_cli;
  train_cli.cmd = app.add_subcommand("train", "Train a model from a JSON config");
  add_train_options(train_cli);

  auto* split_cmd = app.add_subcommand("split", "Split a dataset by edge density");
  std::string split_dir, split_name, split_out, split_density = "average_degree";
  int split_parts = 4;
  split_cmd->add_option("--data-dir", split_dir, "Dataset directory")->required();
  split_cmd->add_option("--name", split_name, "Dataset prefix")->required();
  split_cmd->add_option("--parts", split_parts, "Number of parts");
  split_cmd->add_option("--out", split_out, "Output directory")->required();
  split_cmd->add_option("--density-mode", split_density, "average_degree or edge_ratio");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a labeled dataset");
  std::string eval_checkpoint, eval_dir, eval_name;
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "Checkpoint JSON file")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--data-dir", eval_dir, "Dataset directory")->required();
  eval_cmd->add_option("--name", eval_name, "Dataset prefix")->required();

  auto* kernel_cmd = app.add_subcommand("kernel", "Write a kernel Gram matrix as CSV");
  std::string kernel_dir, kernel_name, kernel_out;
  int kernel_h = 2;
  bool kernel_normalized = false;
  kernel_cmd->add_option("--data-dir", kernel_dir, "Dataset directory")->required();
  kernel_cmd->add_option("--name", kernel_name, "Dataset prefix")->required();
  kernel_cmd->add_option("--iterations", kernel_h, "Refinement iterations");
  kernel_cmd->add_flag("--normalized", kernel_normalized, "Normalize to [0, 1]");
  kernel_cmd->add_option("--out", kernel_out, "Output CSV path")->required();

  auto* selfcheck_cmd = app.add_subcommand("selfcheck", "Run gradient and oracle suites");
  std::uint64_t selfcheck_seed = 12345;
  bool selfcheck_inject = false;
  selfcheck_cmd->add_option("--seed", selfcheck_seed, "Suite seed");
  selfcheck_cmd->add_flag("--inject-gradient-fault", selfcheck_inject,
                          "Corrupt one analytic gradient per instance (test hook)");

  auto* gen_toy_cmd = app.add_subcommand("gen-toy", "Generate the synthetic adaptation pair");
  std::uint64_t gen_seed = 7;
  std::string gen_out;
  gen_toy_cmd->add_option("--seed", gen_seed, "Generator seed");
  gen_toy_cmd->add_option("--out", gen_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return 2;
  }

  try {
    if (train_cli.cmd->parsed()) return cmd_train(train_cli);
    if (split_cmd->parsed())
      return cmd_split(split_dir, split_name, split_parts, split_out, split_density);
    if (eval_cmd->parsed()) return cmd_eval(eval_checkpoint, eval_dir, eval_name);
    if (kernel_cmd->parsed())
      return cmd_kernel(kernel_dir, kernel_name, kernel_h, kernel_normalized, kernel_out);
    if (selfcheck_cmd->parsed()) return cmd_selfcheck(selfcheck_seed, selfcheck_inject);
    if (gen_toy_cmd->parsed()) return cmd_gen_toy(gen_seed, gen_out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const TrainDiverged& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const CocoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace coco
