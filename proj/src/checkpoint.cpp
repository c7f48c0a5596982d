#include "coco/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace coco {

using json = nlohmann::ordered_json;

namespace {

constexpr const char* kFormat = "coco-checkpoint-v1";

std::string feature_mode_name(GCNEncoder::FeatureMode mode) {
  return mode == GCNEncoder::FeatureMode::one_hot_labels ? "one_hot_labels" : "raw_attrs";
}

GCNEncoder::FeatureMode parse_feature_mode(const std::string& name) {
  if (name == "one_hot_labels") return GCNEncoder::FeatureMode::one_hot_labels;
  if (name == "raw_attrs") return GCNEncoder::FeatureMode::raw_attrs;
  throw ConfigError("unknown feature mode '" + name + "'");
}

std::string branch_kind_name(BranchKind kind) {
  return kind == BranchKind::gin ? "gin" : "hgkn";
}

BranchKind parse_branch_kind(const std::string& name) {
  if (name == "gin") return BranchKind::gin;
  if (name == "hgkn") return BranchKind::hgkn;
  throw ConfigError("unknown branch kind '" + name + "'");
}

json config_to_json(const TrainConfig& config) {
  json j;
  j["epochs"] = config.epochs;
  j["batch_size"] = config.batch_size;
  j["lr"] = config.lr;
  j["tau"] = config.tau;
  j["rho"] = config.rho;
  j["num_filters"] = config.num_filters;
  j["r"] = config.r;
  j["wl_iterations"] = config.wl_iterations;
  j["quantizer_k"] = config.quantizer_k;
  j["hidden"] = config.hidden;
  j["seed"] = config.seed;
  j["ablation"] = ablation_name(config.ablation);
  j["negative_pool"] = negative_pool_name(config.negative_pool);
  j["ascent_accept"] = config.ascent_accept;
  j["confidence_threshold"] = config.confidence_threshold;
  j["min_filter_size"] = config.min_filter_size;
  j["max_filter_size"] = config.max_filter_size;
  j["quantizer_sample_cap"] = config.quantizer_sample_cap;
  j["early_stop_delta"] = config.early_stop_delta;
  j["early_stop_patience"] = config.early_stop_patience;
  return j;
}

const json& require(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError(std::string("checkpoint is missing '") + key + "'");
  return *it;
}

TrainConfig config_from_json(const json& j) {
  TrainConfig config;
  config.epochs = require(j, "epochs").get<int>();
  config.batch_size = require(j, "batch_size").get<int>();
  config.lr = require(j, "lr").get<double>();
  config.tau = require(j, "tau").get<double>();
  config.rho = require(j, "rho").get<double>();
  config.num_filters = require(j, "num_filters").get<int>();
  config.r = require(j, "r").get<int>();
  config.wl_iterations = require(j, "wl_iterations").get<int>();
  config.quantizer_k = require(j, "quantizer_k").get<int>();
  config.hidden = require(j, "hidden").get<int>();
  config.seed = require(j, "seed").get<std::uint64_t>();
  config.ablation = parse_ablation(require(j, "ablation").get<std::string>());
  config.negative_pool = parse_negative_pool(require(j, "negative_pool").get<std::string>());
  config.ascent_accept = require(j, "ascent_accept").get<bool>();
  config.confidence_threshold = require(j, "confidence_threshold").get<double>();
  config.min_filter_size = require(j, "min_filter_size").get<int>();
  config.max_filter_size = require(j, "max_filter_size").get<int>();
  config.quantizer_sample_cap = require(j, "quantizer_sample_cap").get<int>();
  config.early_stop_delta = require(j, "early_stop_delta").get<double>();
  config.early_stop_patience = require(j, "early_stop_patience").get<int>();
  return config;
}

json filter_to_json(const FilterGraph& filter) {
  const int n = filter.node_count;
  std::string edges;
  edges.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) edges.push_back(filter.has_edge(i, j) ? '1' : '0');
  json out;
  out["n"] = n;
  out["edges"] = edges;
  out["attrs"] = filter.node_attrs;
  return out;
}

FilterGraph filter_from_json(const json& j) {
  FilterGraph filter;
  filter.node_count = require(j, "n").get<int>();
  if (filter.node_count < 1) throw ConfigError("checkpoint filter has no nodes");
  const int n = filter.node_count;
  filter.adjacency.assign(static_cast<std::size_t>(n) * n, 0);
  const std::string edges = require(j, "edges").get<std::string>();
  if (static_cast<int>(edges.size()) != n * (n - 1) / 2)
    throw ConfigError("checkpoint filter edge bitmap has the wrong length");
  std::size_t pos = 0;
  for (int i = 0; i < n; ++i)
    for (int k = i + 1; k < n; ++k) {
      const char c = edges[pos++];
      if (c != '0' && c != '1') throw ConfigError("checkpoint filter edge bitmap is not binary");
      filter.set_edge(i, k, c == '1');
    }
  filter.node_attrs = require(j, "attrs").get<std::vector<int>>();
  if (static_cast<int>(filter.node_attrs.size()) != n)
    throw ConfigError("checkpoint filter attribute list has the wrong length");
  return filter;
}

json hgkn_to_json(const HGKNEncoder& encoder) {
  json layers = json::array();
  for (const HGKNLayer& layer : encoder.layers()) {
    json entry;
    json filters = json::array();
    for (const FilterGraph& filter : layer.filters()) filters.push_back(filter_to_json(filter));
    entry["filters"] = std::move(filters);
    if (layer.needs_quantizer())
      entry["centroids"] = layer.quantizer().centroids();
    else
      entry["centroids"] = nullptr;
    layers.push_back(std::move(entry));
  }
  json out;
  out["layers"] = std::move(layers);
  return out;
}

void hgkn_from_json(HGKNEncoder& encoder, const json& j) {
  const json& layers = require(j, "layers");
  if (layers.size() != encoder.layers().size())
    throw ConfigError("checkpoint layer count does not match the config");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const json& entry = layers[k];
    std::vector<FilterGraph> filters;
    for (const json& f : require(entry, "filters")) filters.push_back(filter_from_json(f));
    encoder.layers()[k].set_filters(std::move(filters));
    const json& centroids = require(entry, "centroids");
    if (!centroids.is_null())
      encoder.layers()[k].set_quantizer_centroids(
          centroids.get<std::vector<std::vector<double>>>());
  }
}

HGKNEncoder::Config hgkn_config(const TrainConfig& config, const ModelMeta& meta) {
  HGKNEncoder::Config hc;
  hc.layer_count = 2;
  hc.num_filters = config.num_filters;
  hc.min_filter_size = config.min_filter_size;
  hc.max_filter_size = config.max_filter_size;
  hc.r = config.r;
  hc.rho = config.rho;
  hc.wl_iterations = config.wl_iterations;
  hc.quantizer_k = config.quantizer_k;
  hc.hidden = config.hidden;
  hc.label_alphabet = meta.label_alphabet;
  return hc;
}

}  // namespace

std::string negative_pool_name(NegativePool pool) {
  return pool == NegativePool::union_batch ? "union_batch" : "target_only";
}

NegativePool parse_negative_pool(const std::string& name) {
  if (name == "union_batch") return NegativePool::union_batch;
  if (name == "target_only") return NegativePool::target_only;
  throw ConfigError("unknown negative pool '" + name +
                    "' (expected union_batch or target_only)");
}

std::string model_to_json(const Model& model) {
  json j;
  j["format"] = kFormat;
  j["config"] = config_to_json(model.config);
  json meta;
  meta["num_classes"] = model.meta.num_classes;
  meta["feature_mode"] = feature_mode_name(model.meta.feature_mode);
  meta["feature_dim"] = model.meta.feature_dim;
  meta["label_alphabet"] = model.meta.label_alphabet;
  meta["branch1_kind"] = branch_kind_name(model.meta.branch1_kind);
  meta["branch2_kind"] = branch_kind_name(model.meta.branch2_kind);
  j["meta"] = std::move(meta);

  json params;
  for (const auto& [name, tensor] : model.params) {
    json entry;
    entry["rows"] = tensor.rows();
    entry["cols"] = tensor.cols();
    entry["values"] = tensor.values();
    params[name] = std::move(entry);
  }
  j["params"] = std::move(params);

  json hgkn;
  hgkn["b1"] = model.branch1.kind == BranchKind::hgkn ? hgkn_to_json(model.branch1.hgkn)
                                                      : json(nullptr);
  hgkn["b2"] = model.branch2.kind == BranchKind::hgkn ? hgkn_to_json(model.branch2.hgkn)
                                                      : json(nullptr);
  j["hgkn"] = std::move(hgkn);

  return j.dump(2) + "\n";
}

Model model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  const std::string format = require(j, "format").get<std::string>();
  if (format != kFormat)
    throw ConfigError("unsupported checkpoint format '" + format + "'");

  Model model;
  model.config = config_from_json(require(j, "config"));
  const json& meta = require(j, "meta");
  model.meta.num_classes = require(meta, "num_classes").get<int>();
  model.meta.feature_mode = parse_feature_mode(require(meta, "feature_mode").get<std::string>());
  model.meta.feature_dim = require(meta, "feature_dim").get<int>();
  model.meta.label_alphabet = require(meta, "label_alphabet").get<int>();
  model.meta.branch1_kind = parse_branch_kind(require(meta, "branch1_kind").get<std::string>());
  model.meta.branch2_kind = parse_branch_kind(require(meta, "branch2_kind").get<std::string>());

  for (const auto& [name, entry] : require(j, "params").items()) {
    const int rows = require(entry, "rows").get<int>();
    const int cols = require(entry, "cols").get<int>();
    const auto values = require(entry, "values").get<std::vector<double>>();
    if (static_cast<int>(values.size()) != rows * cols)
      throw ConfigError("checkpoint tensor '" + name + "' has a mismatched value count");
    model.params.add(name, Tensor::from_values(rows, cols, values));
  }

  auto bind_branch = [&](BranchKind kind, const std::string& prefix, const json& hgkn_entry) {
    Branch branch;
    branch.kind = kind;
    if (kind == BranchKind::gin) {
      branch.gin = GCNEncoder::bind(model.params, prefix, model.meta.feature_mode,
                                    model.meta.feature_dim, model.config.hidden);
    } else {
      branch.hgkn = HGKNEncoder::bind(model.params, prefix,
                                      hgkn_config(model.config, model.meta));
      if (hgkn_entry.is_null())
        throw ConfigError("checkpoint lacks filter data for branch '" + prefix + "'");
      hgkn_from_json(branch.hgkn, hgkn_entry);
    }
    return branch;
  };

  const json& hgkn = require(j, "hgkn");
  model.branch1 = bind_branch(model.meta.branch1_kind, "b1", require(hgkn, "b1"));
  model.branch2 = bind_branch(model.meta.branch2_kind, "b2", require(hgkn, "b2"));
  model.classifier = bind_affine(model.params, "classifier");
  return model;
}

void save_model(const Model& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << model_to_json(model);
  if (!out) throw IoError("failed while writing '" + path + "'");
}

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return model_from_json(buffer.str());
}

}  // namespace coco
