#include "coco/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace coco {

std::string ablation_name(Ablation ablation) {
  switch (ablation) {
    case Ablation::full: return "full";
    case Ablation::no_cb: return "no_cb";
    case Ablation::no_cd: return "no_cd";
    case Ablation::source_only: return "source_only";
    case Ablation::gin_gin: return "gin_gin";
    case Ablation::hgkn_hgkn: return "hgkn_hgkn";
  }
  throw StateError("unknown ablation value");
}

Ablation parse_ablation(const std::string& name) {
  if (name == "full") return Ablation::full;
  if (name == "no_cb") return Ablation::no_cb;
  if (name == "no_cd") return Ablation::no_cd;
  if (name == "source_only") return Ablation::source_only;
  if (name == "gin_gin") return Ablation::gin_gin;
  if (name == "hgkn_hgkn") return Ablation::hgkn_hgkn;
  throw ConfigError("unknown ablation '" + name +
                    "' (expected full, no_cb, no_cd, source_only, gin_gin, hgkn_hgkn)");
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("rho must lie in (0, 1)");
  if (num_filters < 1) throw ConfigError("num_filters must be positive");
  if (r < 0) throw ConfigError("r must be non-negative");
  if (wl_iterations < 0) throw ConfigError("wl_iterations must be non-negative");
  if (quantizer_k < 1) throw ConfigError("quantizer_k must be positive");
  if (hidden < 1) throw ConfigError("hidden must be positive");
  if (min_filter_size < 1) throw ConfigError("min_filter_size must be positive");
  if (max_filter_size < min_filter_size)
    throw ConfigError("max_filter_size must be at least min_filter_size");
  if (quantizer_sample_cap < 1) throw ConfigError("quantizer_sample_cap must be positive");
  if (early_stop_delta < 0.0) throw ConfigError("early_stop_delta must be non-negative");
  if (early_stop_patience < 1) throw ConfigError("early_stop_patience must be positive");
}

namespace {

void branch_kinds(Ablation ablation, BranchKind& first, BranchKind& second) {
  switch (ablation) {
    case Ablation::gin_gin:
      first = BranchKind::gin;
      second = BranchKind::gin;
      return;
    case Ablation::hgkn_hgkn:
      first = BranchKind::hgkn;
      second = BranchKind::hgkn;
      return;
    default:
      first = BranchKind::gin;
      second = BranchKind::hgkn;
      return;
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

Branch make_branch(ParameterSet& params, const std::string& prefix, BranchKind kind,
                   const TrainConfig& config, const ModelMeta& meta, Rng& rng) {
  Branch branch;
  branch.kind = kind;
  if (kind == BranchKind::gin) {
    branch.gin = GCNEncoder::create(params, prefix, meta.feature_mode, meta.feature_dim,
                                    config.hidden, rng);
  } else {
    branch.hgkn = HGKNEncoder::create(params, prefix, hgkn_config(config, meta), rng);
  }
  return branch;
}

Model init_model_impl(const TrainConfig& config, const DomainPair& data, Rng& rng) {
  config.validate();
  Model model;
  model.config = config;
  model.meta = derive_meta(config, data);
  model.branch1 =
      make_branch(model.params, "b1", model.meta.branch1_kind, config, model.meta, rng);
  model.branch2 =
      make_branch(model.params, "b2", model.meta.branch2_kind, config, model.meta, rng);
  model.classifier =
      make_affine(model.params, "classifier", config.hidden, model.meta.num_classes, rng);
  return model;
}

Tensor branch_encode(const Branch& branch, const Graph& graph, HGKNTrace* trace,
                     GraphFeatureCache* cache) {
  if (branch.kind == BranchKind::gin) return branch.gin.encode(graph);
  return branch.hgkn.encode(graph, trace, cache);
}

struct BatchEncoding {
  Tensor raw;  // batch x hidden
  std::vector<HGKNTrace> traces;
};

BatchEncoding encode_batch(const Branch& branch, const Dataset& dataset,
                           const std::vector<int>& indices,
                           std::vector<GraphFeatureCache>* caches) {
  const bool want_trace = branch.kind == BranchKind::hgkn;
  BatchEncoding out;
  std::vector<Tensor> rows;
  rows.reserve(indices.size());
  for (int i : indices) {
    HGKNTrace trace;
    GraphFeatureCache* cache = caches ? &(*caches)[i] : nullptr;
    rows.push_back(branch_encode(branch, dataset.graphs[i], want_trace ? &trace : nullptr, cache));
    if (want_trace) out.traces.push_back(std::move(trace));
  }
  out.raw = concat_rows(rows);
  return out;
}

void apply_filter_updates(HGKNEncoder& encoder, const std::vector<const HGKNTrace*>& traces,
                          Rng& rng, bool ascent_accept) {
  const int layer_count = static_cast<int>(encoder.layers().size());
  for (int k = 0; k < layer_count; ++k) {
    std::vector<const NodeFeature*> nodes;
    std::vector<std::vector<double>> dl_de;
    for (const HGKNTrace* trace : traces) {
      const HGKNLayerTrace& lt = trace->layers[k];
      const int n = lt.responses.rows();
      const int m = lt.responses.cols();
      const bool has = lt.responses.has_grad();
      for (int v = 0; v < n; ++v) {
        nodes.push_back(&lt.node_features[v]);
        std::vector<double> row(m, 0.0);
        if (has) {
          const auto& grad = lt.responses.grad();
          row.assign(grad.begin() + static_cast<std::size_t>(v) * m,
                     grad.begin() + static_cast<std::size_t>(v + 1) * m);
        }
        dl_de.push_back(std::move(row));
      }
    }
    encoder.layers()[k].filter_update_step(nodes, dl_de, rng, ascent_accept);
  }
}

ParameterSet build_trainable(Model& model) {
  ParameterSet out;
  auto add_prefixed = [&](const std::string& prefix) {
    for (auto& [name, tensor] : model.params)
      if (name.rfind(prefix, 0) == 0) out.add(name, tensor);
  };
  if (model.branch1.kind == BranchKind::gin)
    add_prefixed("b1.");
  else
    model.branch1.hgkn.collect_trainable(out);
  if (model.config.ablation != Ablation::source_only) {
    if (model.branch2.kind == BranchKind::gin)
      add_prefixed("b2.");
    else
      model.branch2.hgkn.collect_trainable(out);
  }
  add_prefixed("classifier.");
  return out;
}

std::vector<double> softmax_values(const std::vector<double>& logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - top);
    denom += out[i];
  }
  for (double& v : out) v /= denom;
  return out;
}

int argmax_lowest(const std::vector<double>& values) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(values.size()); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

}  // namespace

ModelMeta derive_meta(const TrainConfig& config, const DomainPair& data) {
  ModelMeta meta;
  meta.num_classes = data.num_classes();
  bool all_labels = true;
  bool all_attrs = true;
  int max_label = -1;
  int attr_dim = -1;
  auto scan = [&](const Dataset& dataset) {
    for (const Graph& g : dataset.graphs) {
      if (g.node_labels) {
        for (int label : *g.node_labels) max_label = std::max(max_label, label);
      } else {
        all_labels = false;
      }
      if (g.node_attrs) {
        for (const auto& row : *g.node_attrs) {
          if (attr_dim < 0) attr_dim = static_cast<int>(row.size());
          if (static_cast<int>(row.size()) != attr_dim)
            throw DomainError("attribute dimensions differ across graphs");
        }
      } else {
        all_attrs = false;
      }
    }
  };
  scan(data.source());
  scan(data.target());
  if (all_labels && max_label >= 0) {
    meta.feature_mode = GCNEncoder::FeatureMode::one_hot_labels;
    meta.feature_dim = max_label + 1;
    meta.label_alphabet = max_label + 1;
  } else if (all_attrs && attr_dim > 0) {
    meta.feature_mode = GCNEncoder::FeatureMode::raw_attrs;
    meta.feature_dim = attr_dim;
    meta.label_alphabet = 0;
  } else {
    throw DomainError("datasets need node labels or node attributes on every graph");
  }
  branch_kinds(config.ablation, meta.branch1_kind, meta.branch2_kind);
  return meta;
}

Model init_model(const TrainConfig& config, const DomainPair& data) {
  Rng rng(config.seed);
  return init_model_impl(config, data, rng);
}

TrainResult train(const TrainConfig& config, const DomainPair& data) {
  config.validate();
  const Dataset& source = data.source();
  const Dataset& target = data.target();
  if (source.graphs.empty()) throw DomainError("source dataset is empty");
  if (target.graphs.empty()) throw DomainError("target dataset is empty");

  Rng rng(config.seed);
  TrainResult result;
  result.model = init_model_impl(config, data, rng);
  Model& model = result.model;
  TrainHistory& history = result.history;

  const bool use_branch2 = config.ablation != Ablation::source_only;

  // Quantizer fits consume the front of each dataset, source first.
  if ((model.branch1.kind == BranchKind::hgkn) ||
      (use_branch2 && model.branch2.kind == BranchKind::hgkn)) {
    std::vector<const Graph*> sample;
    const int cap_s = std::min<int>(config.quantizer_sample_cap,
                                    static_cast<int>(source.graphs.size()));
    const int cap_t = std::min<int>(config.quantizer_sample_cap,
                                    static_cast<int>(target.graphs.size()));
    for (int i = 0; i < cap_s; ++i) sample.push_back(&source.graphs[i]);
    for (int i = 0; i < cap_t; ++i) sample.push_back(&target.graphs[i]);
    if (model.branch1.kind == BranchKind::hgkn) model.branch1.hgkn.fit_quantizers(sample, rng);
    if (use_branch2 && model.branch2.kind == BranchKind::hgkn)
      model.branch2.hgkn.fit_quantizers(sample, rng);
  }

  std::vector<GraphFeatureCache> b1_source_cache, b1_target_cache;
  std::vector<GraphFeatureCache> b2_source_cache, b2_target_cache;
  if (model.branch1.kind == BranchKind::hgkn) {
    b1_source_cache.resize(source.graphs.size());
    b1_target_cache.resize(target.graphs.size());
  }
  if (use_branch2 && model.branch2.kind == BranchKind::hgkn) {
    b2_source_cache.resize(source.graphs.size());
    b2_target_cache.resize(target.graphs.size());
  }
  auto cache_for = [](std::vector<GraphFeatureCache>& caches) {
    return caches.empty() ? nullptr : &caches;
  };

  ParameterSet trainable = build_trainable(model);
  AdamState adam;
  AdamConfig adam_config;
  adam_config.lr = config.lr;
  ContrastiveConfig ccfg;
  ccfg.tau = config.tau;
  ccfg.negative_pool = config.negative_pool;
  ccfg.confidence_threshold = config.confidence_threshold;

  const int ns = static_cast<int>(source.graphs.size());
  const int nt = static_cast<int>(target.graphs.size());
  const int batch_s = std::min(config.batch_size, ns);
  const int batch_t = std::min(config.batch_size, nt);
  const int steps_per_epoch = std::max(1, std::min(ns, nt) / config.batch_size);
  const int num_classes = model.meta.num_classes;

  double best_loss = std::numeric_limits<double>::infinity();
  int stale_epochs = 0;
  long long global_step = 0;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    double epoch_loss_sum = 0.0;

    for (int step = 0; step < steps_per_epoch; ++step, ++global_step) {
      const Batch batch_source = sample_batch(source, batch_s, rng, DomainTag::source);
      const Batch batch_target = sample_batch(target, batch_t, rng, DomainTag::target);
      std::vector<int> source_labels;
      source_labels.reserve(batch_source.graph_indices.size());
      for (int i : batch_source.graph_indices)
        source_labels.push_back(*source.graphs[i].class_label);

      try {
        model.params.zero_grad();
        LossReport report;

        if (config.ablation == Ablation::source_only) {
          BatchEncoding enc = encode_batch(model.branch1, source, batch_source.graph_indices,
                                           cache_for(b1_source_cache));
          const Tensor logits = model.classifier.apply(enc.raw);
          const Tensor l_s = supervised_loss(logits, source_labels);
          report = total_loss(0.0, 0.0, l_s.values()[0]);
          Tensor total = l_s;
          total.backward();
          adam_step(trainable, adam, adam_config);
        } else {
          BatchEncoding b1s = encode_batch(model.branch1, source, batch_source.graph_indices,
                                           cache_for(b1_source_cache));
          BatchEncoding b1t = encode_batch(model.branch1, target, batch_target.graph_indices,
                                           cache_for(b1_target_cache));
          BatchEncoding b2s = encode_batch(model.branch2, source, batch_source.graph_indices,
                                           cache_for(b2_source_cache));
          BatchEncoding b2t = encode_batch(model.branch2, target, batch_target.graph_indices,
                                           cache_for(b2_target_cache));

          const Tensor z1 = row_l2_normalize(concat_rows({b1s.raw, b1t.raw}));
          const Tensor z2 = row_l2_normalize(concat_rows({b2s.raw, b2t.raw}));
          std::vector<int> source_rows(batch_s), target_rows(batch_t);
          for (int i = 0; i < batch_s; ++i) source_rows[i] = i;
          for (int i = 0; i < batch_t; ++i) target_rows[i] = batch_s + i;
          const Tensor z1_src = gather_rows(z1, source_rows);
          const Tensor z1_tgt = gather_rows(z1, target_rows);
          const Tensor z2_src = gather_rows(z2, source_rows);
          const Tensor z2_tgt = gather_rows(z2, target_rows);

          const Tensor logits = model.classifier.apply(b1s.raw);
          const Tensor l_s = supervised_loss(logits, source_labels);
          Tensor total = l_s;
          double v_cb = 0.0, v_cd1 = 0.0, v_cd2 = 0.0;

          if (config.ablation != Ablation::no_cb) {
            const Tensor l_cb = cross_branch_loss(z1, z2, ccfg, batch_s);
            v_cb = l_cb.values()[0];
            total = add(total, l_cb);
          }
          if (config.ablation != Ablation::no_cd) {
            const auto pseudo1 =
                pseudo_label_batch(z1_tgt, z1_src, source_labels, num_classes, ccfg);
            const Tensor l_cd1 =
                cross_domain_loss(z1_tgt, pseudo1, z1_src, source_labels, ccfg);
            const auto pseudo2 =
                pseudo_label_batch(z2_tgt, z2_src, source_labels, num_classes, ccfg);
            const Tensor l_cd2 =
                cross_domain_loss(z2_tgt, pseudo2, z2_src, source_labels, ccfg);
            v_cd1 = l_cd1.values()[0];
            v_cd2 = l_cd2.values()[0];
            total = add(total, add(l_cd1, l_cd2));
          }

          report = total_loss(v_cb, v_cd1 + v_cd2, l_s.values()[0]);
          report.l_cd_branch1 = v_cd1;
          report.l_cd_branch2 = v_cd2;

          total.backward();
          adam_step(trainable, adam, adam_config);

          if (model.branch1.kind == BranchKind::hgkn) {
            std::vector<const HGKNTrace*> traces;
            for (const auto& t : b1s.traces) traces.push_back(&t);
            for (const auto& t : b1t.traces) traces.push_back(&t);
            apply_filter_updates(model.branch1.hgkn, traces, rng, config.ascent_accept);
          }
          if (model.branch2.kind == BranchKind::hgkn) {
            std::vector<const HGKNTrace*> traces;
            for (const auto& t : b2s.traces) traces.push_back(&t);
            for (const auto& t : b2t.traces) traces.push_back(&t);
            apply_filter_updates(model.branch2.hgkn, traces, rng, config.ascent_accept);
          }
        }

        StepRecord record;
        record.epoch = epoch;
        record.step = static_cast<int>(global_step);
        record.loss = report;
        history.steps.push_back(record);
        epoch_loss_sum += report.total;
      } catch (const DomainError& e) {
        throw TrainDiverged(global_step, e.what());
      }
    }

    const double epoch_mean = epoch_loss_sum / static_cast<double>(steps_per_epoch);
    history.epoch_mean_loss.push_back(epoch_mean);
    const auto epoch_end = std::chrono::steady_clock::now();
    history.epoch_wall_seconds.push_back(
        std::chrono::duration<double>(epoch_end - epoch_start).count());

    if (data.has_target_labels()) {
      history.has_target_diagnostics = true;
      history.epoch_target_accuracy.push_back(evaluate(model, data.labeled_target()));
      history.epoch_pseudo_accuracy.push_back(pseudo_label_accuracy(model, data));
    }

    history.epochs_run = epoch + 1;
    if (best_loss - epoch_mean > config.early_stop_delta) {
      best_loss = epoch_mean;
      stale_epochs = 0;
    } else if (++stale_epochs >= config.early_stop_patience) {
      history.early_stopped = true;
      break;
    }
  }

  return result;
}

std::vector<double> predict(const Model& model, const Graph& graph) {
  const Tensor z = branch_encode(model.branch1, graph, nullptr, nullptr);
  const Tensor logits = model.classifier.apply(z);
  return softmax_values(logits.values());
}

double evaluate(const Model& model, const Dataset& dataset) {
  if (dataset.graphs.empty()) throw DomainError("cannot evaluate an empty dataset");
  long long correct = 0;
  for (const Graph& graph : dataset.graphs) {
    if (!graph.class_label) throw DomainError("evaluation graph has no class label");
    if (argmax_lowest(predict(model, graph)) == *graph.class_label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.graphs.size());
}

double pseudo_label_accuracy(const Model& model, const DomainPair& data) {
  const auto& hidden = data.target_hidden_labels();
  if (data.target().graphs.empty()) throw DomainError("target dataset is empty");

  ContrastiveConfig ccfg;
  ccfg.tau = model.config.tau;

  std::vector<Tensor> source_rows;
  std::vector<int> source_labels;
  source_rows.reserve(data.source().graphs.size());
  for (const Graph& graph : data.source().graphs) {
    source_rows.push_back(branch_encode(model.branch1, graph, nullptr, nullptr));
    source_labels.push_back(*graph.class_label);
  }
  const Tensor source_normed = row_l2_normalize(concat_rows(source_rows));
  const auto source_values = tensor_rows(source_normed);

  long long correct = 0;
  for (std::size_t j = 0; j < data.target().graphs.size(); ++j) {
    const Tensor z =
        row_l2_normalize(branch_encode(model.branch1, data.target().graphs[j], nullptr, nullptr));
    const PseudoLabel label = pseudo_label(z.values(), source_values, source_labels,
                                           model.meta.num_classes, ccfg);
    if (label.label == hidden[j]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.target().graphs.size());
}

}  // namespace coco
