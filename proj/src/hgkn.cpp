#include "coco/hgkn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace coco {

void FilterGraph::set_edge(int i, int j, bool present) {
  adjacency[static_cast<std::size_t>(i) * node_count + j] = present ? 1 : 0;
  adjacency[static_cast<std::size_t>(j) * node_count + i] = present ? 1 : 0;
}

int FilterGraph::edge_count() const {
  int count = 0;
  for (int i = 0; i < node_count; ++i)
    for (int j = i + 1; j < node_count; ++j)
      if (has_edge(i, j)) ++count;
  return count;
}

Graph FilterGraph::to_graph() const {
  Graph g;
  g.node_count = node_count;
  for (int i = 0; i < node_count; ++i)
    for (int j = i + 1; j < node_count; ++j)
      if (has_edge(i, j)) g.edges.emplace_back(i, j);
  g.node_labels = node_attrs;
  return g;
}

void FilterGraph::validate(int alphabet) const {
  if (node_count < 1) throw DomainError("filter graph has no nodes");
  if (adjacency.size() != static_cast<std::size_t>(node_count) * node_count)
    throw DomainError("filter adjacency size mismatch");
  if (static_cast<int>(node_attrs.size()) != node_count)
    throw DomainError("filter attribute count mismatch");
  for (int i = 0; i < node_count; ++i) {
    if (has_edge(i, i)) throw DomainError("filter adjacency has a self-loop");
    for (int j = 0; j < node_count; ++j)
      if (has_edge(i, j) != has_edge(j, i)) throw DomainError("filter adjacency not symmetric");
  }
  for (int a : node_attrs)
    if (a < 0 || a >= alphabet) throw DomainError("filter attribute outside the alphabet");
}

FilterGraph random_filter(int min_size, int max_size, int alphabet, Rng& rng) {
  if (min_size < 1 || max_size < min_size) throw DomainError("bad filter size range");
  if (alphabet < 1) throw DomainError("alphabet must be positive");
  FilterGraph filter;
  filter.node_count =
      min_size + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(max_size - min_size + 1)));
  filter.adjacency.assign(static_cast<std::size_t>(filter.node_count) * filter.node_count, 0);
  for (int i = 0; i < filter.node_count; ++i)
    for (int j = i + 1; j < filter.node_count; ++j)
      if (uniform_real(rng) < 0.5) filter.set_edge(i, j, true);
  filter.node_attrs.resize(filter.node_count);
  for (int& a : filter.node_attrs)
    a = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(alphabet)));
  return filter;
}

FilterGraph propose_filter_edit(const FilterGraph& filter, int alphabet, Rng& rng) {
  const int n = filter.node_count;
  const std::uint64_t edge_slots = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  const std::uint64_t attr_slots = static_cast<std::uint64_t>(n) * (alphabet - 1);
  const std::uint64_t total = edge_slots + attr_slots;
  if (total == 0) throw DomainError("filter admits no atomic edits");
  FilterGraph candidate = filter;
  const std::uint64_t pick = uniform_index(rng, total);
  if (pick < edge_slots) {
    // Enumerate unordered pairs (i, j), i < j, in lexicographic order.
    std::uint64_t remaining = pick;
    int i = 0;
    while (remaining >= static_cast<std::uint64_t>(n - 1 - i)) {
      remaining -= static_cast<std::uint64_t>(n - 1 - i);
      ++i;
    }
    const int j = i + 1 + static_cast<int>(remaining);
    candidate.set_edge(i, j, !filter.has_edge(i, j));
  } else {
    const std::uint64_t slot = pick - edge_slots;
    const int node = static_cast<int>(slot / (alphabet - 1));
    const int step = static_cast<int>(slot % (alphabet - 1));
    candidate.node_attrs[node] = (filter.node_attrs[node] + 1 + step) % alphabet;
  }
  return candidate;
}

double estimate_filter_gradient(const std::vector<double>& dl_de,
                                const std::vector<double>& old_vals,
                                const std::vector<double>& new_vals) {
  if (dl_de.size() != old_vals.size() || old_vals.size() != new_vals.size())
    throw ShapeError("estimate_filter_gradient vectors differ in length");
  double estimate = 0.0;
  for (std::size_t i = 0; i < dl_de.size(); ++i)
    estimate += dl_de[i] * (new_vals[i] - old_vals[i]);
  return estimate;
}

double normalized_kernel_value(const NodeFeature& a, const NodeFeature& b) {
  if (a.self_dot == 0 || b.self_dot == 0)
    throw DomainError("normalized kernel undefined for an empty graph");
  const long long k = wl_dot(a.fm, b.fm);
  if (k == a.self_dot && k == b.self_dot) return 1.0;
  const double value = static_cast<double>(k) /
                       (std::sqrt(static_cast<double>(a.self_dot)) *
                        std::sqrt(static_cast<double>(b.self_dot)));
  return std::min(std::max(value, 0.0), 1.0);
}

namespace {

Graph induced_subgraph(const Graph& graph, const std::vector<int>& kept_ascending) {
  std::vector<int> new_index(graph.node_count, -1);
  for (std::size_t i = 0; i < kept_ascending.size(); ++i)
    new_index[kept_ascending[i]] = static_cast<int>(i);
  Graph out;
  out.node_count = static_cast<int>(kept_ascending.size());
  for (const auto& [u, v] : graph.edges)
    if (new_index[u] >= 0 && new_index[v] >= 0)
      out.edges.emplace_back(new_index[u], new_index[v]);
  out.normalize_edges();
  if (graph.node_labels) {
    out.node_labels.emplace();
    for (int v : kept_ascending) out.node_labels->push_back((*graph.node_labels)[v]);
  }
  if (graph.node_attrs) {
    out.node_attrs.emplace();
    for (int v : kept_ascending) out.node_attrs->push_back((*graph.node_attrs)[v]);
  }
  return out;
}

}  // namespace

PoolResult attention_pool_structure(const Graph& graph, const std::vector<double>& scores,
                                    double rho) {
  if (graph.node_count < 1) throw DomainError("pooling needs at least one node");
  if (static_cast<int>(scores.size()) != graph.node_count)
    throw ShapeError("score count does not match node count");
  if (!(rho > 0.0 && rho < 1.0)) throw DomainError("pooling ratio must lie in (0, 1)");
  const int keep = static_cast<int>(std::ceil(rho * graph.node_count));
  std::vector<int> order(graph.node_count);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  PoolResult result;
  result.kept.assign(order.begin(), order.begin() + keep);
  std::sort(result.kept.begin(), result.kept.end());
  result.graph = induced_subgraph(graph, result.kept);
  return result;
}

HGKNLayer HGKNLayer::create(ParameterSet& params, const std::string& prefix,
                            const Config& config, Rng& rng) {
  if (config.num_filters < 1) throw DomainError("layer needs at least one filter");
  if (config.alphabet < 1) throw DomainError("alphabet must be positive");
  HGKNLayer layer;
  layer.config_ = config;
  layer.filters_.reserve(config.num_filters);
  for (int m = 0; m < config.num_filters; ++m)
    layer.filters_.push_back(
        random_filter(config.min_filter_size, config.max_filter_size, config.alphabet, rng));
  layer.psi_ = make_mlp(params, prefix + ".psi", config.num_filters, config.hidden,
                        config.hidden, rng);
  layer.score_ = make_affine(params, prefix + ".score", config.hidden, 1, rng);
  layer.rebuild_filter_features();
  return layer;
}

HGKNLayer HGKNLayer::bind(const ParameterSet& params, const std::string& prefix,
                          const Config& config) {
  HGKNLayer layer;
  layer.config_ = config;
  layer.psi_ = bind_mlp(params, prefix + ".psi");
  layer.score_ = bind_affine(params, prefix + ".score");
  return layer;
}

void HGKNLayer::rebuild_filter_features() {
  filter_features_.clear();
  filter_features_.reserve(filters_.size());
  for (const auto& filter : filters_) {
    NodeFeature feature;
    feature.fm = wl_feature_map(filter.to_graph(), config_.wl_iterations, refiner_);
    feature.self_dot = wl_dot(feature.fm, feature.fm);
    filter_features_.push_back(std::move(feature));
  }
}

void HGKNLayer::set_filters(std::vector<FilterGraph> filters) {
  if (static_cast<int>(filters.size()) != config_.num_filters)
    throw StateError("filter count does not match layer configuration");
  for (const auto& f : filters) f.validate(config_.alphabet);
  filters_ = std::move(filters);
  rebuild_filter_features();
}

void HGKNLayer::set_quantizer_centroids(std::vector<std::vector<double>> centroids) {
  if (!needs_quantizer()) throw StateError("layer does not use a quantizer");
  if (static_cast<int>(centroids.size()) != config_.alphabet)
    throw StateError("centroid count does not match the layer alphabet");
  quantizer_.set_centroids(std::move(centroids));
}

void HGKNLayer::fit_quantizer(const std::vector<std::vector<double>>& rows, Rng& rng) {
  if (!needs_quantizer()) throw StateError("layer does not use a quantizer");
  if (quantizer_.fitted()) throw StateError("layer quantizer is already fitted");
  quantizer_.fit(rows, config_.alphabet, rng);
}

std::vector<int> HGKNLayer::input_labels(const Graph& graph,
                                         const std::vector<std::vector<double>>& rows) const {
  if (config_.mode == InputMode::labels) {
    if (!graph.node_labels) throw DomainError("graph has no discrete node labels");
    for (int label : *graph.node_labels)
      if (label < 0 || label >= config_.alphabet)
        throw DomainError("node label outside the layer alphabet");
    return *graph.node_labels;
  }
  if (static_cast<int>(rows.size()) != graph.node_count)
    throw ShapeError("feature row count does not match node count");
  return quantizer_.assign_rows(rows);
}

NodeFeature HGKNLayer::subgraph_feature(const Graph& labeled_graph, int center) const {
  const Graph sub = r_hop_subgraph(labeled_graph, center, config_.r);
  NodeFeature feature;
  feature.fm = wl_feature_map(sub, config_.wl_iterations, refiner_);
  feature.self_dot = wl_dot(feature.fm, feature.fm);
  return feature;
}

std::vector<NodeFeature> HGKNLayer::all_subgraph_features(const Graph& labeled_graph) const {
  std::vector<NodeFeature> features;
  features.reserve(labeled_graph.node_count);
  for (int v = 0; v < labeled_graph.node_count; ++v)
    features.push_back(subgraph_feature(labeled_graph, v));
  return features;
}

HGKNLayer::Forward HGKNLayer::forward(const Graph& labeled_graph,
                                      const std::vector<NodeFeature>* cached_features) const {
  Forward out;
  out.node_features =
      cached_features ? *cached_features : all_subgraph_features(labeled_graph);
  if (static_cast<int>(out.node_features.size()) != labeled_graph.node_count)
    throw ShapeError("cached feature count does not match node count");
  const int n = labeled_graph.node_count;
  const int m = config_.num_filters;
  std::vector<double> responses(static_cast<std::size_t>(n) * m);
  for (int v = 0; v < n; ++v)
    for (int f = 0; f < m; ++f)
      responses[static_cast<std::size_t>(v) * m + f] =
          normalized_kernel_value(out.node_features[v], filter_features_[f]);
  out.responses = Tensor::from_values(n, m, std::move(responses), /*requires_grad=*/true);
  out.features = psi_.apply(out.responses);
  out.scores = tanh(score_.apply(out.features));
  return out;
}

std::vector<bool> HGKNLayer::filter_update_step(const std::vector<const NodeFeature*>& nodes,
                                                const std::vector<std::vector<double>>& dl_de,
                                                Rng& rng, bool ascent_accept) {
  if (nodes.size() != dl_de.size())
    throw ShapeError("gradient row count does not match node count");
  for (const auto& row : dl_de)
    if (static_cast<int>(row.size()) != config_.num_filters)
      throw ShapeError("gradient row width does not match filter count");
  std::vector<bool> accepted(filters_.size(), false);
  for (std::size_t m = 0; m < filters_.size(); ++m) {
    FilterGraph candidate = propose_filter_edit(filters_[m], config_.alphabet, rng);
    bool any_gradient = false;
    for (const auto& row : dl_de)
      if (row[m] != 0.0) {
        any_gradient = true;
        break;
      }
    if (!any_gradient) continue;  // estimate is exactly zero; strict rule rejects

    NodeFeature candidate_feature;
    candidate_feature.fm =
        wl_feature_map(candidate.to_graph(), config_.wl_iterations, refiner_);
    candidate_feature.self_dot = wl_dot(candidate_feature.fm, candidate_feature.fm);
    double estimate = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const double old_val = normalized_kernel_value(*nodes[i], filter_features_[m]);
      const double new_val = normalized_kernel_value(*nodes[i], candidate_feature);
      estimate += dl_de[i][m] * (new_val - old_val);
    }
    const bool accept = ascent_accept ? estimate > 0.0 : estimate < 0.0;
    if (accept) {
      filters_[m] = std::move(candidate);
      filter_features_[m] = std::move(candidate_feature);
      accepted[m] = true;
    }
  }
  return accepted;
}

namespace {

HGKNLayer::Config layer_config(const HGKNEncoder::Config& config, int index) {
  HGKNLayer::Config lc;
  lc.num_filters = config.num_filters;
  lc.min_filter_size = config.min_filter_size;
  lc.max_filter_size = config.max_filter_size;
  lc.r = config.r;
  lc.wl_iterations = config.wl_iterations;
  lc.hidden = config.hidden;
  if (index == 0 && config.label_alphabet > 0) {
    lc.mode = HGKNLayer::InputMode::labels;
    lc.alphabet = config.label_alphabet;
  } else {
    lc.mode = HGKNLayer::InputMode::quantize;
    lc.alphabet = config.quantizer_k;
  }
  return lc;
}

}  // namespace

HGKNEncoder HGKNEncoder::create(ParameterSet& params, const std::string& prefix,
                                const Config& config, Rng& rng) {
  if (config.layer_count < 1) throw DomainError("encoder needs at least one layer");
  if (!(config.rho > 0.0 && config.rho < 1.0)) throw DomainError("rho must lie in (0, 1)");
  HGKNEncoder encoder;
  encoder.config_ = config;
  encoder.prefix_ = prefix;
  for (int k = 0; k < config.layer_count; ++k)
    encoder.layers_.push_back(HGKNLayer::create(params, prefix + ".layer" + std::to_string(k),
                                                layer_config(config, k), rng));
  encoder.final_ = make_affine(params, prefix + ".final", config.hidden, config.hidden, rng);
  return encoder;
}

HGKNEncoder HGKNEncoder::bind(const ParameterSet& params, const std::string& prefix,
                              const Config& config) {
  HGKNEncoder encoder;
  encoder.config_ = config;
  encoder.prefix_ = prefix;
  for (int k = 0; k < config.layer_count; ++k)
    encoder.layers_.push_back(HGKNLayer::bind(params, prefix + ".layer" + std::to_string(k),
                                              layer_config(config, k)));
  encoder.final_ = bind_affine(params, prefix + ".final");
  return encoder;
}

bool HGKNEncoder::ready() const {
  for (const auto& layer : layers_)
    if (!layer.ready()) return false;
  return true;
}

HGKNEncoder::Stage HGKNEncoder::initial_stage(const Graph& graph) const {
  if (graph.node_count < 1) throw DomainError("cannot encode an empty graph");
  Stage stage;
  stage.graph = graph;
  if (layers_.front().config().mode == HGKNLayer::InputMode::quantize) {
    if (!graph.node_attrs) throw DomainError("graph has no attributes to quantize");
    stage.rows = *graph.node_attrs;
  }
  return stage;
}

HGKNEncoder::Stage HGKNEncoder::run_layer(int index, const Stage& in, HGKNTrace* trace,
                                          GraphFeatureCache* cache) const {
  const HGKNLayer& layer = layers_[index];
  Graph labeled = in.graph;
  labeled.node_labels = layer.input_labels(in.graph, in.rows);

  const std::vector<NodeFeature>* cached = nullptr;
  if (index == 0 && cache && cache->ready) cached = &cache->layer0;
  HGKNLayer::Forward fwd = layer.forward(labeled, cached);
  if (index == 0 && cache && !cache->ready) {
    cache->layer0 = fwd.node_features;
    cache->ready = true;
  }
  if (trace) {
    HGKNLayerTrace layer_trace;
    layer_trace.node_features = fwd.node_features;
    layer_trace.responses = fwd.responses;
    trace->layers.push_back(std::move(layer_trace));
  }

  PoolResult pool = attention_pool_structure(in.graph, fwd.scores.values(), config_.rho);
  const Tensor kept_features = gather_rows(fwd.features, pool.kept);
  const Tensor kept_scores = gather_rows(fwd.scores, pool.kept);
  const Tensor pooled =
      mul(kept_features, matmul(kept_scores, Tensor::ones(1, config_.hidden)));

  Stage out;
  out.graph = std::move(pool.graph);
  out.features = pooled;
  out.rows = tensor_rows(pooled);
  return out;
}

void HGKNEncoder::fit_quantizers(const std::vector<const Graph*>& sample, Rng& rng) {
  if (sample.empty()) throw FitError("empty quantizer sample");
  for (int k = 0; k < static_cast<int>(layers_.size()); ++k) {
    HGKNLayer& layer = layers_[k];
    if (!layer.needs_quantizer()) continue;
    std::vector<std::vector<double>> rows;
    for (const Graph* graph : sample) {
      Stage stage = initial_stage(*graph);
      for (int j = 0; j < k; ++j) stage = run_layer(j, stage, nullptr, nullptr);
      rows.insert(rows.end(), stage.rows.begin(), stage.rows.end());
    }
    layer.fit_quantizer(rows, rng);
  }
}

Tensor HGKNEncoder::encode(const Graph& graph, HGKNTrace* trace,
                           GraphFeatureCache* cache) const {
  Stage stage = initial_stage(graph);
  for (int k = 0; k < static_cast<int>(layers_.size()); ++k)
    stage = run_layer(k, stage, trace, cache);
  const Tensor projected = final_.apply(stage.features);
  return matmul(Tensor::ones(1, projected.rows()), projected);
}

void HGKNEncoder::collect_trainable(ParameterSet& out) const {
  const std::string last = prefix_ + ".layer" + std::to_string(layers_.size() - 1);
  const HGKNLayer& layer = layers_.back();
  out.add(last + ".psi.fc1.weight", layer.psi().first.weight);
  out.add(last + ".psi.fc1.bias", layer.psi().first.bias);
  out.add(last + ".psi.fc2.weight", layer.psi().second.weight);
  out.add(last + ".psi.fc2.bias", layer.psi().second.bias);
  out.add(last + ".score.weight", layer.score_map().weight);
  out.add(last + ".score.bias", layer.score_map().bias);
  out.add(prefix_ + ".final.weight", final_.weight);
  out.add(prefix_ + ".final.bias", final_.bias);
}

}  // namespace coco
