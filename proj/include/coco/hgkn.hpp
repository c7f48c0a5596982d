#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coco/gcn.hpp"
#include "coco/graph.hpp"
#include "coco/kernels.hpp"
#include "coco/rng.hpp"
#include "coco/tensor.hpp"

namespace coco {

// Small learnable discrete graph used as a pattern template.  Adjacency is a
// flattened symmetric boolean matrix with a zero diagonal; node_attrs are
// symbols in [0, alphabet).
struct FilterGraph {
  int node_count = 0;
  std::vector<std::uint8_t> adjacency;  // node_count * node_count, row-major
  std::vector<int> node_attrs;

  bool has_edge(int i, int j) const { return adjacency[static_cast<std::size_t>(i) * node_count + j] != 0; }
  void set_edge(int i, int j, bool present);
  int edge_count() const;
  Graph to_graph() const;
  void validate(int alphabet) const;  // DomainError on any broken invariant
};

FilterGraph random_filter(int min_size, int max_size, int alphabet, Rng& rng);

// One uniformly chosen atomic edit over the combined candidate set of
// n(n-1)/2 edge toggles and n*(alphabet-1) attribute reassignments.
FilterGraph propose_filter_edit(const FilterGraph& filter, int alphabet, Rng& rng);

// First-order estimate of the loss change from swapping a filter: sum over
// nodes of dl_de[v] * (new_vals[v] - old_vals[v]).
double estimate_filter_gradient(const std::vector<double>& dl_de,
                                const std::vector<double>& old_vals,
                                const std::vector<double>& new_vals);

// Feature map of one graph (an r-hop subgraph or a filter) with its
// precomputed self dot product, so normalized kernels need one wl_dot.
struct NodeFeature {
  WLFeatureMap fm;
  long long self_dot = 0;
};

double normalized_kernel_value(const NodeFeature& a, const NodeFeature& b);

// Top-ceil(rho * n) nodes by score, ties to the lower index; kept indices are
// returned ascending and the pooled graph is the induced subgraph on them.
struct PoolResult {
  Graph graph;
  std::vector<int> kept;
};
PoolResult attention_pool_structure(const Graph& graph, const std::vector<double>& scores,
                                    double rho);

class HGKNLayer {
 public:
  enum class InputMode { quantize, labels };

  struct Config {
    int num_filters = 15;
    int min_filter_size = 3;
    int max_filter_size = 8;
    int r = 1;
    int wl_iterations = 2;
    int alphabet = 20;  // quantizer k, or the discrete label alphabet
    int hidden = 64;
    InputMode mode = InputMode::quantize;
  };

  struct Forward {
    Tensor responses;  // leaf n x M tensor; grad gives dL/de after backward
    Tensor features;   // psi(responses), n x hidden
    Tensor scores;     // tanh(score(features)), n x 1
    std::vector<NodeFeature> node_features;
  };

  HGKNLayer() = default;
  static HGKNLayer create(ParameterSet& params, const std::string& prefix, const Config& config,
                          Rng& rng);
  static HGKNLayer bind(const ParameterSet& params, const std::string& prefix,
                        const Config& config);

  void fit_quantizer(const std::vector<std::vector<double>>& rows, Rng& rng);
  bool needs_quantizer() const { return config_.mode == InputMode::quantize; }
  bool ready() const { return !needs_quantizer() || quantizer_.fitted(); }

  // Label the layer's input: quantizer assignment of the given rows, or the
  // graph's own discrete labels in labels mode.
  std::vector<int> input_labels(const Graph& graph,
                                const std::vector<std::vector<double>>& rows) const;

  NodeFeature subgraph_feature(const Graph& labeled_graph, int center) const;
  std::vector<NodeFeature> all_subgraph_features(const Graph& labeled_graph) const;

  // Kernel responses against every filter plus psi/score application.
  Forward forward(const Graph& labeled_graph,
                  const std::vector<NodeFeature>* cached_features = nullptr) const;

  // One proposal per filter; accept iff the first-order loss estimate is
  // negative (or positive under ascent_accept).  dl_de rows align with nodes.
  std::vector<bool> filter_update_step(const std::vector<const NodeFeature*>& nodes,
                                       const std::vector<std::vector<double>>& dl_de,
                                       Rng& rng, bool ascent_accept = false);

  const Config& config() const { return config_; }
  const std::vector<FilterGraph>& filters() const { return filters_; }
  void set_filters(std::vector<FilterGraph> filters);
  const Quantizer& quantizer() const { return quantizer_; }
  void set_quantizer_centroids(std::vector<std::vector<double>> centroids);
  const Mlp& psi() const { return psi_; }
  const Affine& score_map() const { return score_; }

 private:
  void rebuild_filter_features();

  Config config_;
  std::vector<FilterGraph> filters_;
  Mlp psi_;
  Affine score_;
  Quantizer quantizer_;
  mutable WLRefiner refiner_;  // memo table; grows during const evaluation
  std::vector<NodeFeature> filter_features_;
};

// Layer-0 subgraph feature maps depend only on the input graph and the frozen
// layer-0 quantizer, so callers may cache them per dataset graph.
struct GraphFeatureCache {
  bool ready = false;
  std::vector<NodeFeature> layer0;
};

struct HGKNLayerTrace {
  std::vector<NodeFeature> node_features;
  Tensor responses;
};

struct HGKNTrace {
  std::vector<HGKNLayerTrace> layers;
};

class HGKNEncoder {
 public:
  struct Config {
    int layer_count = 2;
    int num_filters = 15;
    int min_filter_size = 3;
    int max_filter_size = 8;
    int r = 1;
    double rho = 0.4;
    int wl_iterations = 2;
    int quantizer_k = 20;
    int hidden = 64;
    int label_alphabet = 0;  // > 0 switches layer 0 to discrete-label mode
  };

  HGKNEncoder() = default;
  static HGKNEncoder create(ParameterSet& params, const std::string& prefix,
                            const Config& config, Rng& rng);
  static HGKNEncoder bind(const ParameterSet& params, const std::string& prefix,
                          const Config& config);

  // Fits each layer's quantizer from the sample: layer 0 on raw attribute
  // rows, deeper layers on their own pooled input rows under current
  // parameters.  Call once before encoding; refit attempts raise StateError.
  void fit_quantizers(const std::vector<const Graph*>& sample, Rng& rng);
  bool ready() const;

  Tensor encode(const Graph& graph, HGKNTrace* trace = nullptr,
                GraphFeatureCache* cache = nullptr) const;

  // Quantization between layers blocks gradients, so only the last layer's
  // psi/score and the final affine can ever receive them.
  void collect_trainable(ParameterSet& out) const;

  const Config& config() const { return config_; }
  std::vector<HGKNLayer>& layers() { return layers_; }
  const std::vector<HGKNLayer>& layers() const { return layers_; }
  const Affine& final_affine() const { return final_; }

 private:
  struct Stage {
    Graph graph;
    std::vector<std::vector<double>> rows;
    Tensor features;
  };
  Stage run_layer(int index, const Stage& in, HGKNTrace* trace,
                  GraphFeatureCache* cache) const;
  Stage initial_stage(const Graph& graph) const;

  Config config_;
  std::string prefix_;
  std::vector<HGKNLayer> layers_;
  Affine final_;
};

}  // namespace coco
