#pragma once

#include <string>
#include <vector>

#include "coco/graph.hpp"
#include "coco/rng.hpp"
#include "coco/tensor.hpp"

namespace coco {

struct Affine {
  Tensor weight;  // in_dim x out_dim
  Tensor bias;    // 1 x out_dim
  Tensor apply(const Tensor& x) const;
  int in_dim() const { return weight.rows(); }
  int out_dim() const { return weight.cols(); }
};

// Weights and bias drawn uniformly from [-1/sqrt(fan_in), +1/sqrt(fan_in)]
// and registered under prefix + ".weight" / prefix + ".bias".
Affine make_affine(ParameterSet& params, const std::string& prefix, int in_dim, int out_dim,
                   Rng& rng);
// Rebinds to tensors already present in params (checkpoint reload path).
Affine bind_affine(const ParameterSet& params, const std::string& prefix);

struct Mlp {
  Affine first;
  Affine second;
  Tensor apply(const Tensor& x) const;
};

Mlp make_mlp(ParameterSet& params, const std::string& prefix, int in_dim, int hidden_dim,
             int out_dim, Rng& rng);
Mlp bind_mlp(const ParameterSet& params, const std::string& prefix);

struct GINLayer {
  Mlp mlp;
  double epsilon = 0.0;
};

// Per node v: mlp((1 + epsilon) * h[v] + sum of h[u] over neighbors u).
Tensor gin_layer_forward(const Graph& graph, const Tensor& h, const GINLayer& layer);

class GCNEncoder {
 public:
  enum class FeatureMode { one_hot_labels, raw_attrs };

  GCNEncoder() = default;
  static GCNEncoder create(ParameterSet& params, const std::string& prefix, FeatureMode mode,
                           int input_dim, int hidden_dim, Rng& rng);
  static GCNEncoder bind(const ParameterSet& params, const std::string& prefix, FeatureMode mode,
                         int input_dim, int hidden_dim);

  // Node-feature matrix used as layer-0 input; a constant w.r.t. parameters.
  Tensor featurize(const Graph& graph) const;
  // Final-layer node features.
  Tensor encode_nodes(const Graph& graph) const;
  // Sum readout over nodes: 1 x hidden_dim graph embedding.
  Tensor encode(const Graph& graph) const;

  FeatureMode mode() const { return mode_; }
  int input_dim() const { return input_dim_; }
  int output_dim() const { return hidden_dim_; }

 private:
  std::vector<GINLayer> layers_;
  FeatureMode mode_ = FeatureMode::one_hot_labels;
  int input_dim_ = 0;
  int hidden_dim_ = 0;
};

}  // namespace coco
