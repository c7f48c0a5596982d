#include "coco/gcn.hpp"

#include <cmath>

namespace coco {

Tensor Affine::apply(const Tensor& x) const { return add(matmul(x, weight), bias); }

Affine make_affine(ParameterSet& params, const std::string& prefix, int in_dim, int out_dim,
                   Rng& rng) {
  if (in_dim < 1 || out_dim < 1) throw ShapeError("affine dimensions must be positive");
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
  std::vector<double> w(static_cast<std::size_t>(in_dim) * out_dim);
  for (double& v : w) v = uniform_real(rng, -bound, bound);
  std::vector<double> b(out_dim);
  for (double& v : b) v = uniform_real(rng, -bound, bound);
  Affine affine;
  affine.weight = params.add(prefix + ".weight", Tensor::from_values(in_dim, out_dim, std::move(w)));
  affine.bias = params.add(prefix + ".bias", Tensor::from_values(1, out_dim, std::move(b)));
  return affine;
}

Affine bind_affine(const ParameterSet& params, const std::string& prefix) {
  Affine affine;
  affine.weight = params.get(prefix + ".weight");
  affine.bias = params.get(prefix + ".bias");
  return affine;
}

Tensor Mlp::apply(const Tensor& x) const { return second.apply(relu(first.apply(x))); }

Mlp make_mlp(ParameterSet& params, const std::string& prefix, int in_dim, int hidden_dim,
             int out_dim, Rng& rng) {
  Mlp mlp;
  mlp.first = make_affine(params, prefix + ".fc1", in_dim, hidden_dim, rng);
  mlp.second = make_affine(params, prefix + ".fc2", hidden_dim, out_dim, rng);
  return mlp;
}

Mlp bind_mlp(const ParameterSet& params, const std::string& prefix) {
  Mlp mlp;
  mlp.first = bind_affine(params, prefix + ".fc1");
  mlp.second = bind_affine(params, prefix + ".fc2");
  return mlp;
}

Tensor gin_layer_forward(const Graph& graph, const Tensor& h, const GINLayer& layer) {
  if (h.rows() != graph.node_count)
    throw ShapeError("feature row count does not match node count");
  Tensor neighbor_sum;
  if (graph.edges.empty()) {
    neighbor_sum = Tensor::zeros(graph.node_count, h.cols());
  } else {
    std::vector<int> sources;
    std::vector<int> destinations;
    sources.reserve(graph.edges.size() * 2);
    destinations.reserve(graph.edges.size() * 2);
    for (const auto& [u, v] : graph.edges) {
      sources.push_back(u);
      destinations.push_back(v);
      sources.push_back(v);
      destinations.push_back(u);
    }
    neighbor_sum = scatter_add_rows(gather_rows(h, sources), destinations, graph.node_count);
  }
  const Tensor combined = add(scale(h, 1.0 + layer.epsilon), neighbor_sum);
  return layer.mlp.apply(combined);
}

GCNEncoder GCNEncoder::create(ParameterSet& params, const std::string& prefix, FeatureMode mode,
                              int input_dim, int hidden_dim, Rng& rng) {
  if (input_dim < 1 || hidden_dim < 1) throw ShapeError("encoder dimensions must be positive");
  GCNEncoder encoder;
  encoder.mode_ = mode;
  encoder.input_dim_ = input_dim;
  encoder.hidden_dim_ = hidden_dim;
  GINLayer layer0;
  layer0.mlp = make_mlp(params, prefix + ".layer0", input_dim, hidden_dim, hidden_dim, rng);
  GINLayer layer1;
  layer1.mlp = make_mlp(params, prefix + ".layer1", hidden_dim, hidden_dim, hidden_dim, rng);
  encoder.layers_ = {layer0, layer1};
  return encoder;
}

GCNEncoder GCNEncoder::bind(const ParameterSet& params, const std::string& prefix,
                            FeatureMode mode, int input_dim, int hidden_dim) {
  GCNEncoder encoder;
  encoder.mode_ = mode;
  encoder.input_dim_ = input_dim;
  encoder.hidden_dim_ = hidden_dim;
  GINLayer layer0;
  layer0.mlp = bind_mlp(params, prefix + ".layer0");
  GINLayer layer1;
  layer1.mlp = bind_mlp(params, prefix + ".layer1");
  encoder.layers_ = {layer0, layer1};
  return encoder;
}

Tensor GCNEncoder::featurize(const Graph& graph) const {
  if (graph.node_count < 1) throw DomainError("cannot featurize an empty graph");
  if (mode_ == FeatureMode::one_hot_labels) {
    if (!graph.node_labels) throw DomainError("graph has no node labels to encode");
    std::vector<double> values(static_cast<std::size_t>(graph.node_count) * input_dim_, 0.0);
    for (int v = 0; v < graph.node_count; ++v) {
      const int label = (*graph.node_labels)[v];
      if (label < 0 || label >= input_dim_)
        throw DomainError("node label " + std::to_string(label) +
                          " outside the encoder's alphabet");
      values[static_cast<std::size_t>(v) * input_dim_ + label] = 1.0;
    }
    return Tensor::from_values(graph.node_count, input_dim_, std::move(values));
  }
  if (!graph.node_attrs) throw DomainError("graph has no node attributes to encode");
  std::vector<double> values;
  values.reserve(static_cast<std::size_t>(graph.node_count) * input_dim_);
  for (const auto& row : *graph.node_attrs) {
    if (static_cast<int>(row.size()) != input_dim_)
      throw ShapeError("attribute dimension does not match encoder input");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor::from_values(graph.node_count, input_dim_, std::move(values));
}

Tensor GCNEncoder::encode_nodes(const Graph& graph) const {
  Tensor h = featurize(graph);
  for (const auto& layer : layers_) h = gin_layer_forward(graph, h, layer);
  return h;
}

Tensor GCNEncoder::encode(const Graph& graph) const {
  const Tensor h = encode_nodes(graph);
  return matmul(Tensor::ones(1, graph.node_count), h);
}

}  // namespace coco
