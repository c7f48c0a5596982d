#pragma once

#include <map>
#include <utility>
#include <vector>

#include "coco/errors.hpp"
#include "coco/graph.hpp"
#include "coco/rng.hpp"

namespace coco {

// Canonical-id table for label refinement.  One refiner shared across every
// graph in a comparison guarantees that equal (label, neighborhood) pairs get
// equal ids no matter which graph they came from.
class WLRefiner {
 public:
  int refine_one(int label, std::vector<int> sorted_neighbor_labels);
  std::size_t table_size() const { return table_.size(); }
  void clear();

 private:
  std::map<std::pair<int, std::vector<int>>, int> table_;
  int next_id_ = 0;
};

// One relabeling round: each node's new label is the canonical id of
// (old label, sorted multiset of neighbor labels).
std::vector<int> wl_refine(const Graph& graph, const std::vector<int>& labels,
                           WLRefiner& refiner);

// Per-iteration label histograms; counts[0] is built from the input labels.
struct WLFeatureMap {
  std::vector<std::map<int, long long>> counts;
  int iterations() const { return static_cast<int>(counts.size()) - 1; }
};

WLFeatureMap wl_feature_map(const Graph& graph, const std::vector<int>& initial_labels,
                            int iterations, WLRefiner& refiner);
// Uses graph.node_labels; DomainError when absent.
WLFeatureMap wl_feature_map(const Graph& graph, int iterations, WLRefiner& refiner);

// Unnormalized kernel value: integer dot product of the per-iteration
// histograms, summed over iterations.
long long wl_dot(const WLFeatureMap& a, const WLFeatureMap& b);

double wl_kernel(const WLFeatureMap& a, const WLFeatureMap& b, bool normalized);
double wl_kernel(const Graph& g1, const Graph& g2, int iterations, WLRefiner& refiner,
                 bool normalized);

// Running count of wl_dot evaluations, reset/read by tests and diagnostics.
long long& wl_dot_counter();

class Quantizer {
 public:
  // Lloyd's k-means with k-means++ style seeding.  Stops after max_iters
  // rounds or when no centroid moves more than tol.  Deterministic given rng.
  void fit(const std::vector<std::vector<double>>& points, int k, Rng& rng, int max_iters = 50,
           double tol = 1e-6);
  bool fitted() const { return !centroids_.empty(); }
  int k() const { return static_cast<int>(centroids_.size()); }
  int dim() const;
  const std::vector<std::vector<double>>& centroids() const { return centroids_; }
  void set_centroids(std::vector<std::vector<double>> centroids);

  // Nearest centroid by Euclidean distance, ties to the lowest index.
  int assign(const std::vector<double>& point) const;
  std::vector<int> assign_rows(const std::vector<std::vector<double>>& rows) const;

 private:
  std::vector<std::vector<double>> centroids_;
};

// Copy of the graph with node_labels replaced by quantizer assignments of the
// node attributes; attributes are dropped from the copy.
Graph quantize_graph(const Graph& graph, const Quantizer& quantizer);

}  // namespace coco
