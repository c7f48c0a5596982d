#include "coco/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace coco {

int WLRefiner::refine_one(int label, std::vector<int> sorted_neighbor_labels) {
  auto key = std::make_pair(label, std::move(sorted_neighbor_labels));
  auto it = table_.find(key);
  if (it != table_.end()) return it->second;
  const int id = next_id_++;
  table_.emplace(std::move(key), id);
  return id;
}

void WLRefiner::clear() {
  table_.clear();
  next_id_ = 0;
}

std::vector<int> wl_refine(const Graph& graph, const std::vector<int>& labels,
                           WLRefiner& refiner) {
  if (static_cast<int>(labels.size()) != graph.node_count)
    throw DomainError("label count does not match node count");
  const auto adj = graph.adjacency();
  std::vector<int> refined(graph.node_count);
  for (int v = 0; v < graph.node_count; ++v) {
    std::vector<int> neighborhood;
    neighborhood.reserve(adj[v].size());
    for (int u : adj[v]) neighborhood.push_back(labels[u]);
    std::sort(neighborhood.begin(), neighborhood.end());
    refined[v] = refiner.refine_one(labels[v], std::move(neighborhood));
  }
  return refined;
}

WLFeatureMap wl_feature_map(const Graph& graph, const std::vector<int>& initial_labels,
                            int iterations, WLRefiner& refiner) {
  if (iterations < 0) throw DomainError("iteration count must be non-negative");
  if (static_cast<int>(initial_labels.size()) != graph.node_count)
    throw DomainError("label count does not match node count");
  WLFeatureMap fm;
  fm.counts.resize(iterations + 1);
  std::vector<int> labels = initial_labels;
  for (int round = 0; round <= iterations; ++round) {
    if (round > 0) labels = wl_refine(graph, labels, refiner);
    for (int label : labels) ++fm.counts[round][label];
  }
  return fm;
}

WLFeatureMap wl_feature_map(const Graph& graph, int iterations, WLRefiner& refiner) {
  if (!graph.node_labels) throw DomainError("graph has no discrete node labels");
  return wl_feature_map(graph, *graph.node_labels, iterations, refiner);
}

long long& wl_dot_counter() {
  static long long counter = 0;
  return counter;
}

long long wl_dot(const WLFeatureMap& a, const WLFeatureMap& b) {
  ++wl_dot_counter();
  const std::size_t rounds = std::min(a.counts.size(), b.counts.size());
  long long total = 0;
  for (std::size_t round = 0; round < rounds; ++round) {
    const auto& ca = a.counts[round];
    const auto& cb = b.counts[round];
    // Walk the smaller map, probe the larger.
    const auto& small = ca.size() <= cb.size() ? ca : cb;
    const auto& large = ca.size() <= cb.size() ? cb : ca;
    for (const auto& [label, count] : small) {
      auto it = large.find(label);
      if (it != large.end()) total += count * it->second;
    }
  }
  return total;
}

double wl_kernel(const WLFeatureMap& a, const WLFeatureMap& b, bool normalized) {
  const long long k = wl_dot(a, b);
  if (!normalized) return static_cast<double>(k);
  const long long kaa = wl_dot(a, a);
  const long long kbb = wl_dot(b, b);
  if (kaa == 0 || kbb == 0)
    throw DomainError("normalized kernel undefined for an empty graph");
  if (k == kaa && k == kbb) return 1.0;
  const double value =
      static_cast<double>(k) / (std::sqrt(static_cast<double>(kaa)) *
                                std::sqrt(static_cast<double>(kbb)));
  return std::min(std::max(value, 0.0), 1.0);
}

double wl_kernel(const Graph& g1, const Graph& g2, int iterations, WLRefiner& refiner,
                 bool normalized) {
  const WLFeatureMap fa = wl_feature_map(g1, iterations, refiner);
  const WLFeatureMap fb = wl_feature_map(g2, iterations, refiner);
  return wl_kernel(fa, fb, normalized);
}

namespace {

double squared_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    total += d * d;
  }
  return total;
}

}  // namespace

int Quantizer::dim() const {
  if (!fitted()) throw StateError("quantizer is not fitted");
  return static_cast<int>(centroids_.front().size());
}

void Quantizer::set_centroids(std::vector<std::vector<double>> centroids) {
  if (centroids.empty()) throw FitError("centroid list is empty");
  const std::size_t d = centroids.front().size();
  for (const auto& row : centroids) {
    if (row.size() != d || d == 0) throw FitError("ragged centroid rows");
    for (double v : row)
      if (!std::isfinite(v)) throw FitError("non-finite centroid value");
  }
  centroids_ = std::move(centroids);
}

void Quantizer::fit(const std::vector<std::vector<double>>& points, int k, Rng& rng,
                    int max_iters, double tol) {
  if (k < 1) throw FitError("cluster count must be positive");
  const std::size_t n = points.size();
  if (n < static_cast<std::size_t>(k))
    throw FitError("fewer points (" + std::to_string(n) + ") than clusters (" +
                   std::to_string(k) + ")");
  const std::size_t d = points.front().size();
  for (const auto& row : points)
    if (row.size() != d || d == 0) throw FitError("ragged input rows");

  // Seeding: first centroid uniform, the rest weighted by squared distance to
  // the nearest centroid chosen so far.
  std::vector<std::vector<double>> centroids;
  centroids.reserve(k);
  centroids.push_back(points[uniform_index(rng, n)]);
  std::vector<double> nearest_sq(n);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = squared_distance(points[i], centroids[0]);
      for (std::size_t j = 1; j < centroids.size(); ++j)
        best = std::min(best, squared_distance(points[i], centroids[j]));
      nearest_sq[i] = best;
      total += best;
    }
    if (total <= 0.0) {
      centroids.push_back(points[uniform_index(rng, n)]);
      continue;
    }
    const double draw = uniform_real(rng) * total;
    double running = 0.0;
    std::size_t chosen = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      running += nearest_sq[i];
      if (draw < running) {
        chosen = i;
        break;
      }
    }
    centroids.push_back(points[chosen]);
  }

  std::vector<int> assignment(n, 0);
  for (int iter = 0; iter < max_iters; ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double best_sq = squared_distance(points[i], centroids[0]);
      for (int c = 1; c < k; ++c) {
        const double sq = squared_distance(points[i], centroids[c]);
        if (sq < best_sq) {
          best_sq = sq;
          best = c;
        }
      }
      assignment[i] = best;
    }
    std::vector<std::vector<double>> sums(k, std::vector<double>(d, 0.0));
    std::vector<long long> sizes(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++sizes[assignment[i]];
      for (std::size_t j = 0; j < d; ++j) sums[assignment[i]][j] += points[i][j];
    }
    double max_shift = 0.0;
    for (int c = 0; c < k; ++c) {
      if (sizes[c] == 0) continue;  // empty cluster keeps its previous centroid
      std::vector<double> updated(d);
      for (std::size_t j = 0; j < d; ++j)
        updated[j] = sums[c][j] / static_cast<double>(sizes[c]);
      max_shift = std::max(max_shift, std::sqrt(squared_distance(updated, centroids[c])));
      centroids[c] = std::move(updated);
    }
    if (max_shift < tol) break;
  }
  centroids_ = std::move(centroids);
}

int Quantizer::assign(const std::vector<double>& point) const {
  if (!fitted()) throw StateError("quantizer is not fitted");
  if (point.size() != centroids_.front().size())
    throw ShapeError("point dimension does not match quantizer");
  int best = 0;
  double best_sq = squared_distance(point, centroids_[0]);
  for (std::size_t c = 1; c < centroids_.size(); ++c) {
    const double sq = squared_distance(point, centroids_[c]);
    if (sq < best_sq) {
      best_sq = sq;
      best = static_cast<int>(c);
    }
  }
  return best;
}

std::vector<int> Quantizer::assign_rows(const std::vector<std::vector<double>>& rows) const {
  std::vector<int> labels;
  labels.reserve(rows.size());
  for (const auto& row : rows) labels.push_back(assign(row));
  return labels;
}

Graph quantize_graph(const Graph& graph, const Quantizer& quantizer) {
  if (!graph.node_attrs) throw DomainError("graph has no continuous attributes to quantize");
  Graph out;
  out.node_count = graph.node_count;
  out.edges = graph.edges;
  out.class_label = graph.class_label;
  out.node_labels = quantizer.assign_rows(*graph.node_attrs);
  return out;
}

}  // namespace coco
