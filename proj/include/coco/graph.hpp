#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "coco/errors.hpp"
#include "coco/rng.hpp"

namespace coco {

// Undirected graph with optional discrete node labels, optional continuous
// node attributes and an optional class label. Edges are stored normalized
// (u < v), sorted and deduplicated; no self-loops.
struct Graph {
  int node_count = 0;
  std::vector<std::pair<int, int>> edges;
  std::optional<std::vector<int>> node_labels;
  std::optional<std::vector<std::vector<double>>> node_attrs;
  std::optional<int> class_label;

  int edge_count() const { return static_cast<int>(edges.size()); }
  std::vector<std::vector<int>> adjacency() const;
  double average_degree() const;
  double edge_ratio() const;

  // Normalizes edge storage and checks the structural invariants. Throws
  // DomainError on out-of-range endpoints; drops self-loops and duplicates,
  // reporting how many were dropped through the optional counters.
  void normalize_edges(long long* self_loops_dropped = nullptr,
                       long long* duplicates_dropped = nullptr);

  bool operator==(const Graph& other) const;
};

struct Dataset {
  std::vector<Graph> graphs;
  int num_classes = 0;
  std::string name;
  // Original class-label values as they appeared on disk, indexed by the
  // contiguous label used in Graph::class_label. Kept so serialization can
  // write back the source values.
  std::vector<int> label_values;

  std::size_t size() const { return graphs.size(); }
  int original_label(int contiguous) const;
};

// Labeled source plus unlabeled target sharing one label space. The
// constructor strips target labels; they are retained separately and exposed
// only for evaluation and diagnostics.
class DomainPair {
 public:
  static DomainPair make(Dataset source, Dataset target);

  const Dataset& source() const { return source_; }
  const Dataset& target() const { return target_; }
  int num_classes() const { return source_.num_classes; }
  bool has_target_labels() const { return target_hidden_labels_.has_value(); }
  const std::vector<int>& target_hidden_labels() const;
  // Target dataset with the hidden labels restored; for evaluation only.
  Dataset labeled_target() const;

 private:
  Dataset source_;
  Dataset target_;
  std::optional<std::vector<int>> target_hidden_labels_;
};

enum class DomainTag { source, target };

struct Batch {
  std::vector<int> graph_indices;
  DomainTag domain_tag = DomainTag::source;
};

struct ParseStats {
  long long self_loops_dropped = 0;
  long long duplicate_edges_dropped = 0;
};

// Reads a dataset in TUDataset plain-text format from
// <directory>/<prefix>_A.txt etc. Directed edge pairs collapse to one
// undirected edge; class labels are remapped to contiguous [0, C).
Dataset parse_tudataset(const std::string& directory_path, const std::string& dataset_prefix,
                        ParseStats* stats = nullptr);

// Writes a dataset back in the same format (each undirected edge emitted in
// both directions, node ids 1-based). Class labels are written using their
// original on-disk values.
void serialize_tudataset(const Dataset& dataset, const std::string& directory_path,
                         const std::string& dataset_prefix);

enum class DensityMode { average_degree, edge_ratio };

double graph_density(const Graph& g, DensityMode mode);

// Sorts graphs ascending by density (stable in original index) and cuts the
// order into `parts` contiguous chunks whose sizes differ by at most one,
// earlier chunks taking the remainder.
std::vector<Dataset> split_by_edge_density(const Dataset& dataset, int parts,
                                           DensityMode mode = DensityMode::average_degree);

// Induced subgraph on all nodes within shortest-path distance r of `center`,
// relabeled contiguously with the center first (then by distance, then by
// original index). Node labels and attributes are carried over.
Graph r_hop_subgraph(const Graph& graph, int center, int r);

// Uniform sample of `size` distinct graph indices; deterministic given rng.
Batch sample_batch(const Dataset& dataset, int size, Rng& rng,
                   DomainTag tag = DomainTag::source);

// Structural equality that compares class labels through their original
// on-disk values, so datasets survive serialize/reparse even when a part
// does not realize every class.
bool semantically_equal(const Dataset& a, const Dataset& b);

}  // namespace coco
