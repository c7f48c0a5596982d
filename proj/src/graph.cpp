#include "coco/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace coco {

namespace {

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  // Trailing blank lines are common in shipped datasets; ignore them.
  while (!lines.empty() && lines.back().find_first_not_of(" \t") == std::string::npos)
    lines.pop_back();
  return lines;
}

bool file_exists(const std::string& path) { return std::filesystem::exists(path); }

long parse_int(const std::string& text, const std::string& context) {
  std::size_t pos = 0;
  long value = 0;
  try {
    value = std::stol(text, &pos);
  } catch (const std::exception&) {
    throw ParseError("expected integer in " + context + ", got '" + text + "'");
  }
  while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t')) ++pos;
  if (pos != text.size())
    throw ParseError("trailing characters in " + context + ": '" + text + "'");
  return value;
}

double parse_double(const std::string& text, const std::string& context) {
  std::size_t pos = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &pos);
  } catch (const std::exception&) {
    throw ParseError("expected number in " + context + ", got '" + text + "'");
  }
  while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t')) ++pos;
  if (pos != text.size())
    throw ParseError("trailing characters in " + context + ": '" + text + "'");
  if (!std::isfinite(value)) throw ParseError("non-finite number in " + context);
  return value;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    const auto begin = field.find_first_not_of(" \t");
    const auto end = field.find_last_not_of(" \t");
    fields.push_back(begin == std::string::npos ? "" : field.substr(begin, end - begin + 1));
  }
  return fields;
}

}  // namespace

std::vector<std::vector<int>> Graph::adjacency() const {
  std::vector<std::vector<int>> adj(node_count);
  for (const auto& [u, v] : edges) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  return adj;
}

double Graph::average_degree() const {
  if (node_count == 0) return 0.0;
  return 2.0 * static_cast<double>(edges.size()) / static_cast<double>(node_count);
}

double Graph::edge_ratio() const {
  if (node_count <= 1) return 0.0;
  const double max_edges = static_cast<double>(node_count) * (node_count - 1) / 2.0;
  return static_cast<double>(edges.size()) / max_edges;
}

void Graph::normalize_edges(long long* self_loops_dropped, long long* duplicates_dropped) {
  std::vector<std::pair<int, int>> normalized;
  normalized.reserve(edges.size());
  for (auto [u, v] : edges) {
    if (u < 0 || v < 0 || u >= node_count || v >= node_count)
      throw DomainError("edge endpoint out of range");
    if (u == v) {
      if (self_loops_dropped) ++*self_loops_dropped;
      continue;
    }
    normalized.emplace_back(std::min(u, v), std::max(u, v));
  }
  std::sort(normalized.begin(), normalized.end());
  const auto last = std::unique(normalized.begin(), normalized.end());
  if (duplicates_dropped)
    *duplicates_dropped += static_cast<long long>(std::distance(last, normalized.end()));
  normalized.erase(last, normalized.end());
  edges = std::move(normalized);
}

bool Graph::operator==(const Graph& other) const {
  return node_count == other.node_count && edges == other.edges &&
         node_labels == other.node_labels && node_attrs == other.node_attrs &&
         class_label == other.class_label;
}

int Dataset::original_label(int contiguous) const {
  if (contiguous < 0 || contiguous >= static_cast<int>(label_values.size()))
    return contiguous;
  return label_values[contiguous];
}

DomainPair DomainPair::make(Dataset source, Dataset target) {
  if (source.num_classes != target.num_classes && target.num_classes != 0)
    throw DomainError("source and target label spaces differ (" +
                      std::to_string(source.num_classes) + " vs " +
                      std::to_string(target.num_classes) + ")");
  if (source.num_classes < 2) throw DomainError("source dataset needs at least two classes");
  for (const auto& g : source.graphs)
    if (!g.class_label.has_value()) throw DomainError("unlabeled graph in source dataset");

  DomainPair pair;
  bool all_labeled = !target.graphs.empty();
  for (const auto& g : target.graphs)
    if (!g.class_label.has_value()) all_labeled = false;
  if (all_labeled) {
    std::vector<int> hidden;
    hidden.reserve(target.graphs.size());
    for (auto& g : target.graphs) {
      hidden.push_back(*g.class_label);
      g.class_label.reset();
    }
    pair.target_hidden_labels_ = std::move(hidden);
  } else {
    for (auto& g : target.graphs) g.class_label.reset();
  }
  target.num_classes = source.num_classes;
  pair.source_ = std::move(source);
  pair.target_ = std::move(target);
  return pair;
}

const std::vector<int>& DomainPair::target_hidden_labels() const {
  if (!target_hidden_labels_) throw StateError("target labels were not provided");
  return *target_hidden_labels_;
}

Dataset DomainPair::labeled_target() const {
  Dataset out = target_;
  const auto& hidden = target_hidden_labels();
  for (std::size_t i = 0; i < out.graphs.size(); ++i) out.graphs[i].class_label = hidden[i];
  return out;
}

Dataset parse_tudataset(const std::string& directory_path, const std::string& dataset_prefix,
                        ParseStats* stats) {
  namespace fs = std::filesystem;
  const std::string base = (fs::path(directory_path) / dataset_prefix).string();
  const std::string path_a = base + "_A.txt";
  const std::string path_indicator = base + "_graph_indicator.txt";
  const std::string path_graph_labels = base + "_graph_labels.txt";
  const std::string path_node_labels = base + "_node_labels.txt";
  const std::string path_node_attrs = base + "_node_attributes.txt";

  for (const auto& p : {path_a, path_indicator, path_graph_labels})
    if (!file_exists(p)) throw ParseError("missing mandatory file " + p);

  const auto indicator_lines = read_lines(path_indicator);
  const int total_nodes = static_cast<int>(indicator_lines.size());
  if (total_nodes == 0) throw ParseError(path_indicator + " is empty");

  std::vector<long> node_graph_ids(total_nodes);
  std::vector<long> distinct_ids;
  for (int i = 0; i < total_nodes; ++i) {
    node_graph_ids[i] = parse_int(indicator_lines[i], path_indicator);
    distinct_ids.push_back(node_graph_ids[i]);
  }
  std::sort(distinct_ids.begin(), distinct_ids.end());
  distinct_ids.erase(std::unique(distinct_ids.begin(), distinct_ids.end()), distinct_ids.end());

  std::map<long, int> graph_index;
  for (std::size_t i = 0; i < distinct_ids.size(); ++i)
    graph_index[distinct_ids[i]] = static_cast<int>(i);
  const int num_graphs = static_cast<int>(distinct_ids.size());

  // Local (per-graph) index of every node, in order of appearance.
  std::vector<int> local_index(total_nodes);
  std::vector<int> graph_sizes(num_graphs, 0);
  std::vector<int> node_graph(total_nodes);
  for (int i = 0; i < total_nodes; ++i) {
    const int gi = graph_index.at(node_graph_ids[i]);
    node_graph[i] = gi;
    local_index[i] = graph_sizes[gi]++;
  }

  Dataset dataset;
  dataset.name = dataset_prefix;
  dataset.graphs.resize(num_graphs);
  for (int gi = 0; gi < num_graphs; ++gi) dataset.graphs[gi].node_count = graph_sizes[gi];

  // The format lists each undirected edge in both directions, so collapsing
  // the mirror orientation is expected; only a repeat of the same directed
  // pair counts as a duplicate.
  std::vector<std::map<std::pair<int, int>, int>> directed_counts(
      static_cast<std::size_t>(num_graphs));
  for (const auto& line : read_lines(path_a)) {
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto fields = split_csv(line);
    if (fields.size() != 2) throw ParseError("malformed edge line '" + line + "' in " + path_a);
    const long u = parse_int(fields[0], path_a);
    const long v = parse_int(fields[1], path_a);
    if (u < 1 || v < 1 || u > total_nodes || v > total_nodes)
      throw ParseError("edge endpoint out of range in " + path_a + ": " + line);
    const int ui = static_cast<int>(u - 1);
    const int vi = static_cast<int>(v - 1);
    if (node_graph[ui] != node_graph[vi])
      throw ParseError("edge crosses graph boundary in " + path_a + ": " + line);
    dataset.graphs[node_graph[ui]].edges.emplace_back(local_index[ui], local_index[vi]);
    if (local_index[ui] != local_index[vi])
      directed_counts[node_graph[ui]][{local_index[ui], local_index[vi]}] += 1;
  }

  ParseStats local_stats;
  for (auto& g : dataset.graphs) g.normalize_edges(&local_stats.self_loops_dropped, nullptr);
  for (const auto& counts : directed_counts)
    for (const auto& [edge, count] : counts)
      if (count > 1) local_stats.duplicate_edges_dropped += count - 1;
  if (stats) *stats = local_stats;

  const auto label_lines = read_lines(path_graph_labels);
  if (static_cast<int>(label_lines.size()) != num_graphs)
    throw ParseError(path_graph_labels + " has " + std::to_string(label_lines.size()) +
                     " lines for " + std::to_string(num_graphs) + " graphs");
  std::vector<long> raw_labels(num_graphs);
  std::vector<long> label_domain;
  for (int gi = 0; gi < num_graphs; ++gi) {
    raw_labels[gi] = parse_int(label_lines[gi], path_graph_labels);
    label_domain.push_back(raw_labels[gi]);
  }
  std::sort(label_domain.begin(), label_domain.end());
  label_domain.erase(std::unique(label_domain.begin(), label_domain.end()), label_domain.end());
  std::map<long, int> label_map;
  for (std::size_t i = 0; i < label_domain.size(); ++i)
    label_map[label_domain[i]] = static_cast<int>(i);
  dataset.num_classes = static_cast<int>(label_domain.size());
  dataset.label_values.assign(label_domain.begin(), label_domain.end());
  for (int gi = 0; gi < num_graphs; ++gi)
    dataset.graphs[gi].class_label = label_map.at(raw_labels[gi]);

  const bool have_node_labels = file_exists(path_node_labels);
  const bool have_node_attrs = file_exists(path_node_attrs);
  if (!have_node_labels && !have_node_attrs)
    throw ParseError("dataset provides neither " + path_node_labels + " nor " + path_node_attrs);

  if (have_node_labels) {
    const auto lines = read_lines(path_node_labels);
    if (static_cast<int>(lines.size()) != total_nodes)
      throw ParseError(path_node_labels + " has " + std::to_string(lines.size()) +
                       " lines for " + std::to_string(total_nodes) + " nodes");
    for (auto& g : dataset.graphs) g.node_labels.emplace(g.node_count, 0);
    for (int i = 0; i < total_nodes; ++i) {
      const long label = parse_int(lines[i], path_node_labels);
      if (label < 0) throw ParseError("negative node label in " + path_node_labels);
      (*dataset.graphs[node_graph[i]].node_labels)[local_index[i]] = static_cast<int>(label);
    }
  }

  if (have_node_attrs) {
    const auto lines = read_lines(path_node_attrs);
    if (static_cast<int>(lines.size()) != total_nodes)
      throw ParseError(path_node_attrs + " has " + std::to_string(lines.size()) + " lines for " +
                       std::to_string(total_nodes) + " nodes");
    std::size_t dim = 0;
    for (auto& g : dataset.graphs) g.node_attrs.emplace(g.node_count);
    for (int i = 0; i < total_nodes; ++i) {
      const auto fields = split_csv(lines[i]);
      if (i == 0) dim = fields.size();
      if (fields.size() != dim || dim == 0)
        throw ParseError("ragged attribute row " + std::to_string(i + 1) + " in " +
                         path_node_attrs);
      std::vector<double> row(dim);
      for (std::size_t c = 0; c < dim; ++c) row[c] = parse_double(fields[c], path_node_attrs);
      (*dataset.graphs[node_graph[i]].node_attrs)[local_index[i]] = std::move(row);
    }
  }

  return dataset;
}

void serialize_tudataset(const Dataset& dataset, const std::string& directory_path,
                         const std::string& dataset_prefix) {
  namespace fs = std::filesystem;
  fs::create_directories(directory_path);
  const std::string base = (fs::path(directory_path) / dataset_prefix).string();

  std::ofstream a_out(base + "_A.txt");
  std::ofstream ind_out(base + "_graph_indicator.txt");
  std::ofstream lab_out(base + "_graph_labels.txt");
  if (!a_out || !ind_out || !lab_out) throw IoError("cannot write dataset files under " + base);

  bool any_node_labels = false;
  bool any_node_attrs = false;
  for (const auto& g : dataset.graphs) {
    any_node_labels = any_node_labels || g.node_labels.has_value();
    any_node_attrs = any_node_attrs || g.node_attrs.has_value();
  }
  std::ofstream nl_out;
  std::ofstream na_out;
  if (any_node_labels) nl_out.open(base + "_node_labels.txt");
  if (any_node_attrs) na_out.open(base + "_node_attributes.txt");

  int node_offset = 0;
  char buf[64];
  for (std::size_t gi = 0; gi < dataset.graphs.size(); ++gi) {
    const Graph& g = dataset.graphs[gi];
    for (const auto& [u, v] : g.edges) {
      a_out << (node_offset + u + 1) << ", " << (node_offset + v + 1) << "\n";
      a_out << (node_offset + v + 1) << ", " << (node_offset + u + 1) << "\n";
    }
    for (int v = 0; v < g.node_count; ++v) {
      ind_out << (gi + 1) << "\n";
      if (any_node_labels) nl_out << (g.node_labels ? (*g.node_labels)[v] : 0) << "\n";
      if (any_node_attrs) {
        if (!g.node_attrs) throw IoError("dataset mixes graphs with and without attributes");
        const auto& row = (*g.node_attrs)[v];
        for (std::size_t c = 0; c < row.size(); ++c) {
          std::snprintf(buf, sizeof(buf), "%.17g", row[c]);
          na_out << (c ? ", " : "") << buf;
        }
        na_out << "\n";
      }
    }
    lab_out << (g.class_label ? dataset.original_label(*g.class_label) : 0) << "\n";
    node_offset += g.node_count;
  }
}

double graph_density(const Graph& g, DensityMode mode) {
  return mode == DensityMode::average_degree ? g.average_degree() : g.edge_ratio();
}

std::vector<Dataset> split_by_edge_density(const Dataset& dataset, int parts, DensityMode mode) {
  if (parts < 2) throw SplitError("parts must be at least 2");
  if (dataset.graphs.empty()) throw SplitError("cannot split an empty dataset");
  if (parts > static_cast<int>(dataset.graphs.size()))
    throw SplitError("parts (" + std::to_string(parts) + ") exceeds dataset size (" +
                     std::to_string(dataset.graphs.size()) + ")");

  std::vector<int> order(dataset.graphs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return graph_density(dataset.graphs[a], mode) < graph_density(dataset.graphs[b], mode);
  });

  const int n = static_cast<int>(order.size());
  const int base = n / parts;
  const int remainder = n % parts;
  std::vector<Dataset> out;
  out.reserve(parts);
  int cursor = 0;
  for (int p = 0; p < parts; ++p) {
    const int size = base + (p < remainder ? 1 : 0);
    Dataset part;
    part.name = dataset.name + "_part" + std::to_string(p);
    part.num_classes = dataset.num_classes;
    part.label_values = dataset.label_values;
    part.graphs.reserve(size);
    for (int i = 0; i < size; ++i) part.graphs.push_back(dataset.graphs[order[cursor++]]);
    out.push_back(std::move(part));
  }
  return out;
}

Graph r_hop_subgraph(const Graph& graph, int center, int r) {
  if (center < 0 || center >= graph.node_count)
    throw DomainError("subgraph center out of range");
  const auto adj = graph.adjacency();
  std::vector<int> dist(graph.node_count, -1);
  std::deque<int> queue;
  dist[center] = 0;
  queue.push_back(center);
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    if (dist[u] == r) continue;
    for (int v : adj[u]) {
      if (dist[v] < 0) {
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
    }
  }

  std::vector<int> selected;
  for (int v = 0; v < graph.node_count; ++v)
    if (dist[v] >= 0) selected.push_back(v);
  std::sort(selected.begin(), selected.end(), [&](int a, int b) {
    if (dist[a] != dist[b]) return dist[a] < dist[b];
    return a < b;
  });

  std::vector<int> new_index(graph.node_count, -1);
  for (std::size_t i = 0; i < selected.size(); ++i) new_index[selected[i]] = static_cast<int>(i);

  Graph sub;
  sub.node_count = static_cast<int>(selected.size());
  for (const auto& [u, v] : graph.edges)
    if (new_index[u] >= 0 && new_index[v] >= 0)
      sub.edges.emplace_back(new_index[u], new_index[v]);
  sub.normalize_edges();
  if (graph.node_labels) {
    sub.node_labels.emplace();
    for (int v : selected) sub.node_labels->push_back((*graph.node_labels)[v]);
  }
  if (graph.node_attrs) {
    sub.node_attrs.emplace();
    for (int v : selected) sub.node_attrs->push_back((*graph.node_attrs)[v]);
  }
  return sub;
}

Batch sample_batch(const Dataset& dataset, int size, Rng& rng, DomainTag tag) {
  const int n = static_cast<int>(dataset.graphs.size());
  if (size <= 0) throw SampleError("batch size must be positive");
  if (size > n)
    throw SampleError("batch size " + std::to_string(size) + " exceeds dataset size " +
                      std::to_string(n));
  std::vector<int> pool(n);
  for (int i = 0; i < n; ++i) pool[i] = i;
  Batch batch;
  batch.domain_tag = tag;
  batch.graph_indices.reserve(size);
  for (int i = 0; i < size; ++i) {
    const int j = i + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(n - i)));
    std::swap(pool[i], pool[j]);
    batch.graph_indices.push_back(pool[i]);
  }
  return batch;
}

bool semantically_equal(const Dataset& a, const Dataset& b) {
  if (a.graphs.size() != b.graphs.size()) return false;
  for (std::size_t i = 0; i < a.graphs.size(); ++i) {
    const Graph& ga = a.graphs[i];
    const Graph& gb = b.graphs[i];
    if (ga.node_count != gb.node_count || ga.edges != gb.edges ||
        ga.node_labels != gb.node_labels || ga.node_attrs != gb.node_attrs)
      return false;
    if (ga.class_label.has_value() != gb.class_label.has_value()) return false;
    if (ga.class_label &&
        a.original_label(*ga.class_label) != b.original_label(*gb.class_label))
      return false;
  }
  return true;
}

}  // namespace coco
