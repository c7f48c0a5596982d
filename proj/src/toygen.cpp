#include "coco/toygen.hpp"

#include <array>
#include <filesystem>

#include "coco/rng.hpp"

namespace coco {

namespace {

// Benchmark constants.  Class means are equal-norm and orthogonal so neither
// class dominates message magnitudes; the target offset slides both means
// along the class-separation direction far enough that a source-fitted
// decision rule degrades on the target while similarity grouping still works.
constexpr int kGraphsPerClass = 100;
constexpr int kMinCycle = 5;
constexpr int kMaxCycle = 8;
constexpr int kMinLeaves = 5;
constexpr int kMaxLeaves = 8;
constexpr double kSigma = 0.25;
constexpr std::array<double, 2> kMean0 = {1.0, 0.0};
constexpr std::array<double, 2> kMean1 = {0.0, 1.0};
constexpr std::array<double, 2> kTargetOffset = {-0.45, 0.45};

Graph make_cycle(int n) {
  Graph g;
  g.node_count = n;
  for (int i = 0; i < n; ++i) g.edges.push_back({i, (i + 1) % n});
  return g;
}

Graph make_star(int leaves) {
  Graph g;
  g.node_count = leaves + 1;
  for (int i = 1; i <= leaves; ++i) g.edges.push_back({0, i});
  return g;
}

void draw_attrs(Graph& g, const std::array<double, 2>& mean, bool shifted, Rng& rng) {
  std::vector<std::vector<double>> attrs;
  attrs.reserve(g.node_count);
  for (int v = 0; v < g.node_count; ++v) {
    std::vector<double> row(2);
    for (int d = 0; d < 2; ++d) {
      row[d] = mean[d] + kSigma * normal(rng);
      if (shifted) row[d] += kTargetOffset[d];
    }
    attrs.push_back(std::move(row));
  }
  g.node_attrs = std::move(attrs);
}

void add_random_edge(Graph& g, Rng& rng) {
  const auto adj = g.adjacency();
  std::vector<std::pair<int, int>> absent;
  for (int i = 0; i < g.node_count; ++i)
    for (int j = i + 1; j < g.node_count; ++j) {
      bool present = false;
      for (int u : adj[i])
        if (u == j) present = true;
      if (!present) absent.push_back({i, j});
    }
  if (absent.empty()) return;
  g.edges.push_back(absent[uniform_index(rng, absent.size())]);
}

Dataset make_domain(bool target, Rng& rng) {
  Dataset ds;
  ds.num_classes = 2;
  ds.label_values = {0, 1};
  for (int cls = 0; cls < 2; ++cls) {
    for (int i = 0; i < kGraphsPerClass; ++i) {
      Graph g;
      if (cls == 0) {
        g = make_cycle(kMinCycle + static_cast<int>(uniform_index(rng, kMaxCycle - kMinCycle + 1)));
      } else {
        g = make_star(kMinLeaves +
                      static_cast<int>(uniform_index(rng, kMaxLeaves - kMinLeaves + 1)));
      }
      draw_attrs(g, cls == 0 ? kMean0 : kMean1, target, rng);
      if (target) add_random_edge(g, rng);
      g.class_label = cls;
      ds.graphs.push_back(std::move(g));
    }
  }
  return ds;
}

}  // namespace

DomainPair gen_toy(std::uint64_t seed) {
  Rng rng(seed);
  Dataset source = make_domain(false, rng);
  Dataset target = make_domain(true, rng);
  return DomainPair::make(std::move(source), std::move(target));
}

void write_toy(const std::string& out_dir, std::uint64_t seed) {
  Rng rng(seed);
  const Dataset source = make_domain(false, rng);
  const Dataset target = make_domain(true, rng);
  std::filesystem::create_directories(out_dir);
  serialize_tudataset(source, out_dir, "toy_source");
  serialize_tudataset(target, out_dir, "toy_target");
}

}  // namespace coco
