#include "coco/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>

#include "coco/gcn.hpp"
#include "coco/graph.hpp"
#include "coco/kernels.hpp"
#include "coco/losses.hpp"
#include "coco/rng.hpp"
#include "coco/tensor.hpp"

namespace coco {

bool SelfCheckReport::ok() const {
  for (const SuiteResult& s : suites)
    if (s.failed > 0) return false;
  return true;
}

int SelfCheckReport::total_passed() const {
  int n = 0;
  for (const SuiteResult& s : suites) n += s.passed;
  return n;
}

int SelfCheckReport::total_failed() const {
  int n = 0;
  for (const SuiteResult& s : suites) n += s.failed;
  return n;
}

namespace {

constexpr double kFdStep = 1e-6;
constexpr double kGradTol = 1e-5;
constexpr int kGradInstances = 20;

Tensor random_tensor(int rows, int cols, Rng& rng, double lo = -1.5, double hi = 1.5) {
  std::vector<double> values(static_cast<std::size_t>(rows) * cols);
  for (double& v : values) v = uniform_real(rng, lo, hi);
  return Tensor::from_values(rows, cols, std::move(values), true);
}

// Tensor whose entries stay away from zero, for relu kink avoidance.
Tensor random_offzero_tensor(int rows, int cols, Rng& rng) {
  std::vector<double> values(static_cast<std::size_t>(rows) * cols);
  for (double& v : values) {
    const double magnitude = uniform_real(rng, 0.5, 1.5);
    v = uniform_index(rng, 2) == 0 ? magnitude : -magnitude;
  }
  return Tensor::from_values(rows, cols, std::move(values), true);
}

// Fixed random weights reduce an op output to a scalar with generic
// per-element gradient flow.  Seeded per instance so repeated closure calls
// during finite differencing see identical weights.
Tensor wsum(const Tensor& y, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> w(y.size());
  for (double& v : w) v = uniform_real(rng, -1.0, 1.0);
  return sum(mul(y, Tensor::from_values(y.rows(), y.cols(), std::move(w))));
}

bool check_instance(std::vector<Tensor>& leaves, const std::function<Tensor()>& f, bool inject) {
  for (Tensor& leaf : leaves) leaf.zero_grad();
  Tensor s = f();
  s.backward();
  std::vector<std::vector<double>> analytic;
  for (const Tensor& leaf : leaves)
    analytic.push_back(leaf.has_grad() ? leaf.grad() : std::vector<double>(leaf.size(), 0.0));
  if (inject) analytic[0][0] += 1e-2;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    std::vector<double>& values = leaves[li].mutable_values();
    for (std::size_t e = 0; e < values.size(); ++e) {
      const double saved = values[e];
      values[e] = saved + kFdStep;
      const double fp = f().values()[0];
      values[e] = saved - kFdStep;
      const double fm = f().values()[0];
      values[e] = saved;
      const double numeric = (fp - fm) / (2.0 * kFdStep);
      const double a = analytic[li][e];
      const double rel = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      if (!(rel < kGradTol)) return false;
    }
  }
  return true;
}

using InstanceFn = std::function<bool(Rng&, bool)>;

SuiteResult run_grad_suite(const std::string& name, const InstanceFn& instance, Rng& rng,
                           bool inject) {
  SuiteResult result;
  result.name = name;
  for (int i = 0; i < kGradInstances; ++i) {
    if (instance(rng, inject))
      ++result.passed;
    else
      ++result.failed;
  }
  return result;
}

void add_op_grad_suites(std::vector<SuiteResult>& suites, Rng& rng, bool inject) {
  auto suite = [&](const std::string& name, const InstanceFn& fn) {
    suites.push_back(run_grad_suite(name, fn, rng, inject));
  };

  suite("grad.matmul", [](Rng& r, bool inj) {
    std::vector<Tensor> leaves = {random_tensor(2, 3, r), random_tensor(3, 2, r)};
    const std::uint64_t wseed = r();
    return check_instance(leaves, [&] { return wsum(matmul(leaves[0], leaves[1]), wseed); }, inj);
  });
  suite("grad.add", [](Rng& r, bool inj) {
    std::vector<Tensor> leaves = {random_tensor(3, 3, r), random_tensor(3, 3, r)};
    const std::uint64_t wseed = r();
    return check_instance(leaves, [&] { return wsum(add(leaves[0], leaves[1]), wseed); }, inj);
  });
  suite("grad.add_broadcast", [](Rng& r, bool inj) {
    std::vector<Tensor> leaves = {random_tensor(3, 4, r), random_tensor(1, 4, r)};
    const std::uint64_t wseed = r();
    return check_instance(leaves, [&] { return wsum(add(leaves[0], leaves[1]), wseed); }, inj);
  });
  suite("grad.mul", [](Rng& r, bool inj) {
    std::vector<Tensor> leaves = {random_tensor(3, 3, r), random_tensor(3, 3, r)};
    const std::uint64_t wseed = r();
    return check_instance(leaves, [&] { return wsum(mul(leaves[0], leaves[1]), wseed); }, inj);
  });
  suite("grad.scale", [](Rng& r, bool inj) {
    std::vector<Tensor> leaves = {random_tensor(3, 3, r)};
    const double factor = uniform_real(r, -2.0, 2.0);
    const std::uint64_t wseed = r();
    return check_instance(leaves, [&] { return wsum(scale(leaves[0], factor), wseed); }, inj);
  });
  suite("grad.relu", [](Rng& r, bool inj) {
    std::vector<Tensor> leaves = {random_offzero_tensor(3, 3, r)};
    const std::uint64_t wseed = r();
    return check_instance(leaves, [&] { return wsum(relu(leaves[0]), wseed); }, inj);
  });
  suite("grad.tanh", [](Rng& r, bool inj) {
    std::vector<Tensor> leaves = {random_tensor(3, 3, r, -2.0, 2.0)};
    const std::uint64_t wseed = r();
    return check_instance(leaves, [&] { return wsum(tanh(leaves[0]), wseed); }, inj);
  });
  suite("grad.exp", [](Rng& r, bool inj) {
    std::vector<Tensor> leaves = {random_tensor(3, 3, r, -2.0, 2.0)};
    const std::uint64_t wseed = r();
    return check_instance(leaves, [&] { return wsum(exp(leaves[0]), wseed); }, inj);
  });
  suite("grad.log", [](Rng& r, bool inj) {
    std::vector<Tensor> leaves = {random_tensor(3, 3, r, 0.5, 3.0)};
    const std::uint64_t wseed = r();
    return check_instance(leaves, [&] { return wsum(log(leaves[0]), wseed); }, inj);
  });
  suite("grad.sum", [](Rng& r, bool inj) {
    std::vector<Tensor> leaves = {random_tensor(3, 4, r)};
    return check_instance(leaves, [&] { return sum(leaves[0]); }, inj);
  });
  suite("grad.mean", [](Rng& r, bool inj) {
    std::vector<Tensor> leaves = {random_tensor(3, 4, r)};
    return check_instance(leaves, [&] { return mean(leaves[0]); }, inj);
  });
  suite("grad.transpose", [](Rng& r, bool inj) {
    std::vector<Tensor> leaves = {random_tensor(2, 4, r)};
    const std::uint64_t wseed = r();
    return check_instance(leaves, [&] { return wsum(transpose(leaves[0]), wseed); }, inj);
  });
  suite("grad.concat_rows", [](Rng& r, bool inj) {
    std::vector<Tensor> leaves = {random_tensor(2, 3, r), random_tensor(1, 3, r),
                                  random_tensor(3, 3, r)};
    const std::uint64_t wseed = r();
    return check_instance(
        leaves, [&] { return wsum(concat_rows({leaves[0], leaves[1], leaves[2]}), wseed); }, inj);
  });
  suite("grad.row_l2_normalize", [](Rng& r, bool inj) {
    std::vector<Tensor> leaves = {random_offzero_tensor(3, 4, r)};
    const std::uint64_t wseed = r();
    return check_instance(leaves, [&] { return wsum(row_l2_normalize(leaves[0]), wseed); }, inj);
  });
  suite("grad.log_softmax", [](Rng& r, bool inj) {
    std::vector<Tensor> leaves = {random_tensor(3, 5, r, -2.0, 2.0)};
    const std::uint64_t wseed = r();
    return check_instance(leaves, [&] { return wsum(log_softmax(leaves[0]), wseed); }, inj);
  });
  suite("grad.gather_rows", [](Rng& r, bool inj) {
    std::vector<Tensor> leaves = {random_tensor(4, 3, r)};
    std::vector<int> indices = {static_cast<int>(uniform_index(r, 4)),
                                static_cast<int>(uniform_index(r, 4)),
                                static_cast<int>(uniform_index(r, 4))};
    const std::uint64_t wseed = r();
    return check_instance(leaves, [&] { return wsum(gather_rows(leaves[0], indices), wseed); },
                          inj);
  });
  suite("grad.scatter_add_rows", [](Rng& r, bool inj) {
    std::vector<Tensor> leaves = {random_tensor(3, 4, r)};
    std::vector<int> indices = {static_cast<int>(uniform_index(r, 5)),
                                static_cast<int>(uniform_index(r, 5)),
                                static_cast<int>(uniform_index(r, 5))};
    const std::uint64_t wseed = r();
    return check_instance(
        leaves, [&] { return wsum(scatter_add_rows(leaves[0], indices, 5), wseed); }, inj);
  });
}

void add_loss_grad_suites(std::vector<SuiteResult>& suites, Rng& rng, bool inject) {
  auto suite = [&](const std::string& name, const InstanceFn& fn) {
    suites.push_back(run_grad_suite(name, fn, rng, inject));
  };

  auto cross_branch_instance = [](NegativePool pool) {
    return [pool](Rng& r, bool inj) {
      const int ns = 2 + static_cast<int>(uniform_index(r, 3));
      const int nt = 2 + static_cast<int>(uniform_index(r, 3));
      std::vector<Tensor> leaves = {random_offzero_tensor(ns + nt, 4, r),
                                    random_offzero_tensor(ns + nt, 4, r)};
      ContrastiveConfig cfg;
      cfg.tau = 0.5;
      cfg.negative_pool = pool;
      return check_instance(
          leaves,
          [&] {
            return cross_branch_loss(row_l2_normalize(leaves[0]), row_l2_normalize(leaves[1]),
                                     cfg, ns);
          },
          inj);
    };
  };
  suite("grad.cross_branch.union", cross_branch_instance(NegativePool::union_batch));
  suite("grad.cross_branch.target_only", cross_branch_instance(NegativePool::target_only));

  suite("grad.cross_domain", [](Rng& r, bool inj) {
    const int ns = 3 + static_cast<int>(uniform_index(r, 3));
    const int nt = 2 + static_cast<int>(uniform_index(r, 3));
    const int num_classes = 2;
    std::vector<Tensor> leaves = {random_offzero_tensor(nt, 4, r),
                                  random_offzero_tensor(ns, 4, r)};
    std::vector<int> labels(ns);
    for (int i = 0; i < ns; ++i) labels[i] = i % num_classes;
    ContrastiveConfig cfg;
    cfg.tau = 0.5;
    // Pseudo-labels are constants during a step, so they are frozen from the
    // unperturbed embeddings before differencing.
    const auto pseudo =
        pseudo_label_batch(row_l2_normalize(leaves[0]), row_l2_normalize(leaves[1]), labels,
                           num_classes, cfg);
    return check_instance(
        leaves,
        [&] {
          return cross_domain_loss(row_l2_normalize(leaves[0]), pseudo,
                                   row_l2_normalize(leaves[1]), labels, cfg);
        },
        inj);
  });

  suite("grad.supervised", [](Rng& r, bool inj) {
    const int n = 3 + static_cast<int>(uniform_index(r, 3));
    const int num_classes = 2 + static_cast<int>(uniform_index(r, 2));
    std::vector<Tensor> leaves = {random_tensor(n, num_classes, r, -2.0, 2.0)};
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) labels[i] = static_cast<int>(uniform_index(r, num_classes));
    return check_instance(leaves, [&] { return supervised_loss(leaves[0], labels); }, inj);
  });

  suite("grad.gin_encode", [](Rng& r, bool inj) {
    Graph g;
    g.node_count = 2 + static_cast<int>(uniform_index(r, 4));
    for (int i = 0; i < g.node_count; ++i)
      for (int j = i + 1; j < g.node_count; ++j)
        if (uniform_real(r) < 0.5) g.edges.push_back({i, j});
    std::vector<std::vector<double>> attrs(g.node_count, std::vector<double>(3));
    for (auto& row : attrs)
      for (double& v : row) v = uniform_real(r, -1.0, 1.0);
    g.node_attrs = std::move(attrs);

    ParameterSet params;
    GCNEncoder encoder = GCNEncoder::create(params, "enc", GCNEncoder::FeatureMode::raw_attrs, 3,
                                            4, r);
    std::vector<Tensor> leaves;
    for (auto& [name, tensor] : params) leaves.push_back(tensor);
    const std::uint64_t wseed = r();
    return check_instance(leaves, [&] { return wsum(encoder.encode(g), wseed); }, inj);
  });
}

// Independent refinement oracle: labels as strings, one histogram per round.
std::vector<std::map<std::string, long long>> string_feature_counts(const Graph& graph,
                                                                    int iterations) {
  std::vector<std::string> labels;
  for (int v = 0; v < graph.node_count; ++v)
    labels.push_back(std::to_string((*graph.node_labels)[v]));
  const auto adjacency = graph.adjacency();
  std::vector<std::map<std::string, long long>> rounds;
  for (int it = 0; it <= iterations; ++it) {
    if (it > 0) {
      std::vector<std::string> next(graph.node_count);
      for (int v = 0; v < graph.node_count; ++v) {
        std::vector<std::string> neigh;
        for (int u : adjacency[v]) neigh.push_back(labels[u]);
        std::sort(neigh.begin(), neigh.end());
        std::string key = labels[v] + "(";
        for (const std::string& s : neigh) key += s + ",";
        key += ")";
        next[v] = std::move(key);
      }
      labels = std::move(next);
    }
    std::map<std::string, long long> histogram;
    for (const std::string& s : labels) ++histogram[s];
    rounds.push_back(std::move(histogram));
  }
  return rounds;
}

long long string_kernel(const Graph& a, const Graph& b, int iterations) {
  const auto ca = string_feature_counts(a, iterations);
  const auto cb = string_feature_counts(b, iterations);
  long long total = 0;
  for (int it = 0; it <= iterations; ++it)
    for (const auto& [key, count] : ca[it]) {
      auto found = cb[it].find(key);
      if (found != cb[it].end()) total += count * found->second;
    }
  return total;
}

Graph random_labeled_graph(Rng& rng, int max_nodes, int alphabet) {
  Graph g;
  g.node_count = 1 + static_cast<int>(uniform_index(rng, max_nodes));
  for (int i = 0; i < g.node_count; ++i)
    for (int j = i + 1; j < g.node_count; ++j)
      if (uniform_real(rng) < 0.3) g.edges.push_back({i, j});
  std::vector<int> labels(g.node_count);
  for (int& l : labels) l = static_cast<int>(uniform_index(rng, alphabet));
  g.node_labels = std::move(labels);
  return g;
}

// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.
std::vector<double> symmetric_eigenvalues(std::vector<std::vector<double>> a) {
  const int n = static_cast<int>(a.size());
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-24) break;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-18) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
      }
  }
  std::vector<double> eig(n);
  for (int i = 0; i < n; ++i) eig[i] = a[i][i];
  return eig;
}

SuiteResult kernel_oracle_suite(Rng& rng) {
  SuiteResult result;
  result.name = "kernel.oracle";
  WLRefiner refiner;
  for (int i = 0; i < 50; ++i) {
    const Graph a = random_labeled_graph(rng, 8, 3);
    const Graph b = random_labeled_graph(rng, 8, 3);
    const int h = i % 3;
    const long long expected = string_kernel(a, b, h);
    const double got = wl_kernel(a, b, h, refiner, false);
    if (got == static_cast<double>(expected))
      ++result.passed;
    else
      ++result.failed;
  }
  return result;
}

SuiteResult kernel_psd_suite(Rng& rng) {
  SuiteResult result;
  result.name = "kernel.psd";
  WLRefiner refiner;
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Graph> graphs;
    for (int i = 0; i < 8; ++i) graphs.push_back(random_labeled_graph(rng, 8, 3));
    const int h = trial % 3;
    std::vector<std::vector<double>> gram(graphs.size(),
                                          std::vector<double>(graphs.size(), 0.0));
    for (std::size_t i = 0; i < graphs.size(); ++i)
      for (std::size_t j = i; j < graphs.size(); ++j)
        gram[i][j] = gram[j][i] = wl_kernel(graphs[i], graphs[j], h, refiner, true);
    const auto eig = symmetric_eigenvalues(gram);
    const double min_eig = *std::min_element(eig.begin(), eig.end());
    if (min_eig >= -1e-9)
      ++result.passed;
    else
      ++result.failed;
  }
  return result;
}

std::vector<std::vector<double>> random_unit_rows(int n, int d, Rng& rng) {
  std::vector<std::vector<double>> rows(n, std::vector<double>(d));
  for (auto& row : rows) {
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& v : row) {
        v = normal(rng);
        norm += v * v;
      }
      norm = std::sqrt(norm);
    } while (norm < 1e-6);
    for (double& v : row) v /= norm;
  }
  return rows;
}

Tensor rows_tensor(const std::vector<std::vector<double>>& rows) {
  std::vector<double> flat;
  for (const auto& row : rows) flat.insert(flat.end(), row.begin(), row.end());
  return Tensor::from_values(static_cast<int>(rows.size()),
                             static_cast<int>(rows.front().size()), std::move(flat));
}

SuiteResult em_identity_suite(Rng& rng) {
  SuiteResult result;
  result.name = "em.identity";
  for (int i = 0; i < 100; ++i) {
    const int ns = 2 + static_cast<int>(uniform_index(rng, 5));
    const int nt = 2 + static_cast<int>(uniform_index(rng, 5));
    const int num_classes = 2 + static_cast<int>(uniform_index(rng, 2));
    const auto source = random_unit_rows(ns, 4, rng);
    const auto target = random_unit_rows(nt, 4, rng);
    std::vector<int> labels(ns);
    for (int& l : labels) l = static_cast<int>(uniform_index(rng, num_classes));
    ContrastiveConfig cfg;
    cfg.tau = 0.5;
    if (i % 4 == 0) cfg.confidence_threshold = 0.55;
    std::vector<PseudoLabel> pseudo;
    for (const auto& row : target)
      pseudo.push_back(pseudo_label(row, source, labels, num_classes, cfg));
    const Tensor loss =
        cross_domain_loss(rows_tensor(target), pseudo, rows_tensor(source), labels, cfg);
    const double em = em_objective(target, pseudo, source, labels, cfg);
    if (std::abs(em + loss.values()[0]) <= 1e-9)
      ++result.passed;
    else
      ++result.failed;
  }
  return result;
}

SuiteResult pseudo_oracle_suite(Rng& rng) {
  SuiteResult result;
  result.name = "pseudo.oracle";
  for (int i = 0; i < 100; ++i) {
    const int ns = 1 + static_cast<int>(uniform_index(rng, 6));
    const int num_classes = 2 + static_cast<int>(uniform_index(rng, 2));
    const auto source = random_unit_rows(ns, 4, rng);
    const auto target = random_unit_rows(1, 4, rng);
    std::vector<int> labels(ns);
    for (int& l : labels) l = static_cast<int>(uniform_index(rng, num_classes));
    ContrastiveConfig cfg;
    cfg.tau = 0.5;
    const PseudoLabel got = pseudo_label(target[0], source, labels, num_classes, cfg);

    // Naive evaluation: explicit softmax over similarities, then the vote.
    std::vector<double> logits(ns);
    for (int s = 0; s < ns; ++s) {
      double dot = 0.0;
      for (int d = 0; d < 4; ++d) dot += target[0][d] * source[s][d];
      logits[s] = dot / cfg.tau;
    }
    double denom = 0.0;
    for (double l : logits) denom += std::exp(l);
    std::vector<double> expected(num_classes, 0.0);
    for (int s = 0; s < ns; ++s) expected[labels[s]] += std::exp(logits[s]) / denom;

    bool ok = got.distribution.size() == expected.size();
    double total = 0.0;
    for (std::size_t c = 0; ok && c < expected.size(); ++c) {
      if (std::abs(got.distribution[c] - expected[c]) > 1e-9) ok = false;
      total += got.distribution[c];
    }
    if (ok && std::abs(total - 1.0) > 1e-9) ok = false;
    if (ok)
      ++result.passed;
    else
      ++result.failed;
  }
  return result;
}

SuiteResult pseudo_worked_example_suite() {
  SuiteResult result;
  result.name = "pseudo.worked_example";
  // Two unit source rows, similarities 1 and 0 to the target, labels 0 and 1.
  const std::vector<std::vector<double>> source = {{1.0, 0.0}, {0.0, 1.0}};
  const std::vector<double> target = {1.0, 0.0};
  ContrastiveConfig cfg;
  cfg.tau = 0.5;
  const PseudoLabel got = pseudo_label(target, source, {0, 1}, 2, cfg);
  const bool ok = std::abs(got.distribution[0] - 0.8808) < 5e-5 &&
                  std::abs(got.distribution[1] - 0.1192) < 5e-5 && got.label == 0;
  if (ok)
    ++result.passed;
  else
    ++result.failed;
  return result;
}

}  // namespace

SelfCheckReport run_selfcheck(const SelfCheckOptions& options) {
  SelfCheckReport report;
  Rng rng(options.seed);
  add_op_grad_suites(report.suites, rng, options.inject_gradient_fault);
  add_loss_grad_suites(report.suites, rng, options.inject_gradient_fault);
  report.suites.push_back(kernel_oracle_suite(rng));
  report.suites.push_back(kernel_psd_suite(rng));
  report.suites.push_back(em_identity_suite(rng));
  report.suites.push_back(pseudo_oracle_suite(rng));
  report.suites.push_back(pseudo_worked_example_suite());
  return report;
}

}  // namespace coco
