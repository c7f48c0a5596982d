#include "coco/losses.hpp"

#include <algorithm>
#include <cmath>

namespace coco {

LossReport total_loss(double l_cb, double l_cd, double l_s) {
  LossReport report;
  report.l_cb = l_cb;
  report.l_cd = l_cd;
  report.l_s = l_s;
  report.total = l_cb + l_cd + l_s;
  return report;
}

Tensor cross_branch_loss(const Tensor& z, const Tensor& z_tilde, const ContrastiveConfig& cfg,
                         int target_start_row) {
  if (cfg.tau <= 0.0) throw DomainError("temperature must be positive");
  if (!z.defined() || z.rows() < 1) throw BatchError("cross-branch loss needs at least one row");
  if (z.rows() != z_tilde.rows() || z.cols() != z_tilde.cols())
    throw ShapeError("branch embeddings are not row-aligned");

  const Tensor positives =
      matmul(mul(z, z_tilde), Tensor::ones(z.cols(), 1));  // n x 1 of z_i . z~_i

  Tensor pool = z_tilde;
  if (cfg.negative_pool == NegativePool::target_only) {
    if (target_start_row < 0 || target_start_row >= z.rows())
      throw BatchError("target-only pool is empty");
    std::vector<int> target_rows;
    for (int i = target_start_row; i < z.rows(); ++i) target_rows.push_back(i);
    pool = gather_rows(z_tilde, target_rows);
  }

  const Tensor sims = scale(matmul(z, transpose(pool)), 1.0 / cfg.tau);
  const Tensor lse = log(matmul(exp(sims), Tensor::ones(pool.rows(), 1)));
  return mean(add(lse, scale(positives, -1.0 / cfg.tau)));
}

PseudoLabel pseudo_label(const std::vector<double>& z_t,
                         const std::vector<std::vector<double>>& source_rows,
                         const std::vector<int>& source_labels, int num_classes,
                         const ContrastiveConfig& cfg) {
  if (cfg.tau <= 0.0) throw DomainError("temperature must be positive");
  if (source_rows.empty()) throw BatchError("pseudo-labeling needs a non-empty source batch");
  if (source_rows.size() != source_labels.size())
    throw ShapeError("source labels do not align with source rows");
  if (num_classes < 1) throw DomainError("class count must be positive");

  const std::size_t n = source_rows.size();
  std::vector<double> logits(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (source_rows[i].size() != z_t.size())
      throw ShapeError("embedding dimensions disagree");
    double dot = 0.0;
    for (std::size_t c = 0; c < z_t.size(); ++c) dot += z_t[c] * source_rows[i][c];
    logits[i] = dot / cfg.tau;
  }
  const double top = *std::max_element(logits.begin(), logits.end());
  double denom = 0.0;
  for (double& l : logits) {
    l = std::exp(l - top);
    denom += l;
  }

  PseudoLabel out;
  out.distribution.assign(num_classes, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = source_labels[i];
    if (label < 0 || label >= num_classes) throw DomainError("source label outside [0, C)");
    out.distribution[label] += logits[i] / denom;
  }
  out.label = 0;
  for (int c = 1; c < num_classes; ++c)
    if (out.distribution[c] > out.distribution[out.label]) out.label = c;
  out.confidence = out.distribution[out.label];
  return out;
}

std::vector<PseudoLabel> pseudo_label_batch(const Tensor& target_normed,
                                            const Tensor& source_normed,
                                            const std::vector<int>& source_labels,
                                            int num_classes, const ContrastiveConfig& cfg) {
  const auto target_rows = tensor_rows(target_normed);
  const auto source_rows = tensor_rows(source_normed);
  std::vector<PseudoLabel> out;
  out.reserve(target_rows.size());
  for (const auto& row : target_rows)
    out.push_back(pseudo_label(row, source_rows, source_labels, num_classes, cfg));
  return out;
}

Tensor cross_domain_loss(const Tensor& target_normed, const std::vector<PseudoLabel>& pseudo,
                         const Tensor& source_normed, const std::vector<int>& source_labels,
                         const ContrastiveConfig& cfg) {
  if (cfg.tau <= 0.0) throw DomainError("temperature must be positive");
  if (!source_normed.defined() || source_normed.rows() < 1)
    throw BatchError("cross-domain loss needs a non-empty source batch");
  if (!target_normed.defined() || target_normed.rows() < 1)
    throw BatchError("cross-domain loss needs a non-empty target batch");
  const int nt = target_normed.rows();
  const int ns = source_normed.rows();
  if (static_cast<int>(pseudo.size()) != nt)
    throw ShapeError("pseudo-label count does not match target rows");
  if (static_cast<int>(source_labels.size()) != ns)
    throw ShapeError("source label count does not match source rows");

  std::vector<double> weights(static_cast<std::size_t>(nt) * ns, 0.0);
  for (int j = 0; j < nt; ++j) {
    if (cfg.confidence_threshold > 0.0 && pseudo[j].confidence < cfg.confidence_threshold)
      continue;
    int positives = 0;
    for (int i = 0; i < ns; ++i)
      if (source_labels[i] == pseudo[j].label) ++positives;
    if (positives == 0) continue;
    const double w = 1.0 / static_cast<double>(positives);
    for (int i = 0; i < ns; ++i)
      if (source_labels[i] == pseudo[j].label)
        weights[static_cast<std::size_t>(j) * ns + i] = w;
  }

  const Tensor logits =
      scale(matmul(target_normed, transpose(source_normed)), 1.0 / cfg.tau);  // nt x ns
  const Tensor lse = log(matmul(exp(logits), Tensor::ones(ns, 1)));           // nt x 1
  const Tensor gaps = add(matmul(lse, Tensor::ones(1, ns)), scale(logits, -1.0));
  return sum(mul(gaps, Tensor::from_values(nt, ns, std::move(weights))));
}

Tensor supervised_loss(const Tensor& logits, const std::vector<int>& labels) {
  if (!logits.defined() || logits.rows() < 1)
    throw BatchError("supervised loss needs at least one row");
  if (static_cast<int>(labels.size()) != logits.rows())
    throw ShapeError("label count does not match logit rows");
  const int n = logits.rows();
  const int c = logits.cols();
  std::vector<double> mask(static_cast<std::size_t>(n) * c, 0.0);
  for (int i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= c) throw DomainError("class label outside [0, C)");
    mask[static_cast<std::size_t>(i) * c + labels[i]] = 1.0;
  }
  const Tensor picked = mul(log_softmax(logits), Tensor::from_values(n, c, std::move(mask)));
  return scale(sum(picked), -1.0 / static_cast<double>(n));
}

double em_objective(const std::vector<std::vector<double>>& target_rows,
                    const std::vector<PseudoLabel>& pseudo,
                    const std::vector<std::vector<double>>& source_rows,
                    const std::vector<int>& source_labels, const ContrastiveConfig& cfg) {
  if (cfg.tau <= 0.0) throw DomainError("temperature must be positive");
  if (source_rows.empty()) throw BatchError("objective needs a non-empty source batch");
  if (target_rows.size() != pseudo.size())
    throw ShapeError("pseudo-label count does not match target rows");
  if (source_rows.size() != source_labels.size())
    throw ShapeError("source label count does not match source rows");

  double objective = 0.0;
  for (std::size_t j = 0; j < target_rows.size(); ++j) {
    if (cfg.confidence_threshold > 0.0 && pseudo[j].confidence < cfg.confidence_threshold)
      continue;
    std::vector<double> logits(source_rows.size());
    for (std::size_t i = 0; i < source_rows.size(); ++i) {
      if (source_rows[i].size() != target_rows[j].size())
        throw ShapeError("embedding dimensions disagree");
      double dot = 0.0;
      for (std::size_t k = 0; k < target_rows[j].size(); ++k)
        dot += target_rows[j][k] * source_rows[i][k];
      logits[i] = dot / cfg.tau;
    }
    double denom = 0.0;
    for (double l : logits) denom += std::exp(l);
    int positives = 0;
    double matched = 0.0;
    for (std::size_t i = 0; i < source_rows.size(); ++i) {
      if (source_labels[i] != pseudo[j].label) continue;
      ++positives;
      matched += std::log(std::exp(logits[i]) / denom);
    }
    if (positives > 0) objective += matched / static_cast<double>(positives);
  }
  return objective;
}

}  // namespace coco
