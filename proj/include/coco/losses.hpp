#pragma once

#include <vector>

#include "coco/errors.hpp"
#include "coco/tensor.hpp"

namespace coco {

enum class NegativePool { union_batch, target_only };

struct ContrastiveConfig {
  double tau = 0.5;
  NegativePool negative_pool = NegativePool::union_batch;
  // Pseudo-labels below this confidence are dropped from the cross-domain
  // loss.  Zero disables the filter.
  double confidence_threshold = 0.0;
};

struct PseudoLabel {
  std::vector<double> distribution;
  int label = 0;
  double confidence = 0.0;
};

struct LossReport {
  double l_cb = 0.0;
  double l_cd = 0.0;
  double l_s = 0.0;
  double total = 0.0;
  double l_cd_branch1 = 0.0;
  double l_cd_branch2 = 0.0;
};

LossReport total_loss(double l_cb, double l_cd, double l_s);

// InfoNCE between the two branches over the same row-aligned batch.  Rows
// must be l2-normalized.  Row i's positive is z_tilde[i]; the candidate pool
// is every z_tilde row, or only rows from target_start_row on in target-only
// mode.  Mean over rows.
Tensor cross_branch_loss(const Tensor& z, const Tensor& z_tilde, const ContrastiveConfig& cfg,
                         int target_start_row);

// Similarity-weighted vote over labeled source embeddings; no gradient.
PseudoLabel pseudo_label(const std::vector<double>& z_t,
                         const std::vector<std::vector<double>>& source_rows,
                         const std::vector<int>& source_labels, int num_classes,
                         const ContrastiveConfig& cfg);
std::vector<PseudoLabel> pseudo_label_batch(const Tensor& target_normed,
                                            const Tensor& source_normed,
                                            const std::vector<int>& source_labels,
                                            int num_classes, const ContrastiveConfig& cfg);

// Pulls each target row toward the source rows sharing its pseudo-label,
// against the whole source batch.  Targets with no same-label source (or
// below the confidence threshold) contribute zero.
Tensor cross_domain_loss(const Tensor& target_normed, const std::vector<PseudoLabel>& pseudo,
                         const Tensor& source_normed, const std::vector<int>& source_labels,
                         const ContrastiveConfig& cfg);

// Mean cross-entropy via log-softmax.
Tensor supervised_loss(const Tensor& logits, const std::vector<int>& labels);

// Independent double-loop evaluation of the maximization objective the
// cross-domain loss descends; equals -cross_domain_loss for one branch.
double em_objective(const std::vector<std::vector<double>>& target_rows,
                    const std::vector<PseudoLabel>& pseudo,
                    const std::vector<std::vector<double>>& source_rows,
                    const std::vector<int>& source_labels, const ContrastiveConfig& cfg);

}  // namespace coco
