#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "coco/gcn.hpp"
#include "coco/graph.hpp"
#include "coco/hgkn.hpp"
#include "coco/losses.hpp"
#include "coco/rng.hpp"
#include "coco/tensor.hpp"

namespace coco {

enum class Ablation { full, no_cb, no_cd, source_only, gin_gin, hgkn_hgkn };

std::string ablation_name(Ablation ablation);
Ablation parse_ablation(const std::string& name);

struct TrainConfig {
  int epochs = 200;
  int batch_size = 64;
  double lr = 1e-4;
  double tau = 0.5;
  double rho = 0.4;
  int num_filters = 15;
  int r = 1;
  int wl_iterations = 2;
  int quantizer_k = 20;
  int hidden = 64;
  std::uint64_t seed = 0;
  Ablation ablation = Ablation::full;
  NegativePool negative_pool = NegativePool::union_batch;
  bool ascent_accept = false;
  double confidence_threshold = 0.0;
  int min_filter_size = 3;
  int max_filter_size = 8;
  // Graphs per domain fed to the quantizer fit, taken from the front of each
  // dataset.
  int quantizer_sample_cap = 128;
  double early_stop_delta = 1e-5;
  int early_stop_patience = 20;

  void validate() const;  // ConfigError on out-of-range values
};

enum class BranchKind { gin, hgkn };

struct Branch {
  BranchKind kind = BranchKind::gin;
  GCNEncoder gin;
  HGKNEncoder hgkn;
};

struct ModelMeta {
  int num_classes = 0;
  GCNEncoder::FeatureMode feature_mode = GCNEncoder::FeatureMode::one_hot_labels;
  int feature_dim = 0;
  int label_alphabet = 0;  // > 0 when every graph carries discrete labels
  BranchKind branch1_kind = BranchKind::gin;
  BranchKind branch2_kind = BranchKind::hgkn;
};

struct Model {
  TrainConfig config;
  ModelMeta meta;
  ParameterSet params;  // every parameter; the checkpoint's source of truth
  Branch branch1;       // the classifier reads this branch
  Branch branch2;
  Affine classifier;
};

struct StepRecord {
  int epoch = 0;
  int step = 0;
  LossReport loss;
};

struct TrainHistory {
  std::vector<StepRecord> steps;
  std::vector<double> epoch_mean_loss;
  std::vector<double> epoch_wall_seconds;
  bool has_target_diagnostics = false;
  std::vector<double> epoch_target_accuracy;  // filled when diagnostics available
  std::vector<double> epoch_pseudo_accuracy;
  int epochs_run = 0;
  bool early_stopped = false;
};

struct TrainResult {
  Model model;
  TrainHistory history;
};

// Featurization choices derived from the data: one-hot labels when every
// graph has them, raw attributes otherwise.
ModelMeta derive_meta(const TrainConfig& config, const DomainPair& data);

Model init_model(const TrainConfig& config, const DomainPair& data);

TrainResult train(const TrainConfig& config, const DomainPair& data);

std::vector<double> predict(const Model& model, const Graph& graph);
double evaluate(const Model& model, const Dataset& dataset);

// Pseudo-label quality diagnostic: labels every target graph against a full
// source pass through branch 1 and compares with the held-out labels.
double pseudo_label_accuracy(const Model& model, const DomainPair& data);

}  // namespace coco
