#include "doctest.h"

#include <cmath>
#include <string>
#include <vector>

#include "coco/kernels.hpp"
#include "coco/trainer.hpp"
#include "testutil.hpp"

using namespace coco;

namespace {

Graph triangle_with_labels(int class_label) {
  Graph g;
  g.node_count = 3;
  g.edges = {{0, 1}, {0, 2}, {1, 2}};
  g.node_labels = std::vector<int>{0, 0, 0};
  g.class_label = class_label;
  return g;
}

Graph path_with_labels(int length, int class_label) {
  Graph g;
  g.node_count = length;
  for (int i = 0; i + 1 < length; ++i) g.edges.push_back({i, i + 1});
  g.node_labels = std::vector<int>(static_cast<std::size_t>(length), 0);
  g.class_label = class_label;
  return g;
}

// Alternating triangles (class 0) and paths (class 1), all node-labeled.
Dataset labeled_dataset(int per_class, const std::string& name) {
  Dataset d;
  d.name = name;
  d.num_classes = 2;
  d.label_values = {0, 1};
  for (int i = 0; i < per_class; ++i) {
    d.graphs.push_back(triangle_with_labels(0));
    d.graphs.push_back(path_with_labels(4, 1));
  }
  return d;
}

DomainPair labeled_pair(int per_class) {
  return DomainPair::make(labeled_dataset(per_class, "src"), labeled_dataset(per_class, "tgt"));
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 64;
  cfg.hidden = 8;
  cfg.num_filters = 3;
  cfg.wl_iterations = 1;
  cfg.quantizer_k = 4;
  cfg.seed = 5;
  return cfg;
}

bool params_equal(const ParameterSet& a, const ParameterSet& b) {
  if (a.size() != b.size()) return false;
  auto ita = a.begin();
  auto itb = b.begin();
  for (; ita != a.end(); ++ita, ++itb) {
    if (ita->first != itb->first) return false;
    if (ita->second.values() != itb->second.values()) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("ablation names round-trip through the parser") {
  const std::vector<Ablation> all = {Ablation::full,        Ablation::no_cb,
                                     Ablation::no_cd,       Ablation::source_only,
                                     Ablation::gin_gin,     Ablation::hgkn_hgkn};
  for (Ablation a : all) CHECK(parse_ablation(ablation_name(a)) == a);
  CHECK(ablation_name(Ablation::full) == "full");
  CHECK(ablation_name(Ablation::source_only) == "source_only");
  CHECK_THROWS_AS(parse_ablation("everything"), ConfigError);
  CHECK_THROWS_AS(parse_ablation(""), ConfigError);
}

TEST_CASE("config validation flags each out-of-range field") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());

  SUBCASE("epochs") { cfg.epochs = -1; CHECK_THROWS_AS(cfg.validate(), ConfigError); }
  SUBCASE("batch size") { cfg.batch_size = 0; CHECK_THROWS_AS(cfg.validate(), ConfigError); }
  SUBCASE("learning rate") { cfg.lr = 0.0; CHECK_THROWS_AS(cfg.validate(), ConfigError); }
  SUBCASE("temperature") { cfg.tau = 0.0; CHECK_THROWS_AS(cfg.validate(), ConfigError); }
  SUBCASE("pooling ratio low") { cfg.rho = 0.0; CHECK_THROWS_AS(cfg.validate(), ConfigError); }
  SUBCASE("pooling ratio high") { cfg.rho = 1.0; CHECK_THROWS_AS(cfg.validate(), ConfigError); }
  SUBCASE("filter count") { cfg.num_filters = 0; CHECK_THROWS_AS(cfg.validate(), ConfigError); }
  SUBCASE("neighborhood radius") { cfg.r = -1; CHECK_THROWS_AS(cfg.validate(), ConfigError); }
  SUBCASE("relabeling rounds") { cfg.wl_iterations = -1; CHECK_THROWS_AS(cfg.validate(), ConfigError); }
  SUBCASE("quantizer size") { cfg.quantizer_k = 0; CHECK_THROWS_AS(cfg.validate(), ConfigError); }
  SUBCASE("hidden width") { cfg.hidden = 0; CHECK_THROWS_AS(cfg.validate(), ConfigError); }
  SUBCASE("filter size floor") { cfg.min_filter_size = 0; CHECK_THROWS_AS(cfg.validate(), ConfigError); }
  SUBCASE("filter size ceiling") { cfg.max_filter_size = cfg.min_filter_size - 1; CHECK_THROWS_AS(cfg.validate(), ConfigError); }
  SUBCASE("quantizer sample cap") { cfg.quantizer_sample_cap = 0; CHECK_THROWS_AS(cfg.validate(), ConfigError); }
  SUBCASE("early stop delta") { cfg.early_stop_delta = -1.0; CHECK_THROWS_AS(cfg.validate(), ConfigError); }
  SUBCASE("early stop patience") { cfg.early_stop_patience = 0; CHECK_THROWS_AS(cfg.validate(), ConfigError); }
}

TEST_CASE("feature mode derivation inspects both domains") {
  TrainConfig cfg = small_config();

  SUBCASE("one-hot labels with the alphabet spanning both domains") {
    Dataset src = labeled_dataset(2, "src");
    Dataset tgt = labeled_dataset(2, "tgt");
    (*tgt.graphs[1].node_labels)[0] = 2;  // alphabet only visible on the target side
    const DomainPair pair = DomainPair::make(src, tgt);
    const ModelMeta meta = derive_meta(cfg, pair);
    CHECK(meta.feature_mode == GCNEncoder::FeatureMode::one_hot_labels);
    CHECK(meta.feature_dim == 3);
    CHECK(meta.label_alphabet == 3);
    CHECK(meta.num_classes == 2);
  }

  SUBCASE("raw attributes when labels are missing") {
    Dataset src = labeled_dataset(2, "src");
    Dataset tgt = labeled_dataset(2, "tgt");
    for (auto* d : {&src, &tgt})
      for (Graph& g : d->graphs) {
        g.node_labels.reset();
        g.node_attrs = std::vector<std::vector<double>>(
            static_cast<std::size_t>(g.node_count), {1.0, 2.0});
      }
    const ModelMeta meta = derive_meta(cfg, DomainPair::make(src, tgt));
    CHECK(meta.feature_mode == GCNEncoder::FeatureMode::raw_attrs);
    CHECK(meta.feature_dim == 2);
    CHECK(meta.label_alphabet == 0);
  }

  SUBCASE("attributes win when labels cover only part of the data") {
    Dataset src = labeled_dataset(2, "src");
    Dataset tgt = labeled_dataset(2, "tgt");
    for (auto* d : {&src, &tgt})
      for (Graph& g : d->graphs)
        g.node_attrs = std::vector<std::vector<double>>(
            static_cast<std::size_t>(g.node_count), {0.5});
    tgt.graphs[0].node_labels.reset();
    const ModelMeta meta = derive_meta(cfg, DomainPair::make(src, tgt));
    CHECK(meta.feature_mode == GCNEncoder::FeatureMode::raw_attrs);
    CHECK(meta.feature_dim == 1);
  }

  SUBCASE("neither labels nor attributes everywhere") {
    Dataset src = labeled_dataset(2, "src");
    Dataset tgt = labeled_dataset(2, "tgt");
    tgt.graphs[0].node_labels.reset();
    CHECK_THROWS_AS(derive_meta(cfg, DomainPair::make(src, tgt)), DomainError);
  }

  SUBCASE("attribute widths must agree across graphs") {
    Dataset src = labeled_dataset(2, "src");
    Dataset tgt = labeled_dataset(2, "tgt");
    for (auto* d : {&src, &tgt})
      for (Graph& g : d->graphs) {
        g.node_labels.reset();
        g.node_attrs = std::vector<std::vector<double>>(
            static_cast<std::size_t>(g.node_count), {1.0, 2.0});
      }
    (*tgt.graphs[2].node_attrs)[0] = {1.0, 2.0, 3.0};
    CHECK_THROWS_AS(derive_meta(cfg, DomainPair::make(src, tgt)), DomainError);
  }

  SUBCASE("branch kinds follow the ablation") {
    const DomainPair pair = labeled_pair(2);
    cfg.ablation = Ablation::full;
    ModelMeta meta = derive_meta(cfg, pair);
    CHECK(meta.branch1_kind == BranchKind::gin);
    CHECK(meta.branch2_kind == BranchKind::hgkn);
    cfg.ablation = Ablation::gin_gin;
    meta = derive_meta(cfg, pair);
    CHECK(meta.branch1_kind == BranchKind::gin);
    CHECK(meta.branch2_kind == BranchKind::gin);
    cfg.ablation = Ablation::hgkn_hgkn;
    meta = derive_meta(cfg, pair);
    CHECK(meta.branch1_kind == BranchKind::hgkn);
    CHECK(meta.branch2_kind == BranchKind::hgkn);
    cfg.ablation = Ablation::no_cd;
    meta = derive_meta(cfg, pair);
    CHECK(meta.branch1_kind == BranchKind::gin);
    CHECK(meta.branch2_kind == BranchKind::hgkn);
  }
}

TEST_CASE("model initialization is deterministic and namespaced") {
  const DomainPair pair = labeled_pair(2);
  const TrainConfig cfg = small_config();
  const Model a = init_model(cfg, pair);
  const Model b = init_model(cfg, pair);

  CHECK(a.params.size() > 0);
  CHECK(params_equal(a.params, b.params));
  for (const auto& [name, tensor] : a.params) {
    const bool namespaced = name.rfind("b1.", 0) == 0 || name.rfind("b2.", 0) == 0 ||
                            name.rfind("classifier.", 0) == 0;
    CHECK(namespaced);
    CHECK(tensor.requires_grad());
  }
  CHECK(a.classifier.in_dim() == cfg.hidden);
  CHECK(a.classifier.out_dim() == 2);

  TrainConfig other = cfg;
  other.seed = cfg.seed + 1;
  const Model c = init_model(other, pair);
  bool any_differ = false;
  auto ita = a.params.begin();
  auto itc = c.params.begin();
  for (; ita != a.params.end(); ++ita, ++itc)
    if (ita->second.values() != itc->second.values()) any_differ = true;
  CHECK(any_differ);
}

TEST_CASE("zero epochs returns the freshly initialized model and an empty history") {
  const DomainPair pair = labeled_pair(2);
  TrainConfig cfg = small_config();
  cfg.epochs = 0;
  const TrainResult result = train(cfg, pair);
  CHECK(result.history.steps.empty());
  CHECK(result.history.epoch_mean_loss.empty());
  CHECK(result.history.epochs_run == 0);
  CHECK_FALSE(result.history.early_stopped);
  CHECK(params_equal(result.model.params, init_model(cfg, pair).params));
}

TEST_CASE("a short run keeps a consistent training history") {
  const DomainPair pair = labeled_pair(4);
  TrainConfig cfg = small_config();
  cfg.epochs = 3;
  const TrainResult result = train(cfg, pair);
  const TrainHistory& h = result.history;

  CHECK(h.epochs_run == 3);
  REQUIRE(h.steps.size() == 3);  // full-batch: one step per epoch
  REQUIRE(h.epoch_mean_loss.size() == 3);
  REQUIRE(h.epoch_wall_seconds.size() == 3);
  for (std::size_t i = 0; i < h.steps.size(); ++i) {
    const StepRecord& rec = h.steps[i];
    CHECK(rec.epoch == static_cast<int>(i));
    CHECK(rec.step == static_cast<int>(i));
    CHECK(rec.loss.total ==
          doctest::Approx(rec.loss.l_cb + rec.loss.l_cd + rec.loss.l_s).epsilon(1e-12));
    CHECK(rec.loss.l_cd ==
          doctest::Approx(rec.loss.l_cd_branch1 + rec.loss.l_cd_branch2).epsilon(1e-12));
    CHECK(rec.loss.l_cb >= 0.0);
    CHECK(rec.loss.l_cd >= 0.0);
    CHECK(rec.loss.l_s >= 0.0);
    CHECK(h.epoch_mean_loss[i] == doctest::Approx(rec.loss.total).epsilon(1e-12));
    CHECK(h.epoch_wall_seconds[i] >= 0.0);
  }

  // The target side kept its labels, so per-epoch diagnostics are recorded.
  CHECK(h.has_target_diagnostics);
  REQUIRE(h.epoch_target_accuracy.size() == 3);
  REQUIRE(h.epoch_pseudo_accuracy.size() == 3);
  for (double acc : h.epoch_target_accuracy) CHECK((acc >= 0.0 && acc <= 1.0));
  for (double acc : h.epoch_pseudo_accuracy) CHECK((acc >= 0.0 && acc <= 1.0));
}

TEST_CASE("steps per epoch follow the smaller domain") {
  Dataset src = labeled_dataset(3, "src");  // 6 graphs
  Dataset tgt = labeled_dataset(2, "tgt");  // 4 graphs
  const DomainPair pair = DomainPair::make(std::move(src), std::move(tgt));

  TrainConfig cfg = small_config();
  cfg.epochs = 2;
  cfg.batch_size = 2;
  TrainResult result = train(cfg, pair);
  CHECK(result.history.steps.size() == 4);  // min(6, 4) / 2 = 2 steps per epoch

  cfg.batch_size = 3;
  result = train(cfg, pair);
  CHECK(result.history.steps.size() == 2);  // 4 / 3 truncates to one step

  cfg.batch_size = 64;
  result = train(cfg, pair);
  CHECK(result.history.steps.size() == 2);  // clamped full batch, one step
}

TEST_CASE("source-only training stays away from the kernel machinery") {
  const DomainPair pair = labeled_pair(3);
  TrainConfig cfg = small_config();
  cfg.epochs = 3;
  cfg.ablation = Ablation::source_only;

  // Building the model computes filter self-similarities, so measure the
  // loop's kernel usage as the surplus over a bare initialization.
  long long& counter = wl_dot_counter();
  const long long before_init = counter;
  const Model fresh = init_model(cfg, pair);
  const long long init_cost = counter - before_init;

  const long long before_train = counter;
  const TrainResult result = train(cfg, pair);
  CHECK(counter - before_train == init_cost);

  for (const StepRecord& rec : result.history.steps) {
    CHECK(rec.loss.l_cb == 0.0);
    CHECK(rec.loss.l_cd == 0.0);
    CHECK(rec.loss.l_s > 0.0);
  }

  // A full run on the same data drives the kernel branch.
  TrainConfig full = cfg;
  full.ablation = Ablation::full;
  const long long before_full = counter;
  train(full, pair);
  CHECK(counter - before_full > init_cost);
}

TEST_CASE("loss ablations zero out exactly their component") {
  const DomainPair pair = labeled_pair(3);
  TrainConfig cfg = small_config();
  cfg.epochs = 2;

  SUBCASE("no cross-branch term") {
    cfg.ablation = Ablation::no_cb;
    const TrainResult result = train(cfg, pair);
    for (const StepRecord& rec : result.history.steps) {
      CHECK(rec.loss.l_cb == 0.0);
      CHECK(rec.loss.total == doctest::Approx(rec.loss.l_cd + rec.loss.l_s).epsilon(1e-12));
    }
  }
  SUBCASE("no cross-domain term") {
    cfg.ablation = Ablation::no_cd;
    const TrainResult result = train(cfg, pair);
    for (const StepRecord& rec : result.history.steps) {
      CHECK(rec.loss.l_cd == 0.0);
      CHECK(rec.loss.l_cd_branch1 == 0.0);
      CHECK(rec.loss.l_cd_branch2 == 0.0);
      CHECK(rec.loss.total == doctest::Approx(rec.loss.l_cb + rec.loss.l_s).epsilon(1e-12));
    }
  }
}

TEST_CASE("branch ablations swap the encoder kinds") {
  const DomainPair pair = labeled_pair(2);
  TrainConfig cfg = small_config();
  cfg.epochs = 1;

  cfg.ablation = Ablation::gin_gin;
  TrainResult result = train(cfg, pair);
  CHECK(result.model.branch1.kind == BranchKind::gin);
  CHECK(result.model.branch2.kind == BranchKind::gin);

  cfg.ablation = Ablation::hgkn_hgkn;
  result = train(cfg, pair);
  CHECK(result.model.branch1.kind == BranchKind::hgkn);
  CHECK(result.model.branch2.kind == BranchKind::hgkn);
  // The classifier reads branch 1, which is now the kernel encoder.
  const auto probs = predict(result.model, pair.source().graphs[0]);
  CHECK(probs.size() == 2);
  CHECK(probs[0] + probs[1] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("training twice with one seed reproduces everything bit for bit") {
  const DomainPair pair = labeled_pair(3);
  TrainConfig cfg = small_config();
  cfg.epochs = 3;

  const TrainResult a = train(cfg, pair);
  const TrainResult b = train(cfg, pair);
  CHECK(params_equal(a.model.params, b.model.params));
  REQUIRE(a.history.steps.size() == b.history.steps.size());
  for (std::size_t i = 0; i < a.history.steps.size(); ++i) {
    CHECK(a.history.steps[i].loss.total == b.history.steps[i].loss.total);
    CHECK(a.history.steps[i].loss.l_cb == b.history.steps[i].loss.l_cb);
    CHECK(a.history.steps[i].loss.l_cd == b.history.steps[i].loss.l_cd);
    CHECK(a.history.steps[i].loss.l_s == b.history.steps[i].loss.l_s);
  }

  TrainConfig other = cfg;
  other.seed = cfg.seed + 1;
  const TrainResult c = train(other, pair);
  CHECK_FALSE(params_equal(a.model.params, c.model.params));
}

TEST_CASE("losses fall over a short optimization on the toy data") {
  const DomainPair pair = labeled_pair(6);
  TrainConfig cfg = small_config();
  cfg.epochs = 30;
  cfg.lr = 1e-2;
  cfg.ablation = Ablation::source_only;
  const TrainResult result = train(cfg, pair);
  REQUIRE(result.history.epoch_mean_loss.size() >= 2);
  CHECK(result.history.epoch_mean_loss.back() < result.history.epoch_mean_loss.front());
}

TEST_CASE("an absurd learning rate surfaces as a divergence error") {
  // Unlabeled target: the blow-up must surface from a training step, not
  // from the per-epoch diagnostics that labeled targets enable.
  Dataset target = labeled_dataset(2, "tgt");
  for (auto& g : target.graphs) g.class_label.reset();
  const DomainPair pair = DomainPair::make(labeled_dataset(2, "src"), std::move(target));
  TrainConfig cfg = small_config();
  cfg.epochs = 5;
  cfg.lr = 1e200;
  cfg.ablation = Ablation::gin_gin;
  try {
    train(cfg, pair);
    FAIL("training was expected to diverge");
  } catch (const TrainDiverged& e) {
    CHECK(e.step_index >= 1);
    CHECK(std::string(e.what()).find("training diverged at step") != std::string::npos);
  }
}

TEST_CASE("training halts once the epoch loss plateaus") {
  const DomainPair pair = labeled_pair(3);
  TrainConfig cfg = small_config();
  cfg.epochs = 50;
  cfg.lr = 1e-30;  // effectively frozen, so every epoch repeats the same loss
  cfg.ablation = Ablation::source_only;
  cfg.early_stop_patience = 3;
  const TrainResult result = train(cfg, pair);
  CHECK(result.history.early_stopped);
  CHECK(result.history.epochs_run == 4);
  CHECK(result.history.epoch_mean_loss.size() == 4);
}

TEST_CASE("prediction yields a distribution and ignores node order") {
  const DomainPair pair = labeled_pair(2);
  const Model model = init_model(small_config(), pair);

  const Graph g = path_with_labels(5, 1);
  const auto probs = predict(model, g);
  REQUIRE(probs.size() == 2);
  double total = 0.0;
  for (double p : probs) {
    CHECK(p >= 0.0);
    total += p;
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-9));

  // Shuffle the path's node ids; the prediction must not move.
  const std::vector<int> perm = {2, 0, 3, 1, 4};
  Graph shuffled;
  shuffled.node_count = 5;
  for (const auto& [u, v] : g.edges)
    shuffled.edges.push_back({perm[static_cast<std::size_t>(u)], perm[static_cast<std::size_t>(v)]});
  shuffled.normalize_edges();
  shuffled.node_labels = std::vector<int>(5, 0);
  const auto probs_shuffled = predict(model, shuffled);
  for (std::size_t c = 0; c < probs.size(); ++c)
    CHECK(probs_shuffled[c] == doctest::Approx(probs[c]).epsilon(1e-12));
}

TEST_CASE("evaluation counts argmax matches and breaks ties toward class zero") {
  const DomainPair pair = labeled_pair(2);
  Model model = init_model(small_config(), pair);
  auto& w = model.classifier.weight.mutable_values();
  std::fill(w.begin(), w.end(), 0.0);
  auto& b = model.classifier.bias.mutable_values();
  std::fill(b.begin(), b.end(), 0.0);

  // Uniform logits everywhere: the tie resolves to class 0.
  const double balanced = evaluate(model, labeled_dataset(2, "balanced"));
  CHECK(balanced == doctest::Approx(0.5).epsilon(1e-12));

  Dataset zeros;
  zeros.num_classes = 2;
  zeros.label_values = {0, 1};
  for (int i = 0; i < 4; ++i) zeros.graphs.push_back(triangle_with_labels(0));
  CHECK(evaluate(model, zeros) == doctest::Approx(1.0).epsilon(1e-12));

  SUBCASE("empty dataset") {
    Dataset empty;
    empty.num_classes = 2;
    CHECK_THROWS_AS(evaluate(model, empty), DomainError);
  }
  SUBCASE("unlabeled graph") {
    Dataset bad = labeled_dataset(1, "bad");
    bad.graphs[0].class_label.reset();
    CHECK_THROWS_AS(evaluate(model, bad), DomainError);
  }
}

TEST_CASE("pseudo-label accuracy needs the held-out target labels") {
  Dataset src = labeled_dataset(2, "src");
  Dataset tgt = labeled_dataset(2, "tgt");
  for (Graph& g : tgt.graphs) g.class_label.reset();
  const DomainPair unlabeled = DomainPair::make(std::move(src), std::move(tgt));
  CHECK_FALSE(unlabeled.has_target_labels());
  const Model model = init_model(small_config(), unlabeled);
  CHECK_THROWS_AS(pseudo_label_accuracy(model, unlabeled), StateError);

  const DomainPair labeled = labeled_pair(2);
  const double acc = pseudo_label_accuracy(init_model(small_config(), labeled), labeled);
  CHECK(acc >= 0.0);
  CHECK(acc <= 1.0);
}

TEST_CASE("training rejects empty domains") {
  Dataset src = labeled_dataset(2, "src");
  Dataset empty;
  empty.num_classes = 2;
  const TrainConfig cfg = small_config();
  CHECK_THROWS_AS(train(cfg, DomainPair::make(src, empty)), DomainError);
  CHECK_THROWS_AS(train(cfg, DomainPair::make(empty, src)), DomainError);
}
