#include "doctest.h"

#include <string>
#include <vector>

#include "coco/checkpoint.hpp"
#include "coco/trainer.hpp"
#include "json.hpp"
#include "testutil.hpp"

using namespace coco;
using json = nlohmann::ordered_json;

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

Dataset labeled_dataset(int per_class) {
  Dataset d;
  d.num_classes = 2;
  d.label_values = {0, 1};
  for (int i = 0; i < per_class; ++i) {
    d.graphs.push_back(triangle_with_labels(0));
    d.graphs.push_back(path_with_labels(4, 1));
  }
  return d;
}

// A briefly trained model exercising both encoder kinds, fitted quantizer
// included.
Model trained_model() {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 64;
  cfg.hidden = 8;
  cfg.num_filters = 3;
  cfg.wl_iterations = 1;
  cfg.quantizer_k = 4;
  cfg.seed = 9;
  const DomainPair pair = DomainPair::make(labeled_dataset(2), labeled_dataset(2));
  return train(cfg, pair).model;
}

}  // namespace

TEST_CASE("negative pool names round-trip") {
  CHECK(negative_pool_name(NegativePool::union_batch) == "union_batch");
  CHECK(negative_pool_name(NegativePool::target_only) == "target_only");
  CHECK(parse_negative_pool("union_batch") == NegativePool::union_batch);
  CHECK(parse_negative_pool("target_only") == NegativePool::target_only);
  CHECK_THROWS_AS(parse_negative_pool("everything"), ConfigError);
  CHECK_THROWS_AS(parse_negative_pool(""), ConfigError);
}

TEST_CASE("serialization round-trips byte for byte") {
  const Model model = trained_model();
  const std::string first = model_to_json(model);
  const Model reloaded = model_from_json(first);
  const std::string second = model_to_json(reloaded);
  CHECK(first == second);
}

TEST_CASE("the serialized document matches its schema") {
  const Model model = trained_model();
  const auto doc = nlohmann::json::parse(model_to_json(model));
  std::string error;
  CHECK_MESSAGE(testutil::validate_against_schema_file(doc, "checkpoint.schema.json", &error),
                error);
}

TEST_CASE("a reloaded model behaves exactly like the original") {
  const Model model = trained_model();
  const Model reloaded = model_from_json(model_to_json(model));

  const std::vector<Graph> probes = {triangle_with_labels(0), path_with_labels(4, 1),
                                     path_with_labels(6, 1)};
  for (const Graph& g : probes) {
    CHECK(predict(model, g) == predict(reloaded, g));
    REQUIRE(model.branch2.kind == BranchKind::hgkn);
    const Tensor za = model.branch2.hgkn.encode(g);
    const Tensor zb = reloaded.branch2.hgkn.encode(g);
    CHECK(za.values() == zb.values());
  }

  const Dataset holdout = labeled_dataset(3);
  CHECK(evaluate(model, holdout) == evaluate(reloaded, holdout));
}

TEST_CASE("kernel branch structures survive the round trip") {
  const Model model = trained_model();
  const Model reloaded = model_from_json(model_to_json(model));

  const auto& layers = model.branch2.hgkn.layers();
  const auto& reloaded_layers = reloaded.branch2.hgkn.layers();
  REQUIRE(layers.size() == reloaded_layers.size());
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& a = layers[k].filters();
    const auto& b = reloaded_layers[k].filters();
    REQUIRE(a.size() == b.size());
    for (std::size_t f = 0; f < a.size(); ++f) {
      CHECK(a[f].node_count == b[f].node_count);
      CHECK(a[f].adjacency == b[f].adjacency);
      CHECK(a[f].node_attrs == b[f].node_attrs);
    }
    if (layers[k].needs_quantizer())
      CHECK(layers[k].quantizer().centroids() == reloaded_layers[k].quantizer().centroids());
  }
}

TEST_CASE("a model without kernel branches stores null filter slots") {
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 64;
  cfg.hidden = 8;
  cfg.seed = 9;
  cfg.ablation = Ablation::gin_gin;
  const DomainPair pair = DomainPair::make(labeled_dataset(2), labeled_dataset(2));
  const Model model = train(cfg, pair).model;

  const std::string text = model_to_json(model);
  const auto doc = json::parse(text);
  CHECK(doc["hgkn"]["b1"].is_null());
  CHECK(doc["hgkn"]["b2"].is_null());
  CHECK(model_to_json(model_from_json(text)) == text);
}

TEST_CASE("file save and load reproduce the serialized text") {
  const Model model = trained_model();
  testutil::TmpDir dir;
  const std::string path = dir.sub("model.json");
  save_model(model, path);
  CHECK(testutil::read_file(path) == model_to_json(model));
  const Model reloaded = load_model(path);
  CHECK(model_to_json(reloaded) == model_to_json(model));
}

TEST_CASE("file errors carry their own type") {
  CHECK_THROWS_AS(load_model("/nonexistent/deeply/model.json"), IoError);
  const Model model = trained_model();
  CHECK_THROWS_AS(save_model(model, "/nonexistent/deeply/model.json"), IoError);
}

TEST_CASE("malformed checkpoints are rejected with precise errors") {
  const Model model = trained_model();
  const std::string text = model_to_json(model);

  SUBCASE("not JSON at all") {
    CHECK_THROWS_AS(model_from_json("{ this is not json"), ParseError);
  }
  SUBCASE("unknown format tag") {
    json doc = json::parse(text);
    doc["format"] = "coco-checkpoint-v0";
    CHECK_THROWS_AS(model_from_json(doc.dump()), ConfigError);
  }
  SUBCASE("missing top-level sections") {
    for (const char* key : {"format", "config", "meta", "params", "hgkn"}) {
      json doc = json::parse(text);
      doc.erase(key);
      CHECK_THROWS_AS(model_from_json(doc.dump()), ConfigError);
    }
  }
  SUBCASE("missing config field") {
    json doc = json::parse(text);
    doc["config"].erase("tau");
    CHECK_THROWS_AS(model_from_json(doc.dump()), ConfigError);
  }
  SUBCASE("missing meta field") {
    json doc = json::parse(text);
    doc["meta"].erase("feature_dim");
    CHECK_THROWS_AS(model_from_json(doc.dump()), ConfigError);
  }
  SUBCASE("unknown enum strings") {
    json doc = json::parse(text);
    doc["meta"]["feature_mode"] = "bag_of_words";
    CHECK_THROWS_AS(model_from_json(doc.dump()), ConfigError);
    doc = json::parse(text);
    doc["meta"]["branch1_kind"] = "transformer";
    CHECK_THROWS_AS(model_from_json(doc.dump()), ConfigError);
    doc = json::parse(text);
    doc["config"]["ablation"] = "everything";
    CHECK_THROWS_AS(model_from_json(doc.dump()), ConfigError);
    doc = json::parse(text);
    doc["config"]["negative_pool"] = "nobody";
    CHECK_THROWS_AS(model_from_json(doc.dump()), ConfigError);
  }
  SUBCASE("tensor value count disagrees with its shape") {
    json doc = json::parse(text);
    doc["params"]["classifier.bias"]["values"].erase(0);
    CHECK_THROWS_AS(model_from_json(doc.dump()), ConfigError);
  }
  SUBCASE("kernel branch data removed") {
    json doc = json::parse(text);
    doc["hgkn"]["b2"] = nullptr;
    CHECK_THROWS_AS(model_from_json(doc.dump()), ConfigError);
  }
  SUBCASE("filter edge bitmap truncated") {
    json doc = json::parse(text);
    std::string edges = doc["hgkn"]["b2"]["layers"][0]["filters"][0]["edges"].get<std::string>();
    edges.pop_back();
    doc["hgkn"]["b2"]["layers"][0]["filters"][0]["edges"] = edges;
    CHECK_THROWS_AS(model_from_json(doc.dump()), ConfigError);
  }
  SUBCASE("filter edge bitmap with a stray character") {
    json doc = json::parse(text);
    std::string edges = doc["hgkn"]["b2"]["layers"][0]["filters"][0]["edges"].get<std::string>();
    edges[0] = '2';
    doc["hgkn"]["b2"]["layers"][0]["filters"][0]["edges"] = edges;
    CHECK_THROWS_AS(model_from_json(doc.dump()), ConfigError);
  }
  SUBCASE("filter attribute list truncated") {
    json doc = json::parse(text);
    doc["hgkn"]["b2"]["layers"][0]["filters"][0]["attrs"].erase(0);
    CHECK_THROWS_AS(model_from_json(doc.dump()), ConfigError);
  }
}
