#include "doctest.h"

#include <cctype>
#include <cstdlib>
#include <string>
#include <vector>

#include "coco/graph.hpp"
#include "coco/kernels.hpp"
#include "json.hpp"
#include "testutil.hpp"

using namespace coco;
using testutil::CliResult;
using testutil::run_cli;
using testutil::TmpDir;

namespace {

// Commands print one or more pretty-printed JSON documents followed by plain
// text. Extract the top-level {...} blocks by brace depth, skipping string
// contents.
std::vector<nlohmann::json> json_blocks(const std::string& text) {
  std::vector<nlohmann::json> blocks;
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped)
        escaped = false;
      else if (c == '\\')
        escaped = true;
      else if (c == '"')
        in_string = false;
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      if (depth == 0) start = i;
      ++depth;
    } else if (c == '}') {
      --depth;
      if (depth == 0) blocks.push_back(nlohmann::json::parse(text.substr(start, i - start + 1)));
    }
  }
  return blocks;
}

std::vector<std::vector<double>> parse_csv_matrix(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(std::move(row));
  }
  return rows;
}

int count_lines(const std::string& text) {
  int lines = 0;
  for (char c : text)
    if (c == '\n') ++lines;
  return lines;
}

bool looks_like_hash(const std::string& s) {
  if (s.size() != 16) return false;
  for (char c : s)
    if (!std::isxdigit(static_cast<unsigned char>(c)) || std::isupper(static_cast<unsigned char>(c)))
      return false;
  return true;
}

std::string quoted(const std::string& s) { return "\"" + s + "\""; }

// One shared toy corpus for the training-related cases below.
const std::string& toy_dir() {
  static TmpDir dir;
  static std::string path = dir.str();
  static bool generated = false;
  if (!generated) {
    const CliResult gen = run_cli("gen-toy --seed 7 --out " + path);
    REQUIRE(gen.exit_code == 0);
    generated = true;
  }
  return path;
}

// Keys in `extra` must not repeat base keys: the parser keeps the first
// occurrence of a duplicate, so overrides belong on the command line.
std::string write_train_config(TmpDir& dir, const std::string& out_dir,
                               const std::string& extra = "", int epochs = 1) {
  const std::string path = dir.sub("config.json");
  std::string text = "{\n";
  text += "  \"source_dir\": " + quoted(toy_dir()) + ",\n";
  text += "  \"source_name\": \"toy_source\",\n";
  text += "  \"target_dir\": " + quoted(toy_dir()) + ",\n";
  text += "  \"target_name\": \"toy_target\",\n";
  text += "  \"out_dir\": " + quoted(out_dir) + ",\n";
  text += "  \"epochs\": " + std::to_string(epochs) + ",\n";
  text += "  \"batch_size\": 64,\n";
  text += "  \"hidden\": 8,\n";
  text += "  \"num_filters\": 2,\n";
  text += "  \"wl_iterations\": 1,\n";
  text += "  \"quantizer_k\": 4,\n";
  text += "  \"seed\": 5" + std::string(extra.empty() ? "" : ",\n" + extra) + "\n}\n";
  testutil::write_file(path, text);
  return path;
}

}  // namespace

TEST_CASE("gen-toy writes a deterministic balanced pair") {
  TmpDir a, b;
  const CliResult first = run_cli("gen-toy --seed 7 --out " + a.str());
  REQUIRE(first.exit_code == 0);
  const auto blocks = json_blocks(first.out);
  REQUIRE(!blocks.empty());
  CHECK(blocks[0]["seed"] == 7);
  CHECK(blocks[0]["out_dir"] == a.str());

  const CliResult second = run_cli("gen-toy --seed 7 --out " + b.str());
  REQUIRE(second.exit_code == 0);

  const std::vector<std::string> files = {
      "toy_source_A.txt",          "toy_source_graph_indicator.txt",
      "toy_source_graph_labels.txt", "toy_source_node_attributes.txt",
      "toy_target_A.txt",          "toy_target_graph_indicator.txt",
      "toy_target_graph_labels.txt", "toy_target_node_attributes.txt"};
  for (const std::string& f : files)
    CHECK(testutil::read_file(a.str() + "/" + f) == testutil::read_file(b.str() + "/" + f));

  for (const char* name : {"toy_source", "toy_target"}) {
    const Dataset d = parse_tudataset(a.str(), name);
    CHECK(d.num_classes == 2);
    REQUIRE(d.graphs.size() == 200);
    int per_class[2] = {0, 0};
    for (const Graph& g : d.graphs) ++per_class[*g.class_label];
    CHECK(per_class[0] == 100);
    CHECK(per_class[1] == 100);
  }

  // A different seed must actually change the data.
  TmpDir c;
  REQUIRE(run_cli("gen-toy --seed 8 --out " + c.str()).exit_code == 0);
  CHECK(testutil::read_file(a.str() + "/toy_source_node_attributes.txt") !=
        testutil::read_file(c.str() + "/toy_source_node_attributes.txt"));
}

TEST_CASE("gen-toy lets the environment override the seed") {
  TmpDir dir;
  const CliResult r = run_cli("gen-toy --seed 7 --out " + dir.str(), "COCO_SEED=9 ");
  REQUIRE(r.exit_code == 0);
  const auto blocks = json_blocks(r.out);
  REQUIRE(!blocks.empty());
  CHECK(blocks[0]["seed"] == 9);
}

TEST_CASE("training produces the full artifact set and eval reproduces its accuracy") {
  TmpDir work;
  const std::string out_dir = work.sub("run");
  const std::string config = write_train_config(work, out_dir);

  const CliResult r = run_cli("train --config " + config);
  CAPTURE(r.err);
  REQUIRE(r.exit_code == 0);

  // The command echoes the resolved configuration and final metrics.
  const auto blocks = json_blocks(r.out);
  REQUIRE(blocks.size() == 2);
  const nlohmann::json resolved = blocks[0];
  CHECK(resolved["source_name"] == "toy_source");
  CHECK(resolved["epochs"] == 1);
  CHECK(resolved["seed"] == 5);
  CHECK(resolved["ablation"] == "full");

  const auto resolved_file = nlohmann::json::parse(testutil::read_file(out_dir + "/resolved_config.json"));
  CHECK(resolved_file == resolved);
  std::string error;
  CHECK_MESSAGE(
      testutil::validate_against_schema_file(resolved_file, "resolved_config.schema.json", &error),
      error);

  const auto metrics = nlohmann::json::parse(testutil::read_file(out_dir + "/metrics.json"));
  CHECK(metrics == blocks[1]);
  CHECK_MESSAGE(testutil::validate_against_schema_file(metrics, "metrics.schema.json", &error),
                error);
  CHECK(metrics["dataset"] == "toy_source->toy_target");
  CHECK(metrics["seed"] == 5);
  CHECK(metrics["ablation"] == "full");
  CHECK(metrics["epochs_run"] == 1);
  CHECK(looks_like_hash(metrics["config_hash"].get<std::string>()));
  REQUIRE(metrics["target_accuracy"].is_number());
  const double accuracy = metrics["target_accuracy"].get<double>();
  CHECK(accuracy >= 0.0);
  CHECK(accuracy <= 1.0);

  const auto checkpoint = nlohmann::json::parse(testutil::read_file(out_dir + "/checkpoint.json"));
  CHECK_MESSAGE(testutil::validate_against_schema_file(checkpoint, "checkpoint.schema.json", &error),
                error);

  // One full-batch pass: 200/64 = 3 steps, so header plus three rows.
  const std::string history = testutil::read_file(out_dir + "/history.csv");
  CHECK(history.rfind("step,epoch,l_cb,l_cd,l_s,total\n", 0) == 0);
  CHECK(count_lines(history) == 4);
  const std::string epochs = testutil::read_file(out_dir + "/epochs.csv");
  CHECK(epochs.rfind("epoch,mean_loss,target_accuracy,pseudo_accuracy\n", 0) == 0);
  CHECK(count_lines(epochs) == 2);

  // Evaluating the stored checkpoint on the labeled target reproduces the
  // metric exactly.
  const CliResult ev = run_cli("eval --checkpoint " + out_dir + "/checkpoint.json --data-dir " +
                               toy_dir() + " --name toy_target");
  CAPTURE(ev.err);
  REQUIRE(ev.exit_code == 0);
  const auto ev_blocks = json_blocks(ev.out);
  REQUIRE(ev_blocks.size() == 2);
  CHECK(ev_blocks[0]["checkpoint"] == out_dir + "/checkpoint.json");
  const nlohmann::json verdict = ev_blocks[1];
  CHECK_MESSAGE(testutil::validate_against_schema_file(verdict, "eval.schema.json", &error), error);
  CHECK(verdict["dataset"] == "toy_target");
  CHECK(verdict["graphs"] == 200);
  CHECK(verdict["accuracy"].get<double>() == accuracy);
}

TEST_CASE("command-line flags override the config file") {
  TmpDir work;
  const std::string out_dir = work.sub("run");
  const std::string config = write_train_config(work, out_dir);

  const CliResult r =
      run_cli("train --config " + config + " --epochs 0 --ablation no_cd --seed 11");
  CAPTURE(r.err);
  REQUIRE(r.exit_code == 0);
  const auto metrics = nlohmann::json::parse(testutil::read_file(out_dir + "/metrics.json"));
  CHECK(metrics["ablation"] == "no_cd");
  CHECK(metrics["seed"] == 11);
  CHECK(metrics["epochs_run"] == 0);

  const auto resolved = nlohmann::json::parse(testutil::read_file(out_dir + "/resolved_config.json"));
  CHECK(resolved["ablation"] == "no_cd");
  CHECK(resolved["seed"] == 11);
}

TEST_CASE("the seed environment variable wins over flags and files") {
  TmpDir work;
  const std::string out_dir = work.sub("run");
  const std::string config = write_train_config(work, out_dir, "", 0);

  const CliResult r = run_cli("train --config " + config + " --seed 11", "COCO_SEED=99 ");
  CAPTURE(r.err);
  REQUIRE(r.exit_code == 0);
  const auto metrics = nlohmann::json::parse(testutil::read_file(out_dir + "/metrics.json"));
  CHECK(metrics["seed"] == 99);
}

TEST_CASE("bad train configurations exit with status two and name the problem") {
  TmpDir work;
  const std::string out_dir = work.sub("run");

  SUBCASE("unknown key") {
    const std::string config = write_train_config(work, out_dir, "  \"learning_rate\": 0.1");
    const CliResult r = run_cli("train --config " + config);
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("learning_rate") != std::string::npos);
  }
  SUBCASE("wrong value type") {
    const std::string config = write_train_config(work, out_dir, "  \"workers\": \"many\"");
    const CliResult r = run_cli("train --config " + config);
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("workers") != std::string::npos);
  }
  SUBCASE("unparseable file") {
    const std::string config = work.sub("broken.json");
    testutil::write_file(config, "{ this is not json\n");
    const CliResult r = run_cli("train --config " + config);
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("JSON") != std::string::npos);
  }
  SUBCASE("out-of-range value") {
    const std::string config = write_train_config(work, out_dir, "  \"rho\": 1.5");
    const CliResult r = run_cli("train --config " + config);
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("rho") != std::string::npos);
  }
  SUBCASE("unknown ablation name") {
    const std::string config = write_train_config(work, out_dir, "  \"ablation\": \"everything\"");
    const CliResult r = run_cli("train --config " + config);
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("everything") != std::string::npos);
  }
  SUBCASE("missing config file") {
    const CliResult r = run_cli("train --config " + work.sub("absent.json"));
    CHECK(r.exit_code == 2);
  }
  SUBCASE("missing dataset options") {
    const CliResult r = run_cli("train --out " + out_dir);
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("source dataset") != std::string::npos);
  }
}

TEST_CASE("eval rejects a missing checkpoint") {
  const CliResult r =
      run_cli("eval --checkpoint /nonexistent/checkpoint.json --data-dir " + toy_dir() +
              " --name toy_target");
  CHECK(r.exit_code == 2);
}

TEST_CASE("the kernel command writes the matrix it promises") {
  TmpDir work;
  const std::string fixture = testutil::fixture_dir() + "/TINY";
  const std::string out_path = work.sub("gram.csv");

  const CliResult r = run_cli("kernel --data-dir " + fixture +
                              " --name TINY --iterations 1 --normalized --out " + out_path);
  CAPTURE(r.err);
  REQUIRE(r.exit_code == 0);
  const auto blocks = json_blocks(r.out);
  REQUIRE(!blocks.empty());
  CHECK(blocks[0]["h"] == 1);
  CHECK(blocks[0]["normalized"] == true);

  const auto matrix = parse_csv_matrix(testutil::read_file(out_path));
  REQUIRE(matrix.size() == 2);
  REQUIRE(matrix[0].size() == 2);
  CHECK(matrix[0][0] == 1.0);
  CHECK(matrix[1][1] == 1.0);
  CHECK(matrix[0][1] == matrix[1][0]);
  CHECK(matrix[0][1] >= 0.0);
  CHECK(matrix[0][1] <= 1.0);

  // The file must agree exactly with an in-process evaluation.
  const Dataset dataset = parse_tudataset(fixture, "TINY");
  WLRefiner refiner;
  std::vector<WLFeatureMap> maps;
  for (const Graph& g : dataset.graphs) maps.push_back(wl_feature_map(g, 1, refiner));
  for (std::size_t i = 0; i < maps.size(); ++i)
    for (std::size_t j = 0; j < maps.size(); ++j)
      CHECK(matrix[i][j] == wl_kernel(maps[i], maps[j], true));

  // Unnormalized values are plain feature-count dot products.
  const std::string raw_path = work.sub("gram_raw.csv");
  REQUIRE(run_cli("kernel --data-dir " + fixture + " --name TINY --iterations 1 --out " +
                  raw_path)
              .exit_code == 0);
  const auto raw = parse_csv_matrix(testutil::read_file(raw_path));
  for (std::size_t i = 0; i < maps.size(); ++i)
    for (std::size_t j = 0; j < maps.size(); ++j) {
      CHECK(raw[i][j] == wl_kernel(maps[i], maps[j], false));
      CHECK(raw[i][j] == static_cast<double>(static_cast<long long>(raw[i][j])));
    }
}

TEST_CASE("splitting writes parts, a manifest, and survives a round trip") {
  const std::string fixture = testutil::fixture_dir() + "/MIXED";
  const Dataset original = parse_tudataset(fixture, "MIXED");

  SUBCASE("two parts") {
    TmpDir out;
    const CliResult r = run_cli("split --data-dir " + fixture + " --name MIXED --parts 2 --out " +
                                out.str());
    CAPTURE(r.err);
    REQUIRE(r.exit_code == 0);
    const auto blocks = json_blocks(r.out);
    REQUIRE(!blocks.empty());
    CHECK(blocks[0]["parts"] == 2);
    CHECK(blocks[0]["density_mode"] == "average_degree");

    const auto manifest = nlohmann::json::parse(testutil::read_file(out.str() + "/manifest.json"));
    std::string error;
    CHECK_MESSAGE(testutil::validate_against_schema_file(manifest, "manifest.schema.json", &error),
                  error);
    CHECK(manifest["dataset"] == "MIXED");
    REQUIRE(manifest["part_info"].size() == 2);

    std::size_t total = 0;
    double previous_max = -1.0;
    for (int p = 0; p < 2; ++p) {
      const Dataset part = parse_tudataset(out.str(), "MIXED_part" + std::to_string(p));
      CHECK(part.graphs.size() == manifest["part_info"][p]["graphs"].get<std::size_t>());
      total += part.graphs.size();
      CHECK(manifest["part_info"][p]["density_min"].get<double>() >= previous_max);
      previous_max = manifest["part_info"][p]["density_max"].get<double>();
    }
    CHECK(total == original.graphs.size());
  }

  SUBCASE("one part is an identity copy") {
    TmpDir out;
    REQUIRE(run_cli("split --data-dir " + fixture + " --name MIXED --parts 1 --out " + out.str())
                .exit_code == 0);
    const Dataset copy = parse_tudataset(out.str(), "MIXED_part0");
    CHECK(semantically_equal(copy, original));
  }

  SUBCASE("more parts than graphs fails") {
    TmpDir out;
    const CliResult r = run_cli("split --data-dir " + fixture + " --name MIXED --parts 10 --out " +
                                out.str());
    CHECK(r.exit_code != 0);
  }

  SUBCASE("zero parts is a config error") {
    TmpDir out;
    const CliResult r = run_cli("split --data-dir " + fixture + " --name MIXED --parts 0 --out " +
                                out.str());
    CHECK(r.exit_code == 2);
  }

  SUBCASE("unknown density mode is a config error") {
    TmpDir out;
    const CliResult r = run_cli("split --data-dir " + fixture +
                                " --name MIXED --parts 2 --density-mode sparsity --out " +
                                out.str());
    CHECK(r.exit_code == 2);
  }

  SUBCASE("edge ratio mode works") {
    TmpDir out;
    const CliResult r = run_cli("split --data-dir " + fixture +
                                " --name MIXED --parts 2 --density-mode edge_ratio --out " +
                                out.str());
    REQUIRE(r.exit_code == 0);
    const auto manifest = nlohmann::json::parse(testutil::read_file(out.str() + "/manifest.json"));
    CHECK(manifest["density_mode"] == "edge_ratio");
  }
}

TEST_CASE("selfcheck passes clean and catches an injected gradient fault") {
  const CliResult clean = run_cli("selfcheck");
  CAPTURE(clean.err);
  REQUIRE(clean.exit_code == 0);
  const auto blocks = json_blocks(clean.out);
  REQUIRE(!blocks.empty());
  CHECK(blocks[0]["seed"] == 12345);
  CHECK(blocks[0]["inject_gradient_fault"] == false);

  // Per-suite lines plus a total line; everything passes.
  CHECK(clean.out.find(": passed ") != std::string::npos);
  const std::size_t total_pos = clean.out.find("total: passed ");
  REQUIRE(total_pos != std::string::npos);
  const std::string total_line = clean.out.substr(total_pos);
  CHECK(total_line.find("failed 0") != std::string::npos);

  const CliResult faulty = run_cli("selfcheck --inject-gradient-fault");
  CHECK(faulty.exit_code == 1);
  const std::size_t faulty_pos = faulty.out.find("total: passed ");
  REQUIRE(faulty_pos != std::string::npos);
  CHECK(faulty.out.substr(faulty_pos).find("failed 0") == std::string::npos);
}

TEST_CASE("top-level usage errors exit with status two") {
  CHECK(run_cli("").exit_code == 2);            // a subcommand is required
  CHECK(run_cli("frobnicate").exit_code == 2);  // unknown subcommand
  CHECK(run_cli("split --name MIXED").exit_code == 2);  // missing required options
  CHECK(run_cli("--help").exit_code == 0);
}
