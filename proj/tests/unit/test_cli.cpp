#include <doctest.h>

#include <sstream>

#include <json.hpp>

#include "lsem/cli.hpp"
#include "lsem/training.hpp"
#include "support.hpp"

using namespace lsem;
using lsem::test::read_file;
using lsem::test::TempDir;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run lsem_run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::vector<json> out;
  std::istringstream in(read_file(path));
  for (std::string line; std::getline(in, line);) out.push_back(json::parse(line));
  return out;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit with 1") {
  CHECK(lsem_run({}).code == cli::kExitUsage);
  CHECK(lsem_run({"frobnicate"}).code == cli::kExitUsage);
  const Run bad_flag = lsem_run({"corr", "--input", "x.jsonl", "--bogus"});
  CHECK(bad_flag.code == cli::kExitUsage);
  CHECK(bad_flag.err.find("--bogus") != std::string::npos);
  CHECK(lsem_run({"evaluate", "--gold", "g.jsonl"}).code == cli::kExitUsage);
  CHECK(lsem_run({"--help"}).code == cli::kExitOk);
}

TEST_CASE("data errors exit with 2") {
  TempDir dir;
  const Run r = lsem_run({"corr", "--input", (dir / "missing.jsonl").string()});
  CHECK(r.code == cli::kExitData);
  CHECK(r.err.find("error:") != std::string::npos);
  CHECK(lsem_run({"predict", "--model", (dir / "none").string(), "--input", "x", "--output", "y"}).code ==
        cli::kExitData);
}

TEST_CASE("synth, train, predict, evaluate and sigtest pipeline") {
  TempDir dir;
  const auto train = (dir / "train.jsonl").string(), dev = (dir / "dev.jsonl").string();
  REQUIRE(lsem_run({"synth", "--n", "200", "--seed", "1", "--rho", "joy:sadness=-0.6", "--rho", "joy:trust=0.6",
                    "--out", train})
              .code == 0);
  REQUIRE(lsem_run({"synth", "--n", "60", "--seed", "2", "--out", dev}).code == 0);
  CHECK(load_instances(train, true).size() == 200);

  test::write_file(dir / "config.json", R"({"d": 8, "epochs": 2, "variant": "leam_corr"})");
  const auto model_dir = (dir / "m").string();
  const Run trained = lsem_run({"train", "--config", (dir / "config.json").string(), "--train", train, "--dev", dev,
                                "--out", model_dir, "--seed", "21"});
  REQUIRE_MESSAGE(trained.code == 0, trained.err);
  const json meta = json::parse(read_file(dir / "m/model.json"));
  CHECK(meta["run"]["seed"] == 21);
  CHECK(meta["run"]["config"]["d"] == 8);
  CHECK(meta["config"]["seed"] == 21);
  CHECK(read_jsonl(dir / "m/train_log.jsonl").size() == 2);

  const auto pred = (dir / "pred.jsonl").string();
  REQUIRE(lsem_run({"predict", "--model", model_dir, "--input", dev, "--output", pred}).code == 0);
  const auto lines = read_jsonl(pred);
  CHECK(lines.size() == 60);
  for (const auto& line : lines) {
    REQUIRE(line["scores"].size() == 8);
    for (double s : line["scores"]) {
      CHECK(s > 0.0);
      CHECK(s < 1.0);
    }
    CHECK(line.contains("story_id"));
    CHECK(line.contains("labels"));
  }
  const json sidecar = json::parse(read_file(pred + ".run.json"));
  CHECK(sidecar["seed"] == 21);
  CHECK(sidecar["config"]["variant"] == "leam_corr");

  const Run eval = lsem_run({"evaluate", "--gold", dev, "--pred", pred});
  REQUIRE(eval.code == 0);
  const json metrics = json::parse(eval.out);
  for (const char* key : {"precision", "recall", "f1", "tp", "fp", "fn"}) CHECK(metrics.contains(key));

  const Run sweep = lsem_run({"evaluate", "--gold", dev, "--pred", pred, "--sweep"});
  REQUIRE(sweep.code == 0);
  CHECK(json::parse(sweep.out)["f1"].get<double>() >= metrics["f1"].get<double>());

  const Run sig = lsem_run({"sigtest", "--pred-a", pred, "--pred-b", pred, "--gold", dev, "--permutations", "1000",
                            "--seed", "7"});
  REQUIRE(sig.code == 0);
  CHECK(json::parse(sig.out)["p_value"] == 1.0);
}

TEST_CASE("evaluate with gold as predictions scores one") {
  TempDir dir;
  const auto gold = (dir / "gold.jsonl").string();
  save_instances(gold, test::planted_data(30, 3));
  const Run r = lsem_run({"evaluate", "--gold", gold, "--pred", gold});
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out)["f1"] == 1.0);
  const Run table = lsem_run({"evaluate", "--gold", gold, "--pred", gold, "--format", "table", "--name", "Gold"});
  CHECK(table.out == "Model | Precision | Recall | F1\nGold | 100.00 | 100.00 | 100.00\n");
}

TEST_CASE("evaluate reports misaligned predictions") {
  TempDir dir;
  const auto gold = (dir / "gold.jsonl").string(), pred = (dir / "pred.jsonl").string();
  auto data = test::planted_data(10, 4);
  save_instances(gold, data);
  data.pop_back();
  save_instances(pred, data);
  CHECK(lsem_run({"evaluate", "--gold", gold, "--pred", pred}).code == cli::kExitData);
}

TEST_CASE("outputs are byte-identical across reruns") {
  TempDir dir;
  const auto data = (dir / "d.jsonl").string();
  REQUIRE(lsem_run({"synth", "--n", "80", "--seed", "5", "--out", data}).code == 0);
  const std::string synth_once = read_file(data);
  REQUIRE(lsem_run({"synth", "--n", "80", "--seed", "5", "--out", data}).code == 0);
  CHECK(read_file(data) == synth_once);

  for (const char* name : {"a", "b"}) {
    REQUIRE(lsem_run({"train", "--train", data, "--out", (dir / name).string(), "--d", "8", "--epochs", "1"}).code == 0);
    REQUIRE(lsem_run({"predict", "--model", (dir / name).string(), "--input", data, "--output",
                      (dir / (std::string(name) + ".jsonl")).string()})
                .code == 0);
  }
  CHECK(read_file(dir / "a/weights.bin") == read_file(dir / "b/weights.bin"));
  CHECK(read_file(dir / "a.jsonl") == read_file(dir / "b.jsonl"));

  const auto corr1 = lsem_run({"corr", "--input", data}), corr2 = lsem_run({"corr", "--input", data});
  CHECK(corr1.out == corr2.out);
}

TEST_CASE("semi-supervised training without unlabeled data fails fast") {
  TempDir dir;
  const auto out = dir / "m";
  const Run r = lsem_run({"train", "--train", (dir / "absent.jsonl").string(), "--out", out.string(), "--variant",
                          "leam_corr_semi"});
  CHECK(r.code == cli::kExitUsage);
  CHECK(r.err.find("--unlabeled") != std::string::npos);
  CHECK_FALSE(std::filesystem::exists(out));
}

TEST_CASE("semi-supervised training with unlabeled data") {
  TempDir dir;
  const auto train = (dir / "t.jsonl").string(), pool = (dir / "u.jsonl").string();
  REQUIRE(lsem_run({"synth", "--n", "64", "--seed", "1", "--out", train}).code == 0);
  REQUIRE(lsem_run({"synth", "--n", "64", "--seed", "2", "--unlabeled", "--out", pool}).code == 0);
  CHECK_FALSE(read_jsonl(pool)[0].contains("labels"));
  const Run r = lsem_run({"train", "--train", train, "--unlabeled", pool, "--out", (dir / "m").string(), "--variant",
                          "leam_corr_semi", "--d", "8", "--epochs", "1"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(read_jsonl(dir / "m/train_log.jsonl")[0].contains("mean_reg_loss"));
}

TEST_CASE("corr writes label-keyed JSON and a CSV grid") {
  TempDir dir;
  const auto data = (dir / "d.jsonl").string();
  REQUIRE(lsem_run({"synth", "--n", "500", "--seed", "8", "--rho", "joy:sadness=-0.6", "--out", data}).code == 0);
  const Run r = lsem_run({"corr", "--input", data, "--json", (dir / "c.json").string(), "--csv",
                          (dir / "c.csv").string()});
  REQUIRE(r.code == 0);
  const json doc = json::parse(read_file(dir / "c.json"));
  CHECK(doc["matrix"]["joy"]["sadness"].get<double>() < -0.2);
  CHECK(doc["matrix"]["sadness"]["joy"] == doc["matrix"]["joy"]["sadness"]);
  std::istringstream csv(read_file(dir / "c.csv"));
  std::size_t rows = 0;
  for (std::string line; std::getline(csv, line); ++rows) CHECK(std::count(line.begin(), line.end(), ',') == 8);
  CHECK(rows == 9);
}

TEST_CASE("corr warns about constant labels") {
  TempDir dir;
  const auto data = (dir / "d.jsonl").string();
  test::write_file(data,
                   R"({"story_id":"s","line":1,"character":"c","sentence":["x"],"context":[],"labels":["joy"]})"
                   "\n"
                   R"({"story_id":"s","line":2,"character":"c","sentence":["y"],"context":[],"labels":[]})"
                   "\n");
  const Run r = lsem_run({"corr", "--input", data});
  CHECK(r.code == 0);
  CHECK(r.err.find("warning: label 'trust' is constant") != std::string::npos);
}

TEST_CASE("gradcheck subcommand") {
  const Run r = lsem_run({"gradcheck"});
  CHECK(r.code == 0);
  CHECK(r.out.find("FAIL") == std::string::npos);
  CHECK(r.out.find("[PASS] leam_corr_semi (regularizer)") != std::string::npos);
}

TEST_CASE("synth rejects malformed correlation specs") {
  TempDir dir;
  CHECK(lsem_run({"synth", "--rho", "joy-sadness", "--out", (dir / "x").string()}).code == cli::kExitUsage);
  CHECK(lsem_run({"synth", "--rho", "joy:happiness=0.2", "--out", (dir / "x").string()}).code == cli::kExitData);
}

}  // TEST_SUITE
