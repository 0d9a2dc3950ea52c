#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "saft/errors.hpp"
#include "saft/pipeline.hpp"
#include "saft/synthetic.hpp"
#include "test_util.hpp"

using namespace saft;
using namespace saft::pipeline;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}


json small_config(const fs::path& data) {
  return {{"data", data.string()},
          {"target", "y"},
          {"seed", 3},
          {"collect", {{"episodes", 4}, {"steps", 3}, {"batch", 8}}},
          {"train", {{"epochs", 2}, {"batch", 16}, {"inner_epochs", 2}}},
          {"generate", {{"seeds", 3}, {"iterations", 10}, {"max_len", 40}}},
          {"evaluate", {{"model", {{"trees", 3}, {"max_depth", 4}}}}}};
}

fs::path write_data(const fs::path& dir, std::size_t rows = 120) {
  const auto path = dir / "data.csv";
  write_csv(path, synthetic::shift_benchmark(5, rows));
  return path;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SAFT_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config parsing fills defaults and rejects unknown keys") {
  const auto c = config_from_json({{"data", "x.csv"}, {"seed", 9}});
  CHECK(c.collect.seed == 9);
  CHECK(c.collect.split_seed == 9);
  CHECK(c.train.seed == 9);
  CHECK(c.collect.model.seed == 9);
  CHECK(c.evaluate.model.seed == 9);
  CHECK(c.generate.seeds == 20);
  CHECK(c.split.normalize);

  CHECK_THROWS_AS(config_from_json({{"data", "x.csv"}, {"sead", 1}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"split", {{"train_fraction", 0.5}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"split", {{"train_frac", 1.0}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"task", "ranking"}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"evaluate", {{"denormalize", "some"}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"data", 4}}), ConfigError);
}

TEST_CASE("per-stage seeds are rejected in favor of the global one") {
  CHECK_THROWS_AS(config_from_json({{"collect", {{"seed", 1}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"train", {{"seed", 1}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"evaluate", {{"model", {{"seed", 1}}}}}}), ConfigError);
}

TEST_CASE("gamma is accepted as the reconstruction weight") {
  CHECK(config_from_json({{"train", {{"gamma", 0.4}}}}).train.beta == 0.4);
  CHECK(config_from_json({{"train", {{"gamma", 0.4}, {"beta", 0.4}}}}).train.beta == 0.4);
  CHECK_THROWS_AS(config_from_json({{"train", {{"gamma", 0.4}, {"beta", 0.2}}}}), ConfigError);
}

TEST_CASE("config survives a JSON round trip") {
  auto c = config_from_json({{"data", "d.csv"},
                             {"seed", 4},
                             {"split", {{"normalize", false}}},
                             {"train", {{"reweighting", false}}},
                             {"generate", {{"averaging", false}}},
                             {"evaluate", {{"denormalize", "all"}}}});
  const auto back = config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK_FALSE(back.split.normalize);
  CHECK_FALSE(back.train.reweighting);
  CHECK_FALSE(back.generate.averaging);
  CHECK(back.evaluate.denormalize == Denormalize::All);
}

TEST_CASE("a missing data file fails before any run directory exists") {
  testing::TempDir s("missing");
  auto cfg = config_from_json({{"data", (s.path() / "nope.csv").string()}});
  CHECK_THROWS_AS(open_run(cfg, s.path() / "run"), DataError);
  CHECK_FALSE(fs::exists(s.path() / "run"));
}

TEST_CASE("a run directory refuses a different config") {
  testing::TempDir s("reuse");
  const auto data = write_data(s.path());
  auto j = small_config(data);
  open_run(config_from_json(j), s.path() / "run");
  CHECK_NOTHROW(open_run(config_from_json(j), s.path() / "run"));
  j["seed"] = 4;
  CHECK_THROWS_AS(open_run(config_from_json(j), s.path() / "run"), ConfigError);
}

TEST_CASE("the run lock is exclusive and released on scope exit") {
  testing::TempDir s("lock");
  {
    RunLock a(s.path());
    CHECK(fs::exists(s.path() / ".lock"));
    CHECK_THROWS_AS(RunLock(s.path()), StageError);
  }
  CHECK_FALSE(fs::exists(s.path() / ".lock"));
  CHECK_NOTHROW(RunLock(s.path()));
}

TEST_CASE("stages need their inputs") {
  testing::TempDir s("order");
  const auto data = write_data(s.path());
  auto ctx = open_run(config_from_json(small_config(data)), s.path() / "run");
  CHECK_THROWS_AS(cmd_collect(ctx), StageError);
  try {
    cmd_generate(ctx);
    FAIL("generate ran without a checkpoint");
  } catch (const StageError& e) {
    CHECK(std::string(e.what()).find("saft train") != std::string::npos);
  }
  CHECK_THROWS_AS(cmd_transform(ctx), StageError);
  CHECK_THROWS_AS(cmd_evaluate(ctx), StageError);
}

TEST_CASE("early stages write their artifacts, mark DONE and are deterministic") {
  testing::TempDir s("stages");
  const auto data = write_data(s.path());
  const auto cfg = config_from_json(small_config(data));
  auto a = open_run(cfg, s.path() / "a");
  auto b = open_run(cfg, s.path() / "b");
  for (auto* ctx : {&a, &b}) {
    const auto split = cmd_split(*ctx);
    CHECK(split["train_rows"].get<std::size_t>() + split["test_rows"].get<std::size_t>() == 120);
    cmd_collect(*ctx);
    cmd_train(*ctx);
  }
  for (const char* stage : {"split", "collect", "train"}) CHECK(a.run.done(stage));
  for (const char* f : {"split/train.csv", "split/test_norm.csv", "split/norm.json", "collect/corpus.tsv",
                        "collect/episodes.csv", "train/history.csv"}) {
    INFO(f);
    REQUIRE(fs::exists(a.run.root() / f));
    CHECK(slurp(a.run.root() / f) == slurp(b.run.root() / f));
  }
  for (const auto& entry : fs::recursive_directory_iterator(a.run.stage("train") / "checkpoint")) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), a.run.root());
    INFO(rel.string());
    CHECK(slurp(entry.path()) == slurp(b.run.root() / rel));
  }
  // The split statistics come from train rows only.
  const auto norm = norm_params_from_json(json::parse(slurp(a.run.stage("split") / "norm.json")));
  const auto train = load_table(a.run.stage("split") / "train.csv", TaskKind::Regression, "y");
  double mean0 = 0.0;
  for (double v : train.columns[0]) mean0 += v;
  CHECK(norm.mean[0] == doctest::Approx(mean0 / static_cast<double>(train.n_rows())).epsilon(1e-12));
}

TEST_CASE("transform and evaluate consume a hand-written best sequence") {
  testing::TempDir s("tail");
  const auto data = write_data(s.path());
  auto ctx = open_run(config_from_json(small_config(data)), s.path() / "run");
  cmd_split(ctx);
  // Stand in for generate so the later stages can be checked in isolation.
  const auto gen_dir = ctx.run.reset("generate");
  testing::write_text(gen_dir / "best.txt", "<sos> f0 <sep> f1 f2 * <sep> f3 sin <eos>\n");
  ctx.run.mark_done("generate");

  const auto t = cmd_transform(ctx);
  CHECK(t["features"] == 3);
  const auto tr = load_table(ctx.run.stage("transform") / "transformed_train.csv", TaskKind::Regression, "y");
  const auto raw = load_table(ctx.run.stage("split") / "train.csv", TaskKind::Regression, "y");
  CHECK(tr.names == std::vector<std::string>{"g0", "g1", "g2"});
  // Target is back in raw units.
  REQUIRE(tr.n_rows() == raw.n_rows());
  for (std::size_t i = 0; i < tr.n_rows(); ++i) CHECK(tr.target[i] == doctest::Approx(raw.target[i]).epsilon(1e-9));

  const auto m = cmd_evaluate(ctx);
  CHECK(m["metric"] == "1-RAE");
  CHECK(m["n_raw_features"] == 5);
  CHECK(m["n_transformed_features"] == 3);
  CHECK(m.contains("random_baseline_score"));
  CHECK(slurp(ctx.run.stage("evaluate") / "metrics.json") == m.dump(2) + "\n");
}

TEST_CASE("standalone transform keeps the declared order and handles feature-only files") {
  testing::TempDir s("transform");
  testing::write_text(s.path() / "two.csv", "a,b\n1,2\n3,4\n-1,0.5\n");
  testing::write_text(s.path() / "seq.txt", "<sos> f0 f1 + <eos>\n");
  TransformRequest req{s.path() / "seq.txt", s.path() / "two.csv", s.path() / "out.csv", "", TaskKind::Regression};
  const auto r = transform_file(req);
  CHECK(r["features"] == 1);
  CHECK(slurp(s.path() / "out.csv") == "g0\n3\n7\n-0.5\n");

  testing::write_text(s.path() / "withy.csv", "a,b,y\n1,2,5\n3,4,6\n");
  req.input = s.path() / "withy.csv";
  req.target = "y";
  transform_file(req);
  CHECK(slurp(s.path() / "out.csv") == "g0,y\n3,5\n7,6\n");

  testing::write_text(s.path() / "bad.txt", "<sos> f0 f7 + <eos>\n");
  req.sequence_file = s.path() / "bad.txt";
  CHECK_THROWS_AS(transform_file(req), DslError);
}

TEST_CASE("a fully grown tree scores 1 on its own training rows") {
  testing::TempDir s("evaluate");
  std::ostringstream csv;
  csv << "a,b,y\n";
  for (int i = 0; i < 40; ++i) csv << i << "," << (i * 7) % 11 << "," << (i * i) % 13 + 0.5 * i << "\n";
  testing::write_text(s.path() / "t.csv", csv.str());
  EvaluateRequest req;
  req.train = s.path() / "t.csv";
  req.target = "y";
  req.no_holdout = true;
  req.model.kind = downstream::ModelKind::DecisionTree;
  req.model.min_leaf = 1;
  req.model.max_depth = 64;
  const auto j = evaluate_files(req);
  CHECK(j.at("primary_score").get<double>() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("CLI exit codes follow the error class") {
  testing::TempDir s("cli");
  const auto data = write_data(s.path());
  testing::write_text(s.path() / "ok.json", small_config(data).dump());
  testing::write_text(s.path() / "unknown.json", json{{"data", data.string()}, {"colect", json::object()}}.dump());
  testing::write_text(s.path() / "missing.json", json{{"data", (s.path() / "none.csv").string()}}.dump());
  const auto out = (s.path() / "run").string();

  CHECK(run_cli("") == 2);
  CHECK(run_cli("frobnicate") == 2);
  CHECK(run_cli("split --config " + (s.path() / "unknown.json").string() + " --out " + out) == 2);
  CHECK(run_cli("split --config " + (s.path() / "missing.json").string() + " --out " + out) == 3);
  CHECK_FALSE(fs::exists(out));
  CHECK(run_cli("generate --config " + (s.path() / "ok.json").string() + " --out " + out) == 4);
  CHECK(run_cli("split --config " + (s.path() / "ok.json").string() + " --out " + out) == 0);
  CHECK(fs::exists(fs::path(out) / "split" / "DONE"));

  testing::write_text(s.path() / "seq.txt", "<sos> f0 f9 * <eos>\n");
  CHECK(run_cli("transform --sequence " + (s.path() / "seq.txt").string() + " --input " + data.string() +
                " --output " + (s.path() / "o.csv").string() + " --target y") == 3);
}

TEST_CASE("k-fold evaluation averages folds and refuses conflicting modes") {
  testing::TempDir s("folds");
  std::ostringstream csv;
  csv << "a,b,y\n";
  for (int i = 0; i < 60; ++i) csv << i << "," << (i * 7) % 11 << "," << 2.0 * i + (i % 3) << "\n";
  testing::write_text(s.path() / "t.csv", csv.str());
  EvaluateRequest req;
  req.train = s.path() / "t.csv";
  req.target = "y";
  req.model.kind = downstream::ModelKind::Ridge;
  req.folds = 4;
  const auto j = evaluate_files(req);
  CHECK(j.at("folds") == 4);
  CHECK(j.at("primary_score").get<double>() > 0.9);
  req.folds = 1;
  CHECK_THROWS_AS(evaluate_files(req), ConfigError);
  req.folds = 3;
  req.no_holdout = true;
  CHECK_THROWS_AS(evaluate_files(req), ConfigError);
}
