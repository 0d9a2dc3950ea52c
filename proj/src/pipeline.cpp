#include "saft/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "saft/errors.hpp"

namespace saft::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kBaselineSalt = 0x2545f4914f6cdd1dULL;

// Reads known keys of one config section and rejects everything else.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError(name_ + ": expected an object");
  }
  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(name_ + "." + key + ": " + e.what());
    }
  }
  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }
  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError(name_ + ": unknown key '" + k + "'");
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

downstream::ModelSpec model_from_json(const json& j) {
  Section s(j, "evaluate.model");
  downstream::ModelSpec m;
  std::string kind = downstream::to_string(m.kind);
  s.get("kind", kind);
  m.kind = downstream::parse_model_kind(kind);
  s.get("trees", m.trees);
  s.get("max_depth", m.max_depth);
  s.get("min_leaf", m.min_leaf);
  s.get("max_features", m.max_features);
  s.get("bootstrap", m.bootstrap);
  s.get("lambda", m.lambda);
  s.get("k", m.k);
  if (j.contains("seed")) throw ConfigError("evaluate.model.seed: use the top-level seed");
  s.finish();
  m.check();
  return m;
}

json model_to_json(const downstream::ModelSpec& m) {
  return {{"kind", downstream::to_string(m.kind)},
          {"trees", m.trees},
          {"max_depth", m.max_depth},
          {"min_leaf", m.min_leaf},
          {"max_features", m.max_features},
          {"bootstrap", m.bootstrap},
          {"lambda", m.lambda},
          {"k", m.k}};
}

json collect_to_json(const rl::CollectorConfig& c) {
  return {{"episodes", c.episodes},
          {"steps", c.steps},
          {"cap", c.cap},
          {"hidden", c.hidden},
          {"batch", c.batch},
          {"discount", c.discount},
          {"target_sync", c.target_sync},
          {"replay_capacity", c.replay_capacity},
          {"lr", c.lr},
          {"epsilon_start", c.epsilon_start},
          {"epsilon_end", c.epsilon_end},
          {"diversity_fraction", c.diversity_fraction}};
}

rl::CollectorConfig collect_from_json(const json& j) {
  Section s(j, "collect");
  rl::CollectorConfig c;
  s.get("episodes", c.episodes);
  s.get("steps", c.steps);
  s.get("cap", c.cap);
  s.get("hidden", c.hidden);
  s.get("batch", c.batch);
  s.get("discount", c.discount);
  s.get("target_sync", c.target_sync);
  s.get("replay_capacity", c.replay_capacity);
  s.get("lr", c.lr);
  s.get("epsilon_start", c.epsilon_start);
  s.get("epsilon_end", c.epsilon_end);
  s.get("diversity_fraction", c.diversity_fraction);
  s.finish();
  c.check();
  return c;
}

std::string denormalize_name(Denormalize d) { return d == Denormalize::All ? "all" : "target"; }

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw Error("cannot write '" + path.string() + "'");
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open '" + path.string() + "'");
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path.string() + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void require(const Context& ctx, const std::string& stage, const std::string& dependency) {
  if (!ctx.run.done(dependency))
    throw StageError(stage, "missing " + dependency + " artifacts in '" + ctx.run.root().string() +
                                "'; run `saft " + dependency + "` first");
}

void say(const Context& ctx, const std::string& msg) {
  if (ctx.log) ctx.log(msg);
}

Table load_split(const Context& ctx, const std::string& file) {
  const auto& c = ctx.config;
  return load_table(ctx.run.stage("split") / file, c.task, c.target);
}

// Generated columns as a table; the target is mapped back to raw units when
// normalization was applied.
Table transformed_table(const dsl::TransformedFeatureSet& set, const Table& source,
                        const std::optional<NormParams>& norm) {
  Table t;
  t.columns = set.columns;
  for (std::size_t j = 0; j < set.size(); ++j) t.names.push_back("g" + std::to_string(j));
  t.target = source.target;
  t.target_name = source.target_name;
  t.task = source.task;
  if (norm && norm->target_mean) {
    NormParams only_target;
    only_target.names = t.names;
    only_target.mean.assign(t.names.size(), 0.0);
    only_target.std.assign(t.names.size(), 1.0);
    only_target.constant_mask.assign(t.names.size(), false);
    only_target.target_mean = norm->target_mean;
    only_target.target_std = norm->target_std;
    t = zscore_invert(t, only_target);
  }
  return t;
}

struct SplitTables {
  Table raw_train, raw_test, train, test;
  std::optional<NormParams> norm;
};

SplitTables load_split_tables(const Context& ctx) {
  SplitTables s{load_split(ctx, "train.csv"), load_split(ctx, "test.csv"),
                load_split(ctx, "train_norm.csv"), load_split(ctx, "test_norm.csv"), std::nullopt};
  const auto norm_path = ctx.run.stage("split") / "norm.json";
  if (fs::exists(norm_path)) s.norm = norm_params_from_json(read_json(norm_path));
  return s;
}

// Applies a sequence under the configured denormalization mode and returns
// (train, test) tables with the target in raw units.
std::pair<Table, Table> realize(const Context& ctx, const SplitTables& s, const dsl::CrossSequence& seq) {
  if (ctx.config.evaluate.denormalize == Denormalize::All)
    return {transformed_table(dsl::apply_sequence(seq, s.raw_train), s.raw_train, std::nullopt),
            transformed_table(dsl::apply_sequence(seq, s.raw_test), s.raw_test, std::nullopt)};
  return {transformed_table(dsl::apply_sequence(seq, s.train), s.train, s.norm),
          transformed_table(dsl::apply_sequence(seq, s.test), s.test, s.norm)};
}

downstream::EvalReport score(const Table& train, const Table& test, const downstream::ModelSpec& spec) {
  return downstream::fit_score(train.columns, train.target, test.columns, test.target, train.task, spec);
}

std::vector<std::string> csv_header(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path.string() + "' is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

void PipelineConfig::propagate() {
  collect.seed = seed;
  collect.split_seed = seed;
  collect.model = evaluate.model;
  collect.model.seed = seed;
  evaluate.model.seed = seed;
  train.seed = seed;
}

json to_json(const PipelineConfig& c) {
  json train = repr::to_json(c.train);
  train.erase("seed");
  return {{"data", c.data.string()},
          {"target", c.target},
          {"task", to_string(c.task)},
          {"seed", c.seed},
          {"split",
           {{"train_frac", c.split.train_frac},
            {"confidence", c.split.confidence},
            {"normalize", c.split.normalize}}},
          {"collect", collect_to_json(c.collect)},
          {"train", train},
          {"generate", gen::to_json(c.generate)},
          {"evaluate",
           {{"model", model_to_json(c.evaluate.model)},
            {"denormalize", denormalize_name(c.evaluate.denormalize)},
            {"random_baseline", c.evaluate.random_baseline},
            {"baseline_budget", c.evaluate.baseline_budget}}}};
}

PipelineConfig config_from_json(const json& j) {
  Section s(j, "config");
  PipelineConfig c;
  std::string data, task = to_string(c.task);
  s.get("data", data);
  c.data = data;
  s.get("target", c.target);
  s.get("task", task);
  try {
    c.task = parse_task_kind(task);
  } catch (const Error& e) {
    throw ConfigError(std::string("config.task: ") + e.what());
  }
  s.get("seed", c.seed);
  if (const auto* sp = s.child("split")) {
    Section ss(*sp, "split");
    ss.get("train_frac", c.split.train_frac);
    ss.get("confidence", c.split.confidence);
    ss.get("normalize", c.split.normalize);
    ss.finish();
    if (!(c.split.train_frac > 0.0 && c.split.train_frac < 1.0))
      throw ConfigError("split.train_frac must lie in (0, 1)");
    if (!(c.split.confidence > 0.0 && c.split.confidence < 1.0))
      throw ConfigError("split.confidence must lie in (0, 1)");
  }
  if (const auto* cp = s.child("collect")) c.collect = collect_from_json(*cp);
  if (const auto* tp = s.child("train")) {
    if (tp->is_object() && tp->contains("seed")) throw ConfigError("train.seed: use the top-level seed");
    c.train = repr::train_config_from_json(*tp);
  }
  if (const auto* gp = s.child("generate")) c.generate = gen::ascent_config_from_json(*gp);
  if (const auto* ep = s.child("evaluate")) {
    Section es(*ep, "evaluate");
    if (const auto* mp = es.child("model")) c.evaluate.model = model_from_json(*mp);
    std::string denorm = denormalize_name(c.evaluate.denormalize);
    es.get("denormalize", denorm);
    if (denorm == "target") c.evaluate.denormalize = Denormalize::Target;
    else if (denorm == "all") c.evaluate.denormalize = Denormalize::All;
    else throw ConfigError("evaluate.denormalize must be \"target\" or \"all\"");
    es.get("random_baseline", c.evaluate.random_baseline);
    es.get("baseline_budget", c.evaluate.baseline_budget);
    es.finish();
  }
  s.finish();
  c.propagate();
  return c;
}

PipelineConfig load_config(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

json to_json(const NormParams& p) {
  json j{{"names", p.names}, {"mean", p.mean}, {"std", p.std}, {"constant", p.constant_mask}};
  if (p.target_mean) {
    j["target_mean"] = *p.target_mean;
    j["target_std"] = *p.target_std;
  }
  return j;
}

NormParams norm_params_from_json(const json& j) {
  NormParams p;
  try {
    p.names = j.at("names").get<std::vector<std::string>>();
    p.mean = j.at("mean").get<std::vector<double>>();
    p.std = j.at("std").get<std::vector<double>>();
    p.constant_mask = j.at("constant").get<std::vector<bool>>();
    if (j.contains("target_mean")) {
      p.target_mean = j.at("target_mean").get<double>();
      p.target_std = j.at("target_std").get<double>();
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("norm.json: ") + e.what());
  }
  return p;
}

bool RunDirectory::done(const std::string& name) const { return fs::exists(stage(name) / "DONE"); }

void RunDirectory::mark_done(const std::string& name) const { write_text(stage(name) / "DONE", ""); }

fs::path RunDirectory::reset(const std::string& name) const {
  const auto dir = stage(name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

RunLock::RunLock(const fs::path& root) : path_(root / ".lock") {
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0)
    throw StageError("lock", "run directory '" + root.string() +
                                 "' is in use (remove " + path_.string() + " if it is stale)");
  const auto pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

Context open_run(const PipelineConfig& cfg, const fs::path& out, LogFn log) {
  if (cfg.data.empty()) throw ConfigError("config.data: no data file given");
  if (!fs::is_regular_file(cfg.data))
    throw DataError("data file '" + cfg.data.string() + "' does not exist");
  if (out.empty()) throw ConfigError("--out: no run directory given");
  const auto snapshot = out / "config.json";
  const auto text = to_json(cfg).dump(2) + "\n";
  if (fs::exists(snapshot)) {
    if (read_text(snapshot) != text)
      throw ConfigError("run directory '" + out.string() +
                        "' was created with a different config; use a new --out");
  } else {
    fs::create_directories(out);
    write_text(snapshot, text);
  }
  return {cfg, RunDirectory(out), std::move(log)};
}

json cmd_split(const Context& ctx) {
  const auto& c = ctx.config;
  auto table = load_table(c.data, c.task, c.target);
  auto split = shift_split(table, c.split.train_frac, c.split.confidence);
  const auto dir = ctx.run.reset("split");
  write_csv(dir / "train.csv", split.train);
  write_csv(dir / "test.csv", split.test);
  if (c.split.normalize) {
    // Test rows only ever see train-fit statistics.
    const auto norm = zscore_fit(split.train);
    write_csv(dir / "train_norm.csv", zscore_apply(split.train, norm));
    write_csv(dir / "test_norm.csv", zscore_apply(split.test, norm));
    write_json(dir / "norm.json", to_json(norm));
  } else {
    write_csv(dir / "train_norm.csv", split.train);
    write_csv(dir / "test_norm.csv", split.test);
  }
  json summary{{"stage", "split"},
               {"train_rows", split.train.n_rows()},
               {"test_rows", split.test.n_rows()},
               {"shifted_feature", split.shifted_feature ? json(split.train.names[*split.shifted_feature])
                                                         : json()},
               {"ks_statistic", split.ks_statistic},
               {"normalized", c.split.normalize}};
  write_json(dir / "split.json", summary);
  ctx.run.mark_done("split");
  return summary;
}

json cmd_collect(const Context& ctx) {
  require(ctx, "collect", "split");
  auto train = load_split(ctx, "train_norm.csv");
  const auto& cfg = ctx.config.collect;
  auto corpus = rl::collect(train, cfg, [&](std::size_t ep, const rl::EpisodeLog& log) {
    if (ctx.log && ((ep + 1) % 20 == 0 || ep + 1 == cfg.episodes))
      say(ctx, "collect: episode " + std::to_string(ep + 1) + "/" + std::to_string(cfg.episodes) +
                   " final p " + format_number(log.final_p));
  });
  if (corpus.pairs.empty()) throw StageError("collect", "no feature crosses were recorded");
  const auto dir = ctx.run.reset("collect");
  rl::write_corpus(dir / "corpus.tsv", corpus);
  std::string episodes = "episode,initial_p,final_p,aborted\n";
  for (std::size_t e = 0; e < corpus.episodes.size(); ++e) {
    const auto& log = corpus.episodes[e];
    episodes += std::to_string(e) + "," + format_number(log.initial_p) + "," +
                format_number(log.final_p) + "," + (log.aborted ? "1" : "0") + "\n";
  }
  write_text(dir / "episodes.csv", episodes);
  ctx.run.mark_done("collect");
  return {{"stage", "collect"}, {"pairs", corpus.pairs.size()}, {"best_p", corpus.best_p()}};
}

json cmd_train(const Context& ctx) {
  require(ctx, "train", "collect");
  auto train = load_split(ctx, "train_norm.csv");
  auto corpus = rl::read_corpus(ctx.run.stage("collect") / "corpus.tsv", train.n_features());
  auto records = repr::build_records(corpus, train);
  const auto& cfg = ctx.config.train;
  auto result = repr::bilevel_train(records, train.n_features(), cfg,
                                    [&](std::size_t epoch, const repr::EpochStats& s) {
                                      if (ctx.log && ((epoch + 1) % 10 == 0 || epoch + 1 == cfg.epochs))
                                        say(ctx, "train: epoch " + std::to_string(epoch + 1) + "/" +
                                                     std::to_string(cfg.epochs) + " loss " +
                                                     format_number(s.loss));
                                    });
  const auto dir = ctx.run.reset("train");
  repr::save_model(dir / "checkpoint", result, cfg);
  std::string history = "epoch,loss,estimation,reconstruction,decorrelation_before,decorrelation_after\n";
  for (std::size_t e = 0; e < result.history.size(); ++e) {
    const auto& h = result.history[e];
    history += std::to_string(e) + "," + format_number(h.loss) + "," + format_number(h.estimation) +
               "," + format_number(h.reconstruction) + "," + format_number(h.decorrelation_before) +
               "," + format_number(h.decorrelation_after) + "\n";
  }
  write_text(dir / "history.csv", history);
  ctx.run.mark_done("train");
  return {{"stage", "train"},
          {"records", records.size()},
          {"final_loss", result.history.back().loss}};
}

json cmd_generate(const Context& ctx) {
  if (!ctx.run.done("train") || !fs::exists(ctx.run.stage("train") / "checkpoint"))
    throw StageError("generate", "no checkpoint in '" + ctx.run.root().string() +
                                     "'; run `saft train` first");
  require(ctx, "generate", "collect");
  auto train = load_split(ctx, "train_norm.csv");
  auto corpus = rl::read_corpus(ctx.run.stage("collect") / "corpus.tsv", train.n_features());
  auto records = repr::build_records(corpus, train);
  auto loaded = repr::load_model(ctx.run.stage("train") / "checkpoint");
  const auto& cfg = ctx.config.generate;
  auto seeds = gen::select_seeds(loaded.model, records, cfg.seeds, ctx.config.seed);
  auto candidates = gen::generate_candidates(loaded.model, seeds, cfg);
  const auto dir = ctx.run.reset("generate");
  std::optional<gen::RankResult> rank;
  try {
    rank = gen::materialize_and_rank(candidates, train, ctx.config.collect.model,
                                     ctx.config.collect.split_seed, ctx.run.root().string());
  } catch (const StageError&) {
    // Keep the rejection reasons around for diagnosis.
    write_json(dir / "report.json", gen::generation_report(candidates, std::nullopt));
    throw;
  }
  auto& ranked = *rank;
  auto report = gen::generation_report(candidates, ranked.best);
  write_json(dir / "report.json", report);
  write_text(dir / "best.txt", dsl::render(candidates[ranked.best].sequence) + "\n");
  ctx.run.mark_done("generate");
  std::size_t valid = 0;
  for (const auto& c : candidates) valid += c.valid;
  return {{"stage", "generate"},
          {"candidates", candidates.size()},
          {"valid", valid},
          {"best_sequence", report["best_sequence"]},
          {"best_p", *candidates[ranked.best].measured}};
}

json cmd_transform(const Context& ctx) {
  require(ctx, "transform", "generate");
  require(ctx, "transform", "split");
  auto s = load_split_tables(ctx);
  const auto text = read_text(ctx.run.stage("generate") / "best.txt");
  auto seq = dsl::parse(text, s.train.n_features());
  auto [train, test] = realize(ctx, s, seq);
  const auto dir = ctx.run.reset("transform");
  write_csv(dir / "transformed_train.csv", train);
  write_csv(dir / "transformed_test.csv", test);
  ctx.run.mark_done("transform");
  return {{"stage", "transform"},
          {"features", train.n_features()},
          {"denormalize", denormalize_name(ctx.config.evaluate.denormalize)}};
}

json cmd_evaluate(const Context& ctx) {
  require(ctx, "evaluate", "transform");
  const auto& c = ctx.config;
  auto s = load_split_tables(ctx);
  auto train = load_table(ctx.run.stage("transform") / "transformed_train.csv", c.task, c.target);
  auto test = load_table(ctx.run.stage("transform") / "transformed_test.csv", c.task, c.target);
  const auto& spec = c.evaluate.model;
  json metrics{{"task", to_string(c.task)},
               {"metric", c.task == TaskKind::Regression ? "1-RAE" : "F1"},
               {"raw_score", score(s.raw_train, s.raw_test, spec).primary_score},
               {"transformed_score", score(train, test, spec).primary_score},
               {"n_raw_features", s.raw_train.n_features()},
               {"n_transformed_features", train.n_features()},
               {"sequence", dsl::render(dsl::parse(read_text(ctx.run.stage("generate") / "best.txt")))}};
  if (c.evaluate.random_baseline) {
    const auto budget = c.evaluate.baseline_budget ? c.evaluate.baseline_budget : c.generate.seeds;
    auto pick = gen::random_baseline(s.train, budget, c.collect.steps, c.collect.model,
                                     c.collect.split_seed, c.seed ^ kBaselineSalt);
    auto [btrain, btest] = realize(ctx, s, pick.sequence);
    metrics["random_baseline_score"] = score(btrain, btest, spec).primary_score;
    metrics["random_baseline_sequence"] = dsl::render(pick.sequence);
  }
  const auto dir = ctx.run.reset("evaluate");
  write_json(dir / "metrics.json", metrics);
  ctx.run.mark_done("evaluate");
  return metrics;
}

json cmd_pipeline(const Context& ctx) {
  using Stage = json (*)(const Context&);
  const std::pair<const char*, Stage> stages[] = {
      {"split", cmd_split},         {"collect", cmd_collect},     {"train", cmd_train},
      {"generate", cmd_generate},   {"transform", cmd_transform}, {"evaluate", cmd_evaluate}};
  for (const auto& [name, fn] : stages) {
    if (ctx.run.done(name)) {
      say(ctx, std::string(name) + ": already done, skipping");
      continue;
    }
    try {
      auto summary = fn(ctx);
      say(ctx, summary.dump());
    } catch (const StageError&) {
      throw;
    } catch (const ConfigError&) {
      throw;
    } catch (const DataError&) {
      throw;
    } catch (const Error& e) {
      throw StageError(name, e.what());
    }
  }
  return read_json(ctx.run.stage("evaluate") / "metrics.json");
}

json transform_file(const TransformRequest& req) {
  const auto header = csv_header(req.input);
  const bool has_target =
      !req.target.empty() && std::find(header.begin(), header.end(), req.target) != header.end();
  Table table;
  if (has_target) {
    table = load_table(req.input, req.task, req.target);
  } else {
    // Feature-only file: borrow the first column as a stand-in target.
    table = load_table(req.input, TaskKind::Regression, header.front());
    table.columns.insert(table.columns.begin(), table.target);
    table.names.insert(table.names.begin(), header.front());
  }
  auto seq = dsl::parse(read_text(req.sequence_file), table.n_features());
  const auto report = dsl::validate(seq, table.n_features());
  if (!report.valid) throw DslError("sequence is invalid: " + report.message(), report.position);
  auto set = dsl::apply_sequence(seq, table);
  std::ofstream out(req.output);
  if (!out) throw DataError("cannot write '" + req.output.string() + "'");
  for (std::size_t j = 0; j < set.size(); ++j) out << (j ? "," : "") << "g" << j;
  if (has_target) out << "," << req.target;
  out << "\n";
  for (std::size_t i = 0; i < table.n_rows(); ++i) {
    for (std::size_t j = 0; j < set.size(); ++j) out << (j ? "," : "") << format_number(set.columns[j][i]);
    if (has_target) out << "," << format_number(table.target[i]);
    out << "\n";
  }
  if (!out) throw DataError("cannot write '" + req.output.string() + "'");
  json provenance = set.provenance;
  return {{"command", "transform"}, {"features", set.size()}, {"rows", table.n_rows()},
          {"provenance", provenance}, {"output", req.output.string()}};
}

json evaluate_files(const EvaluateRequest& req) {
  req.model.check();
  if (req.folds == 1) throw ConfigError("--folds needs at least 2 folds");
  if (req.folds >= 2 && (req.no_holdout || req.test))
    throw ConfigError("--folds cannot be combined with --test or --no-holdout");
  auto train = load_table(req.train, req.task, req.target);
  downstream::EvalReport report;
  if (req.no_holdout) {
    report = downstream::fit_score(train.columns, train.target, train.columns, train.target, req.task,
                                   req.model);
  } else if (req.test) {
    auto test = load_table(*req.test, req.task, req.target);
    if (test.names != train.names) throw DataError("train and test files have different columns");
    report = downstream::fit_score(train.columns, train.target, test.columns, test.target, req.task,
                                   req.model);
  } else if (req.folds >= 2) {
    report = downstream::train_eval_kfold(train.columns, train.target, req.task, req.model, req.split_seed,
                                          req.folds);
  } else {
    report = downstream::train_eval(train.columns, train.target, req.task, req.model, req.split_seed);
  }
  auto j = downstream::to_json(report);
  j["command"] = "evaluate";
  return j;
}

}  // namespace saft::pipeline
