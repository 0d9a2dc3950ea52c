#pragma once
// Run configuration, on-disk run layout and the stage commands behind the CLI.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "saft/downstream.hpp"
#include "saft/generation.hpp"
#include "saft/representation.hpp"
#include "saft/rl_collector.hpp"
#include "saft/table.hpp"

namespace saft::pipeline {

enum class Denormalize { Target, All };

struct SplitConfig {
  double train_frac = 0.8;
  double confidence = 0.95;
  bool normalize = true;
};

struct EvaluateConfig {
  downstream::ModelSpec model;
  // "target": generated columns stay in normalized space and only the target
  // is mapped back. "all": the sequence is replayed on the raw tables.
  Denormalize denormalize = Denormalize::Target;
  bool random_baseline = true;
  std::size_t baseline_budget = 0;  // 0 means generate.seeds
};

struct PipelineConfig {
  std::filesystem::path data;
  std::string target = "target";
  TaskKind task = TaskKind::Regression;
  std::uint64_t seed = 0;
  SplitConfig split;
  rl::CollectorConfig collect;
  repr::TrainConfig train;
  gen::AscentConfig generate;
  EvaluateConfig evaluate;

  // Copies the global seed and the downstream model into the stage configs.
  void propagate();
};

nlohmann::json to_json(const PipelineConfig& cfg);
// Every field has a default; unknown keys and per-stage seeds are rejected.
PipelineConfig config_from_json(const nlohmann::json& j);
PipelineConfig load_config(const std::filesystem::path& path);

nlohmann::json to_json(const NormParams& p);
NormParams norm_params_from_json(const nlohmann::json& j);

// split/ collect/ train/ generate/ transform/ evaluate/ under one root. A
// finished stage holds a DONE file.
class RunDirectory {
 public:
  explicit RunDirectory(std::filesystem::path root) : root_(std::move(root)) {}
  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path stage(const std::string& name) const { return root_ / name; }
  bool done(const std::string& name) const;
  void mark_done(const std::string& name) const;
  // Removes the stage directory and recreates it empty.
  std::filesystem::path reset(const std::string& name) const;

 private:
  std::filesystem::path root_;
};

// Exclusive ownership of a run directory for the lifetime of the object.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& root);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
};

using LogFn = std::function<void(const std::string&)>;

struct Context {
  PipelineConfig config;
  RunDirectory run;
  LogFn log;  // may be empty
};

// Opens (or creates) the run directory for a config: checks the data file,
// then writes or compares the config snapshot.
Context open_run(const PipelineConfig& cfg, const std::filesystem::path& out, LogFn log = {});

// Stage commands. Each writes its own subdirectory and returns a summary.
nlohmann::json cmd_split(const Context& ctx);
nlohmann::json cmd_collect(const Context& ctx);
nlohmann::json cmd_train(const Context& ctx);
nlohmann::json cmd_generate(const Context& ctx);
nlohmann::json cmd_transform(const Context& ctx);
nlohmann::json cmd_evaluate(const Context& ctx);
// All stages in order; stages already marked DONE are skipped.
nlohmann::json cmd_pipeline(const Context& ctx);

// Standalone tools that do not need a run directory.
struct TransformRequest {
  std::filesystem::path sequence_file;
  std::filesystem::path input;
  std::filesystem::path output;
  std::string target;  // carried through when present in the input header
  TaskKind task = TaskKind::Regression;
};
nlohmann::json transform_file(const TransformRequest& req);

struct EvaluateRequest {
  std::filesystem::path train;
  std::optional<std::filesystem::path> test;
  bool no_holdout = false;
  std::string target = "target";
  TaskKind task = TaskKind::Regression;
  downstream::ModelSpec model;
  std::uint64_t split_seed = 0;
  std::size_t folds = 0;  // >= 2 averages k folds instead of one holdout
};
nlohmann::json evaluate_files(const EvaluateRequest& req);

}  // namespace saft::pipeline
