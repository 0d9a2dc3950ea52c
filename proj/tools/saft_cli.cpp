// Command-line entry point: one subcommand per pipeline stage.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "saft/errors.hpp"
#include "saft/pipeline.hpp"

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kData = 3, kStage = 4 };

struct Globals {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool verbose = false;
};

saft::pipeline::PipelineConfig resolve_config(const Globals& g) {
  auto cfg = g.config.empty() ? saft::pipeline::PipelineConfig{} : saft::pipeline::load_config(g.config);
  if (g.seed) {
    cfg.seed = *g.seed;
    cfg.propagate();
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shift-aware feature transformation"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Pipeline config (JSON)");
  app.add_option("--out", g.out, "Run directory");
  app.add_option("--seed", g.seed, "Seed for every stage (overrides the config)");
  app.add_flag("--verbose,-v", g.verbose, "Progress on stderr");

  const char* stage_names[] = {"split", "collect", "train", "generate", "pipeline"};
  std::vector<CLI::App*> stage_cmds;
  for (const char* name : stage_names) stage_cmds.push_back(app.add_subcommand(name, std::string("Run the ") + name + " stage"));
  stage_cmds.back()->description("Run every stage, skipping the ones already done");

  auto* transform = app.add_subcommand("transform", "Apply a sequence to a CSV (or the run's best sequence)");
  saft::pipeline::TransformRequest treq;
  std::string t_seq, t_in, t_outfile, t_task = "regression";
  transform->add_option("--sequence", t_seq, "File holding one DSL sequence");
  transform->add_option("--input", t_in, "Input CSV");
  transform->add_option("--output", t_outfile, "Output CSV");
  transform->add_option("--target", treq.target, "Target column carried to the output");
  transform->add_option("--task", t_task, "regression or classification");

  auto* evaluate = app.add_subcommand("evaluate", "Score features (or the run's transformed output)");
  saft::pipeline::EvaluateRequest ereq;
  std::string e_train, e_test, e_task = "regression", e_model = "random_forest";
  evaluate->add_option("--train", e_train, "Training CSV");
  evaluate->add_option("--test", e_test, "Test CSV");
  evaluate->add_flag("--no-holdout", ereq.no_holdout, "Fit and score on the same rows");
  evaluate->add_option("--target", ereq.target, "Target column");
  evaluate->add_option("--task", e_task, "regression or classification");
  evaluate->add_option("--model", e_model, "random_forest, decision_tree, ridge or knn");
  evaluate->add_option("--min-leaf", ereq.model.min_leaf, "Minimum rows per leaf");
  evaluate->add_option("--max-depth", ereq.model.max_depth, "Maximum tree depth");
  evaluate->add_option("--folds", ereq.folds, "Average over k folds instead of one holdout");

  std::optional<std::size_t> c_episodes, c_steps, c_cap;
  stage_cmds[1]->add_option("--episodes", c_episodes, "Episodes (overrides the config)");
  stage_cmds[1]->add_option("--steps", c_steps, "Steps per episode (overrides the config)");
  stage_cmds[1]->add_option("--cap", c_cap, "Corpus size cap (overrides the config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  const saft::pipeline::LogFn log = [&](const std::string& msg) {
    if (g.verbose) std::cerr << msg << "\n";
  };

  try {
    nlohmann::json summary;
    const bool standalone_transform = transform->parsed() && !t_in.empty();
    const bool standalone_evaluate = evaluate->parsed() && !e_train.empty();
    if (standalone_transform) {
      if (t_seq.empty() || t_outfile.empty())
        throw saft::ConfigError("transform: --input needs --sequence and --output");
      treq.sequence_file = t_seq;
      treq.input = t_in;
      treq.output = t_outfile;
      treq.task = saft::parse_task_kind(t_task);
      summary = saft::pipeline::transform_file(treq);
    } else if (standalone_evaluate) {
      ereq.train = e_train;
      if (!e_test.empty()) ereq.test = e_test;
      ereq.task = saft::parse_task_kind(e_task);
      ereq.model.kind = saft::downstream::parse_model_kind(e_model);
      if (g.seed) {
        ereq.model.seed = *g.seed;
        ereq.split_seed = *g.seed;
      }
      summary = saft::pipeline::evaluate_files(ereq);
    } else {
      auto cfg = resolve_config(g);
      if (c_episodes) cfg.collect.episodes = *c_episodes;
      if (c_steps) cfg.collect.steps = *c_steps;
      if (c_cap) cfg.collect.cap = *c_cap;
      cfg.collect.check();
      auto ctx = saft::pipeline::open_run(cfg, g.out, log);
      saft::pipeline::RunLock lock(ctx.run.root());
      if (transform->parsed()) summary = saft::pipeline::cmd_transform(ctx);
      else if (evaluate->parsed()) summary = saft::pipeline::cmd_evaluate(ctx);
      else if (stage_cmds[0]->parsed()) summary = saft::pipeline::cmd_split(ctx);
      else if (stage_cmds[1]->parsed()) summary = saft::pipeline::cmd_collect(ctx);
      else if (stage_cmds[2]->parsed()) summary = saft::pipeline::cmd_train(ctx);
      else if (stage_cmds[3]->parsed()) summary = saft::pipeline::cmd_generate(ctx);
      else summary = saft::pipeline::cmd_pipeline(ctx);
    }
    std::cout << summary.dump() << std::endl;
    return kOk;
  } catch (const saft::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const saft::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const saft::DslError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "stage failure: " << e.what() << "\n";
    return kStage;
  }
}
