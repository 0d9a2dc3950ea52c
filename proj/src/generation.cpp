#include "saft/generation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "saft/errors.hpp"
#include "saft/parallel.hpp"
#include "saft/rl_collector.hpp"

namespace saft::gen {

void AscentConfig::check() const {
  if (!(eta1 > 0) || !(eta2 > 0) || eta2 > eta1)
    throw ConfigError("generate: need 0 < eta2 <= eta1");
  if (cycle == 0 || iterations == 0 || seeds == 0 || max_len < 2)
    throw ConfigError("generate: cycle, iterations and seeds must be positive, max_len >= 2");
}

nlohmann::json to_json(const AscentConfig& c) {
  return {{"eta1", c.eta1},         {"eta2", c.eta2},   {"cycle", c.cycle},
          {"iterations", c.iterations}, {"seeds", c.seeds}, {"averaging", c.averaging},
          {"max_len", c.max_len}};
}

AscentConfig ascent_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("generate: expected an object");
  AscentConfig c;
  for (const auto& [k, v] : j.items()) {
    try {
      if (k == "eta1") c.eta1 = v.get<double>();
      else if (k == "eta2") c.eta2 = v.get<double>();
      else if (k == "cycle") c.cycle = v.get<std::size_t>();
      else if (k == "iterations") c.iterations = v.get<std::size_t>();
      else if (k == "seeds") c.seeds = v.get<std::size_t>();
      else if (k == "averaging") c.averaging = v.get<bool>();
      else if (k == "max_len") c.max_len = v.get<std::size_t>();
      else throw ConfigError("generate: unknown key '" + k + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("generate." + k + ": " + e.what());
    }
  }
  c.check();
  return c;
}

double ascent_lr(const AscentConfig& cfg, std::size_t i) {
  const auto pos = static_cast<double>((i - 1) % cfg.cycle);
  const auto span = static_cast<double>(std::max<std::size_t>(cfg.cycle - 1, 1));
  return cfg.eta1 - (cfg.eta1 - cfg.eta2) * pos / span;
}

Eigen::VectorXd flatness_ascent(const Eigen::VectorXd& seed, const GradientFn& gradient,
                                const AscentConfig& cfg, AscentTrace* trace) {
  if (!seed.allFinite()) throw NumericError("flatness_ascent: non-finite seed");
  Eigen::VectorXd e = seed, avg = seed;
  for (std::size_t i = 1; i <= cfg.iterations; ++i) {
    const Eigen::VectorXd g = gradient(e);
    if (!g.allFinite()) throw NumericError("flatness_ascent: non-finite gradient at iteration " + std::to_string(i));
    e += ascent_lr(cfg, i) * g;
    if (trace) trace->iterates.push_back(e);
    if (i % cfg.cycle == 0) {
      const auto n_models = static_cast<double>(i / cfg.cycle);
      avg = (avg * n_models + e) / (n_models + 1.0);
      if (trace) trace->cycle_ends.push_back(e);
    }
  }
  return cfg.averaging ? avg : e;
}

SeedSelection select_seeds(repr::SaftModel& model, std::span<const repr::TrainingRecord> records,
                           std::size_t t, std::uint64_t sampling_seed) {
  if (records.empty()) throw DataError("select_seeds: empty corpus");
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return records[a].p > records[b].p; });
  order.resize(std::min(t, order.size()));
  SeedSelection out;
  out.indices = order;
  for (auto i : order) out.embeddings.push_back(model.embed(records[i].graph, sampling_seed + i));
  return out;
}

std::vector<Candidate> generate_candidates(repr::SaftModel& model, const SeedSelection& seeds,
                                           const AscentConfig& cfg) {
  cfg.check();
  const GradientFn grad = [&](const Eigen::VectorXd& e) { return model.estimate_gradient(e); };
  std::vector<Candidate> out;
  for (std::size_t k = 0; k < seeds.indices.size(); ++k) {
    Candidate c;
    c.seed_index = seeds.indices[k];
    c.seed = seeds.embeddings[k];
    c.averaged = flatness_ascent(c.seed, grad, cfg);
    auto decoded = model.decode_greedy(c.averaged, cfg.max_len);
    c.sequence = std::move(decoded.sequence);
    c.terminated = decoded.terminated;
    c.estimated = model.estimate(c.averaged);
    out.push_back(std::move(c));
  }
  return out;
}

RankResult materialize_and_rank(std::vector<Candidate>& candidates, const Table& table,
                                const downstream::ModelSpec& spec, std::uint64_t split_seed,
                                const std::string& run) {
  if (candidates.empty()) throw StageError("generate", run + ": no candidates");
  // Scoring is independent per candidate; the choice below is sequential.
  parallel_for(candidates.size(), [&](std::size_t k) {
    auto& c = candidates[k];
    c.valid = false;
    c.measured.reset();
    if (!c.terminated) {
      c.rejection = "decoding reached max_len without <eos>";
      return;
    }
    const auto report = dsl::validate(c.sequence, table.n_features());
    if (!report.valid) {
      c.rejection = report.message();
      return;
    }
    try {
      auto set = dsl::apply_sequence(c.sequence, table);
      c.measured = rl::quantized_score(set.columns, table.target, table.task, spec, split_seed);
    } catch (const Error& e) {
      c.rejection = e.what();
      return;
    }
    c.valid = true;
    c.rejection.clear();
  });
  std::optional<std::size_t> best;
  for (std::size_t k = 0; k < candidates.size(); ++k)
    if (candidates[k].valid && (!best || *candidates[k].measured > *candidates[*best].measured)) best = k;
  if (!best)
    throw StageError("generate", run + ": all " + std::to_string(candidates.size()) +
                                     " candidates were invalid");
  return {*best, dsl::apply_sequence(candidates[*best].sequence, table)};
}

nlohmann::json generation_report(std::span<const Candidate> candidates, std::optional<std::size_t> best) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& c : candidates) {
    nlohmann::json item{{"seed_index", c.seed_index},
                        {"sequence", dsl::render(c.sequence)},
                        {"terminated", c.terminated},
                        {"valid", c.valid},
                        {"estimated_p", c.estimated},
                        {"measured_p", c.measured ? nlohmann::json(*c.measured) : nlohmann::json()}};
    if (!c.valid) item["rejection"] = c.rejection;
    list.push_back(std::move(item));
  }
  if (!best) return {{"best", nullptr}, {"best_sequence", nullptr}, {"candidates", std::move(list)}};
  return {{"best", *best},
          {"best_sequence", dsl::render(candidates[*best].sequence)},
          {"candidates", std::move(list)}};
}

RandomPick random_baseline(const Table& table, std::size_t budget, std::size_t max_steps,
                           const downstream::ModelSpec& spec, std::uint64_t split_seed,
                           std::uint64_t seed) {
  if (budget == 0 || max_steps == 0) throw ConfigError("random baseline needs a positive budget");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> steps(1, max_steps), op(0, dsl::kNumOps - 1);
  std::optional<RandomPick> best;
  for (std::size_t b = 0; b < budget; ++b) {
    auto set = rl::FeatureState::initial(table);
    const auto n = steps(rng);
    for (std::size_t s = 0; s < n; ++s) {
      std::uniform_int_distribution<std::size_t> feat(0, set.segments.size() - 1);
      rl::Actions a;
      a.head = feat(rng);
      a.op = op(rng);
      a.tail = feat(rng);
      auto outcome = rl::propose_step(set, a);
      if (!outcome.applied) continue;
      set.segments.push_back(std::move(outcome.segment));
      set.columns.push_back(std::move(outcome.column));
    }
    const double p = rl::quantized_score(set.columns, table.target, table.task, spec, split_seed);
    if (!best || p > best->p) best = RandomPick{set.sequence(), p};
  }
  return *best;
}

}  // namespace saft::gen
