#pragma once
// Gradient ascent in embedding space with cyclic learning rates and iterate
// averaging, greedy decoding, and measured re-ranking of the candidates.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "saft/cross_dsl.hpp"
#include "saft/downstream.hpp"
#include "saft/representation.hpp"

namespace saft::gen {

struct AscentConfig {
  double eta1 = 1e-3;
  double eta2 = 5e-4;
  std::size_t cycle = 10;        // c
  std::size_t iterations = 200;  // n
  std::size_t seeds = 20;        // T
  bool averaging = true;         // false returns the last iterate instead
  std::size_t max_len = dsl::kMaxSequenceLength;

  void check() const;
};

nlohmann::json to_json(const AscentConfig& cfg);
AscentConfig ascent_config_from_json(const nlohmann::json& j);

// Step size of iteration i (1-based): eta1 at the start of every cycle,
// falling linearly to eta2 at its end.
double ascent_lr(const AscentConfig& cfg, std::size_t i);

using GradientFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

struct AscentTrace {
  std::vector<Eigen::VectorXd> iterates;    // E after each iteration
  std::vector<Eigen::VectorXd> cycle_ends;  // E at each averaging update
};

Eigen::VectorXd flatness_ascent(const Eigen::VectorXd& seed, const GradientFn& gradient,
                                const AscentConfig& cfg, AscentTrace* trace = nullptr);

struct SeedSelection {
  std::vector<std::size_t> indices;  // corpus positions, best p first
  std::vector<Eigen::VectorXd> embeddings;
};

// Encodes every record and keeps the T highest-p ones (ties by corpus order).
SeedSelection select_seeds(repr::SaftModel& model, std::span<const repr::TrainingRecord> records,
                           std::size_t t, std::uint64_t sampling_seed);

struct Candidate {
  std::size_t seed_index = 0;
  Eigen::VectorXd seed;
  Eigen::VectorXd averaged;
  dsl::CrossSequence sequence;
  bool terminated = false;
  bool valid = false;
  std::string rejection;  // why the candidate was skipped
  double estimated = 0.0;
  std::optional<double> measured;
};

// Ascent plus greedy decoding from every seed.
std::vector<Candidate> generate_candidates(repr::SaftModel& model, const SeedSelection& seeds,
                                           const AscentConfig& cfg);

struct RankResult {
  std::size_t best = 0;
  dsl::TransformedFeatureSet best_set;
};

// Validates and materializes every candidate on the table, scores the valid
// ones, and picks the highest measured score (earliest on ties). Throws
// StageError naming `run` when nothing is valid.
RankResult materialize_and_rank(std::vector<Candidate>& candidates, const Table& table,
                                const downstream::ModelSpec& spec, std::uint64_t split_seed,
                                const std::string& run);

nlohmann::json generation_report(std::span<const Candidate> candidates,
                                 std::optional<std::size_t> best);

struct RandomPick {
  dsl::CrossSequence sequence;
  double p = 0.0;
};

// `budget` random sequences, each the original features plus 1..max_steps
// uniformly random crosses; returns the best by measured score.
RandomPick random_baseline(const Table& table, std::size_t budget, std::size_t max_steps,
                           const downstream::ModelSpec& spec, std::uint64_t split_seed,
                           std::uint64_t seed);

}  // namespace saft::gen
