#pragma once
// Three-agent DQN explorer that grows feature sets one cross at a time and
// records (sequence, score) pairs.

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "saft/cross_dsl.hpp"
#include "saft/downstream.hpp"
#include "saft/nn/layers.hpp"
#include "saft/nn/param_store.hpp"
#include "saft/table.hpp"

namespace saft::rl {

inline constexpr std::size_t kStateDim = 16;
using StateVector = std::array<double, kStateDim>;

// {mean, std, min, max} over column means, column stds, |corr(column, target)|
// and upper-triangle |corr(column, column)|, in that order.
StateVector featurize_state(std::span<const Column> features, std::span<const double> target);

struct Actions {
  std::size_t head = 0;
  std::size_t op = 0;
  std::size_t tail = 0;
  friend bool operator==(const Actions&, const Actions&) = default;
};

struct Transition {
  StateVector state{};
  Actions actions;
  double reward = 0.0;
  StateVector next_state{};
  bool terminal = false;
  std::size_t n_available = 0;       // feature-set size when acting
  std::size_t next_n_available = 0;  // size after the step
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 10000);
  void push(Transition t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::uint64_t total_pushed() const { return pushed_; }
  const Transition& at(std::size_t i) const { return items_[i]; }
  // Sequence number (0-based push order) of the i-th stored transition.
  std::uint64_t sequence_number(std::size_t i) const { return pushed_ - items_.size() + i; }
  // Uniform with replacement over the stored transitions.
  std::vector<std::size_t> sample(std::size_t batch, std::mt19937_64& rng) const;

 private:
  std::size_t capacity_;
  std::deque<Transition> items_;
  std::uint64_t pushed_ = 0;
};

// State -> one Q-value per action, with a periodically synced target copy.
class QNetwork {
 public:
  QNetwork(const std::string& name, std::size_t outputs, std::size_t hidden, std::mt19937_64& rng);

  std::size_t outputs() const { return outputs_; }
  Eigen::VectorXd q_values(const StateVector& s) const;
  Eigen::VectorXd target_values(const StateVector& s) const;
  // One Adam step on mean (Q(s_b, a_b) - y_b)^2; returns the loss before the step.
  double fit(std::span<const StateVector> states, std::span<const std::size_t> actions,
             std::span<const double> targets, double lr);
  void sync_target();
  nn::ParamStore& params() { return online_; }

 private:
  Eigen::VectorXd forward(const nn::ParamStore& store, const StateVector& s) const;

  std::size_t outputs_;
  nn::Dense hidden_layer_;
  nn::Dense output_layer_;
  nn::ParamStore online_;
  nn::ParamStore target_;
};

// Lowest index among the maxima of q[0..n).
std::size_t argmax_prefix(const Eigen::VectorXd& q, std::size_t n);

struct CollectorConfig {
  std::size_t episodes = 512;
  std::size_t steps = 10;
  std::size_t cap = 5000;
  std::size_t hidden = 64;
  std::size_t batch = 32;
  double discount = 0.9;
  std::size_t target_sync = 100;
  std::size_t replay_capacity = 10000;
  double lr = 1e-3;
  double epsilon_start = 0.3;
  double epsilon_end = 0.9;
  double diversity_fraction = 0.1;
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 0;
  downstream::ModelSpec model;

  void check() const;
};

// Linear exploitation-probability schedule over episodes.
double epsilon_for_episode(const CollectorConfig& cfg, std::size_t episode);

struct Agents {
  QNetwork head;
  QNetwork op;
  QNetwork tail;
  std::size_t max_features;  // output width of the feature agents
};

Agents make_agents(std::size_t n_original, const CollectorConfig& cfg, std::mt19937_64& rng);

// Each agent exploits with probability epsilon, otherwise picks uniformly
// among the n_available features (or all operators).
Actions select_actions(const StateVector& state, const Agents& agents, std::size_t n_available,
                       double epsilon, std::mt19937_64& rng);

// One Bellman regression step per agent on a shared sampled batch. Returns
// the mean loss over the three agents.
double dqn_train_step(Agents& agents, const ReplayBuffer& buffer, const CollectorConfig& cfg,
                      std::mt19937_64& rng);

// train_eval's primary score rounded to a multiple of 2^-40 so that reward
// sums telescope exactly.
double quantized_score(std::span<const Column> features, std::span<const double> target,
                       TaskKind task, const downstream::ModelSpec& spec, std::uint64_t split_seed);

// Working feature set of an episode.
struct FeatureState {
  std::vector<dsl::Segment> segments;
  std::vector<Column> columns;

  static FeatureState initial(const Table& table);
  dsl::CrossSequence sequence() const;
  std::size_t token_count() const;  // delimiters included
};

struct StepOutcome {
  bool applied = false;  // false for a no-op (duplicate segment or token cap)
  dsl::Segment segment;
  Column column;
};

// Builds head <op> tail (or <op>(head) for unary operators) without mutating
// the set.
StepOutcome propose_step(const FeatureState& set, const Actions& actions);

struct CollectedPair {
  dsl::CrossSequence sequence;
  std::string rendered;
  double p = 0.0;
  std::size_t episode = 0;
  std::size_t step = 0;
};

struct EpisodeLog {
  double initial_p = 0.0;
  double final_p = 0.0;
  std::vector<double> rewards;
  bool aborted = false;
  std::string abort_reason;
};

struct TrainingCorpus {
  std::vector<CollectedPair> pairs;
  std::vector<EpisodeLog> episodes;
  std::size_t n_features = 0;

  double best_p() const;
};

using ProgressFn = std::function<void(std::size_t episode, const EpisodeLog&)>;

TrainingCorpus collect(const Table& table, const CollectorConfig& cfg,
                       const ProgressFn& progress = {});

// One line per pair: rendered sequence, tab, p, tab, JSON provenance.
void write_corpus(const std::filesystem::path& path, const TrainingCorpus& corpus);
TrainingCorpus read_corpus(const std::filesystem::path& path, std::size_t n_features);

}  // namespace saft::rl
