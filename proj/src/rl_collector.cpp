#include "saft/rl_collector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "saft/errors.hpp"
#include "saft/nn/tape.hpp"

namespace saft::rl {

namespace {

struct Moments {
  double mean = 0.0;
  double std = 0.0;
};

Moments moments(std::span<const double> v) {
  Moments m;
  if (v.empty()) return m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m.mean) * (x - m.mean);
  m.std = std::sqrt(ss / static_cast<double>(v.size()));
  return m;
}

double abs_corr(std::span<const double> a, std::span<const double> b) {
  const auto ma = moments(a), mb = moments(b);
  if (ma.std == 0.0 || mb.std == 0.0) return 0.0;
  double cov = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) cov += (a[i] - ma.mean) * (b[i] - mb.mean);
  cov /= static_cast<double>(a.size());
  const double r = std::fabs(cov / (ma.std * mb.std));
  return std::isfinite(r) ? std::min(r, 1.0) : 0.0;
}

// mean, std, min, max of a list; zeros when empty.
void aggregate(const std::vector<double>& v, double* out) {
  if (v.empty()) {
    std::fill(out, out + 4, 0.0);
    return;
  }
  const auto m = moments(v);
  out[0] = m.mean;
  out[1] = m.std;
  out[2] = *std::min_element(v.begin(), v.end());
  out[3] = *std::max_element(v.begin(), v.end());
}

double finite_or_zero(double v) { return std::isfinite(v) ? v : 0.0; }

// Signed log1p keeps saturated cross values from dominating the Q-nets.
Eigen::VectorXd network_input(const StateVector& s) {
  Eigen::VectorXd x(kStateDim);
  for (std::size_t i = 0; i < kStateDim; ++i)
    x(static_cast<Eigen::Index>(i)) = std::copysign(std::log1p(std::fabs(s[i])), s[i]);
  return x;
}

}  // namespace

StateVector featurize_state(std::span<const Column> features, std::span<const double> target) {
  if (features.empty()) throw DataError("featurize_state needs at least one feature column");
  std::vector<double> means, stds, target_corr, pair_corr;
  for (const auto& c : features) {
    const auto m = moments(c);
    means.push_back(finite_or_zero(m.mean));
    stds.push_back(finite_or_zero(m.std));
    target_corr.push_back(abs_corr(c, target));
  }
  for (std::size_t i = 0; i < features.size(); ++i)
    for (std::size_t j = i + 1; j < features.size(); ++j)
      pair_corr.push_back(abs_corr(features[i], features[j]));
  StateVector s{};
  aggregate(means, &s[0]);
  aggregate(stds, &s[4]);
  aggregate(target_corr, &s[8]);
  aggregate(pair_corr, &s[12]);
  for (double& v : s) v = finite_or_zero(v);
  return s;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay buffer capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
  if (!std::isfinite(t.reward)) throw NumericError("non-finite reward pushed to replay buffer");
  if (items_.size() == capacity_) items_.pop_front();
  items_.push_back(std::move(t));
  ++pushed_;
}

std::vector<std::size_t> ReplayBuffer::sample(std::size_t batch, std::mt19937_64& rng) const {
  if (items_.empty()) throw Error("cannot sample from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  std::vector<std::size_t> out(batch);
  for (auto& i : out) i = pick(rng);
  return out;
}

QNetwork::QNetwork(const std::string& name, std::size_t outputs, std::size_t hidden,
                   std::mt19937_64& rng)
    : outputs_(outputs) {
  hidden_layer_ = nn::Dense::create(online_, name + ".hidden", kStateDim,
                                    static_cast<nn::Index>(hidden), rng);
  output_layer_ = nn::Dense::create(online_, name + ".out", static_cast<nn::Index>(hidden),
                                    static_cast<nn::Index>(outputs), rng);
  target_ = online_;
}

Eigen::VectorXd QNetwork::forward(const nn::ParamStore& store, const StateVector& s) const {
  const Eigen::VectorXd x = network_input(s);
  Eigen::VectorXd h = store.value(hidden_layer_.weight) * x + store.value(hidden_layer_.bias);
  h = h.cwiseMax(0.0);
  return store.value(output_layer_.weight) * h + store.value(output_layer_.bias);
}

Eigen::VectorXd QNetwork::q_values(const StateVector& s) const { return forward(online_, s); }
Eigen::VectorXd QNetwork::target_values(const StateVector& s) const { return forward(target_, s); }

void QNetwork::sync_target() { target_.copy_values_from(online_); }

double QNetwork::fit(std::span<const StateVector> states, std::span<const std::size_t> actions,
                     std::span<const double> targets, double lr) {
  const auto b = static_cast<nn::Index>(states.size());
  nn::Matrix x(kStateDim, b), onehot = nn::Matrix::Zero(static_cast<nn::Index>(outputs_), b);
  for (nn::Index k = 0; k < b; ++k) {
    x.col(k) = network_input(states[static_cast<std::size_t>(k)]);
    onehot(static_cast<nn::Index>(actions[static_cast<std::size_t>(k)]), k) = 1.0;
  }
  online_.zero_grad();
  nn::Tape tape;
  auto h = tape.relu(hidden_layer_.forward(tape, online_, tape.constant(std::move(x))));
  auto q = output_layer_.forward(tape, online_, h);
  auto picked = tape.matmul(tape.constant(nn::Matrix::Ones(1, static_cast<nn::Index>(outputs_))),
                            tape.mul(q, tape.constant(std::move(onehot))));
  std::vector<double> w(states.size(), 1.0 / static_cast<double>(states.size()));
  auto loss = tape.weighted_sq_error(picked, targets, w);
  tape.backward(loss);
  nn::adam_step(online_, lr);
  return tape.value(loss)(0, 0);
}

std::size_t argmax_prefix(const Eigen::VectorXd& q, std::size_t n) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < n; ++i)
    if (q(static_cast<Eigen::Index>(i)) > q(static_cast<Eigen::Index>(best))) best = i;
  return best;
}

void CollectorConfig::check() const {
  if (episodes == 0 || steps == 0 || cap == 0 || hidden == 0 || batch == 0 || target_sync == 0 ||
      replay_capacity == 0)
    throw ConfigError("collect: episodes, steps, cap, hidden, batch, target_sync and "
                      "replay_capacity must be positive");
  if (!(discount >= 0.0 && discount < 1.0)) throw ConfigError("collect: discount must be in [0, 1)");
  if (!(lr > 0.0)) throw ConfigError("collect: lr must be positive");
  if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0 && epsilon_end >= 0.0 && epsilon_end <= 1.0))
    throw ConfigError("collect: epsilon bounds must lie in [0, 1]");
  if (!(diversity_fraction >= 0.0 && diversity_fraction <= 1.0))
    throw ConfigError("collect: diversity_fraction must lie in [0, 1]");
  model.check();
}

double epsilon_for_episode(const CollectorConfig& cfg, std::size_t episode) {
  if (cfg.episodes <= 1) return cfg.epsilon_start;
  const double t = static_cast<double>(episode) / static_cast<double>(cfg.episodes - 1);
  return cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * t;
}

Agents make_agents(std::size_t n_original, const CollectorConfig& cfg, std::mt19937_64& rng) {
  const std::size_t max_features = n_original + cfg.steps;
  return Agents{QNetwork("head", max_features, cfg.hidden, rng),
                QNetwork("op", dsl::kNumOps, cfg.hidden, rng),
                QNetwork("tail", max_features, cfg.hidden, rng), max_features};
}

Actions select_actions(const StateVector& state, const Agents& agents, std::size_t n_available,
                       double epsilon, std::mt19937_64& rng) {
  if (n_available == 0 || n_available > agents.max_features)
    throw Error("select_actions: feature set size outside the agents' action space");
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  auto pick = [&](const QNetwork& net, std::size_t n) {
    if (coin(rng) < epsilon) return argmax_prefix(net.q_values(state), n);
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  };
  Actions a;
  a.head = pick(agents.head, n_available);
  a.op = pick(agents.op, dsl::kNumOps);
  a.tail = pick(agents.tail, n_available);
  return a;
}

double dqn_train_step(Agents& agents, const ReplayBuffer& buffer, const CollectorConfig& cfg,
                      std::mt19937_64& rng) {
  const auto idx = buffer.sample(cfg.batch, rng);
  std::vector<StateVector> states;
  std::vector<std::size_t> head_a, op_a, tail_a;
  std::vector<double> head_y, op_y, tail_y;
  for (auto i : idx) {
    const auto& t = buffer.at(i);
    states.push_back(t.state);
    head_a.push_back(t.actions.head);
    op_a.push_back(t.actions.op);
    tail_a.push_back(t.actions.tail);
    auto target = [&](const QNetwork& net, std::size_t n) {
      if (t.terminal) return t.reward;
      const auto q = net.target_values(t.next_state);
      return t.reward + cfg.discount * q(static_cast<Eigen::Index>(argmax_prefix(q, n)));
    };
    head_y.push_back(target(agents.head, t.next_n_available));
    op_y.push_back(target(agents.op, dsl::kNumOps));
    tail_y.push_back(target(agents.tail, t.next_n_available));
  }
  const double loss = agents.head.fit(states, head_a, head_y, cfg.lr) +
                      agents.op.fit(states, op_a, op_y, cfg.lr) +
                      agents.tail.fit(states, tail_a, tail_y, cfg.lr);
  return loss / 3.0;
}

double quantized_score(std::span<const Column> features, std::span<const double> target,
                       TaskKind task, const downstream::ModelSpec& spec, std::uint64_t split_seed) {
  const double p = downstream::train_eval(features, target, task, spec, split_seed).primary_score;
  if (!std::isfinite(p)) throw NumericError("downstream score is not finite");
  constexpr double kGrid = 1099511627776.0;  // 2^40
  return std::nearbyint(p * kGrid) / kGrid;
}

FeatureState FeatureState::initial(const Table& table) {
  FeatureState s;
  for (std::size_t j = 0; j < table.n_features(); ++j) {
    s.segments.push_back({dsl::Token::feature(static_cast<std::uint32_t>(j))});
    s.columns.push_back(table.columns[j]);
  }
  return s;
}

dsl::CrossSequence FeatureState::sequence() const {
  return dsl::CrossSequence::from_segments(segments);
}

std::size_t FeatureState::token_count() const {
  std::size_t n = 1 + segments.size();  // <sos>, separators and <eos>
  for (const auto& s : segments) n += s.size();
  return n;
}

StepOutcome propose_step(const FeatureState& set, const Actions& actions) {
  if (actions.head >= set.segments.size() || actions.tail >= set.segments.size() ||
      actions.op >= dsl::kNumOps)
    throw Error("propose_step: action outside the current feature set");
  StepOutcome out;
  const auto op = dsl::op_token(actions.op);
  out.segment = set.segments[actions.head];
  if (dsl::op_is_unary(actions.op)) {
    out.segment.push_back(op);
  } else {
    const auto& tail = set.segments[actions.tail];
    out.segment.insert(out.segment.end(), tail.begin(), tail.end());
    out.segment.push_back(op);
  }
  if (set.token_count() + out.segment.size() + 1 > dsl::kMaxSequenceLength) return out;
  if (std::find(set.segments.begin(), set.segments.end(), out.segment) != set.segments.end())
    return out;

  const auto& head_col = set.columns[actions.head];
  out.column.resize(head_col.size());
  if (dsl::op_is_unary(actions.op)) {
    for (std::size_t i = 0; i < head_col.size(); ++i)
      out.column[i] = dsl::apply_unary(op.unary_op(), head_col[i]);
  } else {
    const auto& tail_col = set.columns[actions.tail];
    for (std::size_t i = 0; i < head_col.size(); ++i)
      out.column[i] = dsl::apply_binary(op.binary_op(), head_col[i], tail_col[i]);
  }
  out.applied = true;
  return out;
}

double TrainingCorpus::best_p() const {
  if (pairs.empty()) throw Error("corpus is empty");
  double best = pairs.front().p;
  for (const auto& p : pairs) best = std::max(best, p.p);
  return best;
}

TrainingCorpus collect(const Table& table, const CollectorConfig& cfg, const ProgressFn& progress) {
  cfg.check();
  table.check();
  std::mt19937_64 rng(cfg.seed);
  auto agents = make_agents(table.n_features(), cfg, rng);
  ReplayBuffer buffer(cfg.replay_capacity);

  const FeatureState start = FeatureState::initial(table);
  const double start_p = quantized_score(start.columns, table.target, table.task, cfg.model,
                                         cfg.split_seed);
  const StateVector start_state = featurize_state(start.columns, table.target);

  TrainingCorpus corpus;
  corpus.n_features = table.n_features();
  std::vector<CollectedPair> all;
  std::size_t train_steps = 0;

  for (std::size_t ep = 0; ep < cfg.episodes; ++ep) {
    const double eps = epsilon_for_episode(cfg, ep);
    FeatureState set = start;
    StateVector state = start_state;
    double p = start_p;
    EpisodeLog log;
    log.initial_p = start_p;
    for (std::size_t step = 0; step < cfg.steps; ++step) {
      const auto actions = select_actions(state, agents, set.segments.size(), eps, rng);
      Transition tr;
      tr.state = state;
      tr.actions = actions;
      tr.n_available = set.segments.size();
      tr.terminal = step + 1 == cfg.steps;

      auto outcome = propose_step(set, actions);
      if (outcome.applied) {
        FeatureState next = set;
        next.segments.push_back(std::move(outcome.segment));
        next.columns.push_back(std::move(outcome.column));
        double next_p = 0.0;
        try {
          next_p = quantized_score(next.columns, table.target, table.task, cfg.model,
                                   cfg.split_seed);
        } catch (const Error& e) {
          log.aborted = true;
          log.abort_reason = e.what();
          break;
        }
        tr.reward = next_p - p;
        set = std::move(next);
        state = featurize_state(set.columns, table.target);
        p = next_p;
        CollectedPair pair;
        pair.sequence = set.sequence();
        pair.rendered = dsl::render(pair.sequence);
        pair.p = p;
        pair.episode = ep;
        pair.step = step;
        all.push_back(std::move(pair));
      }
      tr.next_state = state;
      tr.next_n_available = set.segments.size();
      log.rewards.push_back(tr.reward);
      buffer.push(std::move(tr));

      if (buffer.size() >= cfg.batch) {
        dqn_train_step(agents, buffer, cfg, rng);
        if (++train_steps % cfg.target_sync == 0) {
          agents.head.sync_target();
          agents.op.sync_target();
          agents.tail.sync_target();
        }
      }
    }
    log.final_p = p;
    if (progress) progress(ep, log);
    corpus.episodes.push_back(std::move(log));
  }

  // Deduplicate by rendering, keeping the first occurrence.
  std::vector<CollectedPair> unique;
  std::unordered_set<std::string> seen;
  for (auto& pair : all)
    if (seen.insert(pair.rendered).second) unique.push_back(std::move(pair));
  std::stable_sort(unique.begin(), unique.end(),
                   [](const CollectedPair& a, const CollectedPair& b) { return a.p > b.p; });
  const std::size_t top = std::min(cfg.cap, unique.size());
  std::vector<std::size_t> rest(unique.size() - top);
  std::iota(rest.begin(), rest.end(), top);
  std::shuffle(rest.begin(), rest.end(), rng);
  const auto extra = static_cast<std::size_t>(
      std::floor(cfg.diversity_fraction * static_cast<double>(rest.size())));
  rest.resize(extra);
  std::sort(rest.begin(), rest.end());
  for (std::size_t i = 0; i < top; ++i) corpus.pairs.push_back(unique[i]);
  for (auto i : rest) corpus.pairs.push_back(unique[i]);
  return corpus;
}

void write_corpus(const std::filesystem::path& path, const TrainingCorpus& corpus) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write corpus file " + path.string());
  for (const auto& p : corpus.pairs) {
    nlohmann::json meta{{"episode", p.episode}, {"step", p.step}};
    out << p.rendered << '\t' << format_number(p.p) << '\t' << meta.dump() << '\n';
  }
  if (!out) throw DataError("failed writing corpus file " + path.string());
}

TrainingCorpus read_corpus(const std::filesystem::path& path, std::size_t n_features) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read corpus file " + path.string());
  TrainingCorpus corpus;
  corpus.n_features = n_features;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos)
      throw DataError("corpus line " + std::to_string(line_no) + ": expected three tab-separated fields");
    CollectedPair pair;
    pair.rendered = line.substr(0, t1);
    try {
      pair.sequence = dsl::parse(pair.rendered, n_features);
      pair.p = std::stod(line.substr(t1 + 1, t2 - t1 - 1));
      const auto meta = nlohmann::json::parse(line.substr(t2 + 1));
      pair.episode = meta.value("episode", std::size_t{0});
      pair.step = meta.value("step", std::size_t{0});
    } catch (const std::exception& e) {
      throw DataError("corpus line " + std::to_string(line_no) + ": " + e.what());
    }
    const auto report = dsl::validate(pair.sequence, n_features);
    if (!report.valid)
      throw DataError("corpus line " + std::to_string(line_no) + ": " + report.message());
    corpus.pairs.push_back(std::move(pair));
  }
  return corpus;
}

}  // namespace saft::rl
