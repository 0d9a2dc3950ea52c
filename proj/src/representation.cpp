#include "saft/representation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "saft/errors.hpp"
#include "saft/parallel.hpp"

namespace saft::repr {

using nn::Index;
using nn::Matrix;
using nn::Tape;

namespace {

constexpr std::uint64_t kRffSalt = 0x9e3779b97f4a7c15ULL;

nn::Dense dense_ref(const std::string& prefix, std::size_t in, std::size_t out) {
  return {prefix + ".W", prefix + ".b", static_cast<Index>(in), static_cast<Index>(out)};
}

template <class T>
void read_key(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train.") + key + ": " + e.what());
  }
}

}  // namespace

nlohmann::json to_json(const ModelDims& d) {
  return {{"embedding", d.embedding},
          {"encoder_hidden", d.encoder_hidden},
          {"evaluator_hidden", d.evaluator_hidden},
          {"token_embedding", d.token_embedding},
          {"decoder_hidden", d.decoder_hidden},
          {"neighbor_samples", d.neighbor_samples}};
}

ModelDims dims_from_json(const nlohmann::json& j) {
  ModelDims d;
  for (const auto& [k, v] : j.items()) {
    std::size_t* slot = nullptr;
    if (k == "embedding") slot = &d.embedding;
    else if (k == "encoder_hidden") slot = &d.encoder_hidden;
    else if (k == "evaluator_hidden") slot = &d.evaluator_hidden;
    else if (k == "token_embedding") slot = &d.token_embedding;
    else if (k == "decoder_hidden") slot = &d.decoder_hidden;
    else if (k == "neighbor_samples") slot = &d.neighbor_samples;
    else throw ConfigError("train.dims: unknown key '" + k + "'");
    if (!v.is_number_unsigned() || v.get<std::size_t>() == 0)
      throw ConfigError("train.dims." + k + " must be a positive integer");
    *slot = v.get<std::size_t>();
  }
  return d;
}

std::vector<std::vector<std::size_t>> sample_neighbors(const FeatureGraph& g, std::size_t samples,
                                                       std::mt19937_64& rng) {
  std::vector<std::vector<std::size_t>> out(g.neighbors.size());
  for (std::size_t i = 0; i < g.neighbors.size(); ++i) {
    auto nb = g.neighbors[i];
    if (nb.size() > samples) {
      // Partial Fisher-Yates.
      for (std::size_t k = 0; k < samples; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, nb.size() - 1);
        std::swap(nb[k], nb[pick(rng)]);
      }
      nb.resize(samples);
    }
    std::sort(nb.begin(), nb.end());
    out[i] = std::move(nb);
  }
  return out;
}

SaftModel::SaftModel(std::size_t n_features, const ModelDims& dims, std::uint64_t seed)
    : n_features_(n_features), dims_(dims), vocab_(n_features) {
  std::mt19937_64 rng(seed);
  const auto E = static_cast<Index>(dims.embedding), H = static_cast<Index>(dims.encoder_hidden);
  const auto A = static_cast<Index>(kNodeAttributes), V = static_cast<Index>(vocab_.size());
  const auto P = static_cast<Index>(dims.evaluator_hidden), T = static_cast<Index>(dims.token_embedding);
  const auto D = static_cast<Index>(dims.decoder_hidden);
  nn::Dense::create(params_, "enc1", 2 * A, H, rng);
  nn::Dense::create(params_, "enc2", 2 * H, H, rng);
  nn::Dense::create(params_, "head1", H, E, rng);
  nn::Dense::create(params_, "head2", E, E, rng);
  nn::Dense::create(params_, "eval1", E, P, rng);
  nn::Dense::create(params_, "eval2", P, P, rng);
  nn::Dense::create(params_, "eval_out", P, 1, rng);
  params_.add("dec.tokens", nn::uniform(T, V, 0.1, rng));
  nn::Dense::create(params_, "dec.h0", E, D, rng);
  nn::Dense::create(params_, "dec.c0", E, D, rng);
  nn::LstmCell::create(params_, "dec.lstm", T, D, rng);
  nn::Dense::create(params_, "dec.out", D, V, rng);
  bind();
}

SaftModel::SaftModel(std::size_t n_features, const ModelDims& dims, nn::ParamStore params)
    : n_features_(n_features), dims_(dims), vocab_(n_features), params_(std::move(params)) {
  bind();
  const auto check = [&](const std::string& name, Index rows, Index cols) {
    if (!params_.contains(name) || params_.value(name).rows() != rows ||
        params_.value(name).cols() != cols)
      throw DataError("checkpoint tensor '" + name + "' is missing or has the wrong shape");
  };
  for (const auto* d : {&enc1_, &enc2_, &head1_, &head2_, &eval1_, &eval2_, &eval_out_, &dec_h0_,
                        &dec_c0_, &dec_out_}) {
    check(d->weight, d->out, d->in);
    check(d->bias, d->out, 1);
  }
  check(token_table_, static_cast<Index>(dims_.token_embedding), static_cast<Index>(vocab_.size()));
  check(lstm_.weight, 4 * lstm_.hidden, lstm_.input + lstm_.hidden);
  check(lstm_.bias, 4 * lstm_.hidden, 1);
}

void SaftModel::bind() {
  const auto E = dims_.embedding, H = dims_.encoder_hidden, P = dims_.evaluator_hidden;
  const auto D = dims_.decoder_hidden, V = vocab_.size();
  enc1_ = dense_ref("enc1", 2 * kNodeAttributes, H);
  enc2_ = dense_ref("enc2", 2 * H, H);
  head1_ = dense_ref("head1", H, E);
  head2_ = dense_ref("head2", E, E);
  eval1_ = dense_ref("eval1", E, P);
  eval2_ = dense_ref("eval2", P, P);
  eval_out_ = dense_ref("eval_out", P, 1);
  token_table_ = "dec.tokens";
  dec_h0_ = dense_ref("dec.h0", E, D);
  dec_c0_ = dense_ref("dec.c0", E, D);
  lstm_ = {"dec.lstm.W", "dec.lstm.b", static_cast<Index>(dims_.token_embedding),
           static_cast<Index>(D)};
  dec_out_ = dense_ref("dec.out", D, V);
}

Tape::Var SaftModel::encode(Tape& tape, std::span<const FeatureGraph* const> graphs,
                            std::mt19937_64& rng) {
  if (graphs.empty()) throw DataError("encode: empty batch");
  std::vector<std::size_t> offset(graphs.size() + 1, 0);
  for (std::size_t b = 0; b < graphs.size(); ++b) {
    if (graphs[b]->n_nodes() == 0) throw DataError("encode: graph without nodes");
    offset[b + 1] = offset[b] + graphs[b]->n_nodes();
  }
  const std::size_t total = offset.back();

  Matrix x(static_cast<Index>(kNodeAttributes), static_cast<Index>(total));
  std::vector<Eigen::Triplet<double>> pool;
  for (std::size_t b = 0; b < graphs.size(); ++b) {
    const auto n = graphs[b]->n_nodes();
    x.middleCols(static_cast<Index>(offset[b]), static_cast<Index>(n)) = graphs[b]->attributes;
    for (std::size_t i = 0; i < n; ++i)
      pool.emplace_back(static_cast<int>(offset[b] + i), static_cast<int>(b),
                        1.0 / static_cast<double>(n));
  }
  nn::SparseMatrix pooling(static_cast<Index>(total), static_cast<Index>(graphs.size()));
  pooling.setFromTriplets(pool.begin(), pool.end());

  auto layer_matrix = [&]() {
    std::vector<std::vector<std::size_t>> all(total);
    for (std::size_t b = 0; b < graphs.size(); ++b) {
      auto nb = sample_neighbors(*graphs[b], dims_.neighbor_samples, rng);
      for (std::size_t i = 0; i < nb.size(); ++i) {
        for (auto& j : nb[i]) j += offset[b];
        all[offset[b] + i] = std::move(nb[i]);
      }
    }
    return nn::mean_aggregation_matrix(all, total);
  };

  auto h = tape.constant(std::move(x));
  for (const auto* layer : {&enc1_, &enc2_}) {
    const auto agg = layer_matrix();
    const Tape::Var parts[] = {h, nn::mean_aggregate(tape, h, agg)};
    h = tape.l2_normalize_cols(tape.tanh(layer->forward(tape, params_, tape.concat_rows(parts))));
  }
  auto readout = tape.matmul(h, pooling);
  return head2_.forward(tape, params_, tape.tanh(head1_.forward(tape, params_, readout)));
}

Tape::Var SaftModel::evaluate(Tape& tape, Tape::Var embeddings) {
  auto h = tape.tanh(eval1_.forward(tape, params_, embeddings));
  h = tape.tanh(eval2_.forward(tape, params_, h));
  return eval_out_.forward(tape, params_, h);
}

Tape::Var SaftModel::decoder_nll(Tape& tape, Tape::Var embeddings,
                                 std::span<const std::vector<int>> sequences) {
  const auto batch = sequences.size();
  if (static_cast<Index>(batch) != tape.value(embeddings).cols())
    throw NumericError("decoder_nll: embedding and sequence counts differ");
  std::size_t steps = 0;
  for (const auto& s : sequences) {
    if (s.size() < 2) throw DslError("decoder_nll: sequence shorter than two tokens", 0);
    for (std::size_t k = 0; k < s.size(); ++k)
      if (s[k] < 0 || s[k] >= static_cast<int>(vocab_.size()))
        throw DslError("decoder_nll: token id " + std::to_string(s[k]) + " outside the vocabulary", k);
    steps = std::max(steps, s.size() - 1);
  }
  auto h = tape.tanh(dec_h0_.forward(tape, params_, embeddings));
  auto c = dec_c0_.forward(tape, params_, embeddings);
  auto table = tape.param(params_, token_table_);
  Tape::Var total{};
  std::vector<int> in(batch), target(batch);
  std::vector<double> mask(batch);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t b = 0; b < batch; ++b) {
      const bool live = t + 1 < sequences[b].size();
      in[b] = live ? sequences[b][t] : dsl::Vocabulary::kPad;
      target[b] = live ? sequences[b][t + 1] : dsl::Vocabulary::kPad;
      mask[b] = live ? 1.0 : 0.0;
    }
    std::tie(h, c) = lstm_.forward(tape, params_, tape.gather_cols(table, in), h, c);
    auto step = tape.softmax_xent(dec_out_.forward(tape, params_, h), target, mask);
    total = t == 0 ? step : tape.add(total, step);
  }
  return total;
}

Eigen::VectorXd SaftModel::embed(const FeatureGraph& g, std::uint64_t sampling_seed) {
  std::mt19937_64 rng(sampling_seed);
  Tape tape;
  const FeatureGraph* one[] = {&g};
  return tape.value(encode(tape, one, rng)).col(0);
}

Matrix SaftModel::embed_all(std::span<const FeatureGraph> graphs, std::uint64_t sampling_seed) {
  Matrix out(static_cast<Index>(dims_.embedding), static_cast<Index>(graphs.size()));
  // One sampling stream per graph so results do not depend on batching.
  for (std::size_t i = 0; i < graphs.size(); ++i)
    out.col(static_cast<Index>(i)) = embed(graphs[i], sampling_seed + i);
  return out;
}

double SaftModel::estimate(const Eigen::VectorXd& e) {
  Tape tape;
  return tape.value(evaluate(tape, tape.constant(Matrix(e))))(0, 0);
}

Eigen::VectorXd SaftModel::estimate_gradient(const Eigen::VectorXd& e) {
  Tape tape;
  auto in = tape.input(Matrix(e));
  tape.backward(tape.sum(evaluate(tape, in)));
  params_.zero_grad();
  return tape.grad(in).col(0);
}

Matrix SaftModel::step_distributions(const Eigen::VectorXd& e, std::span<const int> ids) {
  Tape tape;
  auto emb = tape.constant(Matrix(e));
  auto h = tape.tanh(dec_h0_.forward(tape, params_, emb));
  auto c = dec_c0_.forward(tape, params_, emb);
  auto table = tape.param(params_, token_table_);
  Matrix out(static_cast<Index>(vocab_.size()), static_cast<Index>(ids.size()));
  for (std::size_t t = 0; t < ids.size(); ++t) {
    const int id[] = {ids[t]};
    std::tie(h, c) = lstm_.forward(tape, params_, tape.gather_cols(table, id), h, c);
    out.col(static_cast<Index>(t)) = nn::softmax(tape.value(dec_out_.forward(tape, params_, h)).col(0));
  }
  return out;
}

SaftModel::Decoded SaftModel::decode_greedy(const Eigen::VectorXd& e, std::size_t max_len) {
  Decoded out;
  out.sequence.tokens.push_back(dsl::Token::sos());
  Tape tape;
  auto emb = tape.constant(Matrix(e));
  auto h = tape.tanh(dec_h0_.forward(tape, params_, emb));
  auto c = dec_c0_.forward(tape, params_, emb);
  auto table = tape.param(params_, token_table_);
  int prev = dsl::Vocabulary::kSos;
  while (out.sequence.size() < max_len) {
    const int id[] = {prev};
    std::tie(h, c) = lstm_.forward(tape, params_, tape.gather_cols(table, id), h, c);
    const auto& logits = tape.value(dec_out_.forward(tape, params_, h));
    Index best = 0;
    for (Index k = 1; k < logits.rows(); ++k)
      if (logits(k, 0) > logits(best, 0)) best = k;
    prev = static_cast<int>(best);
    out.sequence.tokens.push_back(vocab_.token(prev));
    if (prev == dsl::Vocabulary::kEos) {
      out.terminated = true;
      break;
    }
  }
  return out;
}

void TrainConfig::check() const {
  if (!(alpha > 0) || !(beta > 0)) throw ConfigError("train: alpha and beta must be positive");
  if (batch == 0 || epochs == 0 || inner_epochs == 0 || rff_features == 0)
    throw ConfigError("train: batch, epochs, inner_epochs and rff_features must be positive");
  if (!(inner_lr > 0) || !(lr_start > 0) || !(lr_end > 0))
    throw ConfigError("train: learning rates must be positive");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"alpha", c.alpha},
          {"beta", c.beta},
          {"batch", c.batch},
          {"epochs", c.epochs},
          {"inner_epochs", c.inner_epochs},
          {"inner_lr", c.inner_lr},
          {"lr_start", c.lr_start},
          {"lr_end", c.lr_end},
          {"seed", c.seed},
          {"reweighting", c.reweighting},
          {"conventional_reweighting", c.conventional_reweighting},
          {"rff_features", c.rff_features},
          {"dims", to_json(c.dims)}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("train: expected an object");
  static const char* known[] = {"alpha", "beta", "gamma", "batch", "epochs", "inner_epochs",
                                "inner_lr", "lr_start", "lr_end", "seed", "reweighting",
                                "conventional_reweighting", "rff_features", "dims"};
  for (const auto& [k, v] : j.items())
    if (std::find(std::begin(known), std::end(known), k) == std::end(known))
      throw ConfigError("train: unknown key '" + k + "'");
  TrainConfig c;
  read_key(j, "alpha", c.alpha);
  read_key(j, "beta", c.beta);
  if (j.contains("gamma")) {
    double gamma = 0.0;
    read_key(j, "gamma", gamma);
    if (j.contains("beta") && gamma != c.beta)
      throw ConfigError("train: gamma is an alias of beta and the two values differ");
    c.beta = gamma;
  }
  read_key(j, "batch", c.batch);
  read_key(j, "epochs", c.epochs);
  read_key(j, "inner_epochs", c.inner_epochs);
  read_key(j, "inner_lr", c.inner_lr);
  read_key(j, "lr_start", c.lr_start);
  read_key(j, "lr_end", c.lr_end);
  read_key(j, "seed", c.seed);
  read_key(j, "reweighting", c.reweighting);
  read_key(j, "conventional_reweighting", c.conventional_reweighting);
  read_key(j, "rff_features", c.rff_features);
  if (j.contains("dims")) c.dims = dims_from_json(j.at("dims"));
  c.check();
  return c;
}

double learning_rate(const TrainConfig& cfg, std::size_t epoch) {
  if (cfg.epochs <= 1) return cfg.lr_start;
  const double t = static_cast<double>(std::min(epoch, cfg.epochs - 1)) /
                   static_cast<double>(cfg.epochs - 1);
  return cfg.lr_start + (cfg.lr_end - cfg.lr_start) * t;
}

std::vector<TrainingRecord> build_records(const rl::TrainingCorpus& corpus, const Table& table) {
  if (corpus.n_features != table.n_features())
    throw DataError("corpus was collected on " + std::to_string(corpus.n_features) +
                    " features but the table has " + std::to_string(table.n_features()));
  dsl::Vocabulary vocab(table.n_features());
  std::vector<TrainingRecord> out(corpus.pairs.size());
  parallel_for(out.size(), [&](std::size_t i) {
    const auto& pair = corpus.pairs[i];
    auto set = dsl::apply_sequence(pair.sequence, table);
    out[i] = {build_graph(set.columns, table.target), vocab.encode(pair.sequence), pair.p};
  });
  return out;
}

namespace {

struct BatchOutcome {
  double loss = 0.0, estimation = 0.0, reconstruction = 0.0, before = 0.0, after = 0.0;
};

BatchOutcome run_batch(SaftModel& model, const RffParams& rff, std::span<const TrainingRecord> records,
                       std::span<const std::size_t> idx, const TrainConfig& cfg, double lr,
                       std::mt19937_64& rng) {
  const auto b = idx.size();
  std::vector<const FeatureGraph*> graphs(b);
  std::vector<std::vector<int>> seqs(b);
  std::vector<double> p(b);
  for (std::size_t k = 0; k < b; ++k) {
    graphs[k] = &records[idx[k]].graph;
    seqs[k] = records[idx[k]].ids;
    p[k] = records[idx[k]].p;
  }
  model.params().zero_grad();
  Tape tape;
  auto e = model.encode(tape, graphs, rng);

  BatchOutcome out;
  std::vector<double> r(b, 1.0);
  if (cfg.reweighting && b >= 2) {
    // Embeddings are held fixed while the weights are optimized.
    auto w = optimize_weights(tape.value(e), rff,
                              {cfg.inner_epochs, cfg.inner_lr, cfg.conventional_reweighting});
    for (std::size_t k = 0; k < b; ++k) r[k] = w.r(static_cast<Index>(k));
    out.before = w.initial_objective;
    out.after = w.final_objective;
  }
  auto est = tape.weighted_sq_error(model.evaluate(tape, e), p, r);
  auto rec = model.decoder_nll(tape, e, seqs);
  auto loss = tape.scale(tape.add(tape.scale(est, cfg.alpha), tape.scale(rec, cfg.beta)),
                         1.0 / static_cast<double>(b));
  tape.backward(loss);
  nn::adam_step(model.params(), lr);
  out.loss = tape.value(loss)(0, 0) * static_cast<double>(b);
  out.estimation = tape.value(est)(0, 0);
  out.reconstruction = tape.value(rec)(0, 0);
  return out;
}

// Finds the first record whose own forward pass is non-finite.
std::optional<std::size_t> offending_record(SaftModel& model, std::span<const TrainingRecord> records,
                                            std::span<const std::size_t> idx) {
  for (auto i : idx) {
    try {
      std::mt19937_64 rng(0);
      Tape tape;
      const FeatureGraph* g[] = {&records[i].graph};
      auto e = model.encode(tape, g, rng);
      const double p[] = {records[i].p}, w[] = {1.0};
      auto est = tape.weighted_sq_error(model.evaluate(tape, e), p, w);
      const std::vector<int> seq[] = {records[i].ids};
      auto rec = model.decoder_nll(tape, e, seq);
      if (!std::isfinite(tape.value(est)(0, 0) + tape.value(rec)(0, 0))) return i;
    } catch (const NumericError&) {
      return i;
    }
  }
  return std::nullopt;
}

}  // namespace

TrainResult bilevel_train(std::span<const TrainingRecord> records, std::size_t n_features,
                          const TrainConfig& cfg, const EpochFn& progress) {
  cfg.check();
  if (records.empty()) throw DataError("bilevel_train: empty corpus");
  dsl::Vocabulary vocab(n_features);
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!std::isfinite(records[i].p))
      throw DataError("bilevel_train: record " + std::to_string(i) + " has a non-finite score");
    if (!validate(vocab.decode(records[i].ids), n_features).valid)
      throw DataError("bilevel_train: record " + std::to_string(i) + " is not a valid sequence");
  }

  TrainResult out{SaftModel(n_features, cfg.dims, cfg.seed),
                  RffParams::sample(cfg.dims.embedding, cfg.rff_features, cfg.seed ^ kRffSalt),
                  {}};
  std::mt19937_64 rng(cfg.seed + 1);
  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = learning_rate(cfg, epoch);
    EpochStats stats;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const auto idx = std::span<const std::size_t>(order).subspan(
          start, std::min(cfg.batch, order.size() - start));
      BatchOutcome b;
      try {
        b = run_batch(out.model, out.rff, records, idx, cfg, lr, rng);
      } catch (const NumericError& e) {
        const auto bad = offending_record(out.model, records, idx);
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) +
                           (bad ? ", corpus record " + std::to_string(*bad) : std::string()) +
                           ": " + e.what());
      }
      stats.loss += b.loss;
      stats.estimation += b.estimation;
      stats.reconstruction += b.reconstruction;
      stats.decorrelation_before += b.before;
      stats.decorrelation_after += b.after;
      ++batches;
    }
    const double n = static_cast<double>(records.size());
    stats.loss /= n;
    stats.estimation /= n;
    stats.reconstruction /= n;
    stats.decorrelation_before /= static_cast<double>(batches);
    stats.decorrelation_after /= static_cast<double>(batches);
    out.history.push_back(stats);
    if (progress) progress(epoch, stats);
  }
  return out;
}

void save_model(const std::filesystem::path& dir, const TrainResult& trained, const TrainConfig& cfg) {
  std::filesystem::create_directories(dir);
  nn::save_checkpoint(trained.model.params(), dir / "params");
  const auto write = [&](const char* name, const nlohmann::json& j) {
    std::ofstream f(dir / name);
    f << j.dump(2) << "\n";
    if (!f) throw Error("cannot write " + (dir / name).string());
  };
  write("rff.json", to_json(trained.rff));
  const auto& vocab = trained.model.vocabulary();
  nlohmann::json tokens = nlohmann::json::array();
  for (int id = 0; id < static_cast<int>(vocab.size()); ++id)
    tokens.push_back(dsl::token_name(vocab.token(id)));
  write("vocab.json", {{"n_features", vocab.n_features()}, {"tokens", tokens}});
  write("train_config.json", to_json(cfg));
}

LoadedModel load_model(const std::filesystem::path& dir) {
  const auto read = [&](const char* name) {
    std::ifstream f(dir / name);
    if (!f) throw DataError("checkpoint file missing: " + (dir / name).string());
    try {
      return nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
      throw DataError((dir / name).string() + ": " + e.what());
    }
  };
  auto cfg = train_config_from_json(read("train_config.json"));
  auto vocab = read("vocab.json");
  const auto n_features = vocab.at("n_features").get<std::size_t>();
  dsl::Vocabulary check(n_features);
  const auto& tokens = vocab.at("tokens");
  if (tokens.size() != check.size()) throw DataError("vocab.json does not match its feature count");
  for (std::size_t id = 0; id < tokens.size(); ++id)
    if (tokens[id].get<std::string>() != dsl::token_name(check.token(static_cast<int>(id))))
      throw DataError("vocab.json token " + std::to_string(id) + " differs from the built-in order");
  return {SaftModel(n_features, cfg.dims, nn::load_checkpoint(dir / "params")),
          rff_from_json(read("rff.json")), cfg};
}

}  // namespace saft::repr
