#pragma once
// Graph encoder, performance evaluator and sequence decoder, plus the
// reweighted joint training loop.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "saft/cross_dsl.hpp"
#include "saft/feature_graph.hpp"
#include "saft/nn/layers.hpp"
#include "saft/nn/param_store.hpp"
#include "saft/nn/tape.hpp"
#include "saft/reweighting.hpp"
#include "saft/rl_collector.hpp"

namespace saft::repr {

struct ModelDims {
  std::size_t embedding = 64;
  std::size_t encoder_hidden = 64;
  std::size_t evaluator_hidden = 200;
  std::size_t token_embedding = 32;
  std::size_t decoder_hidden = 64;
  std::size_t neighbor_samples = 5;  // S
};

nlohmann::json to_json(const ModelDims& dims);
ModelDims dims_from_json(const nlohmann::json& j);

// Up to `samples` neighbours per node, drawn without replacement and kept in
// ascending order; every neighbour when the degree is at most `samples`.
std::vector<std::vector<std::size_t>> sample_neighbors(const FeatureGraph& g, std::size_t samples,
                                                       std::mt19937_64& rng);

class SaftModel {
 public:
  SaftModel(std::size_t n_features, const ModelDims& dims, std::uint64_t seed);
  // Rebinds to existing parameters (e.g. from a checkpoint).
  SaftModel(std::size_t n_features, const ModelDims& dims, nn::ParamStore params);

  const ModelDims& dims() const { return dims_; }
  const dsl::Vocabulary& vocabulary() const { return vocab_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  // embedding x B, one column per graph. Neighbour sampling draws from rng.
  nn::Tape::Var encode(nn::Tape& tape, std::span<const FeatureGraph* const> graphs,
                       std::mt19937_64& rng);
  // 1 x B estimated performance.
  nn::Tape::Var evaluate(nn::Tape& tape, nn::Tape::Var embeddings);
  // Summed teacher-forced negative log-likelihood of the sequences.
  nn::Tape::Var decoder_nll(nn::Tape& tape, nn::Tape::Var embeddings,
                            std::span<const std::vector<int>> sequences);

  // Frozen-parameter helpers.
  Eigen::VectorXd embed(const FeatureGraph& g, std::uint64_t sampling_seed);
  nn::Matrix embed_all(std::span<const FeatureGraph> graphs, std::uint64_t sampling_seed);
  double estimate(const Eigen::VectorXd& e);
  // d estimate / d e.
  Eigen::VectorXd estimate_gradient(const Eigen::VectorXd& e);
  // Per-step token distributions of teacher forcing, one column per step.
  nn::Matrix step_distributions(const Eigen::VectorXd& e, std::span<const int> ids);

  struct Decoded {
    dsl::CrossSequence sequence;
    bool terminated = false;  // an <eos> was produced before max_len
  };
  // Greedy decoding from <sos>; ties go to the lowest token id.
  Decoded decode_greedy(const Eigen::VectorXd& e, std::size_t max_len = dsl::kMaxSequenceLength);

 private:
  void bind();

  std::size_t n_features_;
  ModelDims dims_;
  dsl::Vocabulary vocab_;
  nn::ParamStore params_;
  nn::Dense enc1_, enc2_, head1_, head2_;
  nn::Dense eval1_, eval2_, eval_out_;
  nn::Dense dec_h0_, dec_c0_, dec_out_;
  nn::LstmCell lstm_;
  std::string token_table_;
};

struct TrainConfig {
  double alpha = 10.0;  // estimation weight
  double beta = 0.1;    // reconstruction weight (gamma is an alias)
  std::size_t batch = 256;
  std::size_t epochs = 500;
  std::size_t inner_epochs = 20;
  double inner_lr = 0.01;
  double lr_start = 1e-3;
  double lr_end = 5e-4;
  std::uint64_t seed = 0;
  bool reweighting = true;
  bool conventional_reweighting = false;
  std::size_t rff_features = 5;
  ModelDims dims;

  void check() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected. Accepts
// "gamma" as a synonym for "beta".
TrainConfig train_config_from_json(const nlohmann::json& j);

// Linear anneal from lr_start (first epoch) to lr_end (last epoch).
double learning_rate(const TrainConfig& cfg, std::size_t epoch);

struct TrainingRecord {
  FeatureGraph graph;
  std::vector<int> ids;
  double p = 0.0;
};

// Materializes every corpus sequence on the table and builds its graph.
std::vector<TrainingRecord> build_records(const rl::TrainingCorpus& corpus, const Table& table);

struct EpochStats {
  double loss = 0.0;            // mean per-record joint loss
  double estimation = 0.0;      // mean weighted squared error
  double reconstruction = 0.0;  // mean NLL per record
  double decorrelation_before = 0.0;
  double decorrelation_after = 0.0;
};

struct TrainResult {
  SaftModel model;
  RffParams rff;
  std::vector<EpochStats> history;
};

using EpochFn = std::function<void(std::size_t epoch, const EpochStats&)>;

TrainResult bilevel_train(std::span<const TrainingRecord> records, std::size_t n_features,
                          const TrainConfig& cfg, const EpochFn& progress = {});

// Parameters (neural-kernel layout), rff.json, vocab.json, train_config.json.
void save_model(const std::filesystem::path& dir, const TrainResult& trained, const TrainConfig& cfg);

struct LoadedModel {
  SaftModel model;
  RffParams rff;
  TrainConfig config;
};

LoadedModel load_model(const std::filesystem::path& dir);

}  // namespace saft::repr
