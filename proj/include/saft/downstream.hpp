#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "saft/table.hpp"

namespace saft::downstream {

enum class ModelKind { RandomForest, DecisionTree, Ridge, KNN };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& text);

struct ModelSpec {
  ModelKind kind = ModelKind::RandomForest;
  int trees = 10;
  int max_depth = 8;
  int min_leaf = 2;
  // Features tried per split; 0 means sqrt(d) for forests and d for trees.
  int max_features = 0;
  bool bootstrap = true;
  double lambda = 1.0;
  int k = 5;
  std::uint64_t seed = 0;

  void check() const;
};

struct EvalReport {
  TaskKind task = TaskKind::Regression;
  double primary_score = 0.0;  // F1 or 1-RAE
  std::optional<double> f1, precision, recall;
  std::optional<double> one_minus_rae, one_minus_mae, one_minus_mse;
  ModelSpec spec;
  std::size_t n_features = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::size_t folds = 1;
};

nlohmann::json to_json(const ModelSpec& spec);
nlohmann::json to_json(const EvalReport& report);

struct ClassificationMetrics {
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

// Labels in {0,1} score the positive class 1; anything else is macro-averaged
// over the labels seen in either vector.
ClassificationMetrics f1_precision_recall(std::span<const double> y_true,
                                          std::span<const double> y_pred);

struct RegressionMetrics {
  double one_minus_rae = 0.0;
  double one_minus_mae = 0.0;
  double one_minus_mse = 0.0;
};

RegressionMetrics regression_metrics(std::span<const double> y_true,
                                     std::span<const double> y_pred);

class Model {
 public:
  virtual ~Model() = default;
  virtual void fit(std::span<const Column> features, std::span<const double> target,
                   TaskKind task) = 0;
  virtual std::vector<double> predict(std::span<const Column> features) const = 0;
};

std::unique_ptr<Model> make_model(const ModelSpec& spec);

// Fits on the train arrays and scores on the test arrays.
EvalReport fit_score(std::span<const Column> train_x, std::span<const double> train_y,
                     std::span<const Column> test_x, std::span<const double> test_y,
                     TaskKind task, const ModelSpec& spec);

// Seeded 75/25 shuffled holdout inside the given rows.
EvalReport train_eval(std::span<const Column> features, std::span<const double> target,
                      TaskKind task, const ModelSpec& spec, std::uint64_t split_seed);

// Seeded k-fold average of every metric.
EvalReport train_eval_kfold(std::span<const Column> features, std::span<const double> target,
                            TaskKind task, const ModelSpec& spec, std::uint64_t split_seed,
                            std::size_t folds = 5);

}  // namespace saft::downstream
