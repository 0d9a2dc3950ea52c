#include "saft/downstream.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "saft/errors.hpp"

namespace saft::downstream {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::RandomForest: return "random_forest";
    case ModelKind::DecisionTree: return "decision_tree";
    case ModelKind::Ridge: return "ridge";
    case ModelKind::KNN: return "knn";
  }
  return "unknown";
}

ModelKind parse_model_kind(const std::string& text) {
  if (text == "random_forest" || text == "rf") return ModelKind::RandomForest;
  if (text == "decision_tree" || text == "tree" || text == "dt") return ModelKind::DecisionTree;
  if (text == "ridge") return ModelKind::Ridge;
  if (text == "knn") return ModelKind::KNN;
  throw ConfigError("unknown downstream model '" + text + "'");
}

void ModelSpec::check() const {
  if (trees < 1 || max_depth < 1 || min_leaf < 1 || max_features < 0 || k < 1 || !(lambda > 0.0))
    throw ConfigError("downstream model hyperparameters must be positive");
}

nlohmann::json to_json(const ModelSpec& spec) {
  nlohmann::json j;
  j["kind"] = to_string(spec.kind);
  switch (spec.kind) {
    case ModelKind::RandomForest:
      j["trees"] = spec.trees;
      j["bootstrap"] = spec.bootstrap;
      [[fallthrough]];
    case ModelKind::DecisionTree:
      j["max_depth"] = spec.max_depth;
      j["min_leaf"] = spec.min_leaf;
      j["max_features"] = spec.max_features;
      break;
    case ModelKind::Ridge: j["lambda"] = spec.lambda; break;
    case ModelKind::KNN: j["k"] = spec.k; break;
  }
  j["seed"] = spec.seed;
  return j;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["task"] = to_string(r.task);
  j["primary_score"] = r.primary_score;
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
  };
  put("f1", r.f1);
  put("precision", r.precision);
  put("recall", r.recall);
  put("one_minus_rae", r.one_minus_rae);
  put("one_minus_mae", r.one_minus_mae);
  put("one_minus_mse", r.one_minus_mse);
  j["model"] = to_json(r.spec);
  j["n_features"] = r.n_features;
  j["n_train"] = r.n_train;
  j["n_test"] = r.n_test;
  j["folds"] = r.folds;
  return j;
}

ClassificationMetrics f1_precision_recall(std::span<const double> y_true,
                                          std::span<const double> y_pred) {
  if (y_true.size() != y_pred.size())
    throw DataError("metric inputs differ in length (" + std::to_string(y_true.size()) +
                    " vs " + std::to_string(y_pred.size()) + ")");
  auto safe_div = [](double a, double b) { return b == 0.0 ? 0.0 : a / b; };
  auto score_class = [&](double label) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
      const bool t = y_true[i] == label;
      const bool p = y_pred[i] == label;
      tp += t && p;
      fp += !t && p;
      fn += t && !p;
    }
    ClassificationMetrics m;
    m.precision = safe_div(tp, tp + fp);
    m.recall = safe_div(tp, tp + fn);
    m.f1 = safe_div(2.0 * m.precision * m.recall, m.precision + m.recall);
    return m;
  };

  std::vector<double> labels(y_true.begin(), y_true.end());
  labels.insert(labels.end(), y_pred.begin(), y_pred.end());
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  const bool binary =
      std::all_of(labels.begin(), labels.end(), [](double v) { return v == 0.0 || v == 1.0; });
  if (binary) return score_class(1.0);

  ClassificationMetrics avg;
  for (double label : labels) {
    auto m = score_class(label);
    avg.f1 += m.f1;
    avg.precision += m.precision;
    avg.recall += m.recall;
  }
  const auto k = static_cast<double>(labels.size());
  avg.f1 /= k;
  avg.precision /= k;
  avg.recall /= k;
  return avg;
}

RegressionMetrics regression_metrics(std::span<const double> y_true,
                                     std::span<const double> y_pred) {
  if (y_true.size() != y_pred.size())
    throw DataError("metric inputs differ in length (" + std::to_string(y_true.size()) +
                    " vs " + std::to_string(y_pred.size()) + ")");
  if (y_true.size() < 2) throw DataError("regression metrics need at least 2 rows");
  const auto n = static_cast<double>(y_true.size());
  double mean = 0.0;
  for (double v : y_true) mean += v;
  mean /= n;
  double abs_dev = 0.0, sq_dev = 0.0, abs_err = 0.0, sq_err = 0.0;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    abs_dev += std::fabs(y_true[i] - mean);
    sq_dev += (y_true[i] - mean) * (y_true[i] - mean);
    abs_err += std::fabs(y_true[i] - y_pred[i]);
    sq_err += (y_true[i] - y_pred[i]) * (y_true[i] - y_pred[i]);
  }
  if (abs_dev == 0.0)
    throw DataError("1-RAE is undefined for a constant target");
  const double sd = std::sqrt(sq_dev / n);
  RegressionMetrics m;
  m.one_minus_rae = 1.0 - abs_err / abs_dev;
  // Errors measured in units of the target's own standard deviation.
  m.one_minus_mae = 1.0 - (abs_err / n) / sd;
  m.one_minus_mse = 1.0 - (sq_err / n) / (sd * sd);
  return m;
}

namespace {

// Maps arbitrary integer labels onto 0..K-1.
struct LabelCodec {
  std::vector<double> labels;

  void fit(std::span<const double> y) {
    labels.assign(y.begin(), y.end());
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  }
  int encode(double y) const {
    auto it = std::lower_bound(labels.begin(), labels.end(), y);
    return static_cast<int>(it - labels.begin());
  }
  std::size_t size() const { return labels.size(); }
};

std::size_t argmax_lowest(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

class Tree {
 public:
  struct Params {
    int max_depth = 8;
    int min_leaf = 2;
    std::size_t max_features = 0;  // 0: all
  };

  // For classification `y` holds class codes and `n_classes` > 0.
  void fit(std::span<const Column> x, std::span<const double> y, std::vector<std::size_t> rows,
           std::size_t n_classes, const Params& params, std::mt19937_64& rng) {
    x_ = x;
    y_ = y;
    n_classes_ = n_classes;
    params_ = params;
    rng_ = &rng;
    nodes_.clear();
    leaf_values_.clear();
    build(rows, 0);
  }

  // Regression: the leaf mean. Classification: accumulates class probabilities.
  double predict_row(std::span<const Column> x, std::size_t row, std::span<double> probs) const {
    std::size_t id = 0;
    while (nodes_[id].feature >= 0) {
      const auto& node = nodes_[id];
      id = x[static_cast<std::size_t>(node.feature)][row] <= node.threshold ? node.left : node.right;
    }
    const auto& leaf = nodes_[id];
    if (n_classes_ == 0) return leaf_values_[leaf.value_offset];
    for (std::size_t c = 0; c < n_classes_; ++c) probs[c] += leaf_values_[leaf.value_offset + c];
    return 0.0;
  }

 private:
  struct Node {
    int feature = -1;
    double threshold = 0.0;
    std::size_t left = 0, right = 0;
    std::size_t value_offset = 0;
  };

  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double gain = -1.0;
  };

  std::size_t make_leaf(const std::vector<std::size_t>& rows) {
    Node node;
    node.value_offset = leaf_values_.size();
    if (n_classes_ == 0) {
      double sum = 0.0;
      for (auto r : rows) sum += y_[r];
      leaf_values_.push_back(sum / static_cast<double>(rows.size()));
    } else {
      std::vector<double> counts(n_classes_, 0.0);
      for (auto r : rows) counts[static_cast<std::size_t>(y_[r])] += 1.0;
      for (double c : counts) leaf_values_.push_back(c / static_cast<double>(rows.size()));
    }
    nodes_.push_back(node);
    return nodes_.size() - 1;
  }

  bool pure(const std::vector<std::size_t>& rows) const {
    for (auto r : rows)
      if (y_[r] != y_[rows[0]]) return false;
    return true;
  }

  // Best split of `rows` on one feature; gain in impurity units.
  Split best_on_feature(const std::vector<std::size_t>& rows, std::size_t f) {
    Split best;
    const auto& col = x_[f];
    sorted_.clear();
    for (auto r : rows) sorted_.emplace_back(col[r], r);
    std::sort(sorted_.begin(), sorted_.end());
    if (sorted_.front().first == sorted_.back().first) return best;

    const std::size_t n = sorted_.size();
    const auto min_leaf = static_cast<std::size_t>(params_.min_leaf);
    if (n_classes_ == 0) {
      double total = 0.0, total_sq = 0.0;
      for (const auto& [v, r] : sorted_) {
        total += y_[r];
        total_sq += y_[r] * y_[r];
      }
      const double parent = total_sq - total * total / static_cast<double>(n);
      double left = 0.0, left_sq = 0.0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        const double yv = y_[sorted_[i].second];
        left += yv;
        left_sq += yv * yv;
        const std::size_t nl = i + 1, nr = n - nl;
        if (sorted_[i].first == sorted_[i + 1].first) continue;
        if (nl < min_leaf || nr < min_leaf) continue;
        const double right = total - left, right_sq = total_sq - left_sq;
        const double sse = (left_sq - left * left / static_cast<double>(nl)) +
                           (right_sq - right * right / static_cast<double>(nr));
        const double gain = parent - sse;
        if (gain > best.gain) {
          best.gain = gain;
          best.feature = static_cast<int>(f);
          best.threshold = 0.5 * (sorted_[i].first + sorted_[i + 1].first);
        }
      }
    } else {
      std::vector<double> total(n_classes_, 0.0), left(n_classes_, 0.0);
      for (const auto& [v, r] : sorted_) total[static_cast<std::size_t>(y_[r])] += 1.0;
      auto gini_mass = [&](const std::vector<double>& counts, double size) {
        double s = 0.0;
        for (double c : counts) s += c * c;
        return size - s / size;  // size * gini
      };
      const double parent = gini_mass(total, static_cast<double>(n));
      std::vector<double> right(n_classes_);
      for (std::size_t i = 0; i + 1 < n; ++i) {
        left[static_cast<std::size_t>(y_[sorted_[i].second])] += 1.0;
        const std::size_t nl = i + 1, nr = n - nl;
        if (sorted_[i].first == sorted_[i + 1].first) continue;
        if (nl < min_leaf || nr < min_leaf) continue;
        for (std::size_t c = 0; c < n_classes_; ++c) right[c] = total[c] - left[c];
        const double gain = parent - gini_mass(left, static_cast<double>(nl)) -
                            gini_mass(right, static_cast<double>(nr));
        if (gain > best.gain) {
          best.gain = gain;
          best.feature = static_cast<int>(f);
          best.threshold = 0.5 * (sorted_[i].first + sorted_[i + 1].first);
        }
      }
    }
    return best;
  }

  std::size_t build(const std::vector<std::size_t>& rows, int depth) {
    const auto min_leaf = static_cast<std::size_t>(params_.min_leaf);
    if (depth >= params_.max_depth || rows.size() < 2 * min_leaf || pure(rows))
      return make_leaf(rows);

    const std::size_t d = x_.size();
    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), 0);
    const std::size_t quota = params_.max_features == 0 ? d : std::min(params_.max_features, d);
    if (quota < d) std::shuffle(order.begin(), order.end(), *rng_);

    // Examine `quota` features; keep going past the quota until one yields a
    // valid split.
    Split best;
    for (std::size_t i = 0; i < d; ++i) {
      if (i >= quota && best.feature >= 0) break;
      auto s = best_on_feature(rows, order[i]);
      if (s.feature >= 0 && s.gain > best.gain) best = s;
    }
    if (best.feature < 0 || best.gain < -1e-9) return make_leaf(rows);

    std::vector<std::size_t> left_rows, right_rows;
    const auto& col = x_[static_cast<std::size_t>(best.feature)];
    for (auto r : rows) (col[r] <= best.threshold ? left_rows : right_rows).push_back(r);

    const std::size_t id = nodes_.size();
    nodes_.push_back(Node{best.feature, best.threshold, 0, 0, 0});
    const std::size_t l = build(left_rows, depth + 1);
    const std::size_t r = build(right_rows, depth + 1);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  std::span<const Column> x_;
  std::span<const double> y_;
  std::size_t n_classes_ = 0;
  Params params_;
  std::mt19937_64* rng_ = nullptr;
  std::vector<Node> nodes_;
  std::vector<double> leaf_values_;
  std::vector<std::pair<double, std::size_t>> sorted_;
};

class ForestModel : public Model {
 public:
  explicit ForestModel(const ModelSpec& spec, bool single_tree) : spec_(spec), single_(single_tree) {}

  void fit(std::span<const Column> x, std::span<const double> y, TaskKind task) override {
    const std::size_t n = y.size();
    classification_ = task == TaskKind::Classification;
    std::vector<double> codes;
    std::span<const double> targets = y;
    if (classification_) {
      codec_.fit(y);
      codes.resize(n);
      for (std::size_t i = 0; i < n; ++i) codes[i] = codec_.encode(y[i]);
      targets = codes;
    }
    Tree::Params params;
    params.max_depth = spec_.max_depth;
    params.min_leaf = spec_.min_leaf;
    if (spec_.max_features > 0)
      params.max_features = static_cast<std::size_t>(spec_.max_features);
    else if (!single_)
      params.max_features = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(x.size())))));

    std::mt19937_64 rng(spec_.seed);
    const int count = single_ ? 1 : spec_.trees;
    const bool bootstrap = !single_ && spec_.bootstrap;
    trees_.assign(static_cast<std::size_t>(count), Tree{});
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (auto& tree : trees_) {
      std::vector<std::size_t> rows(n);
      if (bootstrap) {
        for (auto& r : rows) r = pick(rng);
        std::sort(rows.begin(), rows.end());
      } else {
        std::iota(rows.begin(), rows.end(), 0);
      }
      tree.fit(x, targets, std::move(rows), classification_ ? codec_.size() : 0, params, rng);
    }
    // Trees keep spans into the training data only during fit.
  }

  std::vector<double> predict(std::span<const Column> x) const override {
    const std::size_t n = x.empty() ? 0 : x[0].size();
    std::vector<double> out(n);
    std::vector<double> probs(classification_ ? codec_.size() : 0);
    for (std::size_t i = 0; i < n; ++i) {
      if (classification_) {
        std::fill(probs.begin(), probs.end(), 0.0);
        for (const auto& t : trees_) t.predict_row(x, i, probs);
        out[i] = codec_.labels[argmax_lowest(probs)];
      } else {
        double sum = 0.0;
        for (const auto& t : trees_) sum += t.predict_row(x, i, probs);
        out[i] = sum / static_cast<double>(trees_.size());
      }
    }
    return out;
  }

 private:
  ModelSpec spec_;
  bool single_;
  bool classification_ = false;
  LabelCodec codec_;
  std::vector<Tree> trees_;
};

Eigen::MatrixXd to_matrix(std::span<const Column> x, const std::vector<std::size_t>& keep) {
  const std::size_t n = x.empty() ? 0 : x[0].size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j)
    for (std::size_t i = 0; i < n; ++i)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x[keep[j]][i];
  return m;
}

// Ridge with an unpenalized intercept. Exactly repeated columns are dropped
// before solving, so duplicating a feature leaves predictions unchanged.
class RidgeModel : public Model {
 public:
  explicit RidgeModel(const ModelSpec& spec) : spec_(spec) {}

  void fit(std::span<const Column> x, std::span<const double> y, TaskKind task) override {
    keep_.clear();
    for (std::size_t j = 0; j < x.size(); ++j) {
      bool dup = false;
      for (auto k : keep_) dup = dup || x[k] == x[j];
      if (!dup) keep_.push_back(j);
    }
    classification_ = task == TaskKind::Classification;
    Eigen::MatrixXd X = to_matrix(x, keep_);
    x_mean_ = X.colwise().mean();
    X.rowwise() -= x_mean_.transpose();
    const auto n = static_cast<Eigen::Index>(y.size());

    Eigen::MatrixXd Y;
    if (classification_) {
      codec_.fit(y);
      Y = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(codec_.size()));
      for (Eigen::Index i = 0; i < n; ++i) Y(i, codec_.encode(y[static_cast<std::size_t>(i)])) = 1.0;
    } else {
      Y = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
    }
    y_mean_ = Y.colwise().mean();
    Y.rowwise() -= y_mean_.transpose();
    Eigen::MatrixXd gram = X.transpose() * X;
    gram.diagonal().array() += spec_.lambda;
    coef_ = gram.ldlt().solve(X.transpose() * Y);
  }

  std::vector<double> predict(std::span<const Column> x) const override {
    Eigen::MatrixXd X = to_matrix(x, keep_);
    X.rowwise() -= x_mean_.transpose();
    Eigen::MatrixXd pred = X * coef_;
    pred.rowwise() += y_mean_.transpose();
    std::vector<double> out(static_cast<std::size_t>(pred.rows()));
    for (Eigen::Index i = 0; i < pred.rows(); ++i) {
      if (classification_) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < pred.cols(); ++c)
          if (pred(i, c) > pred(i, best)) best = c;
        out[static_cast<std::size_t>(i)] = codec_.labels[static_cast<std::size_t>(best)];
      } else {
        out[static_cast<std::size_t>(i)] = pred(i, 0);
      }
    }
    return out;
  }

 private:
  ModelSpec spec_;
  bool classification_ = false;
  LabelCodec codec_;
  std::vector<std::size_t> keep_;
  Eigen::VectorXd x_mean_, y_mean_;
  Eigen::MatrixXd coef_;
};

class KnnModel : public Model {
 public:
  explicit KnnModel(const ModelSpec& spec) : spec_(spec) {}

  void fit(std::span<const Column> x, std::span<const double> y, TaskKind task) override {
    train_x_.assign(x.begin(), x.end());
    train_y_.assign(y.begin(), y.end());
    classification_ = task == TaskKind::Classification;
    if (classification_) codec_.fit(y);
  }

  std::vector<double> predict(std::span<const Column> x) const override {
    const std::size_t n = x.empty() ? 0 : x[0].size();
    const std::size_t m = train_y_.size();
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(spec_.k), m);
    std::vector<double> out(n);
    std::vector<std::pair<double, std::size_t>> dist(m);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t r = 0; r < m; ++r) {
        double d = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) {
          const double diff = x[j][i] - train_x_[j][r];
          d += diff * diff;
        }
        dist[r] = {d, r};
      }
      std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
      if (classification_) {
        std::vector<double> votes(codec_.size(), 0.0);
        for (std::size_t q = 0; q < k; ++q) votes[static_cast<std::size_t>(codec_.encode(train_y_[dist[q].second]))] += 1.0;
        out[i] = codec_.labels[argmax_lowest(votes)];
      } else {
        double sum = 0.0;
        for (std::size_t q = 0; q < k; ++q) sum += train_y_[dist[q].second];
        out[i] = sum / static_cast<double>(k);
      }
    }
    return out;
  }

 private:
  ModelSpec spec_;
  bool classification_ = false;
  LabelCodec codec_;
  std::vector<Column> train_x_;
  std::vector<double> train_y_;
};

std::vector<Column> gather_rows(std::span<const Column> x, std::span<const std::size_t> rows) {
  std::vector<Column> out(x.size(), Column(rows.size()));
  for (std::size_t j = 0; j < x.size(); ++j)
    for (std::size_t i = 0; i < rows.size(); ++i) out[j][i] = x[j][rows[i]];
  return out;
}

std::vector<double> gather(std::span<const double> y, std::span<const std::size_t> rows) {
  std::vector<double> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = y[rows[i]];
  return out;
}

void check_inputs(std::span<const Column> x, std::span<const double> y, TaskKind task) {
  if (x.empty()) throw DataError("empty feature matrix");
  for (const auto& col : x)
    if (col.size() != y.size()) throw DataError("feature and target lengths differ");
  if (task == TaskKind::Classification) {
    LabelCodec codec;
    codec.fit(y);
    if (codec.size() < 2) throw DataError("degenerate target: a single class is present");
  }
}

}  // namespace

std::unique_ptr<Model> make_model(const ModelSpec& spec) {
  spec.check();
  switch (spec.kind) {
    case ModelKind::RandomForest: return std::make_unique<ForestModel>(spec, false);
    case ModelKind::DecisionTree: return std::make_unique<ForestModel>(spec, true);
    case ModelKind::Ridge: return std::make_unique<RidgeModel>(spec);
    case ModelKind::KNN: return std::make_unique<KnnModel>(spec);
  }
  throw ConfigError("unknown model kind");
}

EvalReport fit_score(std::span<const Column> train_x, std::span<const double> train_y,
                     std::span<const Column> test_x, std::span<const double> test_y,
                     TaskKind task, const ModelSpec& spec) {
  check_inputs(train_x, train_y, task);
  if (test_x.size() != train_x.size())
    throw DataError("train and test feature counts differ");
  auto model = make_model(spec);
  model->fit(train_x, train_y, task);
  const auto pred = model->predict(test_x);

  EvalReport r;
  r.task = task;
  r.spec = spec;
  r.n_features = train_x.size();
  r.n_train = train_y.size();
  r.n_test = test_y.size();
  if (task == TaskKind::Classification) {
    auto m = f1_precision_recall(test_y, pred);
    r.f1 = m.f1;
    r.precision = m.precision;
    r.recall = m.recall;
    r.primary_score = m.f1;
  } else {
    auto m = regression_metrics(test_y, pred);
    r.one_minus_rae = m.one_minus_rae;
    r.one_minus_mae = m.one_minus_mae;
    r.one_minus_mse = m.one_minus_mse;
    r.primary_score = m.one_minus_rae;
  }
  return r;
}

EvalReport train_eval(std::span<const Column> features, std::span<const double> target,
                      TaskKind task, const ModelSpec& spec, std::uint64_t split_seed) {
  check_inputs(features, target, task);
  const std::size_t n = target.size();
  if (n < 10) throw DataError("train_eval needs at least 10 rows");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(split_seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const std::size_t n_train = (n * 3) / 4;
  std::span<const std::size_t> train_rows(idx.data(), n_train);
  std::span<const std::size_t> test_rows(idx.data() + n_train, n - n_train);
  const auto train_x = gather_rows(features, train_rows);
  const auto test_x = gather_rows(features, test_rows);
  const auto train_y = gather(target, train_rows);
  const auto test_y = gather(target, test_rows);
  return fit_score(train_x, train_y, test_x, test_y, task, spec);
}

EvalReport train_eval_kfold(std::span<const Column> features, std::span<const double> target,
                            TaskKind task, const ModelSpec& spec, std::uint64_t split_seed,
                            std::size_t folds) {
  check_inputs(features, target, task);
  const std::size_t n = target.size();
  if (folds < 2 || n < folds * 2) throw DataError("too few rows for k-fold evaluation");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(split_seed);
  std::shuffle(idx.begin(), idx.end(), rng);

  EvalReport avg;
  auto acc = [&](std::optional<double>& dst, const std::optional<double>& v) {
    if (v) dst = dst.value_or(0.0) + *v / static_cast<double>(folds);
  };
  for (std::size_t f = 0; f < folds; ++f) {
    const std::size_t lo = f * n / folds, hi = (f + 1) * n / folds;
    std::vector<std::size_t> train_rows, test_rows;
    for (std::size_t i = 0; i < n; ++i) (i >= lo && i < hi ? test_rows : train_rows).push_back(idx[i]);
    auto r = fit_score(gather_rows(features, train_rows), gather(target, train_rows),
                       gather_rows(features, test_rows), gather(target, test_rows), task, spec);
    if (f == 0) {
      avg.task = r.task;
      avg.spec = r.spec;
      avg.n_features = r.n_features;
    }
    avg.n_train += r.n_train;
    avg.n_test += r.n_test;
    avg.primary_score += r.primary_score / static_cast<double>(folds);
    acc(avg.f1, r.f1);
    acc(avg.precision, r.precision);
    acc(avg.recall, r.recall);
    acc(avg.one_minus_rae, r.one_minus_rae);
    acc(avg.one_minus_mae, r.one_minus_mae);
    acc(avg.one_minus_mse, r.one_minus_mse);
  }
  avg.n_train /= folds;
  avg.n_test /= folds;
  avg.folds = folds;
  return avg;
}

}  // namespace saft::downstream
