#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lime_shift/dataset.hpp"
#include "lime_shift/numkit.hpp"

namespace lime_shift {

inline constexpr double kScoreNormTolerance = 1e-6;

// Per-class probability-like scores, parallel to `class_ids`.
struct ScoreVector {
  std::vector<double> scores;
  std::vector<int> class_ids;

  // Score of class `y`; throws when the class is unknown.
  double of(int y) const {
    for (std::size_t i = 0; i < class_ids.size(); ++i) {
      if (class_ids[i] == y) return scores[i];
    }
    throw ContractViolation("class " + std::to_string(y) + " not scored");
  }

  std::size_t argmax() const {
    return static_cast<std::size_t>(std::max_element(scores.begin(), scores.end()) -
                                    scores.begin());
  }
  int predicted_class() const { return class_ids.at(argmax()); }
};

// Returns an empty string when valid, otherwise the reason.
inline std::string validate_scores(std::span<const double> scores) {
  if (scores.empty()) return "empty score vector";
  double sum = 0.0;
  for (double s : scores) {
    if (!std::isfinite(s)) return "non-finite score";
    if (s < 0.0 || s > 1.0) return "score outside [0, 1]";
    sum += s;
  }
  if (std::abs(sum - 1.0) > kScoreNormTolerance) return "scores not normalized";
  return {};
}

// The black box f. Implementations must be safe to call concurrently.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual std::size_t dim() const = 0;
  virtual std::vector<int> class_ids() const = 0;
  virtual ScoreVector score(const SparseVector& x) const = 0;

  virtual std::vector<ScoreVector> score_batch(std::span<const SparseVector> xs) const {
    std::vector<ScoreVector> out;
    out.reserve(xs.size());
    for (const auto& x : xs) out.push_back(score(x));
    return out;
  }

  virtual std::string describe() const = 0;
};

namespace detail {

inline double sigmoid(double z) noexcept {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z))
inline double softplus(double z) noexcept {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

}  // namespace detail

// RBF kernel logistic regression in dual form; the built-in two-class scorer.
struct KernelLogisticModel {
  SampleSet support_set;
  std::vector<double> dual_coeffs;
  double bias = 0.0;
  KernelSpec kernel = KernelSpec::rbf(1.0);
  // {negative, positive}; the sigmoid scores the positive class.
  std::vector<int> class_ids;
  std::size_t dim = 0;

  double logit(const SparseVector& x) const {
    if (x.dim() != dim) {
      throw ContractViolation("instance dim " + std::to_string(x.dim()) + " does not match model dim " +
                              std::to_string(dim));
    }
    double acc = bias;
    for (std::size_t i = 0; i < support_set.size(); ++i) {
      if (dual_coeffs[i] != 0.0) acc += dual_coeffs[i] * evaluate(kernel, x, support_set[i]);
    }
    return acc;
  }
};

inline ScoreVector predict_proba(const KernelLogisticModel& model, const SparseVector& x) {
  const double p = detail::sigmoid(model.logit(x));
  return {{1.0 - p, p}, model.class_ids};
}

struct TrainParams {
  double reg = 1e-3;
  std::size_t epochs = 300;
  double lr = 1.0;
};

struct TrainResult {
  KernelLogisticModel model;
  // Regularized objective before the first step and after every epoch.
  std::vector<double> loss_history;
  double accuracy = 0.0;
};

namespace detail {

inline double logistic_objective(std::span<const double> logits, std::span<const double> targets,
                                 std::span<const double> alpha, double reg) {
  CompensatedSum data;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    data.add(softplus(logits[i]) - targets[i] * logits[i]);
  }
  double norm = 0.0;
  for (double a : alpha) norm += a * a;
  return data.value() / static_cast<double>(logits.size()) + 0.5 * reg * norm;
}

}  // namespace detail

// Full-batch gradient descent on
//   (1/N) sum log(1 + exp(-y_i s_i)) + reg/2 |alpha|^2,  s = K alpha + b.
inline TrainResult train_kernel_logistic(const Dataset& train, const KernelSpec& kernel_in,
                                         const TrainParams& params) {
  if (!(params.reg > 0.0)) throw ContractViolation("reg must be positive");
  if (!(params.lr > 0.0)) throw ContractViolation("lr must be positive");
  std::set<int> distinct(train.labels.begin(), train.labels.end());
  if (distinct.size() != 2) {
    throw TrainingError("built-in scorer needs exactly two classes, found " +
                        std::to_string(distinct.size()));
  }
  const KernelSpec kernel = resolve(kernel_in, train.rows);
  if (kernel.kind != KernelKind::rbf) throw ConfigError("built-in scorer uses an rbf kernel");

  const std::size_t n = train.size();
  const int neg = *distinct.begin();
  const int pos = *distinct.rbegin();
  std::vector<double> targets(n);
  for (std::size_t i = 0; i < n; ++i) targets[i] = train.labels[i] == pos ? 1.0 : 0.0;

  const Matrix k = gram(train.rows, train.rows, kernel);
  std::vector<double> alpha(n, 0.0), logits(n, 0.0), resid(n), grad(n);
  double bias = 0.0;

  auto refresh_logits = [&] {
    for (std::size_t i = 0; i < n; ++i) {
      double s = bias;
      for (std::size_t j = 0; j < n; ++j) s += k(i, j) * alpha[j];
      logits[i] = s;
    }
  };

  TrainResult result;
  result.loss_history.push_back(detail::logistic_objective(logits, targets, alpha, params.reg));
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t epoch = 0; epoch < params.epochs; ++epoch) {
    double gb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      resid[i] = detail::sigmoid(logits[i]) - targets[i];
      gb += resid[i];
    }
    for (std::size_t j = 0; j < n; ++j) {
      double g = 0.0;
      for (std::size_t i = 0; i < n; ++i) g += k(i, j) * resid[i];
      grad[j] = g * inv_n + params.reg * alpha[j];
    }
    for (std::size_t j = 0; j < n; ++j) alpha[j] -= params.lr * grad[j];
    bias -= params.lr * gb * inv_n;
    refresh_logits();
    const double loss = detail::logistic_objective(logits, targets, alpha, params.reg);
    if (!std::isfinite(loss)) {
      throw TrainingError("training diverged: non-finite loss at epoch " + std::to_string(epoch + 1) +
                          "; reduce lr (lr=" + detail::format_double(params.lr) + ")");
    }
    result.loss_history.push_back(loss);
  }

  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    correct += (logits[i] > 0.0) == (targets[i] == 1.0) ? 1 : 0;
  }
  result.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  result.model.support_set = train.rows;
  result.model.dual_coeffs = std::move(alpha);
  result.model.bias = bias;
  result.model.kernel = kernel;
  result.model.class_ids = {neg, pos};
  result.model.dim = train.dim;
  return result;
}

class BuiltinScorer final : public Scorer {
 public:
  explicit BuiltinScorer(KernelLogisticModel model) : model_(std::move(model)) {}
  std::size_t dim() const override { return model_.dim; }
  std::vector<int> class_ids() const override { return model_.class_ids; }
  ScoreVector score(const SparseVector& x) const override { return predict_proba(model_, x); }
  std::string describe() const override {
    return "builtin:kernel-logistic-rbf(gamma=" + detail::format_double(*model_.kernel.gamma) + ")";
  }
  const KernelLogisticModel& model() const noexcept { return model_; }

 private:
  KernelLogisticModel model_;
};

// ---- model file -----------------------------------------------------------

inline nlohmann::ordered_json model_to_json(const KernelLogisticModel& m) {
  nlohmann::ordered_json j;
  j["kind"] = "kernel_logistic";
  j["kernel"] = to_string(m.kernel.kind);
  j["gamma"] = m.kernel.gamma.value_or(0.0);
  j["bias"] = m.bias;
  j["dual_coeffs"] = m.dual_coeffs;
  auto support = nlohmann::ordered_json::array();
  for (const auto& sv : m.support_set) {
    nlohmann::ordered_json row;
    row["indices"] = std::vector<std::uint32_t>(sv.indices().begin(), sv.indices().end());
    row["values"] = std::vector<double>(sv.values().begin(), sv.values().end());
    support.push_back(std::move(row));
  }
  j["support_set"] = std::move(support);
  j["class_ids"] = m.class_ids;
  j["dim"] = m.dim;
  return j;
}

inline KernelLogisticModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("kind").get<std::string>() != "kernel_logistic") {
      throw ConfigError("unsupported model kind '" + j.at("kind").get<std::string>() + "'");
    }
    if (j.at("kernel").get<std::string>() != "rbf") throw ConfigError("model kernel must be rbf");
    KernelLogisticModel m;
    m.dim = j.at("dim").get<std::size_t>();
    m.kernel = KernelSpec::rbf(j.at("gamma").get<double>());
    m.bias = j.at("bias").get<double>();
    m.dual_coeffs = j.at("dual_coeffs").get<std::vector<double>>();
    m.class_ids = j.at("class_ids").get<std::vector<int>>();
    for (const auto& row : j.at("support_set")) {
      m.support_set.push_back(SparseVector::from_sorted(
          m.dim, row.at("indices").get<std::vector<std::uint32_t>>(),
          row.at("values").get<std::vector<double>>()));
    }
    if (m.dual_coeffs.size() != m.support_set.size()) {
      throw ConfigError("dual_coeffs and support_set differ in length");
    }
    if (m.class_ids.size() != 2) throw ConfigError("model must have exactly two class ids");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model file: ") + e.what());
  }
}

inline void save_model(const KernelLogisticModel& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write model '" + path + "'");
  out << model_to_json(m).dump() << '\n';
}

inline KernelLogisticModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed model file: ") + e.what());
  }
  return model_from_json(j);
}

}  // namespace lime_shift
