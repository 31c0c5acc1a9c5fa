#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "lime_shift/blackbox.hpp"
#include "lime_shift/lars.hpp"
#include "lime_shift/numkit.hpp"
#include "lime_shift/random.hpp"

namespace lime_shift {

// Rows x columns matrix of 0/1 over the explained instance's support.
struct BinaryMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> data;

  BinaryMatrix() = default;
  BinaryMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0) {}
  std::uint8_t operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  std::uint8_t& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  std::span<const std::uint8_t> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

  Eigen::MatrixXd to_dense(std::span<const std::size_t> columns) const {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t k = 0; k < columns.size(); ++k) {
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = (*this)(i, columns[k]);
      }
    }
    return m;
  }
  Eigen::MatrixXd to_dense() const {
    std::vector<std::size_t> all(cols);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return to_dense(all);
  }
};

struct PerturbationSet {
  SparseVector parent;
  std::vector<SparseVector> z_rows;
  BinaryMatrix z_binary;
  std::vector<double> proximities;
};

// Draws one perturbation of `x`: keep-count k = 1 + floor(u * d_nz), then
// k support positions by partial Fisher-Yates. Returns retained positions in
// ascending order.
template <UniformSource S>
std::vector<std::size_t> draw_retained_positions(std::size_t d_nz, S& uniforms) {
  const double u = static_cast<double>(uniforms.next());
  std::size_t k = 1 + static_cast<std::size_t>(u * static_cast<double>(d_nz));
  k = std::clamp<std::size_t>(k, 1, d_nz);
  std::vector<std::size_t> positions(d_nz);
  std::iota(positions.begin(), positions.end(), std::size_t{0});
  partial_fisher_yates(std::span<std::size_t>(positions), k, uniforms);
  positions.resize(k);
  std::sort(positions.begin(), positions.end());
  return positions;
}

namespace detail {

inline void require_support(const SparseVector& x) {
  if (x.empty()) throw ContractViolation("instance has no non-zero features to perturb");
}

}  // namespace detail

// All n rows drawn from a single flat uniform stream.
template <UniformSource S>
PerturbationSet perturb(const SparseVector& x, std::size_t n, S& uniforms) {
  detail::require_support(x);
  if (n < 1) throw ContractViolation("number of perturbations must be >= 1");
  PerturbationSet set;
  set.parent = x;
  set.z_rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    set.z_rows.push_back(x.restrict_to_positions(draw_retained_positions(x.nnz(), uniforms)));
  }
  return set;
}

// Row i uses its own counter stream keyed by (key, i).
inline PerturbationSet perturb(const SparseVector& x, std::size_t n, const StreamKey& key) {
  detail::require_support(x);
  if (n < 1) throw ContractViolation("number of perturbations must be >= 1");
  PerturbationSet set;
  set.parent = x;
  set.z_rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    CounterStream stream(key, i);
    set.z_rows.push_back(x.restrict_to_positions(draw_retained_positions(x.nnz(), stream)));
  }
  return set;
}

inline BinaryMatrix to_interpretable(const PerturbationSet& set) {
  const auto parent_idx = set.parent.indices();
  BinaryMatrix m(set.z_rows.size(), parent_idx.size());
  for (std::size_t i = 0; i < set.z_rows.size(); ++i) {
    const auto zi = set.z_rows[i].indices();
    std::size_t p = 0;
    for (std::uint32_t f : zi) {
      while (p < parent_idx.size() && parent_idx[p] < f) ++p;
      if (p == parent_idx.size() || parent_idx[p] != f) {
        throw ContractViolation("perturbation retains feature " + std::to_string(f) +
                                " outside the parent support");
      }
      m(i, p) = 1;
    }
  }
  return m;
}

inline std::vector<double> proximity_weights(const PerturbationSet& set, const KernelSpec& pi) {
  std::vector<double> d;
  d.reserve(set.z_rows.size());
  for (const auto& z : set.z_rows) d.push_back(evaluate(pi, z, set.parent));
  return d;
}

// Weighted squared error sum D_i (f_i - g_i)^2.
inline double lime_loss(std::span<const double> f_scores, std::span<const double> g_scores,
                        std::span<const double> weights) {
  if (f_scores.size() != g_scores.size() || f_scores.size() != weights.size()) {
    throw ContractViolation("lime_loss inputs differ in length");
  }
  CompensatedSum s;
  for (std::size_t i = 0; i < f_scores.size(); ++i) {
    const double r = f_scores[i] - g_scores[i];
    s.add(weights[i] * r * r);
  }
  return s.value();
}

struct FeatureWeight {
  std::uint32_t feature_id = 0;
  // Position within the explained instance's support.
  std::size_t position = 0;
  double weight = 0.0;

  friend bool operator==(const FeatureWeight&, const FeatureWeight&) = default;
};

struct Explanation {
  int class_id = 0;
  // Sorted by |weight| descending, ties by ascending feature id.
  std::vector<FeatureWeight> features;
  double intercept = 0.0;
  // Feature ids in the order they entered the regularization path.
  std::vector<std::uint32_t> selected;
  double loss = 0.0;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const Explanation&, const Explanation&) = default;
};

// g applied to a row of the interpretable representation.
inline double surrogate_score(const Explanation& expl, std::span<const std::uint8_t> row) {
  double s = expl.intercept;
  for (const auto& f : expl.features) {
    if (f.position >= row.size()) throw ContractViolation("row shorter than explained support");
    if (row[f.position]) s += f.weight;
  }
  return s;
}

// g at the explained instance itself (all features retained).
inline double surrogate_at_instance(const Explanation& expl) {
  double s = expl.intercept;
  for (const auto& f : expl.features) s += f.weight;
  return s;
}

struct ExplainConfig {
  std::size_t num_samples = 5000;
  std::size_t num_features = 6;
  KernelSpec proximity = KernelSpec::cosine();
  double ridge = 1.0;
  std::uint64_t seed = 0;
  // Folded into the random stream key so audits stay schedule-independent.
  std::uint64_t instance_id = 0;
};

// Everything the pipeline produced along the way.
struct ExplainTrace {
  Explanation explanation;
  PerturbationSet set;
  std::vector<ScoreVector> z_scores;
  std::vector<double> targets;
  std::vector<double> fitted;
};

namespace detail {

template <typename F>
auto run_stage(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, e);
  }
}

}  // namespace detail

inline ExplainTrace explain_traced(const SparseVector& x, int y, const Scorer& f,
                                   const ExplainConfig& cfg) {
  if (x.dim() != f.dim()) {
    throw ContractViolation("instance dim " + std::to_string(x.dim()) + " does not match scorer dim " +
                            std::to_string(f.dim()));
  }
  ExplainTrace t;
  const StreamKey key{cfg.seed, cfg.instance_id, cfg.num_samples, StreamPurpose::perturbation};
  t.set = detail::run_stage("perturb", [&] { return perturb(x, cfg.num_samples, key); });
  t.set.z_binary = detail::run_stage("to_interpretable", [&] { return to_interpretable(t.set); });
  t.set.proximities =
      detail::run_stage("proximity_weights", [&] { return proximity_weights(t.set, cfg.proximity); });
  t.z_scores = detail::run_stage("score", [&] { return f.score_batch(t.set.z_rows); });
  t.targets.reserve(t.z_scores.size());
  for (const auto& s : t.z_scores) t.targets.push_back(s.of(y));

  const Eigen::MatrixXd design = t.set.z_binary.to_dense();
  const auto cols = detail::run_stage("lars_lasso_select", [&] {
    return lars_lasso_select(design, t.set.proximities, t.targets, cfg.num_features);
  });
  const RidgeFit fit = detail::run_stage("fit_weighted_ridge", [&] {
    return fit_weighted_ridge(t.set.z_binary.to_dense(cols), t.set.proximities, t.targets, cfg.ridge);
  });

  Explanation& e = t.explanation;
  e.class_id = y;
  e.intercept = fit.intercept;
  e.n_samples = cfg.num_samples;
  e.seed = cfg.seed;
  const auto support = x.indices();
  for (std::size_t k = 0; k < cols.size(); ++k) {
    e.selected.push_back(support[cols[k]]);
    e.features.push_back({support[cols[k]], cols[k], fit.weights[k]});
  }
  std::sort(e.features.begin(), e.features.end(), [](const FeatureWeight& a, const FeatureWeight& b) {
    const double aa = std::abs(a.weight), bb = std::abs(b.weight);
    if (aa != bb) return aa > bb;
    return a.feature_id < b.feature_id;
  });
  if (e.features.size() > cfg.num_features) e.features.resize(cfg.num_features);

  t.fitted.reserve(t.targets.size());
  for (std::size_t i = 0; i < t.set.z_binary.rows; ++i) {
    t.fitted.push_back(surrogate_score(e, t.set.z_binary.row(i)));
  }
  e.loss = lime_loss(t.targets, t.fitted, t.set.proximities);
  return t;
}

inline Explanation explain(const SparseVector& x, int y, const Scorer& f, const ExplainConfig& cfg) {
  return explain_traced(x, y, f, cfg).explanation;
}

}  // namespace lime_shift
