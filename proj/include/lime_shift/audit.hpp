#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "lime_shift/blackbox.hpp"
#include "lime_shift/dataset.hpp"
#include "lime_shift/digest.hpp"
#include "lime_shift/lime.hpp"
#include "lime_shift/mmd.hpp"

namespace lime_shift {

// Agreement between black box and surrogate at x: 1 / (|f_y - g_y| + 1).
inline double fidelity(double f_y, double g_y) {
  if (!std::isfinite(f_y) || !std::isfinite(g_y)) {
    throw ContractViolation("fidelity needs finite scores");
  }
  return 1.0 / (std::abs(f_y - g_y) + 1.0);
}

inline double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw ContractViolation("pearson inputs differ in length");
  if (xs.size() < 2) throw ContractViolation("pearson needs at least 2 points");
  // Tested on the raw values: a rounded mean leaves spurious residuals.
  auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double a) { return a == v.front(); });
  };
  if (constant(xs) || constant(ys)) throw CorrelationUndefined("correlation undefined for constant input");
  const double n = static_cast<double>(xs.size());
  const double mx = compensated_sum(xs) / n;
  const double my = compensated_sum(ys) / n;
  CompensatedSum sxy, sxx, syy;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxy.add(dx * dy);
    sxx.add(dx * dx);
    syy.add(dy * dy);
  }
  if (sxx.value() == 0.0 || syy.value() == 0.0) {
    throw CorrelationUndefined("correlation undefined for constant input");
  }
  return std::clamp(sxy.value() / std::sqrt(sxx.value() * syy.value()), -1.0, 1.0);
}

// The n training rows most similar to x; ties by ascending training index.
inline std::vector<std::size_t> knn_reference_indices(std::span<const SparseVector> train,
                                                      const SparseVector& x, std::size_t n,
                                                      const KernelSpec& kernel) {
  if (n < 1) throw ContractViolation("reference size must be >= 1");
  if (n > train.size()) {
    throw ContractViolation("reference size " + std::to_string(n) + " exceeds training set size " +
                            std::to_string(train.size()));
  }
  std::vector<double> sim(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) sim[i] = evaluate(kernel, train[i], x);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(),
                    [&](std::size_t a, std::size_t b) {
                      if (sim[a] != sim[b]) return sim[a] > sim[b];
                      return a < b;
                    });
  order.resize(n);
  return order;
}

inline SampleSet knn_reference(std::span<const SparseVector> train, const SparseVector& x,
                               std::size_t n, const KernelSpec& kernel) {
  SampleSet out;
  for (std::size_t i : knn_reference_indices(train, x, n, kernel)) out.push_back(train[i]);
  return out;
}

// Indices of reference rows whose predicted class matches `target_class`,
// subsampled without replacement by partial Fisher-Yates.
template <UniformSource S>
std::vector<std::size_t> class_conditional_indices(std::span<const ScoreVector> reference_scores,
                                                   int target_class, std::size_t n, S& uniforms) {
  std::vector<std::size_t> matching;
  for (std::size_t i = 0; i < reference_scores.size(); ++i) {
    if (reference_scores[i].predicted_class() == target_class) matching.push_back(i);
  }
  if (matching.size() < n || matching.empty()) {
    throw AuditError("class-conditional reference: class " + std::to_string(target_class) + " has " +
                     std::to_string(matching.size()) + " matching instances, need " +
                     std::to_string(n));
  }
  partial_fisher_yates(std::span<std::size_t>(matching), n, uniforms);
  matching.resize(n);
  return matching;
}

template <UniformSource S>
SampleSet class_conditional_reference(std::span<const SparseVector> reference, const Scorer& f,
                                      const SparseVector& x, std::size_t n, S& uniforms) {
  const auto scores = f.score_batch(reference);
  const int target = f.score(x).predicted_class();
  SampleSet out;
  for (std::size_t i : class_conditional_indices(std::span<const ScoreVector>(scores), target, n, uniforms)) {
    out.push_back(reference[i]);
  }
  return out;
}

enum class ReferenceStrategy { knn, class_conditional };
enum class LabelSpace { score_vector, explained_class };
// perturbations: the real audit. null_draw: Z replaced by a second reference
// draw disjoint from the first. identity: Z replaced by the reference itself.
enum class ComparisonMode { perturbations, null_draw, identity };

inline const char* to_string(ReferenceStrategy s) {
  return s == ReferenceStrategy::knn ? "knn" : "class";
}
inline const char* to_string(LabelSpace s) {
  return s == LabelSpace::score_vector ? "vector" : "scalar";
}
inline const char* to_string(ComparisonMode m) {
  switch (m) {
    case ComparisonMode::perturbations: return "perturbations";
    case ComparisonMode::null_draw: return "null";
    case ComparisonMode::identity: return "identity";
  }
  return "?";
}

struct AuditConfig {
  std::uint64_t seed = 0;
  double alpha = 0.05;
  std::vector<std::size_t> n_grid = {2, 5, 10, 20, 50, 100, 200, 500};
  std::size_t num_features = 6;
  double ridge = 1.0;
  int class_id = 1;
  KernelSpec proximity = KernelSpec::cosine();
  KernelSpec data_kernel = KernelSpec::cosine();
  KernelSpec label_kernel = KernelSpec::rbf_median_heuristic();
  LabelSpace label_space = LabelSpace::score_vector;
  ReferenceStrategy reference = ReferenceStrategy::knn;
  ComparisonMode mode = ComparisonMode::perturbations;
  // Worker count; never affects results.
  std::size_t jobs = 1;

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
    if (n_grid.empty()) throw ConfigError("n grid must not be empty");
    for (std::size_t i = 0; i < n_grid.size(); ++i) {
      if (n_grid[i] < 1) throw ConfigError("n grid values must be >= 1");
      if (i > 0 && n_grid[i] <= n_grid[i - 1]) throw ConfigError("n grid must be strictly ascending");
    }
    if (num_features < 1) throw ConfigError("K must be >= 1");
    if (!(ridge >= 0.0)) throw ConfigError("ridge must be non-negative");
    if (jobs < 1) throw ConfigError("jobs must be >= 1");
  }
};

inline nlohmann::ordered_json kernel_to_json(const KernelSpec& k) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(k.kind);
  if (k.kind == KernelKind::rbf) {
    if (k.gamma) {
      j["gamma"] = *k.gamma;
    } else {
      j["gamma"] = "median-heuristic";
    }
  }
  j["bound"] = k.bound;
  return j;
}

inline KernelSpec kernel_from_json(const nlohmann::json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "cosine") return KernelSpec::cosine();
  if (kind != "rbf") throw ConfigError("unknown kernel kind '" + kind + "'");
  if (j.at("gamma").is_string()) return KernelSpec::rbf_median_heuristic();
  return KernelSpec::rbf(j.at("gamma").get<double>());
}

// Everything that influences results; `jobs` is deliberately absent.
inline nlohmann::ordered_json config_to_json(const AuditConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["alpha"] = c.alpha;
  j["n_grid"] = c.n_grid;
  j["num_features"] = c.num_features;
  j["ridge"] = c.ridge;
  j["class_id"] = c.class_id;
  j["proximity_kernel"] = kernel_to_json(c.proximity);
  j["data_kernel"] = kernel_to_json(c.data_kernel);
  j["label_kernel"] = kernel_to_json(c.label_kernel);
  j["label_space"] = to_string(c.label_space);
  j["reference"] = to_string(c.reference);
  j["mode"] = to_string(c.mode);
  return j;
}

struct AuditRow {
  std::size_t instance_id = 0;
  std::size_t n = 0;
  TwoSampleResult data_shift;
  TwoSampleResult label_shift;
  double fidelity = 1.0;
  double f_y_at_x = 0.0;
  double g_y_at_x = 0.0;
  double loss = 0.0;
};

// The samples behind one AuditRow, for recomputation checks.
struct AuditTrace {
  SampleSet reference;
  SampleSet comparison;
  SampleSet reference_points;
  SampleSet comparison_points;
  KernelSpec label_kernel;
};

// Scores of the training/reference pool, computed once per audit.
struct ReferencePool {
  const Dataset* data = nullptr;
  std::vector<ScoreVector> scores;

  static ReferencePool build(const Dataset& ds, const Scorer& f) {
    return {&ds, f.score_batch(ds.rows)};
  }
};

namespace detail {

inline SparseVector label_point(const ScoreVector& s, LabelSpace space, int class_id) {
  if (space == LabelSpace::explained_class) {
    return SparseVector::from_dense(std::vector<double>{s.of(class_id)});
  }
  return SparseVector::from_dense(s.scores);
}

struct ReferenceDraw {
  std::vector<std::size_t> reference;
  std::vector<std::size_t> second;  // null_draw only
};

inline ReferenceDraw draw_reference(const ReferencePool& pool, const SparseVector& x,
                                    const ScoreVector& fx, std::size_t instance_id, std::size_t n,
                                    const AuditConfig& cfg) {
  const auto& rows = pool.data->rows;
  ReferenceDraw out;
  const bool null_mode = cfg.mode == ComparisonMode::null_draw;
  if (!null_mode) {
    if (cfg.reference == ReferenceStrategy::knn) {
      out.reference = knn_reference_indices(rows, x, n, cfg.data_kernel);
    } else {
      CounterStream u(StreamKey{cfg.seed, instance_id, n, StreamPurpose::reference}, 0);
      out.reference =
          class_conditional_indices(std::span<const ScoreVector>(pool.scores), fx.predicted_class(), n, u);
    }
    return out;
  }
  // Null draw: a candidate pool of up to 2n rows is split at random into two
  // disjoint halves; when fewer than 2n candidates exist both halves shrink
  // to floor(pool / 2).
  std::vector<std::size_t> candidates;
  if (cfg.reference == ReferenceStrategy::knn) {
    candidates = knn_reference_indices(rows, x, std::min(2 * n, rows.size()), cfg.data_kernel);
  } else {
    for (std::size_t i = 0; i < pool.scores.size(); ++i) {
      if (pool.scores[i].predicted_class() == fx.predicted_class()) candidates.push_back(i);
    }
  }
  const std::size_t m = std::min(n, candidates.size() / 2);
  if (m < 1) throw AuditError("null draw: fewer than 2 candidate reference instances");
  CounterStream u(StreamKey{cfg.seed, instance_id, n, StreamPurpose::null_draw}, 0);
  partial_fisher_yates(std::span<std::size_t>(candidates), 2 * m, u);
  out.reference.assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(m));
  out.second.assign(candidates.begin() + static_cast<std::ptrdiff_t>(m),
                    candidates.begin() + static_cast<std::ptrdiff_t>(2 * m));
  return out;
}

}  // namespace detail

inline AuditRow audit_instance(const SparseVector& x, std::size_t instance_id, const Scorer& f,
                               const ReferencePool& pool, std::size_t n, const AuditConfig& cfg,
                               AuditTrace* trace = nullptr) {
  try {
    const int y = cfg.class_id;
    const ScoreVector fx = f.score(x);
    const auto draw = detail::draw_reference(pool, x, fx, instance_id, n, cfg);

    ExplainConfig ecfg;
    ecfg.num_samples = n;
    ecfg.num_features = cfg.num_features;
    ecfg.proximity = cfg.proximity;
    ecfg.ridge = cfg.ridge;
    ecfg.seed = cfg.seed;
    ecfg.instance_id = instance_id;
    ExplainTrace et = explain_traced(x, y, f, ecfg);

    AuditTrace local;
    AuditTrace& tr = trace ? *trace : local;
    tr.reference.clear();
    tr.reference_points.clear();
    for (std::size_t i : draw.reference) {
      tr.reference.push_back(pool.data->rows[i]);
      tr.reference_points.push_back(detail::label_point(pool.scores[i], cfg.label_space, y));
    }
    tr.comparison.clear();
    tr.comparison_points.clear();
    switch (cfg.mode) {
      case ComparisonMode::perturbations:
        tr.comparison = et.set.z_rows;
        for (const auto& s : et.z_scores) tr.comparison_points.push_back(detail::label_point(s, cfg.label_space, y));
        break;
      case ComparisonMode::null_draw:
        for (std::size_t i : draw.second) {
          tr.comparison.push_back(pool.data->rows[i]);
          tr.comparison_points.push_back(detail::label_point(pool.scores[i], cfg.label_space, y));
        }
        break;
      case ComparisonMode::identity:
        tr.comparison = tr.reference;
        tr.comparison_points = tr.reference_points;
        break;
    }
    if (tr.reference.size() != tr.comparison.size()) {
      throw AuditError("reference and comparison sets differ in size (" +
                       std::to_string(tr.reference.size()) + " vs " +
                       std::to_string(tr.comparison.size()) + ")");
    }

    AuditRow row;
    row.instance_id = instance_id;
    row.n = n;
    row.data_shift = two_sample_test(tr.reference, tr.comparison, cfg.data_kernel, cfg.alpha);
    SampleSet pooled = tr.reference_points;
    pooled.insert(pooled.end(), tr.comparison_points.begin(), tr.comparison_points.end());
    tr.label_kernel = resolve(cfg.label_kernel, pooled);
    row.label_shift = two_sample_test(tr.reference_points, tr.comparison_points, tr.label_kernel, cfg.alpha);
    row.f_y_at_x = fx.of(y);
    row.g_y_at_x = surrogate_at_instance(et.explanation);
    row.fidelity = fidelity(row.f_y_at_x, row.g_y_at_x);
    row.loss = et.explanation.loss;
    return row;
  } catch (const Error& e) {
    throw AuditError("instance " + std::to_string(instance_id) + " (n=" + std::to_string(n) +
                     "): " + e.what());
  }
}

struct AuditAggregate {
  std::size_t n = 0;
  std::size_t instances = 0;
  std::size_t reject = 0;
  double reject_fraction = 0.0;
  std::size_t fail = 0;
  double fail_fraction = 0.0;
  double mmd_mean = 0.0;
  double mmd_std = 0.0;
  double scaled_mean = 0.0;
  double scaled_std = 0.0;
  double fidelity_mean = 0.0;
  double fidelity_std = 0.0;
  std::optional<double> pearson_mmd_fidelity;
};

struct TestSummary {
  std::string test;  // "data_shift" or "label_shift"
  std::vector<AuditAggregate> per_n;
};

struct Provenance {
  std::uint64_t seed = 0;
  std::string config_digest;
  std::string train_digest;
  std::string test_digest;
  std::string version{kVersion};
  std::string scorer;
};

struct AuditReport {
  Provenance provenance;
  nlohmann::ordered_json config;
  std::vector<TestSummary> tests;
  std::vector<AuditRow> rows;
};

namespace detail {

// Sample mean and standard deviation (n - 1 denominator, 0 for one value).
inline std::pair<double, double> mean_std(std::span<const double> xs) {
  if (xs.empty()) return {0.0, 0.0};
  const double n = static_cast<double>(xs.size());
  const double mean = compensated_sum(xs) / n;
  if (xs.size() < 2) return {mean, 0.0};
  if (std::all_of(xs.begin(), xs.end(), [&](double a) { return a == xs.front(); })) return {xs.front(), 0.0};
  CompensatedSum ss;
  for (double x : xs) ss.add((x - mean) * (x - mean));
  return {mean, std::sqrt(ss.value() / (n - 1.0))};
}

inline AuditAggregate aggregate(std::size_t n, std::span<const AuditRow* const> rows, bool data) {
  AuditAggregate a;
  a.n = n;
  a.instances = rows.size();
  std::vector<double> mmd, scaled, fid;
  for (const AuditRow* r : rows) {
    const TwoSampleResult& t = data ? r->data_shift : r->label_shift;
    a.reject += t.reject ? 1 : 0;
    mmd.push_back(t.mmd_b);
    scaled.push_back(t.scaled_stat);
    fid.push_back(r->fidelity);
  }
  a.fail = a.instances - a.reject;
  if (a.instances > 0) {
    a.reject_fraction = static_cast<double>(a.reject) / static_cast<double>(a.instances);
    a.fail_fraction = static_cast<double>(a.fail) / static_cast<double>(a.instances);
  }
  std::tie(a.mmd_mean, a.mmd_std) = mean_std(mmd);
  std::tie(a.scaled_mean, a.scaled_std) = mean_std(scaled);
  std::tie(a.fidelity_mean, a.fidelity_std) = mean_std(fid);
  try {
    a.pearson_mmd_fidelity = pearson(mmd, fid);
  } catch (const Error&) {
    a.pearson_mmd_fidelity.reset();
  }
  return a;
}

}  // namespace detail

// Rows are ordered by (n, instance) so aggregation never depends on
// scheduling.
inline std::vector<TestSummary> summarize(const std::vector<AuditRow>& rows,
                                          std::span<const std::size_t> n_grid) {
  std::vector<TestSummary> out{{"data_shift", {}}, {"label_shift", {}}};
  for (std::size_t n : n_grid) {
    std::vector<const AuditRow*> at_n;
    for (const auto& r : rows) {
      if (r.n == n) at_n.push_back(&r);
    }
    out[0].per_n.push_back(detail::aggregate(n, at_n, true));
    out[1].per_n.push_back(detail::aggregate(n, at_n, false));
  }
  return out;
}

struct AuditFailure : Error {
  AuditFailure(const std::string& what, std::vector<AuditRow> partial, std::vector<std::string> failures)
      : Error("audit", what), partial_rows(std::move(partial)), failures(std::move(failures)) {}
  std::vector<AuditRow> partial_rows;
  std::vector<std::string> failures;
};

inline std::string dataset_digest(const Dataset& ds) { return digest_hex(format_svmlight(ds)); }

// Runs every (instance, n) pair, fanned out over cfg.jobs workers.
inline AuditReport audit_dataset(const Dataset& test, const Scorer& f, const Dataset& train,
                                 const AuditConfig& cfg) {
  cfg.validate();
  if (test.size() == 0) throw ConfigError("test set is empty");
  const ReferencePool pool = ReferencePool::build(train, f);

  const std::size_t n_tasks = cfg.n_grid.size() * test.size();
  std::vector<std::optional<AuditRow>> results(n_tasks);
  std::vector<std::string> errors(n_tasks);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t t; (t = next.fetch_add(1)) < n_tasks;) {
      const std::size_t gi = t / test.size();
      const std::size_t inst = t % test.size();
      try {
        results[t] = audit_instance(test.rows[inst], inst, f, pool, cfg.n_grid[gi], cfg);
      } catch (const std::exception& e) {
        errors[t] = e.what();
      }
    }
  };
  const std::size_t workers = std::min(cfg.jobs, n_tasks);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool_threads;
    for (std::size_t w = 0; w < workers; ++w) pool_threads.emplace_back(worker);
    for (auto& th : pool_threads) th.join();
  }

  AuditReport report;
  std::vector<std::string> failures;
  for (std::size_t t = 0; t < n_tasks; ++t) {
    if (results[t]) {
      report.rows.push_back(*results[t]);
    } else {
      failures.push_back(errors[t]);
    }
  }
  if (!failures.empty()) {
    std::string what = std::to_string(failures.size()) + " audit task(s) failed; first: " + failures.front();
    throw AuditFailure(what, std::move(report.rows), std::move(failures));
  }
  report.tests = summarize(report.rows, cfg.n_grid);
  report.config = config_to_json(cfg);
  report.provenance.seed = cfg.seed;
  report.provenance.config_digest = digest_hex(report.config.dump());
  report.provenance.train_digest = dataset_digest(train);
  report.provenance.test_digest = dataset_digest(test);
  report.provenance.scorer = f.describe();
  return report;
}

}  // namespace lime_shift
