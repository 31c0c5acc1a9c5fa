#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lime_shift/error.hpp"

namespace lime_shift {

// Neumaier's variant of Kahan summation. Used wherever a sum runs over
// Gram-matrix sized term counts.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  CompensatedSum& operator+=(double x) noexcept {
    add(x);
    return *this;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double compensated_sum(std::span<const double> xs) noexcept {
  CompensatedSum s;
  for (double x : xs) s.add(x);
  return s.value();
}

// Immutable sparse vector in canonical form: strictly increasing indices,
// no stored zeros, finite values.
class SparseVector {
 public:
  SparseVector() = default;

  // Builds from arbitrary (index, value) pairs. Pairs are sorted, explicit
  // zeros dropped. Duplicate indices, out-of-range indices and non-finite
  // values are rejected.
  static SparseVector from_pairs(std::size_t dim,
                                 std::vector<std::pair<std::uint32_t, double>> pairs) {
    std::sort(pairs.begin(), pairs.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::uint32_t> idx;
    std::vector<double> val;
    idx.reserve(pairs.size());
    val.reserve(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      const auto [j, v] = pairs[i];
      if (i > 0 && pairs[i - 1].first == j) {
        throw ContractViolation("duplicate feature index " + std::to_string(j));
      }
      if (j >= dim) {
        throw ContractViolation("feature index " + std::to_string(j) +
                                " out of range for dim " + std::to_string(dim));
      }
      if (!std::isfinite(v)) {
        throw ContractViolation("non-finite value at feature " + std::to_string(j));
      }
      if (v == 0.0) continue;
      idx.push_back(j);
      val.push_back(v);
    }
    return SparseVector(dim, std::move(idx), std::move(val));
  }

  // Builds from parallel arrays that must already be strictly increasing.
  static SparseVector from_sorted(std::size_t dim, std::vector<std::uint32_t> indices,
                                  std::vector<double> values) {
    if (indices.size() != values.size()) {
      throw ContractViolation("indices and values differ in length");
    }
    std::vector<std::pair<std::uint32_t, double>> pairs;
    pairs.reserve(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
      if (i > 0 && indices[i] <= indices[i - 1]) {
        throw ContractViolation("indices not strictly increasing");
      }
      pairs.emplace_back(indices[i], values[i]);
    }
    return from_pairs(dim, std::move(pairs));
  }

  static SparseVector from_dense(std::span<const double> dense) {
    std::vector<std::pair<std::uint32_t, double>> pairs;
    for (std::size_t i = 0; i < dense.size(); ++i) {
      if (dense[i] != 0.0) pairs.emplace_back(static_cast<std::uint32_t>(i), dense[i]);
    }
    return from_pairs(dense.size(), std::move(pairs));
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t nnz() const noexcept { return indices_.size(); }
  bool empty() const noexcept { return indices_.empty(); }
  std::span<const std::uint32_t> indices() const noexcept { return indices_; }
  std::span<const double> values() const noexcept { return values_; }
  double squared_norm() const noexcept { return squared_norm_; }

  // Keeps only the stored entries at the given support positions (ascending).
  SparseVector restrict_to_positions(std::span<const std::size_t> positions) const {
    std::vector<std::uint32_t> idx;
    std::vector<double> val;
    idx.reserve(positions.size());
    val.reserve(positions.size());
    for (std::size_t p : positions) {
      idx.push_back(indices_.at(p));
      val.push_back(values_.at(p));
    }
    return SparseVector(dim_, std::move(idx), std::move(val));
  }

  std::vector<double> to_dense() const {
    std::vector<double> out(dim_, 0.0);
    for (std::size_t i = 0; i < indices_.size(); ++i) out[indices_[i]] = values_[i];
    return out;
  }

  friend bool operator==(const SparseVector& a, const SparseVector& b) noexcept {
    return a.dim_ == b.dim_ && a.indices_ == b.indices_ && a.values_ == b.values_;
  }

 private:
  SparseVector(std::size_t dim, std::vector<std::uint32_t> idx, std::vector<double> val)
      : dim_(dim), indices_(std::move(idx)), values_(std::move(val)) {
    double s = 0.0;
    for (double v : values_) s += v * v;
    squared_norm_ = s;
  }

  std::size_t dim_ = 0;
  std::vector<std::uint32_t> indices_;
  std::vector<double> values_;
  double squared_norm_ = 0.0;
};

using SampleSet = std::vector<SparseVector>;

enum class KernelKind { cosine, rbf };

inline const char* to_string(KernelKind k) noexcept {
  return k == KernelKind::cosine ? "cosine" : "rbf";
}

// Kernel choice plus the bound K with k(u,u) <= K. An rbf spec without a
// gamma stands for the median heuristic and must be resolved against a
// pooled sample before use.
struct KernelSpec {
  KernelKind kind = KernelKind::cosine;
  std::optional<double> gamma;
  double bound = 1.0;

  static KernelSpec cosine() { return {KernelKind::cosine, std::nullopt, 1.0}; }
  static KernelSpec rbf(double gamma) {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) {
      throw ContractViolation("rbf gamma must be positive and finite");
    }
    return {KernelKind::rbf, gamma, 1.0};
  }
  static KernelSpec rbf_median_heuristic() { return {KernelKind::rbf, std::nullopt, 1.0}; }

  bool resolved() const noexcept { return kind == KernelKind::cosine || gamma.has_value(); }

  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

namespace detail {

inline void check_dims(const SparseVector& u, const SparseVector& v) {
  if (u.dim() != v.dim()) {
    throw ContractViolation("dimension mismatch: " + std::to_string(u.dim()) + " vs " +
                            std::to_string(v.dim()));
  }
}

}  // namespace detail

inline double dot(const SparseVector& u, const SparseVector& v) {
  detail::check_dims(u, v);
  const auto ui = u.indices();
  const auto vi = v.indices();
  const auto uv = u.values();
  const auto vv = v.values();
  double acc = 0.0;
  std::size_t a = 0, b = 0;
  while (a < ui.size() && b < vi.size()) {
    if (ui[a] == vi[b]) {
      acc += uv[a] * vv[b];
      ++a;
      ++b;
    } else if (ui[a] < vi[b]) {
      ++a;
    } else {
      ++b;
    }
  }
  return acc;
}

inline double squared_distance(const SparseVector& u, const SparseVector& v) {
  detail::check_dims(u, v);
  const auto ui = u.indices();
  const auto vi = v.indices();
  const auto uv = u.values();
  const auto vv = v.values();
  double acc = 0.0;
  std::size_t a = 0, b = 0;
  while (a < ui.size() || b < vi.size()) {
    double d;
    if (b == vi.size() || (a < ui.size() && ui[a] < vi[b])) {
      d = uv[a++];
    } else if (a == ui.size() || vi[b] < ui[a]) {
      d = vv[b++];
    } else {
      d = uv[a++] - vv[b++];
    }
    acc += d * d;
  }
  return acc;
}

// Cosine similarity; 0 when either side is the zero vector.
inline double cosine_kernel(const SparseVector& u, const SparseVector& v) {
  const double d = dot(u, v);
  if (u.squared_norm() == 0.0 || v.squared_norm() == 0.0) return 0.0;
  const double c = d / (std::sqrt(u.squared_norm()) * std::sqrt(v.squared_norm()));
  return std::clamp(c, -1.0, 1.0);
}

inline double rbf_kernel(const SparseVector& u, const SparseVector& v, double gamma) {
  if (!(gamma > 0.0)) throw ContractViolation("rbf gamma must be positive");
  return std::exp(-gamma * squared_distance(u, v));
}

inline double evaluate(const KernelSpec& k, const SparseVector& u, const SparseVector& v) {
  switch (k.kind) {
    case KernelKind::cosine:
      return cosine_kernel(u, v);
    case KernelKind::rbf:
      if (!k.gamma) throw ConfigError("rbf kernel gamma unresolved (median-heuristic sentinel)");
      return rbf_kernel(u, v, *k.gamma);
  }
  return 0.0;
}

// Row-major dense matrix of kernel values.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

inline void check_shared_dim(std::span<const SparseVector> xs, std::span<const SparseVector> ys) {
  const SparseVector* first = !xs.empty() ? &xs.front() : (!ys.empty() ? &ys.front() : nullptr);
  if (first == nullptr) return;
  for (const auto& x : xs) detail::check_dims(*first, x);
  for (const auto& y : ys) detail::check_dims(*first, y);
}

inline Matrix gram(std::span<const SparseVector> xs, std::span<const SparseVector> ys,
                   const KernelSpec& kernel) {
  if (!kernel.resolved()) {
    throw ConfigError("rbf kernel gamma unresolved (median-heuristic sentinel)");
  }
  check_shared_dim(xs, ys);
  Matrix g(xs.size(), ys.size());
  const bool same = xs.data() == ys.data() && xs.size() == ys.size();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t j = same ? i : 0; j < ys.size(); ++j) {
      const double v = evaluate(kernel, xs[i], ys[j]);
      g(i, j) = v;
      if (same) g(j, i) = v;
    }
  }
  return g;
}

// gamma = 1 / (2 median^2) over all distinct pairwise Euclidean distances;
// falls back to 1 when the median distance is zero.
inline double median_heuristic_gamma(std::span<const SparseVector> pooled) {
  if (pooled.size() < 2) {
    throw ContractViolation("median heuristic needs at least 2 instances");
  }
  check_shared_dim(pooled, {});
  std::vector<double> d;
  d.reserve(pooled.size() * (pooled.size() - 1) / 2);
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    for (std::size_t j = i + 1; j < pooled.size(); ++j) {
      d.push_back(std::sqrt(squared_distance(pooled[i], pooled[j])));
    }
  }
  const std::size_t mid = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
  double median = d[mid];
  if (d.size() % 2 == 0) {
    const double lower =
        *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (lower + median);
  }
  if (median == 0.0) return 1.0;
  return 1.0 / (2.0 * median * median);
}

inline KernelSpec resolve(const KernelSpec& k, std::span<const SparseVector> pooled) {
  if (k.resolved()) return k;
  return KernelSpec::rbf(median_heuristic_gamma(pooled));
}

}  // namespace lime_shift
