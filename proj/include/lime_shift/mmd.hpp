#pragma once

#include <cmath>
#include <span>

#include "lime_shift/numkit.hpp"

namespace lime_shift {

struct TwoSampleResult {
  double mmd_b = 0.0;
  // m * mmd_b^2; grows with m under a fixed alternative.
  double scaled_stat = 0.0;
  double threshold = 0.0;
  double alpha = 0.05;
  std::size_t m = 0;
  bool reject = false;
};

namespace detail {

inline double mean_kernel(std::span<const SparseVector> xs, std::span<const SparseVector> ys,
                          const KernelSpec& kernel, bool same) {
  CompensatedSum s;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (same) {
      s.add(evaluate(kernel, xs[i], xs[i]));
      for (std::size_t j = i + 1; j < ys.size(); ++j) s.add(2.0 * evaluate(kernel, xs[i], ys[j]));
    } else {
      for (std::size_t j = 0; j < ys.size(); ++j) s.add(evaluate(kernel, xs[i], ys[j]));
    }
  }
  return s.value() / (static_cast<double>(xs.size()) * static_cast<double>(ys.size()));
}

}  // namespace detail

// Biased (V-statistic) MMD over equally sized samples.
inline double mmd_biased(std::span<const SparseVector> xs, std::span<const SparseVector> ys,
                         const KernelSpec& kernel) {
  if (xs.empty() || xs.size() != ys.size()) {
    throw ContractViolation("mmd requires equal, non-zero sample sizes (got " +
                            std::to_string(xs.size()) + " and " + std::to_string(ys.size()) + ")");
  }
  if (!kernel.resolved()) {
    throw ConfigError("rbf kernel gamma unresolved (median-heuristic sentinel)");
  }
  check_shared_dim(xs, ys);
  const double kxx = detail::mean_kernel(xs, xs, kernel, true);
  const double kyy = detail::mean_kernel(ys, ys, kernel, true);
  const double kxy = detail::mean_kernel(xs, ys, kernel, false);
  return std::sqrt(std::max(0.0, kxx + kyy - 2.0 * kxy));
}

// Acceptance-region boundary sqrt(2K/m) * (1 + sqrt(2 log(1/alpha))).
inline double mmd_threshold(std::size_t m, double alpha, double kernel_bound) {
  if (m < 1) throw ContractViolation("threshold needs m >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ContractViolation("alpha must lie in (0, 1)");
  if (!(kernel_bound > 0.0)) throw ContractViolation("kernel bound must be positive");
  return std::sqrt(2.0 * kernel_bound / static_cast<double>(m)) *
         (1.0 + std::sqrt(2.0 * std::log(1.0 / alpha)));
}

// The kernel must already be resolved; see `two_sample_test_resolving`.
inline TwoSampleResult two_sample_test(std::span<const SparseVector> xs,
                                       std::span<const SparseVector> ys, const KernelSpec& kernel,
                                       double alpha) {
  TwoSampleResult r;
  r.alpha = alpha;
  r.m = xs.size();
  r.threshold = mmd_threshold(r.m, alpha, kernel.bound);
  r.mmd_b = mmd_biased(xs, ys, kernel);
  r.scaled_stat = static_cast<double>(r.m) * r.mmd_b * r.mmd_b;
  r.reject = r.mmd_b > r.threshold;
  return r;
}

// Resolves a median-heuristic rbf spec on X u Y, then tests.
inline TwoSampleResult two_sample_test_resolving(std::span<const SparseVector> xs,
                                                 std::span<const SparseVector> ys,
                                                 const KernelSpec& kernel, double alpha) {
  if (kernel.resolved()) return two_sample_test(xs, ys, kernel, alpha);
  SampleSet pooled(xs.begin(), xs.end());
  pooled.insert(pooled.end(), ys.begin(), ys.end());
  return two_sample_test(xs, ys, resolve(kernel, pooled), alpha);
}

}  // namespace lime_shift
