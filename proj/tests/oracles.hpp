#pragma once

#include <algorithm>

// Reference implementations used only by tests. They work on plain dense
// std::vector data and share no code path with the library.

#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <vector>

namespace oracle {

using Dense = std::vector<double>;
using DenseSet = std::vector<Dense>;

inline double cosine(const Dense& a, const Dense& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0 || bb == 0) return 0.0;
  // Separate roots: sqrt(a*a) == |a| exactly, so parallel vectors give 1.
  // Cauchy-Schwarz bounds the ratio; rounding can still overshoot by an ulp.
  return std::clamp(ab / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

inline double rbf(const Dense& a, const Dense& b, double gamma) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return std::exp(-gamma * d);
}

// Naive triple-loop biased MMD.
template <typename K>
double mmd_biased(const DenseSet& x, const DenseSet& y, K k) {
  const double m = static_cast<double>(x.size());
  long double xx = 0, yy = 0, xy = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j) xx += k(x[i], x[j]);
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j) yy += k(y[i], y[j]);
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j) xy += k(x[i], y[j]);
  const long double v = (xx + yy - 2 * xy) / (m * m);
  return v > 0 ? std::sqrt(static_cast<double>(v)) : 0.0;
}

// Weighted correlation of column j with the target, both centered on their
// weighted means.
inline double weighted_correlation(const std::vector<Dense>& rows, std::size_t j, const Dense& w,
                                   const Dense& y) {
  double sw = 0, mx = 0, my = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    sw += w[i];
    mx += w[i] * rows[i][j];
    my += w[i] * y[i];
  }
  mx /= sw;
  my /= sw;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double dx = rows[i][j] - mx, dy = y[i] - my;
    sxy += w[i] * dx * dy;
    sxx += w[i] * dx * dx;
    syy += w[i] * dy * dy;
  }
  if (sxx <= 1e-20 || syy <= 1e-20) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

// Solves A x = b by Gaussian elimination with partial pivoting.
inline Dense solve(std::vector<Dense> a, Dense b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    if (std::abs(a[piv][c]) < 1e-300) throw std::runtime_error("singular");
    std::swap(a[piv], a[c]);
    std::swap(b[piv], b[c]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  Dense x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[i][k] * x[k];
    x[i] = s / a[i][i];
  }
  return x;
}

// Weighted least squares with an explicit intercept column and ridge on the
// non-intercept coefficients. Returns {w_1..w_p, b}.
inline Dense weighted_ridge(const std::vector<Dense>& rows, const Dense& w, const Dense& y, double ridge) {
  const std::size_t p = rows.empty() ? 0 : rows[0].size();
  std::vector<Dense> a(p + 1, Dense(p + 1, 0.0));
  Dense rhs(p + 1, 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Dense r = rows[i];
    r.push_back(1.0);
    for (std::size_t u = 0; u <= p; ++u) {
      rhs[u] += w[i] * r[u] * y[i];
      for (std::size_t v = 0; v <= p; ++v) a[u][v] += w[i] * r[u] * r[v];
    }
  }
  for (std::size_t u = 0; u < p; ++u) a[u][u] += ridge;
  return solve(a, rhs);
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Straightforward dense gradient descent for kernel logistic regression.
// Returns {alpha..., bias}.
inline Dense kernel_logistic_gd(const std::vector<Dense>& k, const Dense& t, double reg, std::size_t epochs,
                                double lr) {
  const std::size_t n = t.size();
  Dense alpha(n, 0.0);
  double b = 0.0;
  for (std::size_t e = 0; e < epochs; ++e) {
    Dense r(n);
    double gb = 0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = b;
      for (std::size_t j = 0; j < n; ++j) s += k[i][j] * alpha[j];
      r[i] = sigmoid(s) - t[i];
      gb += r[i];
    }
    Dense g(n);
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) s += k[i][j] * r[i];
      g[j] = s / n + reg * alpha[j];
    }
    for (std::size_t j = 0; j < n; ++j) alpha[j] -= lr * g[j];
    b -= lr * gb / n;
  }
  alpha.push_back(b);
  return alpha;
}

}  // namespace oracle
