#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "lime_shift/error.hpp"

namespace lime_shift {

// Weighted preprocessing shared by LARS: columns and target are centered on
// their D-weighted means, rows scaled by sqrt(D), columns scaled to unit
// norm. Columns whose weighted spread is numerically zero are flagged.
struct WeightedDesign {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<bool> informative;
};

inline WeightedDesign prepare_weighted_design(const Eigen::MatrixXd& design,
                                              std::span<const double> weights,
                                              std::span<const double> target) {
  const auto n = design.rows();
  const auto p = design.cols();
  if (static_cast<std::size_t>(n) != weights.size() || static_cast<std::size_t>(n) != target.size()) {
    throw ContractViolation("design, weights and target row counts differ");
  }
  Eigen::Map<const Eigen::VectorXd> w(weights.data(), n);
  Eigen::Map<const Eigen::VectorXd> t(target.data(), n);
  if ((w.array() < 0.0).any()) throw ContractViolation("weights must be non-negative");
  const double total = w.sum();
  if (!(total > 0.0)) throw ContractViolation("weights sum to zero");

  const Eigen::VectorXd sw = w.array().sqrt();
  const Eigen::RowVectorXd col_mean = (w.transpose() * design) / total;
  const double y_mean = w.dot(t) / total;

  WeightedDesign out;
  out.x = (design.rowwise() - col_mean).array().colwise() * sw.array();
  out.y = (t.array() - y_mean) * sw.array();
  out.informative.assign(static_cast<std::size_t>(p), false);
  const double tol = 1e-10 * std::sqrt(total);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double norm = out.x.col(j).norm();
    if (norm > tol) {
      out.x.col(j) /= norm;
      out.informative[static_cast<std::size_t>(j)] = true;
    } else {
      out.x.col(j).setZero();
    }
  }
  return out;
}

// LARS with the lasso modification. Walks the path until `max_active`
// variables are active or the path is exhausted and returns the active set
// in entry order. Columns that are linearly dependent on the active set when
// they would enter are never admitted.
inline std::vector<std::size_t> lars_lasso_path(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                                const std::vector<bool>& informative,
                                                std::size_t max_active) {
  const auto p = x.cols();
  std::vector<std::size_t> active;
  std::vector<bool> is_active(static_cast<std::size_t>(p), false);
  std::vector<bool> banned(static_cast<std::size_t>(p), false);
  for (Eigen::Index j = 0; j < p; ++j) banned[static_cast<std::size_t>(j)] = !informative[static_cast<std::size_t>(j)];

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(x.rows());
  const double tiny = 1e-12 * std::max(1.0, y.norm());
  bool need_add = true;
  std::size_t dropped = std::numeric_limits<std::size_t>::max();

  for (int iter = 0; iter < 8 * static_cast<int>(p) + 64 && active.size() < max_active; ++iter) {
    const Eigen::VectorXd c = x.transpose() * (y - mu);
    double big_c = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (!banned[static_cast<std::size_t>(j)]) big_c = std::max(big_c, std::abs(c(j)));
    }
    if (big_c <= tiny) break;

    if (need_add) {
      std::size_t best = std::numeric_limits<std::size_t>::max();
      double best_val = -1.0;
      for (Eigen::Index j = 0; j < p; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        if (banned[ju] || is_active[ju] || ju == dropped) continue;
        if (std::abs(c(j)) > best_val) {
          best_val = std::abs(c(j));
          best = ju;
        }
      }
      if (best == std::numeric_limits<std::size_t>::max()) break;
      if (!active.empty()) {
        Eigen::MatrixXd xa(x.rows(), static_cast<Eigen::Index>(active.size()));
        for (std::size_t k = 0; k < active.size(); ++k) xa.col(static_cast<Eigen::Index>(k)) = x.col(static_cast<Eigen::Index>(active[k]));
        const Eigen::VectorXd coef = xa.colPivHouseholderQr().solve(x.col(static_cast<Eigen::Index>(best)));
        if ((x.col(static_cast<Eigen::Index>(best)) - xa * coef).norm() < 1e-8) {
          banned[best] = true;
          continue;
        }
      }
      active.push_back(best);
      is_active[best] = true;
      if (active.size() >= max_active) break;
    }
    dropped = std::numeric_limits<std::size_t>::max();

    const auto na = static_cast<Eigen::Index>(active.size());
    Eigen::MatrixXd xa(x.rows(), na);
    Eigen::VectorXd sign(na);
    for (Eigen::Index k = 0; k < na; ++k) {
      xa.col(k) = x.col(static_cast<Eigen::Index>(active[static_cast<std::size_t>(k)]));
      sign(k) = c(static_cast<Eigen::Index>(active[static_cast<std::size_t>(k)])) >= 0.0 ? 1.0 : -1.0;
    }
    const Eigen::MatrixXd g = xa.transpose() * xa;
    const Eigen::VectorXd gi_s = g.ldlt().solve(sign);
    const double s_gi_s = sign.dot(gi_s);
    if (!(s_gi_s > 0.0) || !std::isfinite(s_gi_s)) break;
    const double a_norm = 1.0 / std::sqrt(s_gi_s);
    const Eigen::VectorXd w = a_norm * gi_s;
    const Eigen::VectorXd u = xa * w;
    const Eigen::VectorXd a = x.transpose() * u;

    double step = big_c / a_norm;
    bool any_inactive = false;
    for (Eigen::Index j = 0; j < p; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      if (banned[ju] || is_active[ju]) continue;
      any_inactive = true;
      for (double cand : {(big_c - c(j)) / (a_norm - a(j)), (big_c + c(j)) / (a_norm + a(j))}) {
        if (cand > 1e-15 && cand < step) step = cand;
      }
    }
    std::size_t drop_k = std::numeric_limits<std::size_t>::max();
    for (Eigen::Index k = 0; k < na; ++k) {
      const double b = beta(static_cast<Eigen::Index>(active[static_cast<std::size_t>(k)]));
      if (w(k) == 0.0 || b == 0.0) continue;
      const double cand = -b / w(k);
      if (cand > 1e-15 && cand < step) {
        step = cand;
        drop_k = static_cast<std::size_t>(k);
      }
    }
    mu += step * u;
    for (Eigen::Index k = 0; k < na; ++k) {
      beta(static_cast<Eigen::Index>(active[static_cast<std::size_t>(k)])) += step * w(k);
    }
    if (drop_k != std::numeric_limits<std::size_t>::max()) {
      const std::size_t var = active[drop_k];
      beta(static_cast<Eigen::Index>(var)) = 0.0;
      is_active[var] = false;
      active.erase(active.begin() + static_cast<std::ptrdiff_t>(drop_k));
      dropped = var;
      need_add = false;
    } else {
      need_add = true;
      if (!any_inactive) break;
    }
  }
  return active;
}

// Feature selection by the weighted LARS-lasso path; returns column ids in
// entry order, at most `k` of them.
inline std::vector<std::size_t> lars_lasso_select(const Eigen::MatrixXd& design,
                                                  std::span<const double> weights,
                                                  std::span<const double> target, std::size_t k) {
  if (k < 1) throw ContractViolation("number of features K must be >= 1");
  const WeightedDesign prepared = prepare_weighted_design(design, weights, target);
  bool any = false;
  for (bool b : prepared.informative) any = any || b;
  if (!any) throw SelectionError("no informative interpretable features");
  return lars_lasso_path(prepared.x, prepared.y, prepared.informative, k);
}

struct RidgeFit {
  std::vector<double> weights;
  double intercept = 0.0;
};

// Closed-form weighted ridge with an unpenalized intercept:
//   min sum D_i (y_i - w.row_i - b)^2 + ridge |w|^2
inline RidgeFit fit_weighted_ridge(const Eigen::MatrixXd& design, std::span<const double> weights,
                                   std::span<const double> target, double ridge) {
  const auto n = design.rows();
  if (static_cast<std::size_t>(n) != weights.size() || static_cast<std::size_t>(n) != target.size()) {
    throw ContractViolation("design, weights and target row counts differ");
  }
  if (!(ridge >= 0.0)) throw ContractViolation("ridge must be non-negative");
  Eigen::Map<const Eigen::VectorXd> w(weights.data(), n);
  Eigen::Map<const Eigen::VectorXd> t(target.data(), n);
  const double total = w.sum();
  if (!(total > 0.0)) throw ContractViolation("weights sum to zero");

  const double y_mean = w.dot(t) / total;
  RidgeFit fit;
  if (design.cols() == 0) {
    fit.intercept = y_mean;
    return fit;
  }
  const Eigen::RowVectorXd col_mean = (w.transpose() * design) / total;
  const Eigen::MatrixXd xc = design.rowwise() - col_mean;
  const Eigen::VectorXd yc = t.array() - y_mean;
  Eigen::MatrixXd normal = xc.transpose() * w.asDiagonal() * xc;
  normal.diagonal().array() += ridge;
  const Eigen::VectorXd rhs = xc.transpose() * (w.array() * yc.array()).matrix();
  const auto ldlt = normal.ldlt();
  const double scale = std::max(1.0, normal.diagonal().cwiseAbs().maxCoeff());
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-13 ||
      ldlt.vectorD().cwiseAbs().minCoeff() < 1e-13 * scale) {
    throw SolverError("singular normal matrix; use ridge > 0");
  }
  const Eigen::VectorXd coef = ldlt.solve(rhs);
  fit.weights.assign(coef.data(), coef.data() + coef.size());
  fit.intercept = y_mean - col_mean.dot(coef);
  return fit;
}

}  // namespace lime_shift
