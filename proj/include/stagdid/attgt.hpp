#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stagdid/error.hpp"
#include "stagdid/panel.hpp"
#include "stagdid/parallel.hpp"
#include "stagdid/propensity.hpp"

namespace stagdid {

using PropensityFits = std::map<int, PropensityFit>;

// Fits one propensity model per cohort. Fits are independent, so they run on
// `threads` workers; the map is keyed by cohort and therefore ordered.
inline PropensityFits fit_all(const Panel& panel, const FitOptions& options = {}, int threads = 1) {
  const auto cohorts = panel.treated_cohorts();
  std::vector<PropensityFit> fits(cohorts.size());
  parallel_for(cohorts.size(), threads, [&](std::size_t c) { fits[c] = fit_propensity(panel, cohorts[c], options); });
  PropensityFits out;
  for (std::size_t c = 0; c < cohorts.size(); ++c) out.emplace(cohorts[c], std::move(fits[c]));
  return out;
}

// Normalized inverse-probability weights for cohort g; both average to one.
struct IpwWeights {
  Eigen::VectorXd treated;   // G_g / E_n[G_g]
  Eigen::VectorXd control;   // (p C / (1 - p)) / E_n[p C / (1 - p)]
  double control_norm = 0.0; // E_n[p C / (1 - p)]
  Eigen::VectorXd m_kernel;  // (C / (1 - p))^2 Lambda'
};

inline IpwWeights ipw_weights(const Panel& panel, const PropensityFit& fit) {
  const auto masks = cohort_masks(panel, fit.g);
  const Eigen::Index n = panel.n_units();
  const double nd = static_cast<double>(n);
  IpwWeights w;
  w.treated = masks.treated / (masks.treated.sum() / nd);
  Eigen::VectorXd odds = Eigen::VectorXd::Zero(n);
  w.m_kernel = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (masks.control(i) == 0.0) continue;
    const double p = fit.fitted(i);
    odds(i) = p / (1.0 - p);
    w.m_kernel(i) = fit.fitted_slope(i) / ((1.0 - p) * (1.0 - p));
  }
  w.control_norm = odds.sum() / nd;
  if (!(w.control_norm > 0.0) || !std::isfinite(w.control_norm))
    throw Error("attgt", "no usable control units for cohort " + std::to_string(fit.g) +
                             " (E_n[p C / (1 - p)] is not positive)");
  w.control = odds / w.control_norm;
  return w;
}

struct MomentEstimate {
  double estimate = 0.0;
  Eigen::VectorXd influence;
};

// Estimate and influence of E_n[(w^G - w^C) h] for a per-unit outcome
// functional h. With h = Y_t - Y_base this is ATT(g, t); with h multiplied by
// an indicator it is the pre-test process. The influence accounts for the
// estimated propensity score through M' xi.
inline MomentEstimate ipw_moment(const Panel& panel, const IpwWeights& w, const Eigen::MatrixXd& xi,
                                 const Eigen::VectorXd& h) {
  const double nd = static_cast<double>(panel.n_units());
  const double mean_treated = w.treated.dot(h) / nd;
  const double mean_control = w.control.dot(h) / nd;
  const Eigen::VectorXd centered_control = (h.array() - mean_control).matrix();
  const Eigen::VectorXd m = panel.covariates().transpose() * w.m_kernel.cwiseProduct(centered_control) /
                            (nd * w.control_norm);
  MomentEstimate out;
  out.estimate = mean_treated - mean_control;
  out.influence = w.treated.cwiseProduct((h.array() - mean_treated).matrix()) -
                  w.control.cwiseProduct(centered_control) - xi * m;
  return out;
}

inline MomentEstimate att_gt(const Panel& panel, const PropensityFit& fit, const Eigen::MatrixXd& xi,
                             const CellIndex& cell) {
  if (cell.g != fit.g) throw Error("attgt", "propensity fit does not belong to cohort " + std::to_string(cell.g));
  if (cell.t < 2 || cell.t > panel.n_periods())
    throw Error("attgt", "period " + std::to_string(cell.t) + " is outside 2..T");
  const IpwWeights w = ipw_weights(panel, fit);
  return ipw_moment(panel, w, xi, panel.outcome_change(cell.t, cell.anchor()));
}

inline MomentEstimate att_gt(const Panel& panel, const PropensityFit& fit, const CellIndex& cell) {
  return att_gt(panel, fit, xi_pi(fit, panel), cell);
}

// Point estimates for a grid of cells with the n x m influence matrix (one
// column per cell, in grid order).
struct AttGtResult {
  std::vector<CellIndex> cells;
  Eigen::VectorXd estimates;
  Eigen::MatrixXd influence;
  Eigen::Index n_units = 0;

  std::vector<int> anchors() const {
    std::vector<int> out;
    for (const auto& c : cells) out.push_back(c.anchor());
    return out;
  }
  std::optional<std::size_t> find(int g, int t) const {
    for (std::size_t j = 0; j < cells.size(); ++j)
      if (cells[j].g == g && cells[j].t == t) return j;
    return std::nullopt;
  }
  // Sigma_hat = Psi' Psi / n.
  Eigen::MatrixXd covariance() const {
    return influence.transpose() * influence / static_cast<double>(n_units);
  }
  // sqrt(Sigma_hat(g,t) / n) per cell.
  Eigen::VectorXd plugin_se() const {
    const double nd = static_cast<double>(n_units);
    return (influence.colwise().squaredNorm().transpose() / (nd * nd)).cwiseSqrt();
  }
};

inline AttGtResult att_all(const Panel& panel, const PropensityFits& fits, bool include_placebo, int threads = 1) {
  AttGtResult result;
  result.cells = cell_grid(panel, include_placebo);
  result.n_units = panel.n_units();
  const auto m = static_cast<Eigen::Index>(result.cells.size());
  result.estimates.resize(m);
  result.influence.resize(panel.n_units(), m);

  std::map<int, IpwWeights> weights;
  std::map<int, Eigen::MatrixXd> xis;
  for (int g : panel.treated_cohorts()) {
    auto it = fits.find(g);
    if (it == fits.end()) throw Error("attgt", "missing propensity fit for cohort " + std::to_string(g));
    weights.emplace(g, ipw_weights(panel, it->second));
    xis.emplace(g, xi_pi(it->second, panel));
  }
  parallel_for(result.cells.size(), threads, [&](std::size_t j) {
    const auto& cell = result.cells[j];
    MomentEstimate est;
    try {
      est = ipw_moment(panel, weights.at(cell.g), xis.at(cell.g), panel.outcome_change(cell.t, cell.anchor()));
    } catch (const Error& e) {
      throw Error("attgt", "cell (g=" + std::to_string(cell.g) + ", t=" + std::to_string(cell.t) + "): " + e.what());
    }
    if (!std::isfinite(est.estimate))
      throw Error("attgt", "cell (g=" + std::to_string(cell.g) + ", t=" + std::to_string(cell.t) +
                               ") produced a non-finite estimate");
    result.estimates(static_cast<Eigen::Index>(j)) = est.estimate;
    result.influence.col(static_cast<Eigen::Index>(j)) = est.influence;
  });
  return result;
}

inline AttGtResult att_all(const Panel& panel, bool include_placebo, const FitOptions& options = {}, int threads = 1) {
  return att_all(panel, fit_all(panel, options, threads), include_placebo, threads);
}

}  // namespace stagdid
