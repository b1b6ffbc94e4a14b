#pragma once

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "stagdid/attgt.hpp"
#include "stagdid/dominance.hpp"
#include "stagdid/error.hpp"
#include "stagdid/mboot.hpp"
#include "stagdid/panel.hpp"
#include "stagdid/propensity.hpp"

namespace stagdid {

struct CellContribution {
  CellIndex cell;
  double contribution = 0.0;
};

// Cramer-von Mises pre-test of augmented conditional parallel trends.
struct CvmResult {
  double statistic = 0.0;
  double critical_value = std::numeric_limits<double>::quiet_NaN();
  double p_value = std::numeric_limits<double>::quiet_NaN();
  double alpha = 0.05;
  int B = 0;
  bool reject = false;
  std::vector<CellContribution> per_cell;
};

// Covariate coordinates entering 1{X <= u}: every column except the intercept.
inline Eigen::MatrixXd indicator_coordinates(const Panel& panel) { return panel.covariates().rightCols(panel.k() - 1); }

namespace detail {

inline void require_placebo_cell(const Panel& panel, int g, int t) {
  if (!(t >= 2 && t < g && g <= panel.n_periods()))
    throw Error("pretest", "pre-test cells need 2 <= t < g <= T (got g=" + std::to_string(g) + ", t=" + std::to_string(t) + ")");
}

inline Eigen::VectorXd indicator_at(const Panel& panel, const Eigen::VectorXd& u) {
  const Eigen::MatrixXd x = indicator_coordinates(panel);
  if (u.size() != x.cols()) throw Error("pretest", "evaluation point has the wrong dimension");
  Eigen::VectorXd ind(panel.n_units());
  for (Eigen::Index i = 0; i < panel.n_units(); ++i)
    ind(i) = (x.row(i).transpose().array() <= u.array()).all() ? 1.0 : 0.0;
  return ind;
}

}  // namespace detail

// J_hat(u, g, t) = E_n[(w^G - w^C) 1{X <= u} (Y_t - Y_{t-1})].
inline double j_hat(const Panel& panel, const PropensityFit& fit, int g, int t, const Eigen::VectorXd& u) {
  detail::require_placebo_cell(panel, g, t);
  if (fit.g != g) throw Error("pretest", "propensity fit does not belong to cohort " + std::to_string(g));
  const IpwWeights w = ipw_weights(panel, fit);
  const Eigen::VectorXd h = panel.outcome_change(t, t - 1).cwiseProduct(detail::indicator_at(panel, u));
  return (w.treated - w.control).dot(h) / static_cast<double>(panel.n_units());
}

// Influence of J_hat(u, g, t) including the propensity-score estimation effect.
inline Eigen::VectorXd psi_test(const Panel& panel, const PropensityFit& fit, int g, int t, const Eigen::VectorXd& u) {
  detail::require_placebo_cell(panel, g, t);
  if (fit.g != g) throw Error("pretest", "propensity fit does not belong to cohort " + std::to_string(g));
  const IpwWeights w = ipw_weights(panel, fit);
  const Eigen::VectorXd h = panel.outcome_change(t, t - 1).cwiseProduct(detail::indicator_at(panel, u));
  return ipw_moment(panel, w, xi_pi(fit, panel), h).influence;
}

namespace detail {

// Everything about one placebo cell that does not depend on the multipliers,
// evaluated at every grid point u_j.
struct PretestCell {
  CellIndex cell;
  Eigen::VectorXd contrast;      // (w^G - w^C) dY per unit
  Eigen::VectorXd w_treated;
  Eigen::VectorXd w_control;
  Eigen::MatrixXd xi;            // n x k
  Eigen::VectorXd j;             // J_hat(u_j)
  Eigen::VectorXd mean_treated;  // E_n[w^G 1{X <= u_j} dY]
  Eigen::VectorXd mean_control;  // E_n[w^C 1{X <= u_j} dY]
  Eigen::MatrixXd m_test;        // q x k, row j = M^test(u_j)'
};

inline std::vector<PretestCell> prepare_pretest(const Panel& panel, const PropensityFits& fits, const DominanceSum& dom) {
  const auto grid = cell_grid(panel, true);
  const double nd = static_cast<double>(panel.n_units());
  std::vector<PretestCell> cells;
  for (const auto& cell : grid) {
    if (cell.kind != CellKind::placebo) continue;
    auto it = fits.find(cell.g);
    if (it == fits.end()) throw Error("pretest", "missing propensity fit for cohort " + std::to_string(cell.g));
    const IpwWeights w = ipw_weights(panel, it->second);
    const Eigen::VectorXd dy = panel.outcome_change(cell.t, cell.t - 1);
    PretestCell pc;
    pc.cell = cell;
    pc.w_treated = w.treated;
    pc.w_control = w.control;
    pc.contrast = (w.treated - w.control).cwiseProduct(dy);
    pc.xi = xi_pi(it->second, panel);
    pc.j = dom.apply(pc.contrast) / nd;
    pc.mean_treated = dom.apply(Eigen::VectorXd(w.treated.cwiseProduct(dy))) / nd;
    pc.mean_control = dom.apply(Eigen::VectorXd(w.control.cwiseProduct(dy))) / nd;
    const Eigen::MatrixXd& x = panel.covariates();
    const Eigen::VectorXd kernel_dy = w.m_kernel.cwiseProduct(dy);
    const Eigen::MatrixXd weighted_x = x.array().colwise() * kernel_dy.array();
    const Eigen::RowVectorXd kernel_x_mean = (x.transpose() * w.m_kernel).transpose() / nd;
    pc.m_test = (dom.apply(weighted_x) / nd - pc.mean_control * kernel_x_mean) / w.control_norm;
    cells.push_back(std::move(pc));
  }
  if (cells.empty())
    throw Error("pretest", "pre-test undefined: no placebo cells (every cohort is first treated in period 2)");
  return cells;
}

}  // namespace detail

// CvM_n = sum over placebo cells of sum_j J_hat(u_j)^2, i.e. the integral of
// |sqrt(n) J_hat|^2 against the empirical distribution of the grid points.
// The default grid is the sample covariates of all units.
inline CvmResult cvm_statistic(const Panel& panel, const PropensityFits& fits, const Eigen::MatrixXd& grid) {
  const DominanceSum dom(indicator_coordinates(panel), grid);
  const auto cells = detail::prepare_pretest(panel, fits, dom);
  const double grid_weight = static_cast<double>(panel.n_units()) / static_cast<double>(grid.rows());
  CvmResult result;
  for (const auto& pc : cells) {
    const double contribution = grid_weight * pc.j.squaredNorm();
    result.per_cell.push_back({pc.cell, contribution});
    result.statistic += contribution;
  }
  return result;
}

inline CvmResult cvm_statistic(const Panel& panel, const PropensityFits& fits) {
  return cvm_statistic(panel, fits, indicator_coordinates(panel));
}

// Multiplier-bootstrap critical value and p-value for CvM_n. Each draw
// rebuilds J*(u) = E_n[V psi^test(W; u)] at every grid point.
inline CvmResult cvm_bootstrap(const Panel& panel, const PropensityFits& fits, const MultiplierSpec& spec, double alpha,
                               const ClusterMap& clusters) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error("pretest", "alpha must lie in (0, 1)");
  const Eigen::MatrixXd coords = indicator_coordinates(panel);
  const DominanceSum dom(coords, coords);
  const auto cells = detail::prepare_pretest(panel, fits, dom);
  const double nd = static_cast<double>(panel.n_units());

  CvmResult result;
  for (const auto& pc : cells) {
    const double contribution = pc.j.squaredNorm();
    result.per_cell.push_back({pc.cell, contribution});
    result.statistic += contribution;
  }

  std::vector<double> boot(static_cast<std::size_t>(spec.B), 0.0);
  for_each_draw_block(spec, clusters, [&](int first, const Eigen::MatrixXd& v) {
    Eigen::VectorXd total = Eigen::VectorXd::Zero(v.cols());
    for (const auto& pc : cells) {
      const Eigen::MatrixXd weighted = v.array().colwise() * pc.contrast.array();
      const Eigen::RowVectorXd s_treated = (v.transpose() * pc.w_treated).transpose();
      const Eigen::RowVectorXd s_control = (v.transpose() * pc.w_control).transpose();
      const Eigen::MatrixXd s_xi = pc.xi.transpose() * v;  // k x c
      Eigen::MatrixXd j_star = dom.apply(weighted);
      j_star.noalias() -= pc.mean_treated * s_treated;
      j_star.noalias() += pc.mean_control * s_control;
      j_star.noalias() -= pc.m_test * s_xi;
      total += j_star.colwise().squaredNorm().transpose() / (nd * nd);
    }
    for (Eigen::Index c = 0; c < v.cols(); ++c) boot[static_cast<std::size_t>(first + c)] = total(c);
  });

  result.alpha = alpha;
  result.B = spec.B;
  std::size_t exceed = 0;
  for (double s : boot)
    if (s >= result.statistic) ++exceed;
  result.p_value = (1.0 + static_cast<double>(exceed)) / (static_cast<double>(spec.B) + 1.0);
  result.critical_value = quantile_type7(std::move(boot), 1.0 - alpha);
  result.reject = result.statistic > result.critical_value;
  return result;
}

struct WaldReport {
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
  bool reject = false;
  bool reduced_rank = false;
  BandResult joint_band;  // pre- and post-treatment cells together
};

// Wald test that every placebo ATT(g,t) is zero, using the bootstrap
// covariance of the placebo estimates (pseudo-inverse when singular), plus the
// joint simultaneous band over all cells.
inline WaldReport placebo_wald(const AttGtResult& att, const MultiplierSpec& spec, double alpha, const ClusterMap& clusters) {
  std::vector<Eigen::Index> placebo;
  for (std::size_t j = 0; j < att.cells.size(); ++j)
    if (att.cells[j].kind == CellKind::placebo) placebo.push_back(static_cast<Eigen::Index>(j));
  if (placebo.empty()) throw Error("pretest", "pre-test undefined: no placebo cells");
  if (spec.B < 2) throw Error("pretest", "the Wald test needs at least two bootstrap draws");

  const Eigen::MatrixXd draws = bootstrap_draws(att.influence, spec, clusters);
  WaldReport report;
  report.joint_band = band_from_draws(att.estimates, draws, att.n_units, alpha);
  report.joint_band.cells = att.cells;

  const auto m = static_cast<Eigen::Index>(placebo.size());
  Eigen::MatrixXd sub(draws.rows(), m);
  Eigen::VectorXd theta(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    sub.col(j) = draws.col(placebo[static_cast<std::size_t>(j)]);
    theta(j) = att.estimates(placebo[static_cast<std::size_t>(j)]);
  }
  const Eigen::MatrixXd centered = sub.rowwise() - sub.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(draws.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::VectorXd& values = eig.eigenvalues();
  const double top = values.maxCoeff();
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(m);
  for (Eigen::Index j = 0; j < m; ++j)
    if (top > 0.0 && values(j) > top * 1e-10) {
      inv(j) = 1.0 / values(j);
      ++report.df;
    }
  report.reduced_rank = report.df < m;
  const Eigen::VectorXd projected = eig.eigenvectors().transpose() * theta;
  report.statistic = static_cast<double>(att.n_units) * projected.cwiseAbs2().dot(inv);
  if (report.df > 0) {
    boost::math::chi_squared dist(report.df);
    report.p_value = boost::math::cdf(boost::math::complement(dist, report.statistic));
  }
  report.reject = report.p_value < alpha;
  return report;
}

}  // namespace stagdid
