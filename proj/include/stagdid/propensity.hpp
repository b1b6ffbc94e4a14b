#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "stagdid/error.hpp"
#include "stagdid/panel.hpp"

namespace stagdid {

enum class Link { logit, probit };

inline const char* to_string(Link link) { return link == Link::logit ? "logit" : "probit"; }

// Link function Lambda with the pieces the influence expansion needs.
struct LinkValues {
  double p;           // Lambda(u)
  double dp;          // Lambda'(u)
  double kernel;      // Lambda'(u) / (Lambda(u) (1 - Lambda(u)))
  double dkernel;     // derivative of `kernel` in u
  double log_p;       // log Lambda(u)
  double log_1mp;     // log (1 - Lambda(u))
};

inline LinkValues evaluate_link(Link link, double u) {
  LinkValues v{};
  if (link == Link::logit) {
    // log(1 + e^u) computed without overflow.
    const double softplus = u > 0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u));
    v.p = u >= 0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u));
    v.dp = v.p * (1.0 - v.p);
    v.kernel = 1.0;
    v.dkernel = 0.0;
    v.log_p = u - softplus;
    v.log_1mp = -softplus;
    return v;
  }
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  constexpr double inv_sqrt2pi = 0.39894228040143267794;
  v.p = 0.5 * std::erfc(-u * inv_sqrt2);
  const double q = 0.5 * std::erfc(u * inv_sqrt2);  // 1 - p without cancellation
  v.dp = inv_sqrt2pi * std::exp(-0.5 * u * u);
  const double denom = v.p * q;
  constexpr double tiny = std::numeric_limits<double>::min();
  v.kernel = denom > tiny ? v.dp / denom : 0.0;
  v.dkernel = denom > tiny ? (-u * v.dp * denom - v.dp * v.dp * (q - v.p)) / (denom * denom) : 0.0;
  v.log_p = std::log(std::max(v.p, tiny));
  v.log_1mp = std::log(std::max(q, tiny));
  return v;
}

struct FitOptions {
  Link link = Link::logit;
  int max_iterations = 100;
  double gradient_tolerance = 1e-8;        // max-norm of the mean score
  double relative_loglik_tolerance = 1e-12;
  double separation_bound = 30.0;          // |coefficient| beyond this means separation
};

// Maximum-likelihood generalized propensity score for one cohort g, fitted on
// the units in cohort g or the control group.
struct PropensityFit {
  int g = 0;
  Link link = Link::logit;
  Eigen::VectorXd coefficients;     // pi_hat
  Eigen::VectorXd fitted;           // p_hat(X_i) for every unit
  Eigen::VectorXd fitted_slope;     // Lambda'(X_i' pi_hat) for every unit
  Eigen::MatrixXd score_outer_inv;  // A_g^{-1}
  double loglik = 0.0;
  bool converged = false;
  int iterations = 0;
  std::vector<double> loglik_path;  // starting value, then each accepted step
};

// Carries the last iterate of a failed fit.
class FitError : public Error {
 public:
  FitError(const std::string& message, Eigen::VectorXd last_iterate)
      : Error("propensity", message), last_iterate_(std::move(last_iterate)) {}
  const Eigen::VectorXd& last_iterate() const { return last_iterate_; }

 private:
  Eigen::VectorXd last_iterate_;
};

namespace detail {

struct LikelihoodState {
  double loglik = 0.0;
  Eigen::VectorXd gradient;  // sum of scores
  Eigen::MatrixXd hessian;   // sum of second derivatives
};

// Binomial log-likelihood over the estimation subsample with derivatives.
inline LikelihoodState likelihood(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, Link link,
                                  const Eigen::VectorXd& coef) {
  const Eigen::Index k = x.cols();
  LikelihoodState s{0.0, Eigen::VectorXd::Zero(k), Eigen::MatrixXd::Zero(k, k)};
  const Eigen::VectorXd index = x * coef;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const LinkValues v = evaluate_link(link, index(i));
    s.loglik += y(i) * v.log_p + (1.0 - y(i)) * v.log_1mp;
    const double resid = y(i) - v.p;
    s.gradient.noalias() += (resid * v.kernel) * x.row(i).transpose();
    const double curvature = -v.dp * v.kernel + resid * v.dkernel;
    s.hessian.noalias() += curvature * x.row(i).transpose() * x.row(i);
  }
  return s;
}

}  // namespace detail

// Log-likelihood and score of the cohort-g propensity model at `coef`; exposed
// so callers can verify the analytic gradient.
inline std::pair<double, Eigen::VectorXd> propensity_loglik(const Panel& panel, int g, Link link,
                                                            const Eigen::VectorXd& coef) {
  const auto rows = panel.subsample_rows(g);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), panel.k());
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    x.row(static_cast<Eigen::Index>(r)) = panel.covariates().row(rows[r]);
    y(static_cast<Eigen::Index>(r)) = panel.is_control(rows[r]) ? 0.0 : 1.0;
  }
  auto s = detail::likelihood(x, y, link, coef);
  return {s.loglik, s.gradient};
}

// Newton-Raphson with step halving; the log-likelihood never decreases across
// accepted steps.
inline PropensityFit fit_propensity(const Panel& panel, int g, const FitOptions& options = {}) {
  if (!panel.has_cohort(g))
    throw Error("propensity", "period " + std::to_string(g) + " is not a treatment cohort");
  const auto rows = panel.subsample_rows(g);
  const auto m = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index k = panel.k();
  Eigen::MatrixXd x(m, k);
  Eigen::VectorXd y(m);
  for (Eigen::Index r = 0; r < m; ++r) {
    x.row(r) = panel.covariates().row(rows[static_cast<std::size_t>(r)]);
    y(r) = panel.is_control(rows[static_cast<std::size_t>(r)]) ? 0.0 : 1.0;
  }
  {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    if (qr.rank() < k) throw Error("propensity", "design matrix is rank deficient for cohort " + std::to_string(g));
  }

  PropensityFit fit;
  fit.g = g;
  fit.link = options.link;
  Eigen::VectorXd coef = Eigen::VectorXd::Zero(k);
  // Start the intercept at the sample log-odds (probit: matching quantile).
  {
    const double share = y.mean();
    const double logit0 = std::log(share / (1.0 - share));
    coef(0) = options.link == Link::logit ? logit0 : logit0 / 1.6;
  }
  auto state = detail::likelihood(x, y, options.link, coef);
  fit.loglik_path.push_back(state.loglik);
  const double scale = 1.0 / static_cast<double>(m);
  double rel_change = std::numeric_limits<double>::infinity();
  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    fit.iterations = iter;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(-state.hessian);
    Eigen::VectorXd step;
    const bool newton = ldlt.info() == Eigen::Success && ldlt.isPositive();
    if (newton) {
      step = ldlt.solve(state.gradient);
    } else {
      // Fall back to the expected-information direction, always a descent
      // direction for the negative log-likelihood.
      Eigen::MatrixXd info = Eigen::MatrixXd::Zero(k, k);
      const Eigen::VectorXd index = x * coef;
      for (Eigen::Index i = 0; i < m; ++i) {
        const auto v = evaluate_link(options.link, index(i));
        info.noalias() += (v.dp * v.kernel) * x.row(i).transpose() * x.row(i);
      }
      step = info.ldlt().solve(state.gradient);
    }

    // Converged once the score is negligible and the Newton step is too. Under
    // separation the score vanishes while the step stays of order one.
    const double grad_norm = (state.gradient * scale).lpNorm<Eigen::Infinity>();
    const bool small_step = step.lpNorm<Eigen::Infinity>() < 1e-6 * (1.0 + coef.lpNorm<Eigen::Infinity>());
    if (newton && small_step &&
        (grad_norm < options.gradient_tolerance || (rel_change < options.relative_loglik_tolerance && grad_norm < 1e-6))) {
      // One last full step, kept only if it shrinks the score further.
      const Eigen::VectorXd candidate = coef + step;
      auto next = detail::likelihood(x, y, options.link, candidate);
      if (std::isfinite(next.loglik) && next.loglik >= state.loglik &&
          (next.gradient * scale).lpNorm<Eigen::Infinity>() < grad_norm) {
        coef = candidate;
        state = std::move(next);
        fit.loglik_path.push_back(state.loglik);
      }
      fit.converged = true;
      break;
    }

    double size = 1.0;
    bool accepted = false;
    detail::LikelihoodState next;
    Eigen::VectorXd candidate;
    for (int halving = 0; halving < 40; ++halving, size *= 0.5) {
      candidate = coef + size * step;
      next = detail::likelihood(x, y, options.link, candidate);
      if (std::isfinite(next.loglik) && next.loglik >= state.loglik) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // No ascent possible: the current point is a numerical optimum.
      fit.converged = grad_norm < std::sqrt(options.gradient_tolerance);
      break;
    }
    rel_change = std::abs(next.loglik - state.loglik) / std::max(1.0, std::abs(state.loglik));
    coef = candidate;
    state = std::move(next);
    fit.loglik_path.push_back(state.loglik);
    if (coef.lpNorm<Eigen::Infinity>() > options.separation_bound)
      throw FitError("perfect or quasi-complete separation detected for cohort " + std::to_string(g) +
                         " (coefficient norm diverging); reduce the covariate set",
                     coef);
  }
  if (!fit.converged)
    throw FitError("propensity fit for cohort " + std::to_string(g) + " did not converge after " +
                       std::to_string(fit.iterations) + " iterations",
                   coef);

  const Eigen::Index n = panel.n_units();
  fit.coefficients = coef;
  fit.loglik = state.loglik;
  fit.fitted.resize(n);
  fit.fitted_slope.resize(n);
  const Eigen::VectorXd index = panel.covariates() * coef;
  Eigen::MatrixXd outer = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto v = evaluate_link(options.link, index(i));
    fit.fitted(i) = v.p;
    fit.fitted_slope(i) = v.dp;
  }
  for (Eigen::Index r : rows) {
    const auto v = evaluate_link(options.link, index(r));
    outer.noalias() += (v.dp * v.kernel) * panel.covariates().row(r).transpose() * panel.covariates().row(r);
  }
  outer /= static_cast<double>(n);
  fit.score_outer_inv = outer.ldlt().solve(Eigen::MatrixXd::Identity(k, k));
  fit.score_outer_inv = 0.5 * (fit.score_outer_inv + fit.score_outer_inv.transpose()).eval();
  return fit;
}

// Asymptotic-linear representation of pi_hat: row i is
//   A^{-1} X_i (G_ig + C_i)(G_ig - p_hat_i) Lambda'_i / (p_hat_i (1 - p_hat_i)),
// zero outside cohort g and the controls.
inline Eigen::MatrixXd xi_pi(const PropensityFit& fit, const Panel& panel) {
  const Eigen::Index n = panel.n_units();
  Eigen::MatrixXd xi = Eigen::MatrixXd::Zero(n, panel.k());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& c = panel.cohort(i);
    const bool treated = c && *c == fit.g;
    if (!treated && c) continue;
    const double p = fit.fitted(i);
    const double kernel = fit.link == Link::logit ? 1.0 : fit.fitted_slope(i) / (p * (1.0 - p));
    const double resid = (treated ? 1.0 : 0.0) - p;
    xi.row(i) = (resid * kernel) * panel.covariates().row(i);
  }
  return xi * fit.score_outer_inv;  // A^{-1} symmetric
}

struct OverlapReport {
  int g = 0;
  double trim = 0.0;
  double max_fitted = 0.0;
  std::vector<Eigen::Index> violations;  // rows with p_hat > trim
};

// Scans the cohort-plus-control subsample for fitted scores above `trim`.
// Fitted values within 1e-12 of one make the control weights degenerate and
// raise an error.
inline OverlapReport check_overlap(const PropensityFit& fit, const Panel& panel, double trim) {
  if (!(trim > 0.0 && trim < 1.0)) throw Error("propensity", "trim threshold must lie in (0, 1)");
  OverlapReport report;
  report.g = fit.g;
  report.trim = trim;
  for (Eigen::Index i : panel.subsample_rows(fit.g)) {
    const double p = fit.fitted(i);
    report.max_fitted = std::max(report.max_fitted, p);
    if (p > trim) report.violations.push_back(i);
  }
  if (report.max_fitted >= 1.0 - 1e-12)
    throw Error("propensity", "fitted propensity score numerically equal to one for cohort " +
                                  std::to_string(fit.g) + "; overlap fails");
  return report;
}

}  // namespace stagdid
