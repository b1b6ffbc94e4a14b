#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "stagdid/error.hpp"
#include "stagdid/mboot.hpp"
#include "stagdid/panel.hpp"

namespace stagdid {

enum class CovariateLaw { uniform, normal };
enum class Violation { none, unconditional_pretrend, conditional_offsetting };
enum class EffectKind { constant, dynamic, table };

inline const char* to_string(Violation v) {
  switch (v) {
    case Violation::none: return "none";
    case Violation::unconditional_pretrend: return "unconditional_pretrend";
    case Violation::conditional_offsetting: return "conditional_offsetting";
  }
  return "?";
}

// Multinomial-logit membership index for one cohort relative to the control
// group: P(cohort g | X) is proportional to exp(intercept + slopes' X).
struct CohortSelection {
  int g = 2;
  double intercept = 0.0;
  std::vector<double> slopes;  // empty means all zero
};

// True ATT(g,t) for post cells: `value` (constant), `value * (t - g + 1)`
// (dynamic), or an explicit table keyed by (g, t).
struct TreatmentEffect {
  EffectKind kind = EffectKind::constant;
  double value = 1.0;
  std::map<std::pair<int, int>, double> table;

  double at(int g, int t) const {
    if (t < g) return 0.0;
    switch (kind) {
      case EffectKind::constant: return value;
      case EffectKind::dynamic: return value * static_cast<double>(t - g + 1);
      case EffectKind::table: {
        auto it = table.find({g, t});
        if (it == table.end())
          throw Error("dgp", "effect table has no entry for (g=" + std::to_string(g) + ", t=" + std::to_string(t) + ")");
        return it->second;
      }
    }
    return 0.0;
  }
};

// Synthetic staggered-adoption design. Untreated outcomes follow
//   Y_it(0) = eta_i + t (trend_intercept + trend_slopes' X_i) + noise eps_it,
// so trends depend on X but not on the cohort (conditional parallel trends).
// eta_i = unit_effect_scale * (z_i + 0.25 g_i) lets levels differ by cohort.
// Violations add d(X) * min(t, g - 1) to the untreated outcome of treated
// units, a drift confined to pre-treatment periods:
//   unconditional_pretrend: d(X) = size;
//   conditional_offsetting: d(X) = size * X_c with c = violation_covariate.
// The offsetting drift has zero mean within each cohort when cohort
// selection does not load on X_c and X_c is symmetric around zero.
struct DgpSpec {
  int n_units = 1000;
  int periods = 4;
  std::vector<CohortSelection> cohorts;  // empty: cohorts 2..T, selection on the last covariate
  int k = 2;                             // covariates excluding the intercept
  CovariateLaw covariate_law = CovariateLaw::uniform;
  double trend_intercept = 1.0;
  std::vector<double> trend_slopes;      // empty: all ones
  double unit_effect_scale = 1.0;
  double noise_scale = 1.0;
  TreatmentEffect effect;
  Violation violation = Violation::none;
  double violation_size = 0.0;
  int violation_covariate = 0;
  std::uint64_t seed = 1;
};

struct TrueEffect {
  CellIndex cell;
  double att = 0.0;
};

struct DgpDraw {
  Panel panel;
  std::vector<TrueEffect> truth;  // post and placebo cells of the realized grid

  double true_att(int g, int t) const {
    for (const auto& e : truth)
      if (e.cell.g == g && e.cell.t == t) return e.att;
    throw Error("dgp", "no truth for cell (g=" + std::to_string(g) + ", t=" + std::to_string(t) + ")");
  }
};

inline std::vector<CohortSelection> default_cohorts(int periods, int k) {
  std::vector<CohortSelection> out;
  for (int g = 2; g <= periods; ++g) {
    CohortSelection c;
    c.g = g;
    c.slopes.assign(static_cast<std::size_t>(k), 0.0);
    if (k > 0) c.slopes.back() = 0.8;
    out.push_back(c);
  }
  return out;
}

inline DgpDraw generate(const DgpSpec& spec) {
  if (spec.n_units < 4) throw Error("dgp", "need at least 4 units");
  if (spec.periods < 2) throw Error("dgp", "need at least 2 periods");
  if (spec.k < 0) throw Error("dgp", "number of covariates must be nonnegative");
  if (spec.violation == Violation::conditional_offsetting &&
      (spec.violation_covariate < 0 || spec.violation_covariate >= spec.k))
    throw Error("dgp", "violation_covariate must index an existing covariate");
  const auto cohorts = spec.cohorts.empty() ? default_cohorts(spec.periods, spec.k) : spec.cohorts;
  for (const auto& c : cohorts) {
    if (c.g < 2 || c.g > spec.periods) throw Error("dgp", "cohort periods must lie in 2..T");
    if (!c.slopes.empty() && static_cast<int>(c.slopes.size()) != spec.k)
      throw Error("dgp", "cohort selection slopes must have one entry per covariate");
  }
  std::vector<double> trend = spec.trend_slopes;
  if (trend.empty()) trend.assign(static_cast<std::size_t>(spec.k), 1.0);
  if (static_cast<int>(trend.size()) != spec.k) throw Error("dgp", "trend_slopes must have one entry per covariate");

  const Eigen::Index n = spec.n_units;
  const int T = spec.periods;
  for (int attempt = 0; attempt < 100; ++attempt) {
    auto engine = detail::draw_engine(spec.seed, static_cast<std::uint64_t>(attempt), 0x64677000);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    Eigen::MatrixXd x(n, spec.k);
    for (Eigen::Index i = 0; i < n; ++i)
      for (int j = 0; j < spec.k; ++j)
        x(i, j) = spec.covariate_law == CovariateLaw::uniform ? unif(engine) : normal(engine);

    std::vector<Cohort> cohort(static_cast<std::size_t>(n));
    std::map<int, int> counts;
    int n_control = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      std::vector<double> score(cohorts.size());
      double total = 1.0;  // control group baseline exp(0)
      for (std::size_t c = 0; c < cohorts.size(); ++c) {
        double idx = cohorts[c].intercept;
        for (int j = 0; j < spec.k && !cohorts[c].slopes.empty(); ++j) idx += cohorts[c].slopes[static_cast<std::size_t>(j)] * x(i, j);
        score[c] = std::exp(idx);
        total += score[c];
      }
      double u = detail::uniform01(engine) * total;
      Cohort assigned = kNeverTreated;
      for (std::size_t c = 0; c < cohorts.size(); ++c) {
        if (u < score[c]) {
          assigned = cohorts[c].g;
          break;
        }
        u -= score[c];
      }
      cohort[static_cast<std::size_t>(i)] = assigned;
      if (assigned) ++counts[*assigned];
      else ++n_control;
    }
    bool empty = n_control == 0;
    for (const auto& c : cohorts) empty = empty || counts[c.g] == 0;
    if (empty) continue;

    Eigen::MatrixXd y(n, T);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Cohort& g = cohort[static_cast<std::size_t>(i)];
      const double eta = spec.unit_effect_scale * (normal(engine) + 0.25 * (g ? *g : 0));
      double slope = spec.trend_intercept;
      for (int j = 0; j < spec.k; ++j) slope += trend[static_cast<std::size_t>(j)] * x(i, j);
      double drift = 0.0;
      if (g && spec.violation == Violation::unconditional_pretrend) drift = spec.violation_size;
      if (g && spec.violation == Violation::conditional_offsetting) drift = spec.violation_size * x(i, spec.violation_covariate);
      for (int t = 1; t <= T; ++t) {
        double value = eta + t * slope + spec.noise_scale * normal(engine);
        if (g) {
          value += drift * std::min(t, *g - 1);
          if (t >= *g) value += spec.effect.at(*g, t);
        }
        y(i, t - 1) = value;
      }
    }

    std::vector<std::string> ids(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = std::to_string(i + 1);
    std::vector<std::int64_t> labels(static_cast<std::size_t>(T));
    for (int t = 1; t <= T; ++t) labels[static_cast<std::size_t>(t - 1)] = t;
    std::vector<std::string> names;
    for (int j = 0; j < spec.k; ++j) names.push_back("x" + std::to_string(j + 1));

    std::optional<Panel> panel;
    try {
      panel.emplace(std::move(ids), std::move(labels), std::move(y), std::move(x), std::move(names), std::move(cohort));
    } catch (const Error&) {
      continue;  // e.g. a cohort too small for a full-rank design; redraw
    }
    DgpDraw draw{std::move(*panel), {}};
    for (const auto& cell : cell_grid(draw.panel, true))
      draw.truth.push_back({cell, spec.effect.at(cell.g, cell.t)});
    return draw;
  }
  throw Error("dgp", "could not realize a nonempty control group and every cohort in 100 attempts");
}

}  // namespace stagdid
