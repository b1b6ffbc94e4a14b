#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <ostream>
#include <string>
#include <vector>

#include "stagdid/aggregate.hpp"
#include "stagdid/attgt.hpp"
#include "stagdid/csv.hpp"
#include "stagdid/dgp.hpp"
#include "stagdid/mboot.hpp"
#include "stagdid/panel.hpp"
#include "stagdid/pretest.hpp"
#include "stagdid/propensity.hpp"

// JSON views of library results. Periods are reported with the panel's own
// time labels, not internal 1-based indices.
namespace stagdid::report {

using json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

inline json panel_summary(const Panel& panel) {
  json cohorts = json::object();
  for (int g : panel.treated_cohorts()) cohorts[std::to_string(panel.time_label(g))] = panel.cohort_size(g);
  return json{{"schema_version", kSchemaVersion},
              {"n_units", panel.n_units()},
              {"periods", panel.time_labels()},
              {"cohorts", cohorts},
              {"n_control", panel.n_control()},
              {"k_covariates", panel.k()},
              {"n_clusters", panel.n_clusters()}};
}

inline json fit_diagnostics(const Panel& panel, const PropensityFit& fit, const OverlapReport& overlap) {
  std::vector<double> coef(fit.coefficients.data(), fit.coefficients.data() + fit.coefficients.size());
  return json{{"g", panel.time_label(fit.g)},
              {"link", to_string(fit.link)},
              {"converged", fit.converged},
              {"iterations", fit.iterations},
              {"loglik", fit.loglik},
              {"coefficients", coef},
              {"max_fitted", overlap.max_fitted},
              {"trim", overlap.trim},
              {"n_trim_violations", overlap.violations.size()}};
}

inline json cell_key(const Panel& panel, const CellIndex& cell) {
  return json{{"g", panel.time_label(cell.g)}, {"t", panel.time_label(cell.t)}};
}

inline json attgt(const Panel& panel, const AttGtResult& att) {
  json cells = json::array();
  const Eigen::VectorXd se = att.plugin_se();
  for (std::size_t j = 0; j < att.cells.size(); ++j) {
    const auto& c = att.cells[j];
    json entry = cell_key(panel, c);
    entry["kind"] = to_string(c.kind);
    entry["anchor"] = panel.time_label(c.anchor());
    entry["estimate"] = att.estimates(static_cast<Eigen::Index>(j));
    entry["plugin_se"] = se(static_cast<Eigen::Index>(j));
    cells.push_back(entry);
  }
  return json{{"schema_version", kSchemaVersion}, {"n_units", att.n_units}, {"cells", cells}};
}

inline json band(const Panel& panel, const BandResult& b, const MultiplierSpec& spec) {
  json cells = json::array();
  for (std::size_t j = 0; j < b.cells.size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    json entry = cell_key(panel, b.cells[j]);
    entry["kind"] = to_string(b.cells[j].kind);
    entry["estimate"] = b.estimates(jj);
    entry["sigma_half"] = b.sigma_half(jj);
    entry["lower"] = b.lower(jj);
    entry["upper"] = b.upper(jj);
    entry["fallback_flag"] = static_cast<bool>(b.fallback[j]);
    cells.push_back(entry);
  }
  return json{{"schema_version", kSchemaVersion},
              {"alpha", b.alpha},
              {"B", b.B_effective},
              {"law", to_string(spec.law)},
              {"cluster", spec.cluster},
              {"seed", spec.seed},
              {"c_hat", b.c_hat},
              {"cells", cells}};
}

// `se` holds bootstrap standard errors: overall first, then each partial.
inline json aggregation(const Panel& panel, const AggResult& agg, const Eigen::VectorXd& se) {
  json partials = json::array();
  for (std::size_t p = 0; p < agg.partials.size(); ++p)
    partials.push_back(json{{"label", agg.partials[p].label},
                            {"value", agg.partials[p].value},
                            {"se", se(static_cast<Eigen::Index>(p) + 1)},
                            {"plugin_se", agg.partials[p].plugin_se()}});
  json weights = json::array();
  for (const auto& cw : agg.overall.weights) {
    json entry = cell_key(panel, cw.cell);
    entry["w"] = cw.w;
    weights.push_back(entry);
  }
  json out{{"scheme", to_string(agg.scheme.kind)}};
  if (agg.scheme.e_prime) out["e_prime"] = *agg.scheme.e_prime;
  out["value"] = agg.overall.value;
  out["se"] = se(0);
  out["plugin_se"] = agg.overall.plugin_se();
  out["partials"] = partials;
  out["weights"] = weights;
  return out;
}

inline json cvm(const Panel& panel, const CvmResult& r) {
  json cells = json::array();
  for (const auto& c : r.per_cell) {
    json entry = cell_key(panel, c.cell);
    entry["contribution"] = c.contribution;
    cells.push_back(entry);
  }
  return json{{"cvm_stat", r.statistic}, {"c_critical", r.critical_value}, {"p_value", r.p_value},
              {"alpha", r.alpha},        {"B", r.B},                       {"reject", r.reject},
              {"per_cell", cells}};
}

inline json wald(const WaldReport& w) {
  return json{{"stat", w.statistic}, {"df", w.df}, {"p_value", w.p_value}, {"reject", w.reject},
              {"reduced_rank", w.reduced_rank}};
}

inline json truth(const Panel& panel, const DgpDraw& draw) {
  json cells = json::array();
  for (const auto& e : draw.truth) {
    json entry = cell_key(panel, e.cell);
    entry["kind"] = to_string(e.cell.kind);
    entry["true_att"] = e.att;
    cells.push_back(entry);
  }
  return json{{"schema_version", kSchemaVersion}, {"cells", cells}};
}

// Influence matrix as CSV: one row per unit, one column per cell.
inline void influence_csv(const Panel& panel, const AttGtResult& att, std::ostream& out) {
  out << "unit";
  for (const auto& c : att.cells) out << ",g" << panel.time_label(c.g) << "_t" << panel.time_label(c.t);
  out << '\n';
  for (Eigen::Index i = 0; i < att.influence.rows(); ++i) {
    out << panel.unit_ids()[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < att.influence.cols(); ++j) out << ',' << detail::format_double(att.influence(i, j));
    out << '\n';
  }
}

}  // namespace stagdid::report
