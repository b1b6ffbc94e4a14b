#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stagdid/aggregate.hpp"
#include "stagdid/attgt.hpp"
#include "stagdid/dgp.hpp"
#include "stagdid/mboot.hpp"
#include "stagdid/parallel.hpp"
#include "stagdid/pretest.hpp"
#include "stagdid/report.hpp"

namespace stagdid {

// Monte Carlo replication of a DGP through the estimation pipeline.
struct SimulationSpec {
  DgpSpec dgp;
  int replications = 100;
  std::uint64_t seed = 1;       // master seed; per-replication seeds derive from it
  bool conditional = true;      // false: intercept-only propensity scores
  FitOptions fit;
  MultiplierSpec bootstrap;     // seed and threads are set per replication
  double alpha = 0.05;
  bool bands = true;            // simultaneous band over post cells
  bool cvm = false;
  bool wald = false;
  std::vector<AggScheme> aggregations;
  int threads = 1;              // replications run concurrently
};

struct ReplicationOutcome {
  Eigen::VectorXd estimates;    // every grid cell, placebo included
  Eigen::VectorXd plugin_se;
  Eigen::VectorXd boot_se;      // post cells only; empty without bands
  bool covered = false;
  double c_hat = 0.0;
  std::optional<bool> cvm_reject;
  std::optional<bool> wald_reject;
  std::vector<std::string> agg_labels;
  std::vector<double> agg_values;
  std::vector<double> agg_truth;   // truth evaluated at the realized weights
};

struct CellSummary {
  CellIndex cell;
  double truth = 0.0;
  double mean = 0.0;
  double sd = 0.0;
  double mc_se = 0.0;            // sd / sqrt(R)
  double mean_plugin_se = 0.0;
  double mean_boot_se = std::numeric_limits<double>::quiet_NaN();
};

struct AggSummary {
  std::string label;
  double mean_truth = 0.0;
  double mean = 0.0;
  double mc_se = 0.0;
};

struct SimulationReport {
  int replications = 0;
  std::vector<CellSummary> cells;
  std::optional<double> coverage;
  std::optional<double> cvm_rejection;
  std::optional<double> wald_rejection;
  std::vector<AggSummary> aggregations;
  std::vector<ReplicationOutcome> outcomes;
};

namespace detail {

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t r, std::uint32_t domain) {
  auto engine = draw_engine(master, r, domain);
  return engine();
}

inline constexpr std::uint32_t kDgpDomain = 0x73696d31;
inline constexpr std::uint32_t kBootDomain = 0x73696d32;

inline ReplicationOutcome run_replication(const SimulationSpec& spec, int r, std::vector<CellIndex>& grid_out) {
  DgpSpec dgp = spec.dgp;
  dgp.seed = derive_seed(spec.seed, static_cast<std::uint64_t>(r), kDgpDomain);
  const DgpDraw draw = generate(dgp);
  const Panel panel = spec.conditional ? draw.panel : draw.panel.intercept_only();
  const PropensityFits fits = fit_all(panel, spec.fit);
  const AttGtResult att = att_all(panel, fits, true);
  grid_out = att.cells;

  MultiplierSpec boot = spec.bootstrap;
  boot.seed = derive_seed(spec.seed, static_cast<std::uint64_t>(r), kBootDomain);
  boot.threads = 1;
  const ClusterMap clusters = ClusterMap::iid(panel.n_units());

  ReplicationOutcome out;
  out.estimates = att.estimates;
  out.plugin_se = att.plugin_se();

  if (spec.bands) {
    std::vector<Eigen::Index> post;
    for (std::size_t j = 0; j < att.cells.size(); ++j)
      if (att.cells[j].kind == CellKind::post) post.push_back(static_cast<Eigen::Index>(j));
    Eigen::VectorXd est(static_cast<Eigen::Index>(post.size()));
    Eigen::MatrixXd infl(panel.n_units(), est.size());
    for (std::size_t p = 0; p < post.size(); ++p) {
      est(static_cast<Eigen::Index>(p)) = att.estimates(post[p]);
      infl.col(static_cast<Eigen::Index>(p)) = att.influence.col(post[p]);
    }
    const BandResult band = simultaneous_band(est, infl, spec.alpha, boot, clusters);
    out.boot_se = band.se();
    out.c_hat = band.c_hat;
    out.covered = true;
    for (std::size_t p = 0; p < post.size(); ++p) {
      const auto& cell = att.cells[static_cast<std::size_t>(post[p])];
      const double truth = draw.true_att(cell.g, cell.t);
      const auto pp = static_cast<Eigen::Index>(p);
      if (truth < band.lower(pp) || truth > band.upper(pp)) out.covered = false;
    }
  }
  if (spec.cvm) out.cvm_reject = cvm_bootstrap(panel, fits, boot, spec.alpha, clusters).reject;
  if (spec.wald) out.wald_reject = placebo_wald(att, boot, spec.alpha, clusters).reject;

  for (const auto& scheme : spec.aggregations) {
    const AggResult agg = aggregate(att, panel, scheme);
    auto record = [&](const AggParameter& p) {
      double truth = 0.0;
      for (const auto& cw : p.weights) truth += cw.w * draw.true_att(cw.cell.g, cw.cell.t);
      out.agg_labels.push_back(std::string(to_string(scheme.kind)) + ":" + p.label);
      out.agg_values.push_back(p.value);
      out.agg_truth.push_back(truth);
    };
    record(agg.overall);
    for (const auto& p : agg.partials) record(p);
  }
  return out;
}

inline void mean_sd(const std::vector<double>& v, double& mean, double& sd) {
  mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
}

}  // namespace detail

inline SimulationReport simulate(const SimulationSpec& spec) {
  if (spec.replications < 1) throw Error("cli", "replications must be at least 1");
  const auto R = static_cast<std::size_t>(spec.replications);
  std::vector<ReplicationOutcome> outcomes(R);
  std::vector<std::vector<CellIndex>> grids(R);
  parallel_for(R, spec.threads, [&](std::size_t r) { outcomes[r] = detail::run_replication(spec, static_cast<int>(r), grids[r]); });

  for (std::size_t r = 1; r < R; ++r)
    if (grids[r] != grids[0]) throw Error("dgp", "replications realized different cell grids");

  SimulationReport report;
  report.replications = spec.replications;
  const DgpSpec& dgp = spec.dgp;
  std::vector<Eigen::Index> post_index(grids[0].size(), -1);
  Eigen::Index n_post = 0;
  for (std::size_t j = 0; j < grids[0].size(); ++j)
    if (grids[0][j].kind == CellKind::post) post_index[j] = n_post++;

  for (std::size_t j = 0; j < grids[0].size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    CellSummary s;
    s.cell = grids[0][j];
    s.truth = dgp.effect.at(s.cell.g, s.cell.t);
    std::vector<double> est(R);
    double plugin = 0.0, boot = 0.0;
    for (std::size_t r = 0; r < R; ++r) {
      est[r] = outcomes[r].estimates(jj);
      plugin += outcomes[r].plugin_se(jj);
      if (spec.bands && post_index[j] >= 0) boot += outcomes[r].boot_se(post_index[j]);
    }
    detail::mean_sd(est, s.mean, s.sd);
    s.mc_se = s.sd / std::sqrt(static_cast<double>(R));
    s.mean_plugin_se = plugin / static_cast<double>(R);
    if (spec.bands && post_index[j] >= 0) s.mean_boot_se = boot / static_cast<double>(R);
    report.cells.push_back(s);
  }

  auto rate = [&](auto get) {
    double hits = 0.0;
    for (const auto& o : outcomes) hits += get(o) ? 1.0 : 0.0;
    return hits / static_cast<double>(R);
  };
  if (spec.bands) report.coverage = rate([](const ReplicationOutcome& o) { return o.covered; });
  if (spec.cvm) report.cvm_rejection = rate([](const ReplicationOutcome& o) { return *o.cvm_reject; });
  if (spec.wald) report.wald_rejection = rate([](const ReplicationOutcome& o) { return *o.wald_reject; });

  for (std::size_t a = 0; a < outcomes[0].agg_labels.size(); ++a) {
    AggSummary s;
    s.label = outcomes[0].agg_labels[a];
    std::vector<double> values(R);
    double truth = 0.0, sd = 0.0;
    for (std::size_t r = 0; r < R; ++r) {
      if (outcomes[r].agg_labels.size() != outcomes[0].agg_labels.size() || outcomes[r].agg_labels[a] != s.label)
        throw Error("aggregate", "replications produced different aggregation partials");
      values[r] = outcomes[r].agg_values[a];
      truth += outcomes[r].agg_truth[a];
    }
    detail::mean_sd(values, s.mean, sd);
    s.mc_se = sd / std::sqrt(static_cast<double>(R));
    s.mean_truth = truth / static_cast<double>(R);
    report.aggregations.push_back(s);
  }
  report.outcomes = std::move(outcomes);
  return report;
}

namespace report {

inline json simulation(const SimulationSpec& spec, const SimulationReport& rep) {
  json cells = json::array();
  for (const auto& s : rep.cells) {
    json entry{{"g", s.cell.g}, {"t", s.cell.t}, {"kind", to_string(s.cell.kind)}, {"true_att", s.truth},
               {"mean_estimate", s.mean}, {"bias", s.mean - s.truth}, {"mc_se", s.mc_se}, {"sd_estimate", s.sd},
               {"mean_plugin_se", s.mean_plugin_se}};
    entry["plugin_se_ratio"] = s.sd > 0.0 ? s.mean_plugin_se / s.sd : 0.0;
    if (!std::isnan(s.mean_boot_se)) {
      entry["mean_boot_se"] = s.mean_boot_se;
      entry["boot_se_ratio"] = s.sd > 0.0 ? s.mean_boot_se / s.sd : 0.0;
    }
    cells.push_back(entry);
  }
  json aggs = json::array();
  for (const auto& a : rep.aggregations)
    aggs.push_back(json{{"label", a.label}, {"mean_truth", a.mean_truth}, {"mean_estimate", a.mean},
                        {"bias", a.mean - a.mean_truth}, {"mc_se", a.mc_se}});
  json out{{"schema_version", kSchemaVersion},
           {"replications", rep.replications},
           {"seed", spec.seed},
           {"n_units", spec.dgp.n_units},
           {"periods", spec.dgp.periods},
           {"violation", to_string(spec.dgp.violation)},
           {"alpha", spec.alpha},
           {"B", spec.bootstrap.B},
           {"cells", cells}};
  if (rep.coverage) out["coverage"] = *rep.coverage;
  if (rep.cvm_rejection) out["cvm_rejection_rate"] = *rep.cvm_rejection;
  if (rep.wald_rejection) out["wald_rejection_rate"] = *rep.wald_rejection;
  out["aggregations"] = aggs;
  return out;
}

}  // namespace report

}  // namespace stagdid
