#pragma once

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "stagdid/aggregate.hpp"
#include "stagdid/attgt.hpp"
#include "stagdid/csv.hpp"
#include "stagdid/dgp.hpp"
#include "stagdid/mboot.hpp"
#include "stagdid/pretest.hpp"
#include "stagdid/propensity.hpp"
#include "stagdid/report.hpp"
#include "stagdid/simulate.hpp"
#include "stagdid/svg.hpp"

namespace stagdid {

enum class Mode { conditional, unconditional };
enum class TrimPolicy { warn, error };

struct BootstrapConfig {
  MultiplierLaw law = MultiplierLaw::mammen;
  int B = 999;
  std::uint64_t seed = 1;
  bool cluster = false;  // needs schema.cluster
  double alpha = 0.05;
};

// One run of the command-line tool. Every field has a default, so a config
// file only needs the keys it changes.
struct RunConfig {
  std::string input;
  CsvSchema schema;
  Mode mode = Mode::conditional;
  Link link = Link::logit;
  BootstrapConfig bootstrap;
  double trim = 0.999;
  TrimPolicy trim_policy = TrimPolicy::warn;
  std::vector<AggScheme> aggregations;
  bool cvm = true;
  bool wald = true;
  std::string output_dir = "out";
  bool plot = false;
  bool influence_csv = false;
  int threads = 1;
  DgpSpec dgp;
  int replications = 100;
  bool simulate_bands = true;
  bool simulate_cvm = false;
  bool simulate_wald = false;

  MultiplierSpec multiplier_spec() const {
    return MultiplierSpec{bootstrap.law, bootstrap.B, bootstrap.seed, bootstrap.cluster, threads};
  }
  FitOptions fit_options() const {
    FitOptions o;
    o.link = link;
    return o;
  }
};

namespace detail {

using json = nlohmann::json;

template <typename T>
void read_key(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error("cli", std::string("config key '") + key + "': " + e.what());
  }
}

inline void check_keys(const json& j, const std::vector<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw Error("cli", where + " must be a JSON object");
  for (const auto& item : j.items())
    if (std::find(allowed.begin(), allowed.end(), item.key()) == allowed.end())
      throw Error("cli", "unknown key '" + item.key() + "' in " + where);
}

inline AggScheme parse_scheme(const json& j) {
  AggScheme s;
  if (j.is_string()) {
    s.kind = parse_agg_kind(j.get<std::string>());
    return s;
  }
  check_keys(j, {"scheme", "e_prime"}, "aggregation request");
  std::string name;
  read_key(j, "scheme", name);
  s.kind = parse_agg_kind(name);
  if (j.contains("e_prime")) s.e_prime = j.at("e_prime").get<int>();
  return s;
}

inline DgpSpec parse_dgp(const json& j) {
  check_keys(j,
             {"n_units", "periods", "k", "covariate_law", "cohorts", "trend_intercept", "trend_slopes", "unit_effect_scale",
              "noise_scale", "effect", "violation", "violation_size", "violation_covariate", "seed"},
             "dgp");
  DgpSpec d;
  read_key(j, "n_units", d.n_units);
  read_key(j, "periods", d.periods);
  read_key(j, "k", d.k);
  std::string law = "uniform";
  read_key(j, "covariate_law", law);
  if (law == "uniform") d.covariate_law = CovariateLaw::uniform;
  else if (law == "normal") d.covariate_law = CovariateLaw::normal;
  else throw Error("cli", "unknown covariate_law '" + law + "'");
  if (j.contains("cohorts")) {
    for (const auto& c : j.at("cohorts")) {
      check_keys(c, {"g", "intercept", "slopes"}, "dgp cohort");
      CohortSelection sel;
      read_key(c, "g", sel.g);
      read_key(c, "intercept", sel.intercept);
      read_key(c, "slopes", sel.slopes);
      d.cohorts.push_back(sel);
    }
  }
  read_key(j, "trend_intercept", d.trend_intercept);
  read_key(j, "trend_slopes", d.trend_slopes);
  read_key(j, "unit_effect_scale", d.unit_effect_scale);
  read_key(j, "noise_scale", d.noise_scale);
  if (j.contains("effect")) {
    const json& e = j.at("effect");
    check_keys(e, {"kind", "value", "table"}, "dgp effect");
    std::string kind = "constant";
    read_key(e, "kind", kind);
    if (kind == "constant") d.effect.kind = EffectKind::constant;
    else if (kind == "dynamic") d.effect.kind = EffectKind::dynamic;
    else if (kind == "table") d.effect.kind = EffectKind::table;
    else throw Error("cli", "unknown effect kind '" + kind + "'");
    read_key(e, "value", d.effect.value);
    if (e.contains("table"))
      for (const auto& row : e.at("table")) d.effect.table[{row.at("g").get<int>(), row.at("t").get<int>()}] = row.at("att").get<double>();
  }
  std::string violation = "none";
  read_key(j, "violation", violation);
  if (violation == "none") d.violation = Violation::none;
  else if (violation == "unconditional_pretrend") d.violation = Violation::unconditional_pretrend;
  else if (violation == "conditional_offsetting") d.violation = Violation::conditional_offsetting;
  else throw Error("cli", "unknown violation '" + violation + "'");
  read_key(j, "violation_size", d.violation_size);
  read_key(j, "violation_covariate", d.violation_covariate);
  read_key(j, "seed", d.seed);
  return d;
}

}  // namespace detail

// Parses a JSON config. Relative input and output paths are kept as given.
inline RunConfig parse_config(const nlohmann::json& j) {
  using detail::read_key;
  detail::check_keys(j,
                     {"input", "schema", "mode", "link", "bootstrap", "trim", "trim_policy", "aggregations", "pretest",
                      "output_dir", "plot", "influence_csv", "threads", "dgp", "replications", "simulate"},
                     "config");
  RunConfig c;
  read_key(j, "input", c.input);
  if (j.contains("schema")) {
    const auto& s = j.at("schema");
    detail::check_keys(s, {"unit", "time", "outcome", "group", "treatment", "cluster", "covariates"}, "schema");
    read_key(s, "unit", c.schema.unit);
    read_key(s, "time", c.schema.time);
    read_key(s, "outcome", c.schema.outcome);
    read_key(s, "group", c.schema.group);
    read_key(s, "treatment", c.schema.treatment);
    if (!c.schema.treatment.empty() && !s.contains("group")) c.schema.group.clear();
    read_key(s, "cluster", c.schema.cluster);
    read_key(s, "covariates", c.schema.covariates);
  }
  std::string mode = "conditional";
  read_key(j, "mode", mode);
  if (mode == "conditional") c.mode = Mode::conditional;
  else if (mode == "unconditional") c.mode = Mode::unconditional;
  else throw Error("cli", "mode must be 'conditional' or 'unconditional'");
  std::string link = "logit";
  read_key(j, "link", link);
  if (link == "logit") c.link = Link::logit;
  else if (link == "probit") c.link = Link::probit;
  else throw Error("cli", "link must be 'logit' or 'probit'");
  if (j.contains("bootstrap")) {
    const auto& b = j.at("bootstrap");
    detail::check_keys(b, {"law", "B", "seed", "cluster", "alpha"}, "bootstrap");
    std::string law = "mammen";
    read_key(b, "law", law);
    c.bootstrap.law = parse_multiplier_law(law);
    read_key(b, "B", c.bootstrap.B);
    read_key(b, "seed", c.bootstrap.seed);
    read_key(b, "cluster", c.bootstrap.cluster);
    read_key(b, "alpha", c.bootstrap.alpha);
  }
  read_key(j, "trim", c.trim);
  std::string policy = "warn";
  read_key(j, "trim_policy", policy);
  if (policy == "warn") c.trim_policy = TrimPolicy::warn;
  else if (policy == "error") c.trim_policy = TrimPolicy::error;
  else throw Error("cli", "trim_policy must be 'warn' or 'error'");
  if (j.contains("aggregations"))
    for (const auto& a : j.at("aggregations")) c.aggregations.push_back(detail::parse_scheme(a));
  if (j.contains("pretest")) {
    const auto& p = j.at("pretest");
    detail::check_keys(p, {"cvm", "wald"}, "pretest");
    read_key(p, "cvm", c.cvm);
    read_key(p, "wald", c.wald);
  }
  read_key(j, "output_dir", c.output_dir);
  read_key(j, "plot", c.plot);
  read_key(j, "influence_csv", c.influence_csv);
  read_key(j, "threads", c.threads);
  if (j.contains("dgp")) c.dgp = detail::parse_dgp(j.at("dgp"));
  read_key(j, "replications", c.replications);
  if (j.contains("simulate")) {
    const auto& s = j.at("simulate");
    detail::check_keys(s, {"bands", "cvm", "wald"}, "simulate");
    read_key(s, "bands", c.simulate_bands);
    read_key(s, "cvm", c.simulate_cvm);
    read_key(s, "wald", c.simulate_wald);
  }
  if (!(c.bootstrap.alpha > 0.0 && c.bootstrap.alpha < 1.0)) throw Error("cli", "alpha must lie in (0, 1)");
  if (c.bootstrap.B < 1) throw Error("cli", "B must be at least 1");
  if (c.threads < 1) throw Error("cli", "threads must be at least 1");
  if (c.bootstrap.cluster && c.schema.cluster.empty())
    throw Error("cli", "bootstrap.cluster requires schema.cluster to name a column");
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cli", "cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("cli", "config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cli", "cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error("cli", "failed writing '" + path.string() + "'");
}

inline void write_json(const std::filesystem::path& path, const report::json& j) { write_text(path, j.dump(2) + "\n"); }

inline std::filesystem::path prepare_output(const RunConfig& c) {
  std::filesystem::path dir(c.output_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cli", "cannot create output directory '" + c.output_dir + "': " + ec.message());
  return dir;
}

// Shared front half of every data command: ingest, fit and check overlap.
struct Pipeline {
  Panel panel;
  PropensityFits fits;
  report::json diagnostics;
};

inline Pipeline run_pipeline(const RunConfig& c, std::ostream& log) {
  if (c.input.empty()) throw Error("cli", "config has no input path");
  Panel panel = ingest_csv(c.input, c.schema);
  if (c.mode == Mode::unconditional) panel = panel.intercept_only();
  PropensityFits fits = fit_all(panel, c.fit_options(), c.threads);
  report::json diag = report::json::array();
  for (const auto& [g, fit] : fits) {
    const OverlapReport overlap = check_overlap(fit, panel, c.trim);
    if (!overlap.violations.empty()) {
      const std::string msg = std::to_string(overlap.violations.size()) + " unit(s) with fitted score above " +
                              report::json(c.trim).dump() + " for group " + std::to_string(panel.time_label(g));
      if (c.trim_policy == TrimPolicy::error) throw Error("propensity", msg);
      log << "warning: propensity: " << msg << "\n";
    }
    diag.push_back(report::fit_diagnostics(panel, fit, overlap));
  }
  return Pipeline{std::move(panel), std::move(fits), std::move(diag)};
}

}  // namespace detail

// ATT(g,t) for every cell with simultaneous bands. Writes panel.json,
// propensity.json, attgt.json, bands.json and optionally one SVG per group.
inline std::vector<std::string> cmd_estimate(const RunConfig& c, std::ostream& log = std::cerr) {
  const auto dir = detail::prepare_output(c);
  const auto p = detail::run_pipeline(c, log);
  const AttGtResult att = att_all(p.panel, p.fits, true, c.threads);
  const MultiplierSpec spec = c.multiplier_spec();
  const ClusterMap clusters = ClusterMap::from_panel(p.panel, spec.cluster);
  BandResult band = simultaneous_band(att.estimates, att.influence, c.bootstrap.alpha, spec, clusters);
  band.cells = att.cells;

  std::vector<std::string> written;
  auto emit = [&](const std::string& name, const report::json& j) {
    detail::write_json(dir / name, j);
    written.push_back((dir / name).string());
  };
  emit("panel.json", report::panel_summary(p.panel));
  emit("propensity.json", report::json{{"schema_version", report::kSchemaVersion}, {"fits", p.diagnostics}});
  emit("attgt.json", report::attgt(p.panel, att));
  emit("bands.json", report::band(p.panel, band, spec));
  if (c.influence_csv) {
    std::ostringstream os;
    report::influence_csv(p.panel, att, os);
    detail::write_text(dir / "influence.csv", os.str());
    written.push_back((dir / "influence.csv").string());
  }
  if (c.plot) {
    for (int g : p.panel.treated_cohorts()) {
      const std::string name = "event_study_g" + std::to_string(p.panel.time_label(g)) + ".svg";
      detail::write_text(dir / name, event_study_svg(p.panel, band, g));
      written.push_back((dir / name).string());
    }
  }
  return written;
}

// Aggregated parameters for each requested scheme (all six when none are
// requested; selectivity_dynamics then needs an explicit e_prime and is skipped).
inline std::vector<std::string> cmd_aggregate(const RunConfig& c, std::ostream& log = std::cerr) {
  const auto dir = detail::prepare_output(c);
  const auto p = detail::run_pipeline(c, log);
  const AttGtResult att = att_all(p.panel, p.fits, false, c.threads);
  std::vector<AggScheme> schemes = c.aggregations;
  if (schemes.empty())
    for (AggKind k : {AggKind::simple_avg, AggKind::weighted_avg, AggKind::selective, AggKind::dynamic, AggKind::calendar})
      schemes.push_back(AggScheme{k, std::nullopt});

  const MultiplierSpec spec = c.multiplier_spec();
  const ClusterMap clusters = ClusterMap::from_panel(p.panel, spec.cluster);
  report::json out = report::json::array();
  for (const auto& scheme : schemes) {
    const AggResult agg = aggregate(att, p.panel, scheme);
    Eigen::MatrixXd infl(p.panel.n_units(), static_cast<Eigen::Index>(agg.partials.size()) + 1);
    Eigen::VectorXd est(infl.cols());
    infl.col(0) = agg.overall.influence;
    est(0) = agg.overall.value;
    for (std::size_t k = 0; k < agg.partials.size(); ++k) {
      infl.col(static_cast<Eigen::Index>(k) + 1) = agg.partials[k].influence;
      est(static_cast<Eigen::Index>(k) + 1) = agg.partials[k].value;
    }
    const BandResult band = simultaneous_band(est, infl, c.bootstrap.alpha, spec, clusters);
    report::json entry = report::aggregation(p.panel, agg, band.se());
    entry["c_hat"] = band.c_hat;
    out.push_back(entry);
  }
  const auto path = dir / "agg.json";
  detail::write_json(path, report::json{{"schema_version", report::kSchemaVersion},
                                        {"alpha", c.bootstrap.alpha},
                                        {"B", spec.B},
                                        {"law", to_string(spec.law)},
                                        {"aggregations", out}});
  return {path.string()};
}

// CvM pre-test of augmented conditional parallel trends, plus the placebo
// Wald test when requested.
inline std::vector<std::string> cmd_pretest(const RunConfig& c, std::ostream& log = std::cerr) {
  if (!c.cvm && !c.wald) throw Error("cli", "no pre-test requested");
  const auto dir = detail::prepare_output(c);
  const auto p = detail::run_pipeline(c, log);
  const MultiplierSpec spec = c.multiplier_spec();
  const ClusterMap clusters = ClusterMap::from_panel(p.panel, spec.cluster);
  report::json out{{"schema_version", report::kSchemaVersion}};
  if (c.cvm) {
    const CvmResult r = cvm_bootstrap(p.panel, p.fits, spec, c.bootstrap.alpha, clusters);
    out.update(report::cvm(p.panel, r));
  }
  if (c.wald) {
    const AttGtResult att = att_all(p.panel, p.fits, true, c.threads);
    out["wald"] = report::wald(placebo_wald(att, spec, c.bootstrap.alpha, clusters));
  }
  const auto path = dir / "pretest.json";
  detail::write_json(path, out);
  return {path.string()};
}

inline SimulationSpec simulation_spec(const RunConfig& c) {
  SimulationSpec s;
  s.dgp = c.dgp;
  s.replications = c.replications;
  s.seed = c.bootstrap.seed;
  s.conditional = c.mode == Mode::conditional;
  s.fit = c.fit_options();
  s.bootstrap = c.multiplier_spec();
  s.bootstrap.cluster = false;
  s.alpha = c.bootstrap.alpha;
  s.bands = c.simulate_bands;
  s.cvm = c.simulate_cvm;
  s.wald = c.simulate_wald;
  s.aggregations = c.aggregations;
  s.threads = c.threads;
  return s;
}

// Monte Carlo report for the configured DGP.
inline std::vector<std::string> cmd_simulate(const RunConfig& c, std::ostream& = std::cerr) {
  const auto dir = detail::prepare_output(c);
  const SimulationSpec s = simulation_spec(c);
  const SimulationReport rep = simulate(s);
  const auto path = dir / "simulate.json";
  detail::write_json(path, report::simulation(s, rep));
  return {path.string()};
}

// Draws one panel from the configured DGP: panel.csv and truth.json.
inline std::vector<std::string> cmd_generate(const RunConfig& c, std::ostream& = std::cerr) {
  const auto dir = detail::prepare_output(c);
  const DgpDraw draw = generate(c.dgp);
  std::ostringstream csv;
  write_csv(draw.panel, csv);
  detail::write_text(dir / "panel.csv", csv.str());
  detail::write_json(dir / "truth.json", report::truth(draw.panel, draw));
  return {(dir / "panel.csv").string(), (dir / "truth.json").string()};
}

}  // namespace stagdid
