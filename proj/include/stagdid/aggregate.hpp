#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stagdid/attgt.hpp"
#include "stagdid/error.hpp"
#include "stagdid/panel.hpp"

namespace stagdid {

enum class AggKind { simple_avg, weighted_avg, selective, dynamic, calendar, selectivity_dynamics };

inline const char* to_string(AggKind kind) {
  switch (kind) {
    case AggKind::simple_avg: return "simple_avg";
    case AggKind::weighted_avg: return "weighted_avg";
    case AggKind::selective: return "selective";
    case AggKind::dynamic: return "dynamic";
    case AggKind::calendar: return "calendar";
    case AggKind::selectivity_dynamics: return "selectivity_dynamics";
  }
  return "?";
}

inline AggKind parse_agg_kind(const std::string& s) {
  for (AggKind k : {AggKind::simple_avg, AggKind::weighted_avg, AggKind::selective, AggKind::dynamic,
                    AggKind::calendar, AggKind::selectivity_dynamics})
    if (s == to_string(k)) return k;
  throw Error("aggregate", "unknown aggregation scheme '" + s + "'");
}

struct AggScheme {
  AggKind kind = AggKind::simple_avg;
  std::optional<int> e_prime;  // selectivity_dynamics only
};

struct CellWeight {
  CellIndex cell;
  double w = 0.0;
};

// One aggregated parameter: value = sum_gt w_gt ATT(g,t), with its influence
// vector l^w including the contribution of estimated weights.
struct AggParameter {
  std::string label;
  double value = 0.0;
  std::vector<CellWeight> weights;
  Eigen::VectorXd influence;

  double plugin_se() const {
    const double n = static_cast<double>(influence.size());
    return std::sqrt(influence.squaredNorm() / (n * n));
  }
};

struct AggResult {
  AggScheme scheme;
  AggParameter overall;
  std::vector<AggParameter> partials;
};

// P(G = g | treated): cohort shares among treated units.
inline std::map<int, double> group_shares(const Panel& panel) {
  std::map<int, double> shares;
  const double treated = static_cast<double>(panel.n_treated());
  for (int g : panel.treated_cohorts()) shares[g] = static_cast<double>(panel.cohort_size(g)) / treated;
  return shares;
}

namespace detail {

// A convex combination over a set of post cells. With share weighting,
//   w_gt = c_gt P(G=g) / sum_{g't'} c_g't' P(G=g'),
// whose estimation error enters l^w through the cohort-share sample means.
// Without it, w_gt = c_gt / sum c and the weights are deterministic.
struct WeightBlock {
  std::string label;
  std::vector<std::pair<CellIndex, double>> terms;  // (cell, c_gt)
  bool share_weighted = true;
};

inline AggParameter evaluate_block(const WeightBlock& block, const AttGtResult& att, const Panel& panel) {
  const Eigen::Index n = panel.n_units();
  const double nd = static_cast<double>(n);
  std::vector<std::size_t> columns;
  for (const auto& [cell, c] : block.terms) {
    auto j = att.find(cell.g, cell.t);
    if (!j)
      throw Error("aggregate", "required cell (g=" + std::to_string(panel.time_label(cell.g)) +
                                   ", t=" + std::to_string(panel.time_label(cell.t)) + ") is missing from the estimates");
    columns.push_back(*j);
  }
  std::map<int, double> pi;  // E_n[G_g]
  std::map<int, Eigen::VectorXd> indicator;
  if (block.share_weighted) {
    for (const auto& [cell, c] : block.terms) {
      if (pi.count(cell.g)) continue;
      indicator[cell.g] = cohort_masks(panel, cell.g).treated;
      pi[cell.g] = indicator[cell.g].sum() / nd;
    }
  }
  double denom = 0.0;
  for (const auto& [cell, c] : block.terms) denom += block.share_weighted ? c * pi[cell.g] : c;
  if (!(denom > 0.0)) throw Error("aggregate", "aggregation '" + block.label + "' has no positive weight");

  AggParameter out;
  out.label = block.label;
  out.influence = Eigen::VectorXd::Zero(n);
  // Influence of the denominator sum_g' c P_g'.
  Eigen::VectorXd denom_influence = Eigen::VectorXd::Zero(n);
  if (block.share_weighted)
    for (const auto& [cell, c] : block.terms)
      denom_influence += c * (indicator[cell.g].array() - pi[cell.g]).matrix();

  // Summing deviations from the first cell keeps the value exact when all
  // cells share one estimate.
  const double base = att.estimates(static_cast<Eigen::Index>(columns.front()));
  out.value = base;
  for (std::size_t r = 0; r < block.terms.size(); ++r) {
    const auto& [cell, c] = block.terms[r];
    const auto col = static_cast<Eigen::Index>(columns[r]);
    const double att_value = att.estimates(col);
    const double numer = block.share_weighted ? c * pi[cell.g] : c;
    const double w = numer / denom;
    out.value += w * (att_value - base);
    out.weights.push_back({cell, w});
    out.influence += w * att.influence.col(col);
    if (block.share_weighted) {
      // xi^w_gt = c (G_g - P_g) / D - c P_g (D-influence) / D^2
      const Eigen::VectorXd weight_influence =
          (c / denom) * (indicator[cell.g].array() - pi[cell.g]).matrix() - (numer / (denom * denom)) * denom_influence;
      out.influence += att_value * weight_influence;
    }
  }
  return out;
}

// Equal-weight average of already-evaluated parameters.
inline AggParameter average_of(const std::string& label, const std::vector<AggParameter>& parts, Eigen::Index n) {
  AggParameter out;
  out.label = label;
  out.influence = Eigen::VectorXd::Zero(n);
  const double share = 1.0 / static_cast<double>(parts.size());
  std::map<CellIndex, double> merged;
  out.value = parts.front().value;
  for (const auto& p : parts) {
    out.value += share * (p.value - parts.front().value);
    out.influence += share * p.influence;
    for (const auto& cw : p.weights) merged[cw.cell] += share * cw.w;
  }
  for (const auto& [cell, w] : merged) out.weights.push_back({cell, w});
  return out;
}

}  // namespace detail

// Aggregates post-treatment ATT(g,t) into a summary parameter and its
// partially aggregated components. Cohorts absent from the panel are skipped;
// dynamic and calendar averages run over the exposures (periods) supported by
// at least one estimated cell.
inline AggResult aggregate(const AttGtResult& att, const Panel& panel, const AggScheme& scheme) {
  const int T = panel.n_periods();
  const auto post = cell_grid(panel, false);
  const Eigen::Index n = panel.n_units();
  AggResult result;
  result.scheme = scheme;
  auto label = [&](const std::string& prefix, std::int64_t v) { return prefix + "=" + std::to_string(v); };

  switch (scheme.kind) {
    case AggKind::simple_avg: {
      detail::WeightBlock block{"simple_avg", {}, false};
      for (const auto& c : post) block.terms.push_back({c, 1.0});
      result.overall = detail::evaluate_block(block, att, panel);
      break;
    }
    case AggKind::weighted_avg: {
      detail::WeightBlock block{"weighted_avg", {}, true};
      for (const auto& c : post) block.terms.push_back({c, 1.0});
      result.overall = detail::evaluate_block(block, att, panel);
      break;
    }
    case AggKind::selective: {
      detail::WeightBlock overall{"selective", {}, true};
      for (int g : panel.treated_cohorts()) {
        detail::WeightBlock block{label("g", panel.time_label(g)), {}, false};
        const double c = 1.0 / static_cast<double>(T - g + 1);
        for (int t = g; t <= T; ++t) {
          block.terms.push_back({CellIndex::make(g, t), 1.0});
          overall.terms.push_back({CellIndex::make(g, t), c});
        }
        result.partials.push_back(detail::evaluate_block(block, att, panel));
      }
      result.overall = detail::evaluate_block(overall, att, panel);
      break;
    }
    case AggKind::dynamic: {
      for (int e = 1; e <= T - 1; ++e) {
        detail::WeightBlock block{label("e", e), {}, true};
        for (const auto& c : post)
          if (c.exposure() == e) block.terms.push_back({c, 1.0});
        if (!block.terms.empty()) result.partials.push_back(detail::evaluate_block(block, att, panel));
      }
      result.overall = detail::average_of("dynamic", result.partials, n);
      break;
    }
    case AggKind::calendar: {
      for (int t = 2; t <= T; ++t) {
        detail::WeightBlock block{label("t", panel.time_label(t)), {}, true};
        for (const auto& c : post)
          if (c.t == t) block.terms.push_back({c, 1.0});
        if (!block.terms.empty()) result.partials.push_back(detail::evaluate_block(block, att, panel));
      }
      result.overall = detail::average_of("calendar", result.partials, n);
      break;
    }
    case AggKind::selectivity_dynamics: {
      if (!scheme.e_prime) throw Error("aggregate", "selectivity_dynamics requires e_prime");
      const int e_prime = *scheme.e_prime;
      if (e_prime < 1 || e_prime > T - 1)
        throw Error("aggregate", "e_prime must lie in 1..T-1 (got " + std::to_string(e_prime) + ")");
      // delta_gt(e, e') = 1{t-g+1 = e} 1{T-g+1 >= e'} 1{e <= e'}
      for (int e = 1; e <= e_prime; ++e) {
        detail::WeightBlock block{label("e", e), {}, true};
        for (const auto& c : post)
          if (c.exposure() == e && T - c.g + 1 >= e_prime) block.terms.push_back({c, 1.0});
        if (block.terms.empty())
          throw Error("aggregate", "no cohort has at least " + std::to_string(e_prime) + " post-treatment periods");
        result.partials.push_back(detail::evaluate_block(block, att, panel));
      }
      result.overall = detail::average_of("selectivity_dynamics", result.partials, n);
      break;
    }
  }
  return result;
}

}  // namespace stagdid
