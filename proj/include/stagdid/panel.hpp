#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "stagdid/error.hpp"

namespace stagdid {

// First-treatment period of a unit as a 1-based period index, or no value for
// never-treated (control) units.
using Cohort = std::optional<int>;
inline constexpr Cohort kNeverTreated = std::nullopt;

enum class CellKind { post, placebo };

inline const char* to_string(CellKind kind) { return kind == CellKind::post ? "post" : "placebo"; }

// A group-time cell (g, t), both 1-based period indices.
struct CellIndex {
  int g = 0;
  int t = 0;
  CellKind kind = CellKind::post;

  static CellIndex make(int g, int t) {
    return CellIndex{g, t, g <= t ? CellKind::post : CellKind::placebo};
  }
  // Base period of the outcome difference: g-1 for post cells, t-1 for placebo cells.
  int anchor() const { return kind == CellKind::post ? g - 1 : t - 1; }
  // Exposure length t-g+1 (post cells only).
  int exposure() const { return t - g + 1; }

  friend bool operator==(const CellIndex& a, const CellIndex& b) { return a.g == b.g && a.t == b.t; }
  friend bool operator<(const CellIndex& a, const CellIndex& b) {
    return a.g != b.g ? a.g < b.g : a.t < b.t;
  }
};

namespace detail {

inline std::optional<long long> parse_integer(const std::string& s) {
  long long v = 0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last || s.empty()) return std::nullopt;
  return v;
}

// Units sort numerically when every id is an integer, lexicographically otherwise.
inline std::vector<std::size_t> unit_order(const std::vector<std::string>& ids) {
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::optional<long long>> numeric(ids.size());
  bool all_numeric = true;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    numeric[i] = parse_integer(ids[i]);
    all_numeric = all_numeric && numeric[i].has_value();
  }
  if (all_numeric) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return *numeric[a] < *numeric[b]; });
  } else {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
  }
  return order;
}

}  // namespace detail

// Balanced panel of n units observed over periods 1..T. Immutable once built.
//
// Invariants enforced by the constructor:
//   * every unit has a finite outcome in every period;
//   * cohorts lie in 2..T (a unit first treated in period 1 is rejected);
//   * the control group and every cohort are nonempty;
//   * the covariate matrix (intercept first) has full column rank within
//     every cohort-plus-control subsample.
class Panel {
 public:
  Panel(std::vector<std::string> unit_ids, std::vector<std::int64_t> time_labels,
        Eigen::MatrixXd outcomes, Eigen::MatrixXd covariates,
        std::vector<std::string> covariate_names, std::vector<Cohort> cohorts,
        std::vector<std::string> cluster_labels = {}) {
    const std::size_t n = unit_ids.size();
    const auto n_periods = static_cast<Eigen::Index>(time_labels.size());
    if (n == 0) throw Error("panel", "panel has no units");
    if (n_periods < 2) throw Error("panel", "panel needs at least two periods");
    if (outcomes.rows() != static_cast<Eigen::Index>(n) || outcomes.cols() != n_periods)
      throw Error("panel", "outcome matrix must be n_units x n_periods");
    if (covariates.rows() != static_cast<Eigen::Index>(n))
      throw Error("panel", "covariate matrix must have one row per unit");
    if (covariate_names.size() != static_cast<std::size_t>(covariates.cols()))
      throw Error("panel", "one name per covariate column is required");
    if (cohorts.size() != n) throw Error("panel", "one cohort entry per unit is required");
    if (!cluster_labels.empty() && cluster_labels.size() != n)
      throw Error("panel", "one cluster label per unit is required");
    for (Eigen::Index t = 1; t < n_periods; ++t)
      if (time_labels[t] <= time_labels[t - 1])
        throw Error("panel", "time labels must be strictly increasing");
    {
      std::set<std::string> seen;
      for (const auto& id : unit_ids)
        if (!seen.insert(id).second) throw Error("panel", "duplicate unit id '" + id + "'");
    }
    if (!outcomes.allFinite()) throw Error("panel", "outcomes contain non-finite values");
    if (!covariates.allFinite()) throw Error("panel", "covariates contain non-finite values");
    for (Eigen::Index j = 0; j < covariates.cols(); ++j)
      if ((covariates.col(j).array() == 1.0).all())
        throw Error("panel", "covariate '" + covariate_names[j] +
                                 "' is constant 1; the intercept is added automatically");

    const auto order = detail::unit_order(unit_ids);
    const auto k = covariates.cols() + 1;
    unit_ids_.resize(n);
    cohorts_.resize(n);
    cluster_labels_.resize(n);
    outcomes_.resize(static_cast<Eigen::Index>(n), n_periods);
    covariates_.resize(static_cast<Eigen::Index>(n), k);
    for (std::size_t r = 0; r < n; ++r) {
      const std::size_t src = order[r];
      const auto row = static_cast<Eigen::Index>(r);
      unit_ids_[r] = unit_ids[src];
      cohorts_[r] = cohorts[src];
      cluster_labels_[r] = cluster_labels.empty() ? unit_ids[src] : cluster_labels[src];
      outcomes_.row(row) = outcomes.row(static_cast<Eigen::Index>(src));
      covariates_(row, 0) = 1.0;
      covariates_.row(row).tail(k - 1) = covariates.row(static_cast<Eigen::Index>(src));
    }
    time_labels_ = std::move(time_labels);
    covariate_names_ = std::move(covariate_names);

    for (std::size_t r = 0; r < n; ++r) {
      if (!cohorts_[r]) continue;
      const int g = *cohorts_[r];
      if (g == 1)
        throw Error("panel", "unit '" + unit_ids_[r] +
                                 "' is treated in the first period; such units cannot be used");
      if (g < 1 || g > n_periods)
        throw Error("panel", "unit '" + unit_ids_[r] + "' has a first-treatment period outside the panel");
      cohort_sizes_[g] += 1;
    }
    n_control_ = static_cast<Eigen::Index>(
        std::count_if(cohorts_.begin(), cohorts_.end(), [](const Cohort& c) { return !c; }));
    if (n_control_ == 0) throw Error("panel", "no never-treated units: the control group is empty");
    if (cohort_sizes_.empty()) throw Error("panel", "no treated cohorts in the panel");

    {
      std::unordered_map<std::string, int> index;
      cluster_index_.resize(n);
      for (std::size_t r = 0; r < n; ++r) {
        auto [it, inserted] = index.emplace(cluster_labels_[r], static_cast<int>(index.size()));
        cluster_index_[r] = it->second;
      }
      n_clusters_ = static_cast<int>(index.size());
    }

    for (const auto& [g, size] : cohort_sizes_) {
      const auto rows = subsample_rows(g);
      if (static_cast<Eigen::Index>(rows.size()) < k)
        throw Error("panel", "cohort " + std::to_string(time_label(g)) +
                                 " plus controls has fewer units than covariates");
      Eigen::MatrixXd sub(static_cast<Eigen::Index>(rows.size()), k);
      for (std::size_t r = 0; r < rows.size(); ++r) sub.row(static_cast<Eigen::Index>(r)) = covariates_.row(rows[r]);
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(sub);
      if (qr.rank() < k)
        throw Error("panel", "covariates are rank deficient within cohort " +
                                 std::to_string(time_label(g)) + " plus controls");
    }
  }

  Eigen::Index n_units() const { return outcomes_.rows(); }
  int n_periods() const { return static_cast<int>(outcomes_.cols()); }
  Eigen::Index k() const { return covariates_.cols(); }

  // n x T, column t-1 holds period t.
  const Eigen::MatrixXd& outcomes() const { return outcomes_; }
  double outcome(Eigen::Index i, int t) const { return outcomes_(i, t - 1); }
  Eigen::VectorXd outcome_change(int t, int base) const { return outcomes_.col(t - 1) - outcomes_.col(base - 1); }
  // n x k with the intercept in column 0.
  const Eigen::MatrixXd& covariates() const { return covariates_; }
  const std::vector<std::string>& covariate_names() const { return covariate_names_; }

  const std::vector<std::string>& unit_ids() const { return unit_ids_; }
  const std::vector<std::int64_t>& time_labels() const { return time_labels_; }
  std::int64_t time_label(int t) const { return time_labels_.at(static_cast<std::size_t>(t - 1)); }
  std::optional<int> period_of_label(std::int64_t label) const {
    auto it = std::find(time_labels_.begin(), time_labels_.end(), label);
    if (it == time_labels_.end()) return std::nullopt;
    return static_cast<int>(it - time_labels_.begin()) + 1;
  }

  const Cohort& cohort(Eigen::Index i) const { return cohorts_[static_cast<std::size_t>(i)]; }
  const std::vector<Cohort>& cohorts() const { return cohorts_; }
  bool is_control(Eigen::Index i) const { return !cohorts_[static_cast<std::size_t>(i)].has_value(); }
  // The cohort set G, ascending.
  std::vector<int> treated_cohorts() const {
    std::vector<int> out;
    for (const auto& [g, size] : cohort_sizes_) out.push_back(g);
    return out;
  }
  bool has_cohort(int g) const { return cohort_sizes_.count(g) > 0; }
  Eigen::Index cohort_size(int g) const {
    auto it = cohort_sizes_.find(g);
    return it == cohort_sizes_.end() ? 0 : it->second;
  }
  Eigen::Index n_control() const { return n_control_; }
  Eigen::Index n_treated() const { return n_units() - n_control_; }

  const std::vector<std::string>& cluster_labels() const { return cluster_labels_; }
  // Cluster index per unit, numbered by first appearance in unit order.
  const std::vector<int>& cluster_index() const { return cluster_index_; }
  int n_clusters() const { return n_clusters_; }

  // Rows of units in cohort g or the control group.
  std::vector<Eigen::Index> subsample_rows(int g) const {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < n_units(); ++i)
      if (is_control(i) || *cohorts_[static_cast<std::size_t>(i)] == g) rows.push_back(i);
    return rows;
  }

  // Same panel with the user covariates dropped (intercept only).
  Panel intercept_only() const {
    return Panel(unit_ids_, time_labels_, outcomes_, Eigen::MatrixXd(n_units(), 0), {}, cohorts_,
                 cluster_labels_);
  }

  // Same panel with clusters reassigned (one label per unit in current order).
  Panel with_clusters(std::vector<std::string> labels) const {
    return Panel(unit_ids_, time_labels_, outcomes_, covariates_.rightCols(k() - 1),
                 covariate_names_, cohorts_, std::move(labels));
  }

 private:
  std::vector<std::string> unit_ids_;
  std::vector<std::int64_t> time_labels_;
  Eigen::MatrixXd outcomes_;
  Eigen::MatrixXd covariates_;
  std::vector<std::string> covariate_names_;
  std::vector<Cohort> cohorts_;
  std::vector<std::string> cluster_labels_;
  std::vector<int> cluster_index_;
  int n_clusters_ = 0;
  std::map<int, Eigen::Index> cohort_sizes_;
  Eigen::Index n_control_ = 0;
};

struct CohortMasks {
  Eigen::VectorXd treated;  // G_g
  Eigen::VectorXd control;  // C
};

inline CohortMasks cohort_masks(const Panel& panel, int g) {
  if (!panel.has_cohort(g))
    throw Error("panel", "period " + std::to_string(g) + " is not a treatment cohort");
  CohortMasks masks{Eigen::VectorXd::Zero(panel.n_units()), Eigen::VectorXd::Zero(panel.n_units())};
  for (Eigen::Index i = 0; i < panel.n_units(); ++i) {
    const auto& c = panel.cohort(i);
    if (!c) masks.control(i) = 1.0;
    else if (*c == g) masks.treated(i) = 1.0;
  }
  return masks;
}

// All (g, t) with g in G and 2 <= t <= T: post cells (g <= t) always, placebo
// cells (t < g) on request. Ordered by g, then t.
inline std::vector<CellIndex> cell_grid(const Panel& panel, bool include_placebo) {
  std::vector<CellIndex> cells;
  for (int g : panel.treated_cohorts())
    for (int t = 2; t <= panel.n_periods(); ++t)
      if (t >= g || include_placebo) cells.push_back(CellIndex::make(g, t));
  return cells;
}

// Converts an explicit n x T treatment-indicator matrix into first-treatment
// periods. Rejects entries other than 0/1 and any 1 -> 0 transition, since
// treatment is irreversible.
inline std::vector<Cohort> first_treatment_from_indicators(const Eigen::MatrixXd& treated,
                                                           const std::vector<std::string>& unit_ids = {}) {
  std::vector<Cohort> out(static_cast<std::size_t>(treated.rows()));
  auto name = [&](Eigen::Index i) {
    return unit_ids.empty() ? "row " + std::to_string(i) : "unit '" + unit_ids[static_cast<std::size_t>(i)] + "'";
  };
  for (Eigen::Index i = 0; i < treated.rows(); ++i) {
    for (Eigen::Index t = 0; t < treated.cols(); ++t) {
      const double d = treated(i, t);
      if (d != 0.0 && d != 1.0) throw Error("panel", name(i) + " has a treatment indicator other than 0/1");
      if (d == 1.0 && !out[static_cast<std::size_t>(i)]) out[static_cast<std::size_t>(i)] = static_cast<int>(t) + 1;
      if (d == 0.0 && out[static_cast<std::size_t>(i)])
        throw Error("panel", name(i) + " leaves treatment in period " + std::to_string(t + 1) +
                                 "; treatment must be irreversible");
    }
  }
  return out;
}

}  // namespace stagdid
