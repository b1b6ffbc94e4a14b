#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "stagdid/error.hpp"
#include "stagdid/panel.hpp"
#include "stagdid/parallel.hpp"

namespace stagdid {

enum class MultiplierLaw { mammen, rademacher };

inline const char* to_string(MultiplierLaw law) { return law == MultiplierLaw::mammen ? "mammen" : "rademacher"; }

inline MultiplierLaw parse_multiplier_law(const std::string& s) {
  if (s == "mammen") return MultiplierLaw::mammen;
  if (s == "rademacher") return MultiplierLaw::rademacher;
  throw Error("mboot", "unknown multiplier law '" + s + "'");
}

struct MultiplierSpec {
  MultiplierLaw law = MultiplierLaw::mammen;
  int B = 999;
  std::uint64_t seed = 0;
  bool cluster = false;
  int threads = 1;
};

// Assignment of units to the clusters that share one multiplier draw.
struct ClusterMap {
  std::vector<int> cluster_of_unit;
  int n_clusters = 0;

  static ClusterMap iid(Eigen::Index n_units) {
    ClusterMap map;
    map.cluster_of_unit.resize(static_cast<std::size_t>(n_units));
    for (std::size_t i = 0; i < map.cluster_of_unit.size(); ++i) map.cluster_of_unit[i] = static_cast<int>(i);
    map.n_clusters = static_cast<int>(n_units);
    return map;
  }
  static ClusterMap from_panel(const Panel& panel, bool cluster) {
    if (!cluster) return iid(panel.n_units());
    return ClusterMap{panel.cluster_index(), panel.n_clusters()};
  }
  Eigen::Index n_units() const { return static_cast<Eigen::Index>(cluster_of_unit.size()); }
};

namespace detail {

// Engine for draw b: seeded from (master seed, b) alone, so any draw can be
// regenerated independently of every other draw and of thread scheduling.
inline std::mt19937_64 draw_engine(std::uint64_t seed, std::uint64_t stream, std::uint32_t domain = 0x6d62) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), domain};
  return std::mt19937_64(seq);
}

inline double uniform01(std::mt19937_64& engine) { return static_cast<double>(engine() >> 11) * 0x1.0p-53; }

// Mammen two-point law: P(V = 1 - kappa) = kappa / sqrt(5), P(V = kappa) = 1 - kappa / sqrt(5).
inline constexpr double kMammenKappa = 1.6180339887498948482;   // (sqrt(5) + 1) / 2
inline constexpr double kMammenLowProb = 0.72360679774997896964;  // kappa / sqrt(5)

inline double draw_multiplier(MultiplierLaw law, std::mt19937_64& engine) {
  const double u = uniform01(engine);
  if (law == MultiplierLaw::mammen) return u < kMammenLowProb ? 1.0 - kMammenKappa : kMammenKappa;
  return u < 0.5 ? -1.0 : 1.0;
}

inline void fill_multipliers(const MultiplierSpec& spec, const ClusterMap& clusters, int b, double* out) {
  auto engine = draw_engine(spec.seed, static_cast<std::uint64_t>(b));
  if (!spec.cluster) {
    for (Eigen::Index i = 0; i < clusters.n_units(); ++i) out[i] = draw_multiplier(spec.law, engine);
    return;
  }
  std::vector<double> per_cluster(static_cast<std::size_t>(clusters.n_clusters));
  for (auto& v : per_cluster) v = draw_multiplier(spec.law, engine);
  for (Eigen::Index i = 0; i < clusters.n_units(); ++i)
    out[i] = per_cluster[static_cast<std::size_t>(clusters.cluster_of_unit[static_cast<std::size_t>(i)])];
}

inline constexpr int kDrawBlock = 64;

}  // namespace detail

// Multipliers V_1..V_n for draw b. In cluster mode one value is drawn per
// cluster and shared by its units.
inline Eigen::VectorXd draw_multipliers(const MultiplierSpec& spec, const ClusterMap& clusters, int b) {
  Eigen::VectorXd v(clusters.n_units());
  detail::fill_multipliers(spec, clusters, b, v.data());
  return v;
}

inline Eigen::VectorXd draw_multipliers(const MultiplierSpec& spec, const Panel& panel, int b) {
  return draw_multipliers(spec, ClusterMap::from_panel(panel, spec.cluster), b);
}

// Calls fn(first_draw, V) for consecutive blocks of draws, where V is an
// n x block matrix of multipliers. Blocks have a fixed size, so per-block
// arithmetic is the same for any thread count.
template <typename Fn>
void for_each_draw_block(const MultiplierSpec& spec, const ClusterMap& clusters, Fn&& fn) {
  if (spec.B < 1) throw Error("mboot", "number of bootstrap draws must be at least 1");
  const int n_blocks = (spec.B + detail::kDrawBlock - 1) / detail::kDrawBlock;
  parallel_for(static_cast<std::size_t>(n_blocks), spec.threads, [&](std::size_t blk) {
    const int first = static_cast<int>(blk) * detail::kDrawBlock;
    const int count = std::min(detail::kDrawBlock, spec.B - first);
    Eigen::MatrixXd v(clusters.n_units(), count);
    for (int c = 0; c < count; ++c) detail::fill_multipliers(spec, clusters, first + c, v.col(c).data());
    fn(first, v);
  });
}

// Bootstrap draws of the limiting distribution: row b is
// (1/sqrt(n)) sum_i V_{b,i} Psi_i.
inline Eigen::MatrixXd bootstrap_draws(const Eigen::MatrixXd& influence, const MultiplierSpec& spec,
                                       const ClusterMap& clusters) {
  if (clusters.n_units() != influence.rows())
    throw Error("mboot", "cluster map and influence matrix disagree on the number of units");
  Eigen::MatrixXd draws(spec.B, influence.cols());
  const double scale = 1.0 / std::sqrt(static_cast<double>(influence.rows()));
  for_each_draw_block(spec, clusters, [&](int first, const Eigen::MatrixXd& v) {
    draws.middleRows(first, v.cols()).noalias() = scale * (v.transpose() * influence);
  });
  return draws;
}

inline Eigen::MatrixXd bootstrap_draws(const Eigen::MatrixXd& influence, const MultiplierSpec& spec) {
  if (spec.cluster) throw Error("mboot", "cluster mode needs a cluster map");
  return bootstrap_draws(influence, spec, ClusterMap::iid(influence.rows()));
}

// Empirical quantile with linear interpolation between order statistics
// (h = (B - 1) p, the "type 7" rule).
inline double quantile_type7(std::vector<double> values, double p) {
  if (values.empty()) throw Error("mboot", "quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

// z_{0.75} - z_{0.25} for the standard normal.
inline constexpr double kNormalIqr = 1.3489795003921634;

struct BandResult {
  std::vector<CellIndex> cells;  // empty for non-cell parameters
  Eigen::VectorXd estimates;
  Eigen::VectorXd sigma_half;    // bootstrap IQR / (z_.75 - z_.25)
  std::vector<bool> fallback;    // sigma_half forced to 1 (zero bootstrap IQR)
  double c_hat = 0.0;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  double alpha = 0.05;
  int B_effective = 0;
  Eigen::Index n_units = 0;

  // Bootstrap standard error sigma_half / sqrt(n).
  Eigen::VectorXd se() const { return sigma_half / std::sqrt(static_cast<double>(n_units)); }
};

// Studentized simultaneous band from precomputed bootstrap draws (B x m).
inline BandResult band_from_draws(const Eigen::VectorXd& estimates, const Eigen::MatrixXd& draws, Eigen::Index n_units,
                                  double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error("mboot", "alpha must lie in (0, 1)");
  const Eigen::Index m = estimates.size();
  if (m < 1) throw Error("mboot", "no parameters to cover");
  if (draws.cols() != m) throw Error("mboot", "draws and estimates disagree on the number of parameters");
  const auto B = draws.rows();
  BandResult band;
  band.estimates = estimates;
  band.alpha = alpha;
  band.B_effective = static_cast<int>(B);
  band.n_units = n_units;
  band.sigma_half.resize(m);
  band.fallback.assign(static_cast<std::size_t>(m), false);
  for (Eigen::Index j = 0; j < m; ++j) {
    std::vector<double> column(draws.col(j).data(), draws.col(j).data() + B);
    const double iqr = quantile_type7(column, 0.75) - quantile_type7(column, 0.25);
    if (iqr > 0.0) {
      band.sigma_half(j) = iqr / kNormalIqr;
    } else {
      band.sigma_half(j) = 1.0;
      band.fallback[static_cast<std::size_t>(j)] = true;
    }
  }
  std::vector<double> t_stats(static_cast<std::size_t>(B));
  for (Eigen::Index b = 0; b < B; ++b)
    t_stats[static_cast<std::size_t>(b)] = (draws.row(b).transpose().cwiseAbs().cwiseQuotient(band.sigma_half)).maxCoeff();
  band.c_hat = quantile_type7(std::move(t_stats), 1.0 - alpha);
  const Eigen::VectorXd half = band.c_hat * band.sigma_half / std::sqrt(static_cast<double>(n_units));
  band.lower = estimates - half;
  band.upper = estimates + half;
  return band;
}

inline BandResult simultaneous_band(const Eigen::VectorXd& estimates, const Eigen::MatrixXd& influence, double alpha,
                                    const MultiplierSpec& spec, const ClusterMap& clusters) {
  return band_from_draws(estimates, bootstrap_draws(influence, spec, clusters), influence.rows(), alpha);
}

}  // namespace stagdid
