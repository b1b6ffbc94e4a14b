#include <gtest/gtest.h>

#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "stagdid/attgt.hpp"
#include "stagdid/dominance.hpp"
#include "stagdid/pretest.hpp"

using namespace stagdid;

namespace {

std::vector<Cohort> cohorts_of(const Panel& p) {
  std::vector<Cohort> g;
  for (Eigen::Index i = 0; i < p.n_units(); ++i) g.push_back(p.cohort(i));
  return g;
}

std::vector<std::string> names_of(const Panel& p) { return p.covariate_names(); }

Panel rebuild(const Panel& p, const Eigen::MatrixXd& y, const Eigen::MatrixXd& x) {
  return Panel(p.unit_ids(), p.time_labels(), y, x, names_of(p), cohorts_of(p));
}

Panel with_outcomes(const Panel& p, const Eigen::MatrixXd& y) { return rebuild(p, y, p.covariates().rightCols(p.k() - 1)); }

oracle::Vec fitted_of(const Panel& p, const PropensityFit& fit) {
  const auto d = fixture::to_data(p);
  return oracle::fitted(d, oracle::Vec(fit.coefficients.data(), fit.coefficients.data() + fit.coefficients.size()));
}

Eigen::Index cell_column(const AttGtResult& att, int g, int t) {
  for (std::size_t j = 0; j < att.cells.size(); ++j)
    if (att.cells[j].g == g && att.cells[j].t == t) return static_cast<Eigen::Index>(j);
  return -1;
}

MultiplierSpec boot_spec(int B, std::uint64_t seed) {
  MultiplierSpec s;
  s.B = B;
  s.seed = seed;
  return s;
}

}  // namespace

TEST(JHat, FullSupportRecoversPlaceboAtt) {
  const auto d = fixture::draw(400, 4, 31);
  const Panel& p = d.panel;
  const auto fits = fit_all(p);
  const auto att = att_all(p, fits, true);
  const Eigen::VectorXd top = indicator_coordinates(p).colwise().maxCoeff();
  const Eigen::VectorXd below = indicator_coordinates(p).colwise().minCoeff().array() - 1.0;
  for (const auto& [g, t] : std::vector<std::pair<int, int>>{{3, 2}, {4, 2}, {4, 3}}) {
    const Eigen::Index j = cell_column(att, g, t);
    ASSERT_GE(j, 0);
    EXPECT_NEAR(j_hat(p, fits.at(g), g, t, top), att.estimates(j), 1e-12);
    EXPECT_EQ(j_hat(p, fits.at(g), g, t, below), 0.0);
    const Eigen::VectorXd psi = psi_test(p, fits.at(g), g, t, top);
    EXPECT_LT((psi - att.influence.col(j)).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT(std::abs(psi.mean()), 1e-10);
  }
}

TEST(JHat, MatchesDirectLoops) {
  const auto d = fixture::draw(30, 4, 32);
  const Panel& p = d.panel;
  const auto data = fixture::to_data(p);
  const auto fits = fit_all(p);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unif(-1.1, 1.1);
  for (int g : {3, 4})
    for (int t = 2; t < g; ++t) {
      const auto p_lib = fitted_of(p, fits.at(g));
      const auto p_ref = oracle::fitted(data, oracle::binary_mle(data, g, oracle::Vec(data.n(), 1.0)));
      for (int rep = 0; rep < 40; ++rep) {
        Eigen::Vector2d u;
        if (rep < 30) u = indicator_coordinates(p).row(rep).transpose();
        else u << unif(rng), unif(rng);
        const double lib = j_hat(p, fits.at(g), g, t, u);
        EXPECT_NEAR(lib, oracle::j_hat(data, g, t, p_lib, {u(0), u(1)}), 1e-12);
        EXPECT_NEAR(lib, oracle::j_hat(data, g, t, p_ref, {u(0), u(1)}), 1e-8);
      }
    }
}

TEST(JHat, RejectsNonPlaceboCells) {
  const auto d = fixture::draw(200, 4, 33);
  const auto fits = fit_all(d.panel);
  const Eigen::Vector2d u(0.0, 0.0);
  EXPECT_THROW(j_hat(d.panel, fits.at(3), 3, 3, u), Error);
  EXPECT_THROW(j_hat(d.panel, fits.at(3), 3, 1, u), Error);
  EXPECT_THROW(j_hat(d.panel, fits.at(3), 4, 2, u), Error);
  EXPECT_THROW(j_hat(d.panel, fits.at(3), 3, 2, Eigen::Vector3d::Zero()), Error);
}

TEST(PsiTest, MatchesEmpiricalInfluence) {
  const auto d = fixture::draw(40, 4, 34);
  const Panel& p = d.panel;
  const auto data = fixture::to_data(p);
  const auto fits = fit_all(p);
  for (int row : {0, 7, 19}) {
    const Eigen::VectorXd u = indicator_coordinates(p).row(row).transpose();
    const oracle::Vec uv(u.data(), u.data() + u.size());
    for (const auto& [g, t] : std::vector<std::pair<int, int>>{{3, 2}, {4, 3}}) {
      const Eigen::VectorXd psi = psi_test(p, fits.at(g), g, t, u);
      auto stat = [&, g = g, t = t](const oracle::Vec& w) {
        return oracle::j_hat(data, g, t, oracle::fitted(data, oracle::binary_mle(data, g, w)), uv, w);
      };
      for (std::size_t i = 0; i < data.n(); ++i) {
        const double ref = oracle::empirical_influence(stat, data.n(), i);
        EXPECT_NEAR(psi(static_cast<Eigen::Index>(i)), ref, 1e-5 * (1.0 + std::abs(ref))) << g << "," << t << " unit " << i;
      }
      EXPECT_LT(std::abs(psi.mean()), 1e-8);  // up to the score tolerance of the fit
    }
  }
}

TEST(Cvm, MatchesDirectLoops) {
  for (int k : {1, 2, 3}) {
    const auto d = fixture::draw(40, 4, 35, k);
    const Panel& p = d.panel;
    const auto fits = fit_all(p);
    std::map<int, oracle::Vec> p_by_g;
    for (int g : {3, 4}) p_by_g[g] = fitted_of(p, fits.at(g));
    const auto r = cvm_statistic(p, fits);
    const double ref = oracle::cvm(fixture::to_data(p), p_by_g, 4);
    EXPECT_NEAR(r.statistic, ref, 1e-10 * (1.0 + ref)) << "k=" << k;
    double total = 0.0;
    for (const auto& c : r.per_cell) {
      EXPECT_GE(c.contribution, 0.0);
      total += c.contribution;
    }
    EXPECT_NEAR(total, r.statistic, 1e-14 * (1.0 + r.statistic));
    EXPECT_EQ(r.per_cell.size(), 3u);
  }
}

TEST(Cvm, BootstrapDrawMatchesDirectConstruction) {
  // With B = 1 the critical value is the single bootstrap statistic
  // sum over cells and grid points of (E_n[V psi_test(u)])^2.
  const auto d = fixture::draw(60, 4, 36);
  const Panel& p = d.panel;
  const auto fits = fit_all(p);
  const auto spec = boot_spec(1, 99);
  const auto r = cvm_bootstrap(p, fits, spec, 0.05, ClusterMap::iid(p.n_units()));
  const Eigen::VectorXd v = draw_multipliers(spec, ClusterMap::iid(p.n_units()), 0);
  const Eigen::MatrixXd coords = indicator_coordinates(p);
  double ref = 0.0;
  for (const auto& [g, t] : std::vector<std::pair<int, int>>{{3, 2}, {4, 2}, {4, 3}})
    for (Eigen::Index j = 0; j < p.n_units(); ++j) {
      const double jstar = v.dot(psi_test(p, fits.at(g), g, t, coords.row(j).transpose())) / 60.0;
      ref += jstar * jstar;
    }
  EXPECT_NEAR(r.critical_value, ref, 1e-10 * (1.0 + ref));
  EXPECT_TRUE(r.p_value == 0.5 || r.p_value == 1.0);
  EXPECT_NEAR(r.statistic, cvm_statistic(p, fits).statistic, 1e-14);
}

TEST(Cvm, NoPreTreatmentChangeGivesZero) {
  const auto d = fixture::draw(300, 4, 37);
  Eigen::MatrixXd y = d.panel.outcomes();
  // Periods 1..3 share each unit's period-1 value, so every placebo change is zero.
  y.col(1) = y.col(0);
  y.col(2) = y.col(0);
  const Panel p = with_outcomes(d.panel, y);
  const auto fits = fit_all(p);
  const auto r = cvm_bootstrap(p, fits, boot_spec(199, 3), 0.05, ClusterMap::iid(p.n_units()));
  EXPECT_EQ(r.statistic, 0.0);
  EXPECT_EQ(r.critical_value, 0.0);
  EXPECT_EQ(r.p_value, 1.0);
  EXPECT_FALSE(r.reject);
}

TEST(Cvm, InvariantToOutcomeLevels) {
  const auto d = fixture::draw(300, 4, 38);
  const auto fits = fit_all(d.panel);
  const double base = cvm_statistic(d.panel, fits).statistic;
  Eigen::MatrixXd y = d.panel.outcomes();
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  for (Eigen::Index i = 0; i < y.rows(); ++i) y.row(i).array() += 5.0 + 3.0 * normal(rng);
  const Panel shifted = with_outcomes(d.panel, y);
  EXPECT_NEAR(cvm_statistic(shifted, fits).statistic, base, 1e-9 * base);
}

TEST(Cvm, InvariantToAffineCovariateRescaling) {
  const auto d = fixture::draw(300, 4, 39);
  const double base = cvm_statistic(d.panel, fit_all(d.panel)).statistic;
  Eigen::MatrixXd x = d.panel.covariates().rightCols(2);
  x.col(0) = 3.0 * x.col(0).array() + 10.0;
  x.col(1) = 0.25 * x.col(1).array() - 2.0;
  const Panel q = rebuild(d.panel, d.panel.outcomes(), x);
  EXPECT_NEAR(cvm_statistic(q, fit_all(q)).statistic, base, 1e-7 * base);
}

TEST(Cvm, ThreadsAndSeeds) {
  const auto d = fixture::draw(500, 4, 40);
  const auto fits = fit_all(d.panel);
  auto spec = boot_spec(300, 8);
  const auto clusters = ClusterMap::iid(d.panel.n_units());
  const auto a = cvm_bootstrap(d.panel, fits, spec, 0.05, clusters);
  spec.threads = 3;
  const auto b = cvm_bootstrap(d.panel, fits, spec, 0.05, clusters);
  EXPECT_EQ(a.critical_value, b.critical_value);
  EXPECT_EQ(a.p_value, b.p_value);
  EXPECT_GE(a.critical_value, 0.0);
  EXPECT_THROW(cvm_bootstrap(d.panel, fits, spec, 1.5, clusters), Error);
}

TEST(Cvm, UndefinedWithoutPlaceboCells) {
  DgpSpec spec;
  spec.n_units = 200;
  spec.periods = 3;
  spec.cohorts = {CohortSelection{2, 0.0, {}}};
  const auto d = generate(spec);
  const auto fits = fit_all(d.panel);
  try {
    cvm_statistic(d.panel, fits);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("pre-test undefined"), std::string::npos);
  }
  const auto att = att_all(d.panel, fits, true);
  EXPECT_THROW(placebo_wald(att, boot_spec(99, 1), 0.05, ClusterMap::iid(200)), Error);
}

TEST(Dominance, MatchesBruteForce) {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> coarse(0, 4);  // many ties
  std::normal_distribution<double> normal;
  for (int dim = 0; dim <= 3; ++dim) {
    const Eigen::Index n = 57, q = 33;
    Eigen::MatrixXd pts(n, dim), qs(q, dim);
    for (Eigen::Index i = 0; i < n; ++i)
      for (int c = 0; c < dim; ++c) pts(i, c) = coarse(rng);
    for (Eigen::Index j = 0; j < q; ++j)
      for (int c = 0; c < dim; ++c) qs(j, c) = j < 10 ? pts(j, c) : coarse(rng) - 0.5;
    Eigen::MatrixXd a(n, 3);
    for (Eigen::Index i = 0; i < n; ++i)
      for (int c = 0; c < 3; ++c) a(i, c) = normal(rng);
    const DominanceSum dom(pts, qs);
    const Eigen::MatrixXd fast = dom.apply(a);
    for (Eigen::Index j = 0; j < q; ++j)
      for (int c = 0; c < 3; ++c) {
        double ref = 0.0;
        for (Eigen::Index i = 0; i < n; ++i)
          if ((pts.row(i).array() <= qs.row(j).array()).all()) ref += a(i, c);
        EXPECT_NEAR(fast(j, c), ref, 1e-12) << "dim " << dim;
      }
    const Eigen::VectorXd single = dom.apply(Eigen::VectorXd(a.col(1)));
    EXPECT_LT((single - fast.col(1)).cwiseAbs().maxCoeff(), 1e-12);
  }
  EXPECT_THROW(DominanceSum(Eigen::MatrixXd::Zero(3, 2), Eigen::MatrixXd::Zero(3, 1)), Error);
}

TEST(Wald, ZeroPlaceboEstimates) {
  const auto d = fixture::draw(500, 4, 41);
  auto att = att_all(d.panel, true);
  for (std::size_t j = 0; j < att.cells.size(); ++j)
    if (att.cells[j].kind == CellKind::placebo) att.estimates(static_cast<Eigen::Index>(j)) = 0.0;
  const auto w = placebo_wald(att, boot_spec(999, 2), 0.05, ClusterMap::iid(500));
  EXPECT_EQ(w.statistic, 0.0);
  EXPECT_EQ(w.df, 3);
  EXPECT_NEAR(w.p_value, 1.0, 1e-12);
  EXPECT_FALSE(w.reject);
  EXPECT_FALSE(w.reduced_rank);
  EXPECT_EQ(w.joint_band.cells.size(), att.cells.size());
}

TEST(Wald, MatchesPluginQuadraticForm) {
  const auto d = fixture::draw(1000, 4, 42);
  const auto att = att_all(d.panel, true);
  const auto w = placebo_wald(att, boot_spec(4999, 3), 0.05, ClusterMap::iid(1000));
  std::vector<Eigen::Index> pl;
  for (std::size_t j = 0; j < att.cells.size(); ++j)
    if (att.cells[j].kind == CellKind::placebo) pl.push_back(static_cast<Eigen::Index>(j));
  Eigen::VectorXd theta(3);
  Eigen::MatrixXd psi(1000, 3);
  for (int j = 0; j < 3; ++j) {
    theta(j) = att.estimates(pl[static_cast<std::size_t>(j)]);
    psi.col(j) = att.influence.col(pl[static_cast<std::size_t>(j)]);
  }
  const Eigen::MatrixXd v = psi.transpose() * psi / 1000.0;
  const double ref = 1000.0 * theta.dot(v.ldlt().solve(theta));
  EXPECT_NEAR(w.statistic / ref, 1.0, 0.1);
  boost::math::chi_squared chi(3);
  EXPECT_NEAR(w.p_value, boost::math::cdf(boost::math::complement(chi, w.statistic)), 1e-12);
}

TEST(Wald, ReducedRankFlag) {
  const auto d = fixture::draw(300, 4, 43);
  auto att = att_all(d.panel, true);
  const Eigen::Index a = cell_column(att, 4, 2), b = cell_column(att, 4, 3), c = cell_column(att, 3, 2);
  att.influence.col(b) = att.influence.col(a);
  att.influence.col(c) = 2.0 * att.influence.col(a);
  const auto w = placebo_wald(att, boot_spec(499, 4), 0.05, ClusterMap::iid(300));
  EXPECT_TRUE(w.reduced_rank);
  EXPECT_EQ(w.df, 1);
  EXPECT_THROW(placebo_wald(att, boot_spec(1, 4), 0.05, ClusterMap::iid(300)), Error);
}
