#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "oracles.hpp"
#include "stagdid/dgp.hpp"
#include "stagdid/panel.hpp"

namespace fixture {

// n = 8, three periods, cohorts {2, 3} plus three controls, one covariate.
inline stagdid::Panel hand_panel() {
  std::vector<std::string> ids{"1", "2", "3", "4", "5", "6", "7", "8"};
  Eigen::MatrixXd y(8, 3);
  y << 1.0, 2.5, 3.1,
       0.4, 1.9, 2.2,
       2.2, 2.9, 4.0,
       -0.3, 0.8, 2.6,
       1.1, 1.0, 2.3,
       0.7, 1.6, 3.9,
       -1.0, 0.2, 0.9,
       1.8, 3.7, 4.4;
  Eigen::MatrixXd x(8, 1);
  x << 0.3, -1.2, 0.8, 1.5, -0.4, 0.1, -0.9, 1.1;
  std::vector<stagdid::Cohort> g{2, 2, stagdid::kNeverTreated, 3, stagdid::kNeverTreated, 3, stagdid::kNeverTreated, 2};
  return stagdid::Panel(ids, {1, 2, 3}, y, x, {"x"}, g);
}

inline oracle::Data to_data(const stagdid::Panel& p) {
  oracle::Data d;
  for (Eigen::Index i = 0; i < p.n_units(); ++i) {
    oracle::Vec yi, xi;
    for (int t = 1; t <= p.n_periods(); ++t) yi.push_back(p.outcome(i, t));
    for (Eigen::Index j = 0; j < p.k(); ++j) xi.push_back(p.covariates()(i, j));
    d.y.push_back(yi);
    d.x.push_back(xi);
    d.cohort.push_back(p.cohort(i) ? *p.cohort(i) : 0);
  }
  return d;
}

inline stagdid::DgpDraw draw(int n, int periods, std::uint64_t seed, int k = 2) {
  stagdid::DgpSpec spec;
  spec.n_units = n;
  spec.periods = periods;
  spec.k = k;
  spec.seed = seed;
  return stagdid::generate(spec);
}

}  // namespace fixture
