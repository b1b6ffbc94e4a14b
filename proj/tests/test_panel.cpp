#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "stagdid/csv.hpp"
#include "stagdid/panel.hpp"

using namespace stagdid;

namespace {

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

Panel ingest(const std::string& text, CsvSchema schema = {}) {
  std::istringstream in(text);
  return ingest_csv(in, schema);
}

}  // namespace

TEST(Ingest, MinimalBalancedPanel) {
  const Panel p = ingest("unit,time,y,group\n"
                         "a,1,1.0,2\n"
                         "a,2,2.0,2\n"
                         "a,3,3.5,2\n"
                         "b,1,0.5,0\n"
                         "b,2,0.7,0\n"
                         "b,3,0.9,0\n");
  EXPECT_EQ(p.n_units(), 2);
  EXPECT_EQ(p.n_periods(), 3);
  EXPECT_EQ(p.treated_cohorts(), std::vector<int>{2});
  EXPECT_EQ(p.n_control(), 1);
  EXPECT_EQ(p.k(), 1);
  EXPECT_DOUBLE_EQ(p.outcome(0, 3), 3.5);
}

TEST(Ingest, UnbalancedPanelListsUnits) {
  const auto msg = error_of([] {
    ingest("unit,time,y,group\na,1,1,2\na,2,2,2\na,3,3,2\nb,1,0,0\nb,2,0,0\n");
  });
  EXPECT_NE(msg.find("unbalanced"), std::string::npos) << msg;
  EXPECT_NE(msg.find("b"), std::string::npos) << msg;
}

TEST(Ingest, TimeVaryingCovariateRejected) {
  CsvSchema s;
  s.covariates = {"x"};
  const auto msg = error_of([&] {
    ingest("unit,time,y,group,x\na,1,1,2,0.5\na,2,2,2,0.6\nb,1,0,0,0.1\nb,2,0,0,0.1\n", s);
  });
  EXPECT_NE(msg.find("varies over time"), std::string::npos) << msg;
}

TEST(Ingest, FirstPeriodTreatmentNamesUnit) {
  const auto msg = error_of([] { ingest("unit,time,y,group\nzed,1,1,1\nzed,2,2,1\nb,1,0,0\nb,2,0,0\n"); });
  EXPECT_NE(msg.find("zed"), std::string::npos) << msg;
  EXPECT_NE(msg.find("first period"), std::string::npos) << msg;
}

TEST(Ingest, EmptyControlGroupRejected) {
  const auto msg = error_of([] { ingest("unit,time,y,group\na,1,1,2\na,2,2,2\n"); });
  EXPECT_NE(msg.find("control"), std::string::npos) << msg;
}

TEST(Ingest, BlankGroupMeansNeverTreated) {
  const Panel p = ingest("unit,time,y,group\na,1,1,2\na,2,2,2\nb,1,0,\nb,2,0,\n");
  EXPECT_EQ(p.n_control(), 1);
}

TEST(Ingest, TreatmentIndicatorColumn) {
  CsvSchema s;
  s.group.clear();
  s.treatment = "d";
  const Panel p = ingest("unit,time,y,d\na,1,1,0\na,2,2,1\na,3,2,1\nb,1,0,0\nb,2,0,0\nb,3,1,0\n", s);
  EXPECT_EQ(p.treated_cohorts(), std::vector<int>{2});
  const auto msg = error_of([&] {
    ingest("unit,time,y,d\na,1,1,0\na,2,2,1\na,3,2,0\nb,1,0,0\nb,2,0,0\nb,3,1,0\n", s);
  });
  EXPECT_NE(msg.find("irreversible"), std::string::npos) << msg;
}

TEST(Ingest, TimeLabelsReindexedInOrder) {
  const Panel p = ingest("unit,time,y,group\na,2001,1,2003\na,2003,2,2003\na,2002,3,2003\nb,2002,0,0\nb,2001,0,0\nb,2003,1,0\n");
  EXPECT_EQ(p.time_labels(), (std::vector<std::int64_t>{2001, 2002, 2003}));
  EXPECT_EQ(p.treated_cohorts(), std::vector<int>{3});
  EXPECT_DOUBLE_EQ(p.outcome(0, 2), 3.0);
}

TEST(Ingest, GroupLabelOutsidePeriodsRejected) {
  const auto msg = error_of([] { ingest("unit,time,y,group\na,1,1,5\na,2,2,5\nb,1,0,0\nb,2,0,0\n"); });
  EXPECT_NE(msg.find("panel"), std::string::npos) << msg;
}

TEST(Ingest, ConstantOneCovariateRejected) {
  CsvSchema s;
  s.covariates = {"one"};
  const auto msg = error_of([&] { ingest("unit,time,y,group,one\na,1,1,2,1\na,2,2,2,1\nb,1,0,0,1\nb,2,0,0,1\n", s); });
  EXPECT_NE(msg.find("intercept"), std::string::npos) << msg;
}

TEST(Ingest, MissingColumnNamed) {
  CsvSchema s;
  s.outcome = "earnings";
  const auto msg = error_of([&] { ingest("unit,time,y,group\na,1,1,2\n", s); });
  EXPECT_NE(msg.find("earnings"), std::string::npos) << msg;
}

TEST(Ingest, UnitOrderIndependentOfRowOrder) {
  const std::string rows[] = {"u10,1,1,2", "u10,2,3,2", "u2,1,0,0", "u2,2,1,0", "u3,1,2,2", "u3,2,2,2", "u1,1,4,0", "u1,2,4.5,0"};
  std::vector<std::string> shuffled(std::begin(rows), std::end(rows));
  std::string a = "unit,time,y,group\n", b = a;
  for (const auto& r : shuffled) a += r + "\n";
  std::mt19937 rng(4);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  for (const auto& r : shuffled) b += r + "\n";
  const Panel pa = ingest(a), pb = ingest(b);
  EXPECT_EQ(pa.unit_ids(), pb.unit_ids());
  EXPECT_EQ(pa.outcomes(), pb.outcomes());
  EXPECT_EQ(pa.unit_ids(), (std::vector<std::string>{"u1", "u10", "u2", "u3"}));
}

TEST(Ingest, NumericIdsSortNumerically) {
  const Panel p = ingest("unit,time,y,group\n10,1,1,2\n10,2,3,2\n9,1,0,0\n9,2,1,0\n");
  EXPECT_EQ(p.unit_ids(), (std::vector<std::string>{"9", "10"}));
}

TEST(Ingest, RoundTripIsIdentical) {
  const auto d = fixture::draw(60, 4, 11);
  std::ostringstream out;
  write_csv(d.panel, out);
  std::istringstream in(out.str());
  const Panel back = ingest_csv(in, written_schema(d.panel));
  EXPECT_EQ(back.unit_ids(), d.panel.unit_ids());
  EXPECT_EQ(back.time_labels(), d.panel.time_labels());
  EXPECT_EQ(back.outcomes(), d.panel.outcomes());
  EXPECT_EQ(back.covariates(), d.panel.covariates());
  EXPECT_EQ(back.cohorts(), d.panel.cohorts());
  EXPECT_EQ(back.cluster_labels(), d.panel.cluster_labels());
  EXPECT_EQ(back.covariate_names(), d.panel.covariate_names());
}

TEST(Ingest, ClusterDefaultsToUnitId) {
  const Panel p = ingest("unit,time,y,group\na,1,1,2\na,2,2,2\nb,1,0,0\nb,2,0,0\n");
  EXPECT_EQ(p.cluster_labels(), p.unit_ids());
  EXPECT_EQ(p.n_clusters(), 2);
}

TEST(PanelCore, RankDeficientCohortRejected) {
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(4, 2);
  Eigen::MatrixXd x(4, 1);
  x << 0.5, 0.5, 0.5, 0.5;
  const auto msg = error_of([&] {
    Panel({"1", "2", "3", "4"}, {1, 2}, y, x, {"x"}, {2, 2, kNeverTreated, kNeverTreated});
  });
  EXPECT_NE(msg.find("rank"), std::string::npos) << msg;
}

TEST(CohortMasks, MarksExactlyTheCohort) {
  const Panel p = fixture::hand_panel();
  const auto m = cohort_masks(p, 2);
  for (Eigen::Index i = 0; i < p.n_units(); ++i) {
    EXPECT_EQ(m.treated(i) == 1.0, p.cohort(i) == 2);
    EXPECT_EQ(m.control(i) == 1.0, !p.cohort(i).has_value());
  }
  EXPECT_THROW(cohort_masks(p, 5), Error);
}

TEST(CohortMasks, MatchesScanOnRandomPanel) {
  const auto d = fixture::draw(20, 4, 3, 1);
  for (int g : d.panel.treated_cohorts()) {
    const auto m = cohort_masks(d.panel, g);
    double ng = 0, nc = 0;
    for (Eigen::Index i = 0; i < 20; ++i) {
      const bool is_g = d.panel.cohort(i) && *d.panel.cohort(i) == g;
      const bool is_c = !d.panel.cohort(i);
      EXPECT_EQ(m.treated(i), is_g ? 1.0 : 0.0);
      EXPECT_EQ(m.control(i), is_c ? 1.0 : 0.0);
      EXPECT_FALSE(m.treated(i) == 1.0 && m.control(i) == 1.0);
      ng += is_g;
      nc += is_c;
    }
    EXPECT_EQ(m.treated.sum(), ng);
    EXPECT_EQ(m.control.sum(), nc);
  }
}

TEST(CellGrid, ThreePeriodsTwoCohorts) {
  const Panel p = fixture::hand_panel();
  const auto post = cell_grid(p, false);
  ASSERT_EQ(post.size(), 3u);
  EXPECT_EQ(post[0], CellIndex::make(2, 2));
  EXPECT_EQ(post[1], CellIndex::make(2, 3));
  EXPECT_EQ(post[2], CellIndex::make(3, 3));
  const auto all = cell_grid(p, true);
  ASSERT_EQ(all.size(), 4u);
  EXPECT_EQ(all[2], CellIndex::make(3, 2));
  EXPECT_EQ(all[2].kind, CellKind::placebo);
  EXPECT_EQ(all[2].anchor(), 1);
  EXPECT_EQ(all[1].anchor(), 1);
}

TEST(CellGrid, SingleLateCohort) {
  Eigen::MatrixXd y = Eigen::MatrixXd::Random(4, 4);
  Eigen::MatrixXd x(4, 0);
  const Panel p({"1", "2", "3", "4"}, {1, 2, 3, 4}, y, x, {}, {3, 3, kNeverTreated, kNeverTreated});
  const auto all = cell_grid(p, true);
  ASSERT_EQ(all.size(), 3u);
  EXPECT_EQ(all[0], CellIndex::make(3, 2));
  EXPECT_EQ(all[1], CellIndex::make(3, 3));
  EXPECT_EQ(all[2], CellIndex::make(3, 4));
}

TEST(CellGrid, Cardinality) {
  const auto d = fixture::draw(300, 6, 8);
  std::size_t post = 0, placebo = 0;
  for (int g : d.panel.treated_cohorts()) {
    post += static_cast<std::size_t>(6 - g + 1);
    placebo += static_cast<std::size_t>(g - 2);
  }
  EXPECT_EQ(cell_grid(d.panel, false).size(), post);
  EXPECT_EQ(cell_grid(d.panel, true).size(), post + placebo);
}

TEST(Indicators, FirstTreatmentAndReversals) {
  Eigen::MatrixXd d(3, 4);
  d << 0, 0, 1, 1,
       0, 0, 0, 0,
       0, 1, 1, 1;
  const auto c = first_treatment_from_indicators(d);
  EXPECT_EQ(c[0], 3);
  EXPECT_FALSE(c[1].has_value());
  EXPECT_EQ(c[2], 2);
  Eigen::MatrixXd r(2, 3);
  r << 0, 1, 0,
       0, 0, 0;
  EXPECT_THROW(first_treatment_from_indicators(r), Error);
  Eigen::MatrixXd bad(1, 2);
  bad << 0, 2;
  EXPECT_THROW(first_treatment_from_indicators(bad), Error);
}
