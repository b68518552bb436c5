#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <stdexcept>

#include "hicov/harness.hpp"

using namespace hicov;

namespace {

ExperimentSpec tiny() {
  ExperimentSpec s;
  s.n_grid = {39, 78};
  s.rho_gamma_grid = {0.25, 0.75};
  s.d_under = 6;
  s.num_blocks = 3;
  s.M = 12;
  s.B = 49;
  s.fine_factor = 2;
  s.seed = 11;
  return s;
}

}  // namespace

TEST(Harness, MethodNames) {
  EXPECT_EQ(parse_method("Holm"), Method::kHolm);
  EXPECT_EQ(parse_method("RW"), Method::kRomanoWolf);
  EXPECT_THROW(parse_method("bonferroni"), std::invalid_argument);
}

TEST(Harness, SpecValidation) {
  ExperimentSpec s = tiny();
  s.num_blocks = 4;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = tiny();
  s.M = 0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = tiny();
  s.alpha = 1.0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(Harness, ResultsIndependentOfThreadCount) {
  ExperimentSpec a = tiny();
  ExperimentSpec b = tiny();
  a.jobs = 1;
  b.jobs = 3;
  const auto ta = run_experiment(a);
  const auto tb = run_experiment(b);
  EXPECT_EQ(ta.to_csv("fwer"), tb.to_csv("fwer"));
  EXPECT_EQ(ta.to_csv("power"), tb.to_csv("power"));
}

TEST(Harness, RedrawnStructureLeavesTablesUnchanged) {
  // T depends on neither the loadings nor the residual scales, so with the
  // same Brownian draws a redrawn design gives the same rejections.
  ExperimentSpec a = tiny();
  ExperimentSpec b = tiny();
  b.redraw_structure = true;
  EXPECT_EQ(run_experiment(a).to_csv("power"), run_experiment(b).to_csv("power"));
  EXPECT_EQ(run_experiment(a).to_csv("fwer"), run_experiment(b).to_csv("fwer"));
}

TEST(Harness, TableLayout) {
  const auto t = run_experiment(tiny());
  EXPECT_EQ(t.cells.size(), 8u);
  const std::string csv = t.to_csv("fwer");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "rho_gamma,method,n=39,n=78");
  EXPECT_NE(csv.find("\n0.25,Holm,"), std::string::npos);
  EXPECT_NE(csv.find("\n0.75,RW,"), std::string::npos);
  EXPECT_THROW(t.to_csv("size"), std::invalid_argument);
  for (const auto& c : t.cells) {
    EXPECT_EQ(c.replications, 12);
    EXPECT_GE(c.fwer, 0.0);
    EXPECT_LE(c.fwer, 1.0);
    EXPECT_NEAR(c.fwer_se, std::sqrt(c.fwer * (1 - c.fwer) / 12.0), 1e-15);
  }
  EXPECT_EQ(t.to_json().at("cells").size(), 8u);
}

TEST(Harness, SingleReplicationIsWellFormed) {
  ExperimentSpec s = tiny();
  s.M = 1;
  const auto t = run_experiment(s);
  for (const auto& c : t.cells) {
    EXPECT_EQ(c.replications, 1);
    EXPECT_EQ(c.fwer_se, 0.0);
  }
}

TEST(Harness, AllNullDesignHasNoPower) {
  ExperimentSpec s = tiny();
  s.num_blocks = 6;  // singleton blocks: Gamma diagonal, every null true
  s.rho_gamma_grid = {0.0};
  s.M = 5;
  const auto t = run_experiment(s);
  for (const auto& c : t.cells) EXPECT_TRUE(std::isnan(c.avg_power));
  EXPECT_NE(t.to_csv("power").find("NA"), std::string::npos);
}

TEST(Harness, DegeneratePathIsFlagged) {
  SimScenario s = make_scenario(30, 4, 2, 0.5, HestonParams{}, 2, StreamKey(1));
  s.heston.eta = 0.0;
  s.v0 = s.heston.theta;
  s.betas.assign(4, 0.0);
  s.structure = make_residual_structure({2, 2}, 0.5, {0, 0, 0, 0});
  const auto rec = run_replication(s, {Method::kHolm, Method::kRomanoWolf}, 0.05, 19, StreamKey(2));
  EXPECT_EQ(rec.clamped_pairs, 6);
  for (const auto& o : rec.outcomes) EXPECT_TRUE(o.rejected.empty());
}

TEST(Harness, CancellationSkipsWork) {
  std::atomic<bool> cancel{true};
  const auto t = run_experiment(tiny(), &cancel);
  EXPECT_TRUE(t.interrupted);
  for (const auto& c : t.cells) EXPECT_EQ(c.replications, 0);
}
