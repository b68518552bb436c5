#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "hicov/normal.hpp"
#include "oracles.hpp"

using hicov::normal_quantile;
using hicov::normal_upper_tail;

TEST(NormalQuantile, SymmetricCentre) { EXPECT_EQ(normal_quantile(0.5), 0.0); }

TEST(NormalQuantile, KnownValues) {
  EXPECT_NEAR(normal_quantile(0.975), 1.959964, 1e-6);
  EXPECT_NEAR(normal_quantile(0.9875), 2.241403, 1e-6);
}

TEST(NormalQuantile, MatchesBisectionOracle) {
  std::vector<double> ps;
  for (double p = 1e-12; p < 0.01; p *= 3.7) {
    ps.push_back(p);
    ps.push_back(1.0 - p);
  }
  for (double p = 0.01; p < 0.99; p += 0.00731) ps.push_back(p);
  for (double p : ps) {
    const double x = oracle::bisect_quantile(p);
    EXPECT_NEAR(normal_quantile(p), x, 1e-13 * std::max(1.0, std::abs(x))) << "p=" << p;
  }
}

TEST(NormalQuantile, RejectsOutsideUnitInterval) {
  EXPECT_THROW(normal_quantile(0.0), std::domain_error);
  EXPECT_THROW(normal_quantile(1.0), std::domain_error);
  EXPECT_THROW(normal_quantile(-0.1), std::domain_error);
  EXPECT_THROW(normal_quantile(std::nan("")), std::domain_error);
}

TEST(NormalUpperTail, InvertsQuantile) {
  for (double p : {1e-15, 1e-8, 0.01, 0.2}) EXPECT_NEAR(normal_upper_tail(-normal_quantile(p)) / p, 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(normal_upper_tail(0.0), 0.5);
  EXPECT_GT(normal_upper_tail(30.0), 0.0);
}
