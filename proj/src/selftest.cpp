#include "hicov/selftest.hpp"

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "hicov/bootstrap.hpp"
#include "hicov/estimators.hpp"
#include "hicov/model_sim.hpp"
#include "hicov/mtest.hpp"
#include "hicov/normal.hpp"

namespace hicov {

namespace {

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol * std::max(1.0, std::abs(b)); }

IncrementMatrix small_increments(int d, int n, std::uint64_t seed) {
  Rng rng = StreamKey(seed).engine();
  std::normal_distribution<double> z(0.0, 0.1);
  RowMatrix dy(d, n);
  for (int i = 0; i < d; ++i) {
    for (int h = 0; h < n; ++h) dy(i, h) = z(rng);
  }
  return IncrementMatrix(std::move(dy));
}

}  // namespace

bool run_selftest(std::ostream& out) {
  std::vector<std::pair<std::string, std::function<bool()>>> checks;

  checks.emplace_back("normal quantile round trip", [] {
    for (double p : {1e-10, 0.001, 0.025, 0.3, 0.5, 0.975, 0.999999}) {
      if (!near(1.0 - normal_upper_tail(normal_quantile(p)), p, 1e-9)) return false;
    }
    return near(normal_quantile(0.975), 1.959963984540054, 1e-12);
  });

  checks.emplace_back("asymptotic covariance hand case", [] {
    RowMatrix dy(1, 2);
    dy << 1.0, 1.0;
    const IncrementMatrix inc(dy);
    const AsyCovOracle oracle(inc);
    return near(chat_entry(oracle, {0, 0}, {0, 0}), 2.0, 1e-15);
  });

  checks.emplace_back("realized covariance serial == parallel", [] {
    const IncrementMatrix inc = small_increments(6, 40, 11);
    return (realized_cov(inc, Exec::kSerial).rc - realized_cov(inc, Exec::kParallel).rc).cwiseAbs().maxCoeff() <
           1e-15;
  });

  checks.emplace_back("variance is the gradient quadratic form", [] {
    const IncrementMatrix inc = small_increments(4, 30, 12);
    const RealizedCov rc = realized_cov(inc);
    const AsyCovOracle oracle(inc);
    const PairGradient g = pair_gradient(rc, 0, 2);
    double q = 0.0;
    for (int a = 0; a < 4; ++a) {
      for (int b = 0; b < 4; ++b) q += g.coef[a] * g.coef[b] * oracle.entry(g.at[a], g.at[b]);
    }
    return near(vhat_raw(oracle, rc, 0, 2), q, 1e-12);
  });

  checks.emplace_back("bootstrap serial == parallel", [] {
    const IncrementMatrix inc = small_increments(5, 25, 13);
    const RealizedCov rc = realized_cov(inc);
    const HypothesisPartition part = pairwise_partition(4);
    const auto stats = pair_stats(inc, part.flattened());
    const StreamKey key(99);
    const auto a = bootstrap_group_maxima(inc, rc, part, stats, 37, key, StatMode::kFactor, Exec::kSerial);
    const auto b = bootstrap_group_maxima(inc, rc, part, stats, 37, key, StatMode::kFactor, Exec::kParallel);
    return (a.maxima - b.maxima).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, a.maxima.cwiseAbs().maxCoeff());
  });

  checks.emplace_back("Holm single-group critical value", [] {
    const HypothesisPartition part = pairwise_partition(2);
    const std::size_t g = 0;
    return near(holm_critical(part, std::span<const std::size_t>(&g, 1), 0.05), 1.959964, 1e-6);
  });

  checks.emplace_back("empirical quantile rank", [] { return quantile_rank(999, 0.05) == 950; });

  checks.emplace_back("stepdown rejects in descending order", [] {
    const HypothesisPartition part = pairwise_partition(4);
    const std::vector<double> stats{5.0, 0.1, 3.0, 0.2, 2.5, 0.3};
    const StepdownResult r = stepdown(stats, HolmProvider(part), 0.05);
    return r.rejected[0] && r.rejected[2] && !r.rejected[1] && r.order.front() == 0;
  });

  checks.emplace_back("simulation truth is block diagonal", [] {
    const SimScenario s = make_scenario(20, 6, 3, 0.5, HestonParams{}, 2, StreamKey(5));
    Rng rng = StreamKey(6).engine();
    const PathGrid g = simulate_paths(s, rng);
    const auto& t = *g.truth;
    return g.n() == 20 && g.d() == 7 && t.null_truth(0, 2) && !t.null_truth(0, 1) && t.tau(0, 2) == 0.0;
  });

  bool all = true;
  for (const auto& [name, fn] : checks) {
    bool ok = false;
    try {
      ok = fn();
    } catch (const std::exception& e) {
      out << "  error: " << e.what() << '\n';
    }
    out << (ok ? "PASS " : "FAIL ") << name << '\n';
    all = all && ok;
  }
  return all;
}

}  // namespace hicov
