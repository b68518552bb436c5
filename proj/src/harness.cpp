#include "hicov/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "hicov/bootstrap.hpp"
#include "hicov/mtest.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace hicov {

std::string method_name(Method m) { return m == Method::kHolm ? "Holm" : "RW"; }

Method parse_method(const std::string& s) {
  if (s == "Holm" || s == "holm" || s == "BH") return Method::kHolm;
  if (s == "RW" || s == "rw" || s == "romano-wolf") return Method::kRomanoWolf;
  throw std::invalid_argument("unknown method '" + s + "' (expected Holm or RW)");
}

void ExperimentSpec::validate() const {
  if (n_grid.empty() || rho_gamma_grid.empty()) throw std::invalid_argument("experiment: empty grid");
  if (M < 1) throw std::invalid_argument("experiment: M must be >= 1");
  if (B < 1) throw std::invalid_argument("experiment: B must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("experiment: alpha must lie in (0,1)");
  if (methods.empty()) throw std::invalid_argument("experiment: no methods");
  if (num_blocks < 1 || d_under % num_blocks != 0) {
    throw std::invalid_argument("experiment: num_blocks must divide d_under");
  }
  for (int n : n_grid) {
    if (n < 2) throw std::invalid_argument("experiment: n must be >= 2");
  }
  heston.validate();
}

ReplicationRecord run_replication(const SimScenario& scenario, const std::vector<Method>& methods, double alpha, int B,
                                  const StreamKey& key) {
  Rng path_rng = key.child(stream_tag::kPaths).engine();
  const PathGrid grid = simulate_paths(scenario, path_rng);
  const TrueQuantities& truth = *grid.truth;
  const IncrementMatrix inc = IncrementMatrix::from_prices(grid.prices);
  const RealizedCov rc = realized_cov(inc);
  const AsyCovOracle oracle(inc);
  const int du = scenario.d - 1;
  const HypothesisPartition partition = pairwise_partition(du);
  const std::vector<PairIndex> pairs = partition.flattened();
  const std::vector<PairStat> stats = pair_stats(inc, rc, oracle, pairs, &truth);
  const std::vector<double> group_stats = group_statistics(partition, stats);

  ReplicationRecord rec;
  rec.integrated_variance = truth.integrated_variance;
  for (const auto& s : stats) {
    if (s.clamped) ++rec.clamped_pairs;
    if (truth.null_truth(s.i, s.j)) {
      ++rec.true_nulls;
    } else {
      ++rec.false_nulls;
    }
  }

  std::optional<BootstrapDraws> draws;
  for (Method m : methods) {
    StepdownResult result;
    if (m == Method::kHolm) {
      result = stepdown(group_stats, HolmProvider(partition), alpha);
    } else {
      if (!draws) draws = bootstrap_group_maxima(inc, rc, partition, stats, B, key.child(stream_tag::kBootstrap));
      result = stepdown(group_stats, RomanoWolfProvider(*draws), alpha);
    }
    MethodOutcome out;
    out.method = m;
    for (std::size_t g = 0; g < partition.size(); ++g) {
      if (!result.rejected[g]) continue;
      const PairIndex p = partition.groups[g].front();
      out.rejected.push_back(p);
      if (truth.null_truth(p.i, p.j)) {
        ++out.false_rejections;
      } else {
        ++out.true_rejections;
      }
    }
    rec.outcomes.push_back(std::move(out));
  }
  return rec;
}

const CellResult& ExperimentTable::cell(int n, double rho_gamma, Method m) const {
  for (const auto& c : cells) {
    if (c.n == n && c.rho_gamma == rho_gamma && c.method == m) return c;
  }
  throw std::out_of_range("experiment table has no such cell");
}

namespace {

std::string fmt_value(double v) {
  if (std::isnan(v)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string fmt_rho(double r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", r);
  return buf;
}

}  // namespace

std::string ExperimentTable::to_csv(const std::string& metric) const {
  if (metric != "fwer" && metric != "power") throw std::invalid_argument("metric must be fwer or power");
  std::ostringstream out;
  out << "rho_gamma,method";
  for (int n : spec.n_grid) out << ",n=" << n;
  out << '\n';
  for (double rho : spec.rho_gamma_grid) {
    for (Method m : spec.methods) {
      out << fmt_rho(rho) << ',' << method_name(m);
      for (int n : spec.n_grid) {
        const auto& c = cell(n, rho, m);
        out << ',' << fmt_value(metric == "fwer" ? c.fwer : c.avg_power);
      }
      out << '\n';
    }
  }
  return out.str();
}

nlohmann::json ExperimentTable::to_json() const {
  using nlohmann::json;
  json cj = json::array();
  for (const auto& c : cells) {
    cj.push_back({{"n", c.n},
                  {"rho_gamma", c.rho_gamma},
                  {"method", method_name(c.method)},
                  {"fwer", c.fwer},
                  {"fwer_mc_se", c.fwer_se},
                  {"avg_power", std::isnan(c.avg_power) ? json(nullptr) : json(c.avg_power)},
                  {"power_mc_se", std::isnan(c.power_se) ? json(nullptr) : json(c.power_se)},
                  {"replications", c.replications},
                  {"clamp_replications", c.clamp_replications}});
  }
  return json{{"seed", spec.seed},
              {"M", spec.M},
              {"B", spec.B},
              {"alpha", spec.alpha},
              {"d_under", spec.d_under},
              {"num_blocks", spec.num_blocks},
              {"redraw_structure", spec.redraw_structure},
              {"wall_seconds", wall_seconds},
              {"interrupted", interrupted},
              {"cells", cj}};
}

ExperimentTable run_experiment(const ExperimentSpec& spec, const std::atomic<bool>* cancel) {
  spec.validate();
  const auto start = std::chrono::steady_clock::now();
  const StreamKey root(spec.seed);
  const int R = static_cast<int>(spec.rho_gamma_grid.size());
  const int N = static_cast<int>(spec.n_grid.size());
  const std::size_t num_cells = static_cast<std::size_t>(R) * N;

  // Fixed-structure mode: beta and Gamma depend on (seed, rho index) only, so
  // every n along a row sees the same design.
  std::vector<SimScenario> base(num_cells);
  for (int r = 0; r < R; ++r) {
    for (int k = 0; k < N; ++k) {
      base[static_cast<std::size_t>(r) * N + k] =
          make_scenario(spec.n_grid[k], spec.d_under, spec.num_blocks, spec.rho_gamma_grid[r], spec.heston,
                        spec.fine_factor, root.child({stream_tag::kStructure, static_cast<std::uint64_t>(r)}));
    }
  }

  const std::int64_t total = static_cast<std::int64_t>(num_cells) * spec.M;
  std::vector<ReplicationRecord> records(static_cast<std::size_t>(total));
  std::vector<char> done(static_cast<std::size_t>(total), 0);

#ifdef _OPENMP
  const int threads = spec.jobs > 0 ? spec.jobs : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
#endif
  for (std::int64_t t = 0; t < total; ++t) {
    if (cancel != nullptr && cancel->load(std::memory_order_relaxed)) continue;
    const auto cell = static_cast<std::size_t>(t / spec.M);
    const auto m = static_cast<std::uint64_t>(t % spec.M);
    const auto r = static_cast<std::uint64_t>(cell / N);
    const auto k = static_cast<std::uint64_t>(cell % N);
    const StreamKey key = root.child({stream_tag::kReplication, r, k, m});
    if (spec.redraw_structure) {
      const SimScenario s = make_scenario(spec.n_grid[k], spec.d_under, spec.num_blocks, spec.rho_gamma_grid[r],
                                          spec.heston, spec.fine_factor, key.child(stream_tag::kStructure));
      records[t] = run_replication(s, spec.methods, spec.alpha, spec.B, key);
    } else {
      records[t] = run_replication(base[cell], spec.methods, spec.alpha, spec.B, key);
    }
    done[t] = 1;
  }

  ExperimentTable table;
  table.spec = spec;
  for (std::size_t cell = 0; cell < num_cells; ++cell) {
    const int r = static_cast<int>(cell / N);
    const int k = static_cast<int>(cell % N);
    for (std::size_t mi = 0; mi < spec.methods.size(); ++mi) {
      CellResult c;
      c.n = spec.n_grid[k];
      c.rho_gamma = spec.rho_gamma_grid[r];
      c.method = spec.methods[mi];
      int fwe = 0;
      int power_reps = 0;
      double power_sum = 0.0;
      double power_sq = 0.0;
      for (int m = 0; m < spec.M; ++m) {
        const std::size_t t = cell * spec.M + m;
        if (!done[t]) continue;
        const auto& rec = records[t];
        const auto& out = rec.outcomes[mi];
        ++c.replications;
        if (rec.clamped_pairs > 0) ++c.clamp_replications;
        if (out.false_rejections > 0) ++fwe;
        if (rec.false_nulls > 0) {
          const double p = static_cast<double>(out.true_rejections) / rec.false_nulls;
          power_sum += p;
          power_sq += p * p;
          ++power_reps;
        }
      }
      const double reps = std::max(1, c.replications);
      c.fwer = c.replications > 0 ? fwe / reps : std::numeric_limits<double>::quiet_NaN();
      c.fwer_se = std::sqrt(c.fwer * (1.0 - c.fwer) / reps);
      if (power_reps > 0) {
        c.avg_power = power_sum / power_reps;
        const double var = std::max(0.0, power_sq / power_reps - c.avg_power * c.avg_power);
        c.power_se = std::sqrt(var / power_reps);
      } else {
        c.avg_power = std::numeric_limits<double>::quiet_NaN();
        c.power_se = std::numeric_limits<double>::quiet_NaN();
      }
      table.cells.push_back(c);
    }
  }
  table.interrupted = cancel != nullptr && cancel->load();
  table.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return table;
}

}  // namespace hicov
