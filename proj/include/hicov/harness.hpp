#pragma once

#include <atomic>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hicov/estimators.hpp"
#include "hicov/model_sim.hpp"
#include "hicov/rng.hpp"

namespace hicov {

enum class Method { kHolm, kRomanoWolf };

std::string method_name(Method m);
Method parse_method(const std::string& s);

struct ExperimentSpec {
  std::vector<int> n_grid{195};
  std::vector<double> rho_gamma_grid{0.5};
  int d_under = 20;
  int num_blocks = 10;
  HestonParams heston;
  std::vector<Method> methods{Method::kHolm, Method::kRomanoWolf};
  double alpha = 0.05;
  int M = 1000;
  int B = 199;
  std::uint64_t seed = 1;
  int jobs = 0;  // 0: OpenMP default
  bool redraw_structure = false;
  int fine_factor = 10;

  void validate() const;
};

struct MethodOutcome {
  Method method = Method::kHolm;
  std::vector<PairIndex> rejected;
  int false_rejections = 0;  // rejected true nulls
  int true_rejections = 0;   // rejected false nulls
};

struct ReplicationRecord {
  std::vector<MethodOutcome> outcomes;
  int true_nulls = 0;
  int false_nulls = 0;
  int clamped_pairs = 0;
  double integrated_variance = 0.0;
};

/// Simulates one path and runs every method on the pairwise partition.
/// Paths use key.child(kPaths); bootstrap multipliers use key.child(kBootstrap).
ReplicationRecord run_replication(const SimScenario& scenario, const std::vector<Method>& methods, double alpha, int B,
                                  const StreamKey& key);

struct CellResult {
  int n = 0;
  double rho_gamma = 0.0;
  Method method = Method::kHolm;
  double fwer = 0.0;
  double fwer_se = 0.0;
  double avg_power = 0.0;  // NaN when the design has no false nulls
  double power_se = 0.0;
  int replications = 0;
  int clamp_replications = 0;
};

struct ExperimentTable {
  ExperimentSpec spec;
  std::vector<CellResult> cells;
  double wall_seconds = 0.0;
  bool interrupted = false;

  [[nodiscard]] const CellResult& cell(int n, double rho_gamma, Method m) const;
  /// Rows rho_gamma x method, columns n. `metric` is "fwer" or "power".
  [[nodiscard]] std::string to_csv(const std::string& metric) const;
  [[nodiscard]] nlohmann::json to_json() const;
};

/// Runs M replications per (n, rho_gamma) cell, parallel over replications.
/// Results depend only on the spec (including seed), not on `jobs`. If
/// `cancel` becomes true, pending replications are skipped and the table
/// reports what completed.
ExperimentTable run_experiment(const ExperimentSpec& spec, const std::atomic<bool>* cancel = nullptr);

}  // namespace hicov
