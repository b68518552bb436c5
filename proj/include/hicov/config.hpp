#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hicov/harness.hpp"
#include "hicov/model_sim.hpp"

namespace hicov {

/// Flat key-value configuration. Accepts `key = value` lines, `#` comments,
/// `[section]` headers (prefixing keys with `section.`), quoted strings, and
/// bracketed lists `[a, b, c]`.
class FlatConfig {
 public:
  static FlatConfig parse(const std::string& text, const std::string& origin = "<string>");
  static FlatConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  /// Applies `key=value`.
  void set_assignment(const std::string& assignment);
  void merge(const FlatConfig& other);

  [[nodiscard]] bool has(const std::string& key) const { return values_.count(key) != 0; }
  [[nodiscard]] std::string get_string(const std::string& key, const std::string& fallback) const;
  [[nodiscard]] double get_double(const std::string& key, double fallback) const;
  [[nodiscard]] long long get_int(const std::string& key, long long fallback) const;
  [[nodiscard]] bool get_bool(const std::string& key, bool fallback) const;
  [[nodiscard]] std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
  [[nodiscard]] std::vector<int> get_ints(const std::string& key, const std::vector<int>& fallback) const;
  [[nodiscard]] std::vector<std::string> get_strings(const std::string& key,
                                                     const std::vector<std::string>& fallback) const;

  /// Sorted `key = value` lines; parse(dump()) reproduces the config.
  [[nodiscard]] std::string dump() const;
  [[nodiscard]] const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

std::string format_double(double v);
std::string join_doubles(const std::vector<double>& v);

/// Scenario keys: n, d, heston.{mu,kappa,theta,eta,rho}, structure.num_blocks,
/// structure.rho_gamma, structure.diagonals, betas, fine_factor, seed, v0.
/// Missing diagonals and betas are drawn from the seed.
SimScenario scenario_from_config(const FlatConfig& cfg);
FlatConfig scenario_to_config(const SimScenario& s);

/// Experiment keys: n_grid, rho_gamma_grid, d_under, num_blocks, heston.*,
/// methods, alpha, M, B, seed, jobs, redraw_structure, fine_factor.
ExperimentSpec experiment_from_config(const FlatConfig& cfg);
FlatConfig experiment_to_config(const ExperimentSpec& spec);

}  // namespace hicov
