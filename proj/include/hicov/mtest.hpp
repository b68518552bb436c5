#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hicov/estimators.hpp"

namespace hicov {

/// Disjoint, non-empty groups of tested pairs.
struct HypothesisPartition {
  std::vector<std::vector<PairIndex>> groups;
  std::vector<std::string> labels;

  [[nodiscard]] std::size_t size() const { return groups.size(); }
  [[nodiscard]] std::size_t pair_count() const;
  /// All pairs, group by group.
  [[nodiscard]] std::vector<PairIndex> flattened() const;
  /// Throws std::invalid_argument on empty groups, repeats, or i >= j.
  void validate() const;
};

/// One group per pair (i, j), i < j < d_under.
HypothesisPartition pairwise_partition(int d_under);

/// One group per unordered sector pair (k, l), k <= l, in order of first
/// appearance of the sectors; empty groups (within a one-asset sector) are
/// dropped. `sector_order`, if given, fixes the order and must name every
/// sector that appears, and only those.
HypothesisPartition sector_partition(const std::vector<std::string>& labels,
                                     const std::vector<std::string>& sector_order = {});

/// Group statistics max_{lambda in group} |T_lambda|.
std::vector<double> group_statistics(const HypothesisPartition& partition, std::span<const PairStat> stats_by_pair);

/// Pre-sorted view of a stepdown: step k faces the groups order[k..L).
class StepQuery {
 public:
  virtual ~StepQuery() = default;
  [[nodiscard]] virtual double critical(std::size_t step, double alpha) const = 0;
  /// Smallest level at which `stat` exceeds the step's critical value (1 if never).
  [[nodiscard]] virtual double min_rejecting_alpha(std::size_t step, double stat) const = 0;
};

/// Critical values c^L(1 - alpha) over subsets of groups.
class CriticalValueProvider {
 public:
  virtual ~CriticalValueProvider() = default;
  [[nodiscard]] virtual double critical(std::span<const std::size_t> groups, double alpha) const = 0;
  [[nodiscard]] virtual double min_rejecting_alpha(std::span<const std::size_t> groups, double stat) const = 0;
  [[nodiscard]] virtual std::string name() const = 0;
  /// Default implementation re-evaluates `critical` on each suffix.
  [[nodiscard]] virtual std::unique_ptr<StepQuery> bind(std::span<const std::size_t> order) const;
};

/// q_{N(0,1)}(1 - alpha / (2 m)), m = number of pairs in the union of the groups.
class HolmProvider final : public CriticalValueProvider {
 public:
  explicit HolmProvider(const HypothesisPartition& partition);
  [[nodiscard]] double critical(std::span<const std::size_t> groups, double alpha) const override;
  [[nodiscard]] double min_rejecting_alpha(std::span<const std::size_t> groups, double stat) const override;
  [[nodiscard]] std::string name() const override { return "Holm"; }
  [[nodiscard]] std::unique_ptr<StepQuery> bind(std::span<const std::size_t> order) const override;

 private:
  std::vector<std::size_t> sizes_;
};

double holm_critical(const HypothesisPartition& partition, std::span<const std::size_t> groups, double alpha);

struct BootstrapDraws;

/// Bootstrap quantile of max_{l in L} T*_l at rank ceil((1 - alpha)(B + 1)), clamped to B.
class RomanoWolfProvider final : public CriticalValueProvider {
 public:
  explicit RomanoWolfProvider(const BootstrapDraws& draws);
  [[nodiscard]] double critical(std::span<const std::size_t> groups, double alpha) const override;
  [[nodiscard]] double min_rejecting_alpha(std::span<const std::size_t> groups, double stat) const override;
  [[nodiscard]] std::string name() const override { return "RW"; }
  [[nodiscard]] std::unique_ptr<StepQuery> bind(std::span<const std::size_t> order) const override;

 private:
  const BootstrapDraws* draws_;
};

double rw_critical(const BootstrapDraws& draws, std::span<const std::size_t> groups, double alpha);

/// 1-based rank of the empirical (1 - alpha) quantile among B values.
std::size_t quantile_rank(std::size_t B, double alpha);

/// Order statistic at quantile_rank(B, alpha) of `values` (reordered in place).
double empirical_quantile(std::vector<double>& values, double alpha);

/// Smallest alpha at which stat exceeds the empirical quantile of `values`:
/// (B + 1 - #{v < stat}) / (B + 1), or 1 when no value is below stat.
double empirical_min_alpha(std::span<const double> values, double stat);

struct StepdownResult {
  std::vector<std::size_t> order;        // groups by statistic, descending
  std::vector<double> statistics;        // per group
  std::vector<bool> rejected;            // per group
  std::vector<double> critical_trace;    // per executed step
  std::vector<double> critical_faced;    // per group: the value it was compared against
  std::vector<double> adjusted_p;        // per group
  std::vector<bool> sentinel;            // per group: statistic came from a clamped variance
  std::string method;
  double alpha = 0.0;

  [[nodiscard]] std::size_t rejections() const;
};

/// Stepdown over groups sorted by statistic (stable, descending). Throws
/// std::logic_error if the provider's critical values increase along the steps.
StepdownResult stepdown(std::span<const double> group_stats, const CriticalValueProvider& provider, double alpha);

/// Per-group JSON rows {label, statistic, critical, rejected, adjusted_p, clamped_members}.
nlohmann::json stepdown_to_json(const StepdownResult& result, const HypothesisPartition& partition,
                                std::span<const PairStat> stats_by_pair);

}  // namespace hicov
