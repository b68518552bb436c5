#include "hicov/mtest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include "hicov/bootstrap.hpp"
#include "hicov/normal.hpp"

namespace hicov {

std::size_t HypothesisPartition::pair_count() const {
  std::size_t m = 0;
  for (const auto& g : groups) m += g.size();
  return m;
}

std::vector<PairIndex> HypothesisPartition::flattened() const {
  std::vector<PairIndex> out;
  out.reserve(pair_count());
  for (const auto& g : groups) out.insert(out.end(), g.begin(), g.end());
  return out;
}

void HypothesisPartition::validate() const {
  if (labels.size() != groups.size()) throw std::invalid_argument("partition: one label per group required");
  std::set<std::pair<int, int>> seen;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].empty()) throw std::invalid_argument("partition: group '" + labels[g] + "' is empty");
    for (const auto& p : groups[g]) {
      if (p.i < 0 || p.i >= p.j) throw std::invalid_argument("partition: pairs must satisfy 0 <= i < j");
      if (!seen.emplace(p.i, p.j).second) {
        throw std::invalid_argument("partition: pair (" + std::to_string(p.i) + "," + std::to_string(p.j) +
                                    ") appears in more than one group");
      }
    }
  }
}

HypothesisPartition pairwise_partition(int d_under) {
  if (d_under < 2) throw std::invalid_argument("pairwise_partition: need at least two assets");
  HypothesisPartition out;
  for (int i = 0; i < d_under; ++i) {
    for (int j = i + 1; j < d_under; ++j) {
      out.groups.push_back({PairIndex{i, j}});
      out.labels.push_back(std::to_string(i + 1) + "," + std::to_string(j + 1));
    }
  }
  return out;
}

HypothesisPartition sector_partition(const std::vector<std::string>& labels,
                                     const std::vector<std::string>& sector_order) {
  std::vector<std::string> sectors = sector_order;
  std::map<std::string, int> index;
  for (std::size_t k = 0; k < sectors.size(); ++k) {
    if (!index.emplace(sectors[k], static_cast<int>(k)).second) {
      throw std::invalid_argument("sector_partition: sector '" + sectors[k] + "' listed twice");
    }
  }
  std::vector<int> sector_of(labels.size());
  for (std::size_t a = 0; a < labels.size(); ++a) {
    if (labels[a].empty()) throw std::invalid_argument("sector_partition: asset " + std::to_string(a) + " has no sector");
    auto it = index.find(labels[a]);
    if (it == index.end()) {
      if (!sector_order.empty()) {
        throw std::invalid_argument("sector_partition: sector '" + labels[a] + "' missing from the sector order");
      }
      it = index.emplace(labels[a], static_cast<int>(sectors.size())).first;
      sectors.push_back(labels[a]);
    }
    sector_of[a] = it->second;
  }
  const int N = static_cast<int>(sectors.size());
  std::vector<std::vector<int>> members(N);
  for (std::size_t a = 0; a < labels.size(); ++a) members[sector_of[a]].push_back(static_cast<int>(a));
  for (int k = 0; k < N; ++k) {
    if (members[k].empty()) throw std::invalid_argument("sector_partition: sector '" + sectors[k] + "' is empty");
  }

  HypothesisPartition out;
  for (int k = 0; k < N; ++k) {
    for (int l = k; l < N; ++l) {
      std::vector<PairIndex> group;
      for (int a : members[k]) {
        for (int b : members[l]) {
          if (k == l && a >= b) continue;
          group.push_back(PairIndex{std::min(a, b), std::max(a, b)});
        }
      }
      if (group.empty()) continue;
      std::sort(group.begin(), group.end(),
                [](const PairIndex& x, const PairIndex& y) { return std::tie(x.i, x.j) < std::tie(y.i, y.j); });
      out.groups.push_back(std::move(group));
      out.labels.push_back(sectors[k] + "|" + sectors[l]);
    }
  }
  return out;
}

std::vector<double> group_statistics(const HypothesisPartition& partition, std::span<const PairStat> stats_by_pair) {
  if (stats_by_pair.size() != partition.pair_count()) {
    throw std::invalid_argument("group_statistics: need one statistic per partition pair");
  }
  std::vector<double> out(partition.size(), 0.0);
  std::size_t k = 0;
  for (std::size_t g = 0; g < partition.size(); ++g) {
    for (std::size_t m = 0; m < partition.groups[g].size(); ++m, ++k) {
      out[g] = std::max(out[g], std::fabs(stats_by_pair[k].t));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

class GenericStepQuery final : public StepQuery {
 public:
  GenericStepQuery(const CriticalValueProvider& provider, std::span<const std::size_t> order)
      : provider_(&provider), order_(order.begin(), order.end()) {}
  double critical(std::size_t step, double alpha) const override {
    return provider_->critical(std::span(order_).subspan(step), alpha);
  }
  double min_rejecting_alpha(std::size_t step, double stat) const override {
    return provider_->min_rejecting_alpha(std::span(order_).subspan(step), stat);
  }

 private:
  const CriticalValueProvider* provider_;
  std::vector<std::size_t> order_;
};

double holm_value(std::size_t m, double alpha) { return normal_quantile(1.0 - alpha / (2.0 * static_cast<double>(m))); }

double holm_min_alpha(std::size_t m, double stat) {
  return std::min(1.0, 2.0 * static_cast<double>(m) * normal_upper_tail(stat));
}

class HolmStepQuery final : public StepQuery {
 public:
  explicit HolmStepQuery(std::vector<std::size_t> suffix) : suffix_(std::move(suffix)) {}
  double critical(std::size_t step, double alpha) const override { return holm_value(suffix_.at(step), alpha); }
  double min_rejecting_alpha(std::size_t step, double stat) const override {
    return holm_min_alpha(suffix_.at(step), stat);
  }

 private:
  std::vector<std::size_t> suffix_;  // pairs remaining at each step
};

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("alpha must lie in (0,1)");
}

}  // namespace

std::unique_ptr<StepQuery> CriticalValueProvider::bind(std::span<const std::size_t> order) const {
  return std::make_unique<GenericStepQuery>(*this, order);
}

HolmProvider::HolmProvider(const HypothesisPartition& partition) {
  sizes_.reserve(partition.size());
  for (const auto& g : partition.groups) sizes_.push_back(g.size());
}

double HolmProvider::critical(std::span<const std::size_t> groups, double alpha) const {
  check_alpha(alpha);
  std::size_t m = 0;
  for (auto g : groups) m += sizes_.at(g);
  if (m == 0) throw std::invalid_argument("holm_critical: empty subset");
  return holm_value(m, alpha);
}

double HolmProvider::min_rejecting_alpha(std::span<const std::size_t> groups, double stat) const {
  std::size_t m = 0;
  for (auto g : groups) m += sizes_.at(g);
  return holm_min_alpha(m, stat);
}

std::unique_ptr<StepQuery> HolmProvider::bind(std::span<const std::size_t> order) const {
  std::vector<std::size_t> suffix(order.size() + 1, 0);
  for (std::size_t k = order.size(); k-- > 0;) suffix[k] = suffix[k + 1] + sizes_.at(order[k]);
  suffix.pop_back();
  return std::make_unique<HolmStepQuery>(std::move(suffix));
}

double holm_critical(const HypothesisPartition& partition, std::span<const std::size_t> groups, double alpha) {
  return HolmProvider(partition).critical(groups, alpha);
}

// ---------------------------------------------------------------------------

std::size_t quantile_rank(std::size_t B, double alpha) {
  check_alpha(alpha);
  if (B == 0) throw std::invalid_argument("quantile_rank: B must be >= 1");
  // The tolerance absorbs representation error, e.g. 0.95 * 1000 = 950.0000000000001.
  const double x = (1.0 - alpha) * static_cast<double>(B + 1);
  const auto r = static_cast<std::size_t>(std::ceil(x - 1e-9));
  return std::clamp<std::size_t>(r, 1, B);
}

double empirical_quantile(std::vector<double>& values, double alpha) {
  const std::size_t r = quantile_rank(values.size(), alpha);
  auto nth = values.begin() + static_cast<std::ptrdiff_t>(r - 1);
  std::nth_element(values.begin(), nth, values.end());
  return *nth;
}

double empirical_min_alpha(std::span<const double> values, double stat) {
  const auto below = static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [stat](double v) { return v < stat; }));
  if (below == 0) return 1.0;
  const double B1 = static_cast<double>(values.size() + 1);
  return static_cast<double>(values.size() + 1 - below) / B1;
}

namespace {

std::vector<double> subset_maxima(const BootstrapDraws& draws, std::span<const std::size_t> groups) {
  if (groups.empty()) throw std::invalid_argument("rw_critical: empty subset");
  std::vector<double> mx(draws.B(), 0.0);
  for (std::size_t b = 0; b < draws.B(); ++b) {
    double m = -std::numeric_limits<double>::infinity();
    for (auto g : groups) {
      if (g >= draws.L()) throw std::out_of_range("rw_critical: group index out of range");
      m = std::max(m, draws.maxima(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(g)));
    }
    mx[b] = m;
  }
  return mx;
}

/// Per resample, the right-to-left maxima of the draws in stepdown order, so
/// the maximum over any suffix is one binary search away.
class RomanoWolfStepQuery final : public StepQuery {
 public:
  RomanoWolfStepQuery(const BootstrapDraws& draws, std::span<const std::size_t> order) : B_(draws.B()) {
    offsets_.reserve(B_ + 1);
    offsets_.push_back(0);
    std::vector<std::pair<std::size_t, double>> tmp;
    for (std::size_t b = 0; b < B_; ++b) {
      tmp.clear();
      double cur = -std::numeric_limits<double>::infinity();
      for (std::size_t k = order.size(); k-- > 0;) {
        const double v = draws.maxima(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(order[k]));
        if (v > cur) {
          cur = v;
          tmp.emplace_back(k, v);
        }
      }
      records_.insert(records_.end(), tmp.rbegin(), tmp.rend());
      offsets_.push_back(records_.size());
    }
  }

  double critical(std::size_t step, double alpha) const override {
    std::vector<double> v = suffix_maxima(step);
    return empirical_quantile(v, alpha);
  }
  double min_rejecting_alpha(std::size_t step, double stat) const override {
    const std::vector<double> v = suffix_maxima(step);
    return empirical_min_alpha(v, stat);
  }

 private:
  std::vector<double> suffix_maxima(std::size_t step) const {
    std::vector<double> out(B_);
    for (std::size_t b = 0; b < B_; ++b) {
      const auto first = records_.begin() + static_cast<std::ptrdiff_t>(offsets_[b]);
      const auto last = records_.begin() + static_cast<std::ptrdiff_t>(offsets_[b + 1]);
      const auto it = std::lower_bound(first, last, step, [](const auto& rec, std::size_t s) { return rec.first < s; });
      if (it == last) throw std::out_of_range("RW step beyond the number of groups");
      out[b] = it->second;
    }
    return out;
  }

  std::size_t B_;
  std::vector<std::pair<std::size_t, double>> records_;
  std::vector<std::size_t> offsets_;
};

}  // namespace

RomanoWolfProvider::RomanoWolfProvider(const BootstrapDraws& draws) : draws_(&draws) {
  if (draws.B() == 0) throw std::invalid_argument("RomanoWolfProvider: no bootstrap draws");
}

double RomanoWolfProvider::critical(std::span<const std::size_t> groups, double alpha) const {
  return rw_critical(*draws_, groups, alpha);
}

double RomanoWolfProvider::min_rejecting_alpha(std::span<const std::size_t> groups, double stat) const {
  return empirical_min_alpha(subset_maxima(*draws_, groups), stat);
}

std::unique_ptr<StepQuery> RomanoWolfProvider::bind(std::span<const std::size_t> order) const {
  return std::make_unique<RomanoWolfStepQuery>(*draws_, order);
}

double rw_critical(const BootstrapDraws& draws, std::span<const std::size_t> groups, double alpha) {
  std::vector<double> mx = subset_maxima(draws, groups);
  return empirical_quantile(mx, alpha);
}

// ---------------------------------------------------------------------------

std::size_t StepdownResult::rejections() const {
  return static_cast<std::size_t>(std::count(rejected.begin(), rejected.end(), true));
}

StepdownResult stepdown(std::span<const double> group_stats, const CriticalValueProvider& provider, double alpha) {
  check_alpha(alpha);
  const std::size_t L = group_stats.size();
  StepdownResult r;
  r.method = provider.name();
  r.alpha = alpha;
  r.statistics.assign(group_stats.begin(), group_stats.end());
  r.rejected.assign(L, false);
  r.critical_faced.assign(L, 0.0);
  r.adjusted_p.assign(L, 1.0);
  r.sentinel.assign(L, false);
  for (std::size_t g = 0; g < L; ++g) {
    if (std::isnan(group_stats[g])) throw std::invalid_argument("stepdown: NaN group statistic");
    r.sentinel[g] = std::fabs(group_stats[g]) >= kClampedStatistic;
  }
  r.order.resize(L);
  std::iota(r.order.begin(), r.order.end(), std::size_t{0});
  std::stable_sort(r.order.begin(), r.order.end(),
                   [&](std::size_t a, std::size_t b) { return group_stats[a] > group_stats[b]; });
  if (L == 0) return r;

  const auto query = provider.bind(r.order);
  bool stopped = false;
  double stop_critical = 0.0;
  double prev_critical = std::numeric_limits<double>::infinity();
  double running_p = 0.0;
  for (std::size_t k = 0; k < L; ++k) {
    const std::size_t g = r.order[k];
    const double c = query->critical(k, alpha);
    if (c > prev_critical) {
      throw std::logic_error("stepdown: " + r.method + " critical values increase from step " + std::to_string(k - 1) +
                             " to " + std::to_string(k) + " (monotonicity violated)");
    }
    prev_critical = c;
    running_p = std::max(running_p, query->min_rejecting_alpha(k, group_stats[g]));
    r.adjusted_p[g] = running_p;
    if (stopped) {
      r.critical_faced[g] = stop_critical;
      continue;
    }
    r.critical_trace.push_back(c);
    r.critical_faced[g] = c;
    if (group_stats[g] > c) {
      r.rejected[g] = true;
    } else {
      stopped = true;
      stop_critical = c;
    }
  }
  return r;
}

nlohmann::json stepdown_to_json(const StepdownResult& result, const HypothesisPartition& partition,
                                std::span<const PairStat> stats_by_pair) {
  using nlohmann::json;
  json groups = json::array();
  std::size_t k = 0;
  std::vector<json> clamped(partition.size(), json::array());
  for (std::size_t g = 0; g < partition.size(); ++g) {
    for (std::size_t m = 0; m < partition.groups[g].size(); ++m, ++k) {
      if (k < stats_by_pair.size() && stats_by_pair[k].clamped) {
        clamped[g].push_back({stats_by_pair[k].i + 1, stats_by_pair[k].j + 1});
      }
    }
  }
  for (std::size_t g = 0; g < partition.size(); ++g) {
    groups.push_back({{"label", partition.labels[g]},
                      {"statistic", result.statistics[g]},
                      {"critical", result.critical_faced[g]},
                      {"rejected", static_cast<bool>(result.rejected[g])},
                      {"adjusted_p", result.adjusted_p[g]},
                      {"sentinel", static_cast<bool>(result.sentinel[g])},
                      {"clamped_members", clamped[g]}});
  }
  return json{{"method", result.method},
              {"alpha", result.alpha},
              {"critical_trace", result.critical_trace},
              {"order", result.order},
              {"groups", groups}};
}

}  // namespace hicov
