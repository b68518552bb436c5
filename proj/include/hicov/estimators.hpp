#pragma once

#include <Eigen/Dense>

#include <array>
#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "hicov/model_sim.hpp"

namespace hicov {

/// Asset indices are 0-based. In factor mode the factor is asset d-1.
struct PairIndex {
  int i = 0;
  int j = 0;
  friend bool operator==(const PairIndex&, const PairIndex&) = default;
};

/// Execution policy for kernels that have both an OpenMP and a serial reference path.
enum class Exec { kSerial, kParallel };

/// Which statistic the pair tests use.
///  kFactor:   residual sparsity against the factor in the last column.
///  kNoFactor: plain sparsity of [Y^i, Y^j] (the factor is absent).
enum class StatMode { kFactor, kNoFactor };

/// Reported statistic for pairs whose variance estimate had to be floored.
inline constexpr double kClampedStatistic = 1e15;

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One-step increments, d x n (column h is the increment over (t_{h-1}, t_h]).
/// Row-major so each asset's increment series is contiguous.
class IncrementMatrix {
 public:
  explicit IncrementMatrix(RowMatrix dy);
  static IncrementMatrix from_prices(const Eigen::MatrixXd& prices);

  [[nodiscard]] int d() const { return static_cast<int>(dy_.rows()); }
  [[nodiscard]] int n() const { return static_cast<int>(dy_.cols()); }
  [[nodiscard]] const RowMatrix& dy() const { return dy_; }
  [[nodiscard]] const double* series(int asset) const { return dy_.data() + static_cast<std::ptrdiff_t>(asset) * n(); }
  [[nodiscard]] double operator()(int asset, int step) const { return dy_(asset, step); }

 private:
  RowMatrix dy_;
};

struct RealizedCov {
  Eigen::MatrixXd rc;  // d x d, exactly symmetric

  [[nodiscard]] double operator()(int i, int j) const { return rc(i, j); }
  [[nodiscard]] int d() const { return static_cast<int>(rc.rows()); }
};

RealizedCov realized_cov(const IncrementMatrix& inc, Exec exec = Exec::kParallel);

/// Lazy entries of the asymptotic covariance estimator
///   C((i,j),(k,l)) = n sum_h chi_h^{ij} chi_h^{kl}
///                    - n/2 sum_{h<n} (chi_h^{ij} chi_{h+1}^{kl} + chi_{h+1}^{ij} chi_h^{kl})
/// with chi_h^{ij} = dY_h^i dY_h^j. The d^2 x d^2 matrix is never formed;
/// entries are memoized under (i,j)<->(j,i) and (ij)<->(kl) symmetry.
/// The oracle references `inc`, which must outlive it. Safe for concurrent use.
class AsyCovOracle {
 public:
  explicit AsyCovOracle(const IncrementMatrix& inc);
  AsyCovOracle(const AsyCovOracle&) = delete;
  AsyCovOracle& operator=(const AsyCovOracle&) = delete;

  [[nodiscard]] double entry(PairIndex ij, PairIndex kl) const;
  /// The same entry before rounding to double; the variance combination
  /// cancels heavily and is evaluated from these.
  [[nodiscard]] long double entry_extended(PairIndex ij, PairIndex kl) const;
  /// Extended-precision realized covariance of one pair, recomputed from the increments.
  [[nodiscard]] long double rc_extended(PairIndex ij) const;
  [[nodiscard]] const IncrementMatrix& increments() const { return *inc_; }
  /// Number of entries evaluated from the increments (cache misses).
  [[nodiscard]] std::size_t evaluations() const { return evaluations_.load(std::memory_order_relaxed); }
  [[nodiscard]] std::size_t cache_size() const;

 private:
  static constexpr std::size_t kStripes = 64;
  struct Stripe {
    mutable std::mutex mu;
    std::unordered_map<std::uint64_t, long double> values;
  };

  [[nodiscard]] long double compute(PairIndex ij, PairIndex kl) const;

  const IncrementMatrix* inc_;
  std::unique_ptr<Stripe[]> stripes_;
  mutable std::atomic<std::size_t> evaluations_{0};
};

double chat_entry(const AsyCovOracle& oracle, PairIndex ij, PairIndex kl);

/// The statistic is a bilinear form of realized covariances; its derivative
/// with respect to rc at four entries drives both the variance and the
/// bootstrap. Entry order: (i,d), (j,d), (i,j), (d,d).
struct PairGradient {
  std::array<PairIndex, 4> at;
  std::array<double, 4> coef;
};

PairGradient pair_gradient(const RealizedCov& rc, int i, int j, StatMode mode = StatMode::kFactor);

/// rc^{id} rc^{jd} - rc^{ij} rc^{dd} (factor mode) or -rc^{ij} (no factor).
double that(const RealizedCov& rc, int i, int j, StatMode mode = StatMode::kFactor);

struct VarianceEstimate {
  double value = 0.0;
  bool clamped = false;
};

/// The ten-term quadratic form in C-hat entries; raw, possibly <= 0.
double vhat_raw(const AsyCovOracle& oracle, const RealizedCov& rc, int i, int j,
                StatMode mode = StatMode::kFactor);

/// vhat_raw floored at 1e-12 * max(1, rc^{ii} rc^{jj} (rc^{dd})^2) when non-positive.
VarianceEstimate vhat(const AsyCovOracle& oracle, const RealizedCov& rc, int i, int j,
                      StatMode mode = StatMode::kFactor);

struct PairStat {
  int i = 0;
  int j = 0;
  double that = 0.0;
  double vhat = 0.0;
  double t = 0.0;
  std::optional<double> t_centered;
  bool clamped = false;
};

/// Studentized statistics sqrt(n) * that / sqrt(vhat) for each pair. The
/// centered variant is filled when `truth` is given (factor mode only).
std::vector<PairStat> pair_stats(const IncrementMatrix& inc, const RealizedCov& rc, const AsyCovOracle& oracle,
                                 std::span<const PairIndex> pairs, const TrueQuantities* truth = nullptr,
                                 StatMode mode = StatMode::kFactor, Exec exec = Exec::kParallel);

std::vector<PairStat> pair_stats(const IncrementMatrix& inc, std::span<const PairIndex> pairs,
                                 const TrueQuantities* truth = nullptr, StatMode mode = StatMode::kFactor,
                                 Exec exec = Exec::kParallel);

/// Number of assets under test: d - 1 in factor mode, d otherwise.
inline int tested_dimension(int d, StatMode mode) { return mode == StatMode::kFactor ? d - 1 : d; }

}  // namespace hicov
