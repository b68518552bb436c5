#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hicov/estimators.hpp"
#include "hicov/mtest.hpp"
#include "hicov/rng.hpp"

namespace hicov {

/// e_h = eta_h - eta_{h-1}, eta_0..eta_n iid N(0, 1/2): stationary MA(1)
/// with autocovariance 1, -1/2, 0, ...
struct MultiplierVector {
  Eigen::VectorXd e;
};

MultiplierVector gen_multipliers(int n, Rng& rng);

/// Bootstrapped realized covariances sqrt(n) sum_h e_h dY_h^i dY_h^j for i, j in `rows`.
struct PartialRc {
  std::vector<int> rows;
  Eigen::MatrixXd values;  // |rows| x |rows|

  /// Entry for assets (i, j); throws std::out_of_range if either is not in `rows`.
  [[nodiscard]] double operator()(int i, int j) const;
};

/// Weighted Gram product over the listed assets. In factor mode `rows` must
/// include the factor (asset d-1).
PartialRc bootstrap_rc(const IncrementMatrix& inc, const MultiplierVector& e, std::span<const int> rows,
                       StatMode mode = StatMode::kFactor);

/// Bootstrap statistic: the linearized statistic evaluated at rc_star,
/// divided by sqrt(vhat) of the observed data.
double tstar(const RealizedCov& rc, const PartialRc& rc_star, double vhat, int i, int j,
             StatMode mode = StatMode::kFactor);

/// B x L matrix of bootstrapped group maxima max_{lambda in group} |T*_lambda|.
struct BootstrapDraws {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> maxima;
  std::string partition_id;
  std::uint64_t seed = 0;

  [[nodiscard]] std::size_t B() const { return static_cast<std::size_t>(maxima.rows()); }
  [[nodiscard]] std::size_t L() const { return static_cast<std::size_t>(maxima.cols()); }
};

/// Draws B resamples; resample b uses the multiplier stream key.child(b).
/// `stats` are aligned with partition.flattened(). The parallel path batches
/// resamples into a single GEMM against the needed chi_h columns; the serial
/// path is the per-resample reference.
BootstrapDraws bootstrap_group_maxima(const IncrementMatrix& inc, const RealizedCov& rc,
                                      const HypothesisPartition& partition, std::span<const PairStat> stats, int B,
                                      const StreamKey& key, StatMode mode = StatMode::kFactor,
                                      Exec exec = Exec::kParallel);

/// Stable identifier of a partition's contents.
std::string partition_id(const HypothesisPartition& partition);

/// FNV-1a over the increment bytes and shape.
std::uint64_t hash_increments(const IncrementMatrix& inc);

std::filesystem::path draws_cache_path(const std::filesystem::path& dir, std::uint64_t data_hash, std::uint64_t seed,
                                       int B, const std::string& partition);

void save_draws(const std::filesystem::path& path, const BootstrapDraws& draws, std::uint64_t data_hash);

/// Returns nullopt if the file is missing or was written for different data, seed, or shape.
std::optional<BootstrapDraws> load_draws(const std::filesystem::path& path, std::uint64_t data_hash,
                                         std::uint64_t seed, int B, const std::string& partition);

}  // namespace hicov
