#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "hicov/rng.hpp"

namespace hicov {

/// Square-root (Heston) variance driving the factor.
struct HestonParams {
  double mu = 0.05;
  double kappa = 3.0;
  double theta = 0.09;
  double eta = 0.3;
  double rho = -0.6;

  void validate() const;
  [[nodiscard]] bool feller() const { return 2.0 * kappa * theta > eta * eta; }
};

/// Block-diagonal residual covariance Gamma = gamma * gamma^T.
struct ResidualStructure {
  int d_under = 0;
  Eigen::MatrixXd gamma;  // lower triangular, d_under x d_under
  std::vector<int> block_sizes;
  std::vector<double> variances;  // diagonal of Gamma as specified
  double rho_gamma = 0.0;

  [[nodiscard]] Eigen::MatrixXd covariance() const { return gamma * gamma.transpose(); }
  /// Block id of each residual asset.
  [[nodiscard]] std::vector<int> block_of() const;
};

struct SimScenario {
  int n = 390;
  int d = 21;  // the factor is the last asset
  HestonParams heston;
  ResidualStructure structure;
  std::vector<double> betas;  // d - 1 loadings
  int fine_factor = 10;
  std::uint64_t seed = 1;
  /// Initial variance; drawn from the stationary law when absent.
  std::optional<double> v0;

  void validate() const;
};

struct TrueQuantities {
  double integrated_variance = 0.0;
  Eigen::MatrixXd qv;                 // d x d
  Eigen::MatrixXd tau;                // d_under x d_under
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> null_truth;  // d_under x d_under
};

struct PathGrid {
  Eigen::MatrixXd prices;  // d x (n + 1), column 0 is the initial value
  std::optional<TrueQuantities> truth;

  [[nodiscard]] int d() const { return static_cast<int>(prices.rows()); }
  [[nodiscard]] int n() const { return static_cast<int>(prices.cols()) - 1; }
};

/// Draws a block-diagonal Gamma with constant within-block correlation and
/// Uniform[0.2, 0.5] diagonals (or `pinned_diagonal` for every asset).
ResidualStructure draw_residual_structure(int d_under, int num_blocks, double rho_gamma, Rng& rng,
                                          std::optional<double> pinned_diagonal = std::nullopt);

/// Builds the structure from explicit block sizes and diagonals.
ResidualStructure make_residual_structure(const std::vector<int>& block_sizes, double rho_gamma,
                                          const std::vector<double>& diagonals);

/// iid Uniform[0.25, 2.25] factor loadings.
std::vector<double> draw_betas(int d_under, Rng& rng);

/// One Gamma(2 kappa theta / eta^2, rate 2 kappa / eta^2) draw, or theta if eta == 0.
double sample_stationary_variance(const HestonParams& heston, Rng& rng);

TrueQuantities true_quantities(const ResidualStructure& structure, const std::vector<double>& betas,
                               double integrated_variance);

/// Full-truncation Euler on a grid of n * fine_factor steps, subsampled to the
/// n + 1 observation times. The truth sidecar is always filled.
PathGrid simulate_paths(const SimScenario& scenario, Rng& rng);

/// Scenario with structure and betas drawn from `key`.
SimScenario make_scenario(int n, int d_under, int num_blocks, double rho_gamma, const HestonParams& heston,
                          int fine_factor, const StreamKey& key);

}  // namespace hicov
