#include "hicov/model_sim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace hicov {

void HestonParams::validate() const {
  if (!(kappa > 0.0)) throw std::invalid_argument("heston.kappa must be > 0");
  if (!(theta > 0.0)) throw std::invalid_argument("heston.theta must be > 0");
  if (!(eta >= 0.0)) throw std::invalid_argument("heston.eta must be >= 0");
  if (!(std::fabs(rho) <= 1.0)) throw std::invalid_argument("heston.rho must lie in [-1, 1]");
  if (!std::isfinite(mu)) throw std::invalid_argument("heston.mu must be finite");
}

std::vector<int> ResidualStructure::block_of() const {
  std::vector<int> out;
  out.reserve(d_under);
  for (int b = 0; b < static_cast<int>(block_sizes.size()); ++b) out.insert(out.end(), block_sizes[b], b);
  return out;
}

void SimScenario::validate() const {
  if (n < 2) throw std::invalid_argument("scenario.n must be >= 2");
  if (d < 3) throw std::invalid_argument("scenario.d must be >= 3");
  if (fine_factor < 1) throw std::invalid_argument("scenario.fine_factor must be >= 1");
  heston.validate();
  if (structure.d_under != d - 1 || structure.gamma.rows() != d - 1 || structure.gamma.cols() != d - 1) {
    throw std::invalid_argument("scenario.structure must have dimension d - 1");
  }
  if (static_cast<int>(betas.size()) != d - 1) throw std::invalid_argument("scenario.betas must have d - 1 entries");
  if (v0 && !(*v0 >= 0.0)) throw std::invalid_argument("scenario.v0 must be >= 0");
}

ResidualStructure make_residual_structure(const std::vector<int>& block_sizes, double rho_gamma,
                                          const std::vector<double>& diagonals) {
  int d_under = 0;
  for (int s : block_sizes) {
    if (s < 1) throw std::invalid_argument("block sizes must be positive");
    d_under += s;
  }
  if (static_cast<int>(diagonals.size()) != d_under) {
    throw std::invalid_argument("expected " + std::to_string(d_under) + " diagonals, got " +
                                std::to_string(diagonals.size()));
  }
  ResidualStructure out;
  out.d_under = d_under;
  out.block_sizes = block_sizes;
  out.variances = diagonals;
  out.rho_gamma = rho_gamma;
  out.gamma = Eigen::MatrixXd::Zero(d_under, d_under);

  int offset = 0;
  for (std::size_t b = 0; b < block_sizes.size(); ++b) {
    const int m = block_sizes[b];
    // Gamma_block = D^{1/2} C D^{1/2} with C the equicorrelation matrix, so
    // gamma_block = D^{1/2} chol(C) and zero diagonals stay admissible.
    Eigen::MatrixXd corr = Eigen::MatrixXd::Constant(m, m, rho_gamma);
    corr.diagonal().setOnes();
    Eigen::LLT<Eigen::MatrixXd> llt(corr);
    if (llt.info() != Eigen::Success) {
      throw std::invalid_argument("residual block " + std::to_string(b) + " (size " + std::to_string(m) +
                                  ") is not positive definite for rho_gamma=" + std::to_string(rho_gamma));
    }
    Eigen::MatrixXd chol = llt.matrixL();
    for (int r = 0; r < m; ++r) {
      const double diag = diagonals[offset + r];
      if (!(diag >= 0.0)) throw std::invalid_argument("residual variances must be >= 0");
      chol.row(r) *= std::sqrt(diag);
    }
    out.gamma.block(offset, offset, m, m) = chol;
    offset += m;
  }
  return out;
}

ResidualStructure draw_residual_structure(int d_under, int num_blocks, double rho_gamma, Rng& rng,
                                          std::optional<double> pinned_diagonal) {
  if (num_blocks < 1 || d_under < 1 || d_under % num_blocks != 0) {
    throw std::invalid_argument("num_blocks=" + std::to_string(num_blocks) + " does not divide d_under=" +
                                std::to_string(d_under));
  }
  std::vector<int> sizes(num_blocks, d_under / num_blocks);
  std::vector<double> diagonals(d_under);
  std::uniform_real_distribution<double> unif(0.2, 0.5);
  for (auto& v : diagonals) v = pinned_diagonal ? *pinned_diagonal : unif(rng);
  return make_residual_structure(sizes, rho_gamma, diagonals);
}

std::vector<double> draw_betas(int d_under, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.25, 2.25);
  std::vector<double> out(d_under);
  for (auto& b : out) b = unif(rng);
  return out;
}

double sample_stationary_variance(const HestonParams& heston, Rng& rng) {
  if (heston.eta == 0.0) return heston.theta;
  const double shape = 2.0 * heston.kappa * heston.theta / (heston.eta * heston.eta);
  const double rate = 2.0 * heston.kappa / (heston.eta * heston.eta);
  std::gamma_distribution<double> gamma(shape, 1.0 / rate);
  return gamma(rng);
}

TrueQuantities true_quantities(const ResidualStructure& structure, const std::vector<double>& betas,
                               double integrated_variance) {
  if (!(integrated_variance > 0.0)) throw std::invalid_argument("integrated_variance must be > 0");
  const int du = structure.d_under;
  if (static_cast<int>(betas.size()) != du) throw std::invalid_argument("betas size mismatch");
  const Eigen::MatrixXd cov = structure.covariance();
  const Eigen::Map<const Eigen::VectorXd> beta(betas.data(), du);

  TrueQuantities t;
  t.integrated_variance = integrated_variance;
  t.qv.resize(du + 1, du + 1);
  t.qv.topLeftCorner(du, du) = beta * beta.transpose() * integrated_variance + cov;
  t.qv.topRightCorner(du, 1) = beta * integrated_variance;
  t.qv.bottomLeftCorner(1, du) = beta.transpose() * integrated_variance;
  t.qv(du, du) = integrated_variance;

  t.tau.resize(du, du);
  t.null_truth.resize(du, du);
  const auto& blocks = structure.block_of();
  for (int i = 0; i < du; ++i) {
    for (int j = 0; j < du; ++j) {
      // Off-block entries are exact zeros by construction; within a block the
      // bilinear form reduces to -Gamma^{ij} * integrated variance.
      const double g = blocks[i] == blocks[j] ? cov(i, j) : 0.0;
      t.tau(i, j) = -g * integrated_variance;
      t.null_truth(i, j) = g == 0.0;
    }
  }
  return t;
}

PathGrid simulate_paths(const SimScenario& scenario, Rng& rng) {
  scenario.validate();
  const int n = scenario.n;
  const int d = scenario.d;
  const int du = d - 1;
  const int fine = scenario.fine_factor;
  const auto& h = scenario.heston;
  const double dt = 1.0 / (static_cast<double>(n) * fine);
  const double sqdt = std::sqrt(dt);
  const double rho_bar = std::sqrt(std::max(0.0, 1.0 - h.rho * h.rho));
  std::normal_distribution<double> normal(0.0, 1.0);

  double v = scenario.v0 ? *scenario.v0 : sample_stationary_variance(h, rng);

  PathGrid grid;
  grid.prices = Eigen::MatrixXd::Zero(d, n + 1);
  Eigen::VectorXd brownian = Eigen::VectorXd::Zero(du);  // residual drivers B^1..B^{d-1}
  Eigen::VectorXd residual(du);
  const Eigen::Map<const Eigen::VectorXd> beta(scenario.betas.data(), du);
  const double sqrt_obs_dt = std::sqrt(1.0 / n);

  double factor = 0.0;
  double int_var = 0.0;
  for (int obs = 1; obs <= n; ++obs) {
    for (int k = 0; k < fine; ++k) {
      const double vp = std::max(v, 0.0);
      const double sv = std::sqrt(vp);
      const double dbf = sqdt * normal(rng);
      const double dbv = sqdt * normal(rng);
      int_var += vp * dt;
      factor += h.mu * dt + sv * dbf;
      v += h.kappa * (h.theta - vp) * dt + h.eta * sv * (h.rho * dbf + rho_bar * dbv);
    }
    // The residual drivers are independent of (v, B^d), so their increment over
    // one observation interval is drawn exactly instead of summing fine steps.
    for (int j = 0; j < du; ++j) brownian[j] += sqrt_obs_dt * normal(rng);
    residual.noalias() = scenario.structure.gamma.triangularView<Eigen::Lower>() * brownian;
    grid.prices.col(obs).head(du) = beta * factor + residual;
    grid.prices(du, obs) = factor;
  }
  grid.truth = true_quantities(scenario.structure, scenario.betas, int_var);
  return grid;
}

SimScenario make_scenario(int n, int d_under, int num_blocks, double rho_gamma, const HestonParams& heston,
                          int fine_factor, const StreamKey& key) {
  Rng rng = key.engine();
  SimScenario s;
  s.n = n;
  s.d = d_under + 1;
  s.heston = heston;
  s.structure = draw_residual_structure(d_under, num_blocks, rho_gamma, rng);
  s.betas = draw_betas(d_under, rng);
  s.fine_factor = fine_factor;
  s.seed = key.value();
  return s;
}

}  // namespace hicov
