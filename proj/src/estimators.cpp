#include "hicov/estimators.hpp"

#include <cmath>
#include <stdexcept>
#include <string>


namespace hicov {

IncrementMatrix::IncrementMatrix(RowMatrix dy) : dy_(std::move(dy)) {
  if (dy_.cols() < 2) throw std::invalid_argument("increment matrix needs n >= 2 columns");
  if (dy_.rows() < 1) throw std::invalid_argument("increment matrix needs at least one asset");
  if (!dy_.allFinite()) throw std::invalid_argument("increment matrix has non-finite entries");
}

IncrementMatrix IncrementMatrix::from_prices(const Eigen::MatrixXd& prices) {
  const auto n = prices.cols() - 1;
  if (n < 2) throw std::invalid_argument("price grid needs at least 3 observation times");
  RowMatrix dy = prices.rightCols(n) - prices.leftCols(n);
  return IncrementMatrix(std::move(dy));
}

RealizedCov realized_cov(const IncrementMatrix& inc, Exec exec) {
  const int d = inc.d();
  const int n = inc.n();
  RealizedCov out;
  out.rc.resize(d, d);
  if (exec == Exec::kSerial) {
    for (int i = 0; i < d; ++i) {
      const double* xi = inc.series(i);
      for (int j = i; j < d; ++j) {
        const double* xj = inc.series(j);
        double s = 0.0;
        for (int h = 0; h < n; ++h) s += xi[h] * xj[h];
        out.rc(i, j) = s;
        out.rc(j, i) = s;
      }
    }
    return out;
  }
  const auto& dy = inc.dy();
#pragma omp parallel for schedule(dynamic, 4)
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      const double s = dy.row(i).dot(dy.row(j));
      out.rc(i, j) = s;
      out.rc(j, i) = s;
    }
  }
  return out;
}

namespace {

std::uint64_t canonical_key(PairIndex ij, PairIndex kl, int d) {
  auto vec = [d](PairIndex p) {
    const auto lo = static_cast<std::uint64_t>(std::min(p.i, p.j));
    const auto hi = static_cast<std::uint64_t>(std::max(p.i, p.j));
    return lo * static_cast<std::uint64_t>(d) + hi;
  };
  auto a = vec(ij);
  auto b = vec(kl);
  if (a > b) std::swap(a, b);
  const auto dd = static_cast<std::uint64_t>(d) * static_cast<std::uint64_t>(d);
  return a * dd + b;
}

void check_pair(PairIndex p, int d) {
  if (p.i < 0 || p.j < 0 || p.i >= d || p.j >= d) {
    throw std::out_of_range("asset pair (" + std::to_string(p.i) + "," + std::to_string(p.j) +
                            ") out of range for d=" + std::to_string(d));
  }
}

}  // namespace

AsyCovOracle::AsyCovOracle(const IncrementMatrix& inc)
    : inc_(&inc), stripes_(std::make_unique<Stripe[]>(kStripes)) {}

long double AsyCovOracle::compute(PairIndex ij, PairIndex kl) const {
  const int n = inc_->n();
  const double* xi = inc_->series(ij.i);
  const double* xj = inc_->series(ij.j);
  const double* xk = inc_->series(kl.i);
  const double* xl = inc_->series(kl.j);
  // Extended precision: the lag-one terms cancel most of the lag-zero sum and
  // the variance combination cancels again, so double products lose digits.
  long double acc = 0.0L;
  long double a_prev = static_cast<long double>(xi[0]) * xj[0];
  long double b_prev = static_cast<long double>(xk[0]) * xl[0];
  acc += a_prev * b_prev;
  for (int h = 1; h < n; ++h) {
    const long double a = static_cast<long double>(xi[h]) * xj[h];
    const long double b = static_cast<long double>(xk[h]) * xl[h];
    acc += a * b - 0.5L * (a_prev * b + a * b_prev);
    a_prev = a;
    b_prev = b;
  }
  return n * acc;
}

double AsyCovOracle::entry(PairIndex ij, PairIndex kl) const {
  return static_cast<double>(entry_extended(ij, kl));
}

long double AsyCovOracle::rc_extended(PairIndex ij) const {
  check_pair(ij, inc_->d());
  const double* x = inc_->series(ij.i);
  const double* y = inc_->series(ij.j);
  long double s = 0.0L;
  for (int h = 0; h < inc_->n(); ++h) s += static_cast<long double>(x[h]) * y[h];
  return s;
}

long double AsyCovOracle::entry_extended(PairIndex ij, PairIndex kl) const {
  const int d = inc_->d();
  check_pair(ij, d);
  check_pair(kl, d);
  const std::uint64_t key = canonical_key(ij, kl, d);
  Stripe& stripe = stripes_[mix64(key) % kStripes];
  {
    std::lock_guard lock(stripe.mu);
    if (auto it = stripe.values.find(key); it != stripe.values.end()) return it->second;
  }
  // Evaluate from the canonical representative so every request for the same
  // key produces the same bits, whichever symmetric form it arrived in.
  PairIndex a{std::min(ij.i, ij.j), std::max(ij.i, ij.j)};
  PairIndex b{std::min(kl.i, kl.j), std::max(kl.i, kl.j)};
  if (a.i * d + a.j > b.i * d + b.j) std::swap(a, b);
  const long double value = compute(a, b);
  evaluations_.fetch_add(1, std::memory_order_relaxed);
  std::lock_guard lock(stripe.mu);
  return stripe.values.emplace(key, value).first->second;
}

std::size_t AsyCovOracle::cache_size() const {
  std::size_t total = 0;
  for (std::size_t s = 0; s < kStripes; ++s) {
    std::lock_guard lock(stripes_[s].mu);
    total += stripes_[s].values.size();
  }
  return total;
}

double chat_entry(const AsyCovOracle& oracle, PairIndex ij, PairIndex kl) { return oracle.entry(ij, kl); }

PairGradient pair_gradient(const RealizedCov& rc, int i, int j, StatMode mode) {
  const int f = rc.d() - 1;
  PairGradient g;
  g.at = {PairIndex{i, f}, PairIndex{j, f}, PairIndex{i, j}, PairIndex{f, f}};
  if (mode == StatMode::kFactor) {
    g.coef = {rc(j, f), rc(i, f), -rc(f, f), -rc(i, j)};
  } else {
    g.coef = {0.0, 0.0, -1.0, 0.0};
  }
  return g;
}

double that(const RealizedCov& rc, int i, int j, StatMode mode) {
  if (mode == StatMode::kNoFactor) return -rc(i, j);
  const int f = rc.d() - 1;
  return rc(i, f) * rc(j, f) - rc(i, j) * rc(f, f);
}

double vhat_raw(const AsyCovOracle& oracle, const RealizedCov& rc, int i, int j, StatMode mode) {
  const PairIndex ij{i, j};
  if (mode == StatMode::kNoFactor) return oracle.entry(ij, ij);

  const int f = rc.d() - 1;
  const PairIndex id{i, f};
  const PairIndex jd{j, f};
  const PairIndex dd{f, f};
  // Coefficients are recomputed rather than read from rc so that nothing is
  // rounded to double before the cancellation.
  const long double q_id = oracle.rc_extended(id);
  const long double q_jd = oracle.rc_extended(jd);
  const long double q_ij = oracle.rc_extended(ij);
  const long double q_dd = oracle.rc_extended(dd);
  auto c = [&oracle](PairIndex a, PairIndex b) { return oracle.entry_extended(a, b); };

  const long double v = q_jd * q_jd * c(id, id) + q_id * q_id * c(jd, jd) + q_ij * q_ij * c(dd, dd) +
                        q_dd * q_dd * c(ij, ij) + 2.0L * q_dd * q_ij * c(ij, dd) + 2.0L * q_id * q_jd * c(id, jd) -
                        2.0L * q_id * q_dd * c(ij, jd) - 2.0L * q_jd * q_dd * c(ij, id) -
                        2.0L * q_ij * q_id * c(jd, dd) - 2.0L * q_ij * q_jd * c(id, dd);
  return static_cast<double>(v);
}

VarianceEstimate vhat(const AsyCovOracle& oracle, const RealizedCov& rc, int i, int j, StatMode mode) {
  const double raw = vhat_raw(oracle, rc, i, j, mode);
  if (raw > 0.0) return {raw, false};
  const double q_dd = mode == StatMode::kFactor ? rc(rc.d() - 1, rc.d() - 1) : 1.0;
  const double floor = 1e-12 * std::max(1.0, rc(i, i) * rc(j, j) * q_dd * q_dd);
  return {floor, true};
}

namespace {

double studentize(double numerator, const VarianceEstimate& v, int n) {
  if (v.clamped) {
    if (numerator == 0.0) return 0.0;
    return numerator > 0.0 ? kClampedStatistic : -kClampedStatistic;
  }
  return std::sqrt(static_cast<double>(n)) * numerator / std::sqrt(v.value);
}

PairStat one_pair(const IncrementMatrix& inc, const RealizedCov& rc, const AsyCovOracle& oracle, PairIndex p,
                  const TrueQuantities* truth, StatMode mode) {
  PairStat s;
  s.i = p.i;
  s.j = p.j;
  s.that = that(rc, p.i, p.j, mode);
  const VarianceEstimate v = vhat(oracle, rc, p.i, p.j, mode);
  s.vhat = v.value;
  s.clamped = v.clamped;
  s.t = studentize(s.that, v, inc.n());
  if (truth != nullptr && mode == StatMode::kFactor) {
    s.t_centered = studentize(s.that - truth->tau(p.i, p.j), v, inc.n());
  }
  return s;
}

}  // namespace

std::vector<PairStat> pair_stats(const IncrementMatrix& inc, const RealizedCov& rc, const AsyCovOracle& oracle,
                                 std::span<const PairIndex> pairs, const TrueQuantities* truth, StatMode mode,
                                 Exec exec) {
  const int tested = tested_dimension(inc.d(), mode);
  for (const auto& p : pairs) {
    if (p.i < 0 || p.j < 0 || p.i >= tested || p.j >= tested || p.i >= p.j) {
      throw std::out_of_range("pair (" + std::to_string(p.i) + "," + std::to_string(p.j) +
                              ") must satisfy 0 <= i < j < " + std::to_string(tested));
    }
  }
  std::vector<PairStat> out(pairs.size());
  const auto count = static_cast<std::ptrdiff_t>(pairs.size());
  if (exec == Exec::kSerial) {
    for (std::ptrdiff_t k = 0; k < count; ++k) out[k] = one_pair(inc, rc, oracle, pairs[k], truth, mode);
  } else {
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t k = 0; k < count; ++k) out[k] = one_pair(inc, rc, oracle, pairs[k], truth, mode);
  }
  return out;
}

std::vector<PairStat> pair_stats(const IncrementMatrix& inc, std::span<const PairIndex> pairs,
                                 const TrueQuantities* truth, StatMode mode, Exec exec) {
  const RealizedCov rc = realized_cov(inc, exec);
  const AsyCovOracle oracle(inc);
  return pair_stats(inc, rc, oracle, pairs, truth, mode, exec);
}

}  // namespace hicov
