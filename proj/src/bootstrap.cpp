#include "hicov/bootstrap.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace hicov {

MultiplierVector gen_multipliers(int n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("gen_multipliers: n must be >= 1");
  std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
  MultiplierVector out;
  out.e.resize(n);
  double prev = normal(rng);
  for (int h = 0; h < n; ++h) {
    const double cur = normal(rng);
    out.e[h] = cur - prev;
    prev = cur;
  }
  return out;
}

double PartialRc::operator()(int i, int j) const {
  auto pos = [this](int a) {
    const auto it = std::find(rows.begin(), rows.end(), a);
    if (it == rows.end()) throw std::out_of_range("asset " + std::to_string(a) + " not in bootstrap rows");
    return static_cast<Eigen::Index>(it - rows.begin());
  };
  return values(pos(i), pos(j));
}

PartialRc bootstrap_rc(const IncrementMatrix& inc, const MultiplierVector& e, std::span<const int> rows,
                       StatMode mode) {
  const int n = inc.n();
  if (e.e.size() != n) throw std::invalid_argument("multiplier length does not match n");
  for (int r : rows) {
    if (r < 0 || r >= inc.d()) throw std::out_of_range("bootstrap row " + std::to_string(r) + " out of range");
  }
  if (mode == StatMode::kFactor && std::find(rows.begin(), rows.end(), inc.d() - 1) == rows.end()) {
    throw std::invalid_argument("bootstrap rows must include the factor (asset " + std::to_string(inc.d() - 1) + ")");
  }
  const double scale = std::sqrt(static_cast<double>(n));
  const auto m = static_cast<Eigen::Index>(rows.size());
  PartialRc out;
  out.rows.assign(rows.begin(), rows.end());
  out.values.resize(m, m);
  for (Eigen::Index a = 0; a < m; ++a) {
    const double* xa = inc.series(rows[a]);
    for (Eigen::Index b = a; b < m; ++b) {
      const double* xb = inc.series(rows[b]);
      double s = 0.0;
      for (int h = 0; h < n; ++h) s += e.e[h] * xa[h] * xb[h];
      out.values(a, b) = scale * s;
      out.values(b, a) = scale * s;
    }
  }
  return out;
}

double tstar(const RealizedCov& rc, const PartialRc& rc_star, double vhat, int i, int j, StatMode mode) {
  const PairGradient g = pair_gradient(rc, i, j, mode);
  double num = 0.0;
  for (int k = 0; k < 4; ++k) {
    if (g.coef[k] != 0.0) num += g.coef[k] * rc_star(g.at[k].i, g.at[k].j);
  }
  return num / std::sqrt(vhat);
}

namespace {

struct PairPlan {
  std::array<int, 4> col{};
  std::array<double, 4> weight{};  // gradient / sqrt(vhat)
  int terms = 0;
  std::size_t group = 0;
};

void check_inputs(const IncrementMatrix& inc, const HypothesisPartition& partition, std::span<const PairStat> stats,
                  int B) {
  if (B < 1) throw std::invalid_argument("bootstrap: B must be >= 1");
  if (stats.size() != partition.pair_count()) {
    throw std::invalid_argument("bootstrap: need one statistic per partition pair");
  }
  std::size_t k = 0;
  for (const auto& g : partition.groups) {
    for (const auto& p : g) {
      if (stats[k].i != p.i || stats[k].j != p.j) {
        throw std::invalid_argument("bootstrap: statistics are not aligned with the partition");
      }
      if (p.j >= inc.d()) throw std::out_of_range("bootstrap: pair outside the increment matrix");
      ++k;
    }
  }
}

BootstrapDraws serial_draws(const IncrementMatrix& inc, const RealizedCov& rc, const HypothesisPartition& partition,
                            std::span<const PairStat> stats, int B, const StreamKey& key, StatMode mode) {
  std::vector<int> rows;
  for (const auto& s : stats) {
    rows.push_back(s.i);
    rows.push_back(s.j);
  }
  if (mode == StatMode::kFactor) rows.push_back(inc.d() - 1);
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());

  BootstrapDraws out;
  out.maxima = decltype(out.maxima)::Zero(B, static_cast<Eigen::Index>(partition.size()));
  for (int b = 0; b < B; ++b) {
    Rng rng = key.child(static_cast<std::uint64_t>(b)).engine();
    const MultiplierVector e = gen_multipliers(inc.n(), rng);
    const PartialRc star = bootstrap_rc(inc, e, rows, mode);
    std::size_t k = 0;
    for (std::size_t g = 0; g < partition.size(); ++g) {
      double mx = 0.0;
      for (std::size_t m = 0; m < partition.groups[g].size(); ++m, ++k) {
        mx = std::max(mx, std::fabs(tstar(rc, star, stats[k].vhat, stats[k].i, stats[k].j, mode)));
      }
      out.maxima(b, static_cast<Eigen::Index>(g)) = mx;
    }
  }
  return out;
}

BootstrapDraws parallel_draws(const IncrementMatrix& inc, const RealizedCov& rc, const HypothesisPartition& partition,
                              std::span<const PairStat> stats, int B, const StreamKey& key, StatMode mode) {
  const int n = inc.n();
  const int d = inc.d();

  // Columns of chi_h needed by any pair's gradient.
  std::unordered_map<int, int> column_of;
  std::vector<PairIndex> columns;
  auto column = [&](PairIndex p) {
    const int key_ij = std::min(p.i, p.j) * d + std::max(p.i, p.j);
    auto [it, inserted] = column_of.emplace(key_ij, static_cast<int>(columns.size()));
    if (inserted) columns.push_back(p);
    return it->second;
  };
  std::vector<PairPlan> plan(stats.size());
  {
    std::size_t k = 0;
    for (std::size_t g = 0; g < partition.size(); ++g) {
      for (std::size_t m = 0; m < partition.groups[g].size(); ++m, ++k) {
        const PairGradient grad = pair_gradient(rc, stats[k].i, stats[k].j, mode);
        const double inv_sd = 1.0 / std::sqrt(stats[k].vhat);
        PairPlan& pp = plan[k];
        pp.group = g;
        for (int t = 0; t < 4; ++t) {
          if (grad.coef[t] == 0.0) continue;
          pp.col[pp.terms] = column(grad.at[t]);
          pp.weight[pp.terms] = grad.coef[t] * inv_sd;
          ++pp.terms;
        }
      }
    }
  }

  const auto K = static_cast<Eigen::Index>(columns.size());
  Eigen::MatrixXd chi(n, K);
  for (Eigen::Index c = 0; c < K; ++c) {
    const double* xa = inc.series(columns[c].i);
    const double* xb = inc.series(columns[c].j);
    for (int h = 0; h < n; ++h) chi(h, c) = xa[h] * xb[h];
  }

  BootstrapDraws out;
  const auto L = static_cast<Eigen::Index>(partition.size());
  out.maxima = decltype(out.maxima)::Zero(B, L);
  const double scale = std::sqrt(static_cast<double>(n));

  // Fixed chunk boundaries keep each resample's arithmetic independent of the thread count.
  constexpr int kChunk = 32;
  const int chunks = (B + kChunk - 1) / kChunk;
#pragma omp parallel for schedule(dynamic, 1)
  for (int c = 0; c < chunks; ++c) {
    const int first = c * kChunk;
    const int rows = std::min(kChunk, B - first);
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> e(rows, n);
    for (int r = 0; r < rows; ++r) {
      Rng rng = key.child(static_cast<std::uint64_t>(first + r)).engine();
      e.row(r) = gen_multipliers(n, rng).e.transpose();
    }
    const Eigen::MatrixXd star = scale * (e * chi);  // rows x K
    for (int r = 0; r < rows; ++r) {
      auto maxima = out.maxima.row(first + r);
      for (const auto& pp : plan) {
        double t = 0.0;
        for (int q = 0; q < pp.terms; ++q) t += pp.weight[q] * star(r, pp.col[q]);
        double& slot = maxima(static_cast<Eigen::Index>(pp.group));
        slot = std::max(slot, std::fabs(t));
      }
    }
  }
  return out;
}

}  // namespace

BootstrapDraws bootstrap_group_maxima(const IncrementMatrix& inc, const RealizedCov& rc,
                                      const HypothesisPartition& partition, std::span<const PairStat> stats, int B,
                                      const StreamKey& key, StatMode mode, Exec exec) {
  check_inputs(inc, partition, stats, B);
  BootstrapDraws out = exec == Exec::kSerial ? serial_draws(inc, rc, partition, stats, B, key, mode)
                                             : parallel_draws(inc, rc, partition, stats, B, key, mode);
  out.partition_id = partition_id(partition);
  out.seed = key.value();
  return out;
}

namespace {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t h = kFnvOffset) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t k = 0; k < bytes; ++k) {
    h ^= p[k];
    h *= kFnvPrime;
  }
  return h;
}

constexpr char kMagic[8] = {'H', 'I', 'C', 'O', 'V', 'B', 'S', '1'};

}  // namespace

std::string partition_id(const HypothesisPartition& partition) {
  std::uint64_t h = kFnvOffset;
  for (const auto& g : partition.groups) {
    for (const auto& p : g) {
      const int v[2] = {p.i, p.j};
      h = fnv1a(v, sizeof v, h);
    }
    const int sep = -1;
    h = fnv1a(&sep, sizeof sep, h);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return "L" + std::to_string(partition.size()) + "-" + buf;
}

std::uint64_t hash_increments(const IncrementMatrix& inc) {
  const std::int64_t shape[2] = {inc.d(), inc.n()};
  std::uint64_t h = fnv1a(shape, sizeof shape);
  return fnv1a(inc.dy().data(), sizeof(double) * static_cast<std::size_t>(inc.dy().size()), h);
}

std::filesystem::path draws_cache_path(const std::filesystem::path& dir, std::uint64_t data_hash, std::uint64_t seed,
                                       int B, const std::string& partition) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%016llx-%016llx", static_cast<unsigned long long>(data_hash),
                static_cast<unsigned long long>(seed));
  return dir / (std::string("draws-") + buf + "-B" + std::to_string(B) + "-" + partition + ".bin");
}

void save_draws(const std::filesystem::path& path, const BootstrapDraws& draws, std::uint64_t data_hash) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write bootstrap cache " + path.string());
  const std::uint64_t header[4] = {data_hash, draws.seed, draws.B(), draws.L()};
  const std::uint64_t id_len = draws.partition_id.size();
  out.write(kMagic, sizeof kMagic);
  out.write(reinterpret_cast<const char*>(header), sizeof header);
  out.write(reinterpret_cast<const char*>(&id_len), sizeof id_len);
  out.write(draws.partition_id.data(), static_cast<std::streamsize>(id_len));
  out.write(reinterpret_cast<const char*>(draws.maxima.data()),
            static_cast<std::streamsize>(sizeof(double) * draws.maxima.size()));
  if (!out) throw std::runtime_error("failed writing bootstrap cache " + path.string());
}

std::optional<BootstrapDraws> load_draws(const std::filesystem::path& path, std::uint64_t data_hash,
                                         std::uint64_t seed, int B, const std::string& partition) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  char magic[8];
  std::uint64_t header[4];
  std::uint64_t id_len = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(header), sizeof header);
  in.read(reinterpret_cast<char*>(&id_len), sizeof id_len);
  if (!in || !std::equal(magic, magic + 8, kMagic) || id_len > 4096) return std::nullopt;
  std::string id(id_len, '\0');
  in.read(id.data(), static_cast<std::streamsize>(id_len));
  if (!in || header[0] != data_hash || header[1] != seed || header[2] != static_cast<std::uint64_t>(B) ||
      id != partition) {
    return std::nullopt;
  }
  BootstrapDraws draws;
  draws.seed = seed;
  draws.partition_id = id;
  draws.maxima.resize(static_cast<Eigen::Index>(header[2]), static_cast<Eigen::Index>(header[3]));
  in.read(reinterpret_cast<char*>(draws.maxima.data()),
          static_cast<std::streamsize>(sizeof(double) * draws.maxima.size()));
  if (!in) return std::nullopt;
  return draws;
}

}  // namespace hicov
