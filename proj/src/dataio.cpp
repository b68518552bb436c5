#include "hicov/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "hicov/bootstrap.hpp"

namespace hicov {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      out.push_back(trim(cell));
      cell.clear();
    } else {
      cell += c;
    }
  }
  out.push_back(trim(cell));
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t k = 0; k < v.size(); ++k) out += (k ? ", " : "") + v[k];
  return out;
}

std::string fmt(double v, const char* spec = "%.10g") {
  char buf[40];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

PricePanel parse_price_csv(const std::string& text, const std::optional<std::string>& factor_col,
                           const LoadOptions& opts, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument(origin + ": empty file");
  const std::vector<std::string> header = split_csv_line(line);

  int session_idx = -1;
  std::vector<int> price_cols;
  std::vector<std::string> ids;
  for (int c = 0; c < static_cast<int>(header.size()); ++c) {
    const auto& name = header[c];
    if (name.empty()) throw std::invalid_argument(origin + ": header column " + std::to_string(c + 1) + " is empty");
    if (!opts.session_column.empty() && name == opts.session_column) {
      session_idx = c;
    } else if (std::find(opts.skip_columns.begin(), opts.skip_columns.end(), name) == opts.skip_columns.end()) {
      price_cols.push_back(c);
      ids.push_back(name);
    }
  }
  int factor_pos = -1;
  if (factor_col) {
    const auto it = std::find(ids.begin(), ids.end(), *factor_col);
    if (it == ids.end()) {
      throw std::invalid_argument(origin + ": factor column '" + *factor_col + "' not found; available columns: " +
                                  join(ids));
    }
    factor_pos = static_cast<int>(it - ids.begin());
  }

  std::vector<std::vector<double>> rows;
  std::vector<std::string> sessions;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw std::invalid_argument(origin + ": row " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                                  " cells, header has " + std::to_string(header.size()));
    }
    std::vector<double> row(price_cols.size());
    for (std::size_t k = 0; k < price_cols.size(); ++k) {
      const std::string& cell = cells[price_cols[k]];
      try {
        std::size_t used = 0;
        row[k] = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw std::invalid_argument(origin + ": row " + std::to_string(lineno) + ", column " +
                                    std::to_string(price_cols[k] + 1) + " ('" + header[price_cols[k]] +
                                    "'): non-numeric value '" + cell + "'");
      }
      if (!std::isfinite(row[k])) {
        throw std::invalid_argument(origin + ": row " + std::to_string(lineno) + ", column " +
                                    std::to_string(price_cols[k] + 1) + ": non-finite value");
      }
    }
    rows.push_back(std::move(row));
    if (session_idx >= 0) sessions.push_back(cells[session_idx]);
  }

  PricePanel panel;
  const int d = static_cast<int>(ids.size());
  panel.prices.resize(d, static_cast<Eigen::Index>(rows.size()));
  std::vector<int> perm(d);
  for (int k = 0; k < d; ++k) perm[k] = k;
  if (factor_pos >= 0) {
    perm.erase(perm.begin() + factor_pos);
    perm.push_back(factor_pos);
  }
  for (int k = 0; k < d; ++k) {
    panel.asset_ids.push_back(ids[perm[k]]);
    for (std::size_t r = 0; r < rows.size(); ++r) panel.prices(k, static_cast<Eigen::Index>(r)) = rows[r][perm[k]];
  }
  panel.sessions = std::move(sessions);
  panel.has_factor = factor_pos >= 0;
  return panel;
}

PricePanel load_price_csv(const std::filesystem::path& path, const std::optional<std::string>& factor_col,
                          const LoadOptions& opts) {
  return parse_price_csv(read_file(path), factor_col, opts, path.string());
}

IncrementMatrix panel_increments(const PricePanel& panel, bool drop_gaps) {
  const int rows = panel.rows();
  std::vector<int> keep;
  for (int r = 1; r < rows; ++r) {
    if (drop_gaps && !panel.sessions.empty() && panel.sessions[r] != panel.sessions[r - 1]) continue;
    keep.push_back(r);
  }
  RowMatrix dy(panel.d(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    dy.col(static_cast<Eigen::Index>(k)) = panel.prices.col(keep[k]) - panel.prices.col(keep[k] - 1);
  }
  return IncrementMatrix(std::move(dy));
}

std::vector<std::string> parse_sectors(const std::string& text, const std::vector<std::string>& asset_ids,
                                       const std::string& origin) {
  std::map<std::string, std::string> sector_of;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 2) {
      throw std::invalid_argument(origin + ": line " + std::to_string(lineno) + " must have two columns asset,sector");
    }
    if (lineno == 1 && cells[0] == "asset" && cells[1] == "sector") continue;
    if (cells[1].empty()) throw std::invalid_argument(origin + ": line " + std::to_string(lineno) + ": empty sector");
    sector_of[cells[0]] = cells[1];
  }
  std::vector<std::string> out;
  out.reserve(asset_ids.size());
  for (const auto& id : asset_ids) {
    const auto it = sector_of.find(id);
    if (it == sector_of.end()) throw std::invalid_argument(origin + ": no sector for asset '" + id + "'");
    out.push_back(it->second);
  }
  return out;
}

std::vector<std::string> load_sectors(const std::filesystem::path& path, const std::vector<std::string>& asset_ids) {
  return parse_sectors(read_file(path), asset_ids, path.string());
}

void write_prices_csv(const std::filesystem::path& path, const Eigen::MatrixXd& prices,
                      const std::vector<std::string>& asset_ids) {
  if (static_cast<Eigen::Index>(asset_ids.size()) != prices.rows()) {
    throw std::invalid_argument("write_prices_csv: one id per asset required");
  }
  std::string out;
  for (std::size_t k = 0; k < asset_ids.size(); ++k) out += (k ? "," : "") + asset_ids[k];
  out += '\n';
  for (Eigen::Index t = 0; t < prices.cols(); ++t) {
    for (Eigen::Index k = 0; k < prices.rows(); ++k) out += (k ? "," : "") + fmt(prices(k, t), "%.17g");
    out += '\n';
  }
  write_file(path, out);
}

// ---------------------------------------------------------------------------

namespace {

MethodTable run_method(Method method, const std::string& partition_kind, const HypothesisPartition& partition,
                       const std::vector<PairStat>& stats, const BootstrapDraws* draws, double alpha) {
  const std::vector<double> gs = group_statistics(partition, stats);
  const StepdownResult result = method == Method::kHolm ? stepdown(gs, HolmProvider(partition), alpha)
                                                        : stepdown(gs, RomanoWolfProvider(*draws), alpha);
  MethodTable table;
  table.method = method_name(method);
  table.partition = partition_kind;
  std::size_t k = 0;
  for (std::size_t g = 0; g < partition.size(); ++g) {
    GroupRow row;
    row.label = partition.labels[g];
    row.statistic = result.statistics[g];
    row.critical = result.critical_faced[g];
    row.adjusted_p = result.adjusted_p[g];
    row.rejected = result.rejected[g];
    row.sentinel = result.sentinel[g];
    for (std::size_t m = 0; m < partition.groups[g].size(); ++m, ++k) {
      if (stats[k].clamped) row.clamped_members.push_back({stats[k].i, stats[k].j});
    }
    table.groups.push_back(std::move(row));
  }
  return table;
}

BootstrapDraws draws_for(const IncrementMatrix& inc, const RealizedCov& rc, const HypothesisPartition& partition,
                         const std::vector<PairStat>& stats, const AnalyzeOptions& opts, StatMode mode,
                         const StreamKey& key) {
  const std::string pid = partition_id(partition);
  std::filesystem::path cache;
  const std::uint64_t h = hash_increments(inc) ^ (mode == StatMode::kFactor ? 0 : 0x5bd1e995ULL);
  if (!opts.cache_dir.empty()) {
    std::filesystem::create_directories(opts.cache_dir);
    cache = draws_cache_path(opts.cache_dir, h, key.value(), opts.B, pid);
    if (auto hit = load_draws(cache, h, key.value(), opts.B, pid)) return std::move(*hit);
  }
  BootstrapDraws draws = bootstrap_group_maxima(inc, rc, partition, stats, opts.B, key, mode);
  if (!cache.empty()) save_draws(cache, draws, h);
  return draws;
}

}  // namespace

AnalysisReport analyze(const PricePanel& panel, const std::optional<std::vector<std::string>>& sectors,
                       const AnalyzeOptions& opts) {
  if (opts.B < 1) throw std::invalid_argument("analyze: B must be >= 1");
  if (opts.methods.empty()) throw std::invalid_argument("analyze: no methods");
  const StatMode mode = panel.has_factor ? StatMode::kFactor : StatMode::kNoFactor;
  const IncrementMatrix inc = panel_increments(panel, opts.drop_gaps);
  const int tested = tested_dimension(inc.d(), mode);
  if (tested < 2) throw std::invalid_argument("analyze: need at least two tested assets");
  if (sectors && static_cast<int>(sectors->size()) != tested) {
    throw std::invalid_argument("analyze: need one sector label per tested asset");
  }

  const RealizedCov rc = realized_cov(inc);
  const AsyCovOracle oracle(inc);
  const StreamKey root(opts.seed);

  AnalysisReport report;
  report.asset_ids.assign(panel.asset_ids.begin(), panel.asset_ids.begin() + tested);

  const HypothesisPartition pairwise = pairwise_partition(tested);
  const std::vector<PairStat> pair_stat = pair_stats(inc, rc, oracle, pairwise.flattened(), nullptr, mode);
  std::optional<BootstrapDraws> pair_draws;
  int clamped = 0;
  for (const auto& s : pair_stat) clamped += s.clamped ? 1 : 0;

  std::vector<MethodTable> pairwise_tables;
  for (Method m : opts.methods) {
    if (m == Method::kRomanoWolf && !pair_draws) {
      pair_draws = draws_for(inc, rc, pairwise, pair_stat, opts, mode, root.child({stream_tag::kBootstrap, 0}));
    }
    pairwise_tables.push_back(run_method(m, "pairwise", pairwise, pair_stat, pair_draws ? &*pair_draws : nullptr,
                                         opts.alpha));
  }

  // Realized correlation of the residuals (or of the assets themselves).
  report.correlation.resize(tested, tested);
  const int f = inc.d() - 1;
  auto cov = [&](int i, int j) {
    if (mode == StatMode::kFactor && rc(f, f) > 0.0) return rc(i, j) - rc(i, f) * rc(j, f) / rc(f, f);
    return rc(i, j);
  };
  for (int i = 0; i < tested; ++i) {
    for (int j = 0; j < tested; ++j) report.correlation(i, j) = cov(i, j) / std::sqrt(cov(i, i) * cov(j, j));
  }
  report.mask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(tested, tested, false);
  {
    const MethodTable& primary = pairwise_tables.front();
    const auto pairs = pairwise.flattened();
    for (std::size_t g = 0; g < pairs.size(); ++g) {
      const bool blank = !primary.groups[g].rejected;
      report.mask(pairs[g].i, pairs[g].j) = blank;
      report.mask(pairs[g].j, pairs[g].i) = blank;
    }
  }

  std::size_t significant = 0;
  for (const auto& row : pairwise_tables.front().groups) significant += row.rejected ? 1 : 0;

  if (sectors) {
    const HypothesisPartition sector = sector_partition(*sectors);
    std::vector<PairStat> sector_stats;
    {
      // Reuse the pairwise statistics in sector-partition order.
      std::map<std::pair<int, int>, std::size_t> at;
      for (std::size_t k = 0; k < pair_stat.size(); ++k) at[{pair_stat[k].i, pair_stat[k].j}] = k;
      for (const auto& p : sector.flattened()) sector_stats.push_back(pair_stat[at.at({p.i, p.j})]);
    }
    std::optional<BootstrapDraws> sector_draws;
    for (Method m : opts.methods) {
      if (m == Method::kRomanoWolf && !sector_draws) {
        sector_draws = draws_for(inc, rc, sector, sector_stats, opts, mode, root.child({stream_tag::kBootstrap, 1}));
      }
      report.tables.push_back(run_method(m, "sector", sector, sector_stats, sector_draws ? &*sector_draws : nullptr,
                                         opts.alpha));
    }
  }
  for (auto& t : pairwise_tables) report.tables.push_back(std::move(t));

  std::vector<std::string> methods;
  for (Method m : opts.methods) methods.push_back(method_name(m));
  report.meta = {{"n", inc.n()},
                 {"d", inc.d()},
                 {"tested_assets", tested},
                 {"mode", mode == StatMode::kFactor ? "residual" : "raw"},
                 {"factor", panel.has_factor ? panel.asset_ids.back() : ""},
                 {"alpha", opts.alpha},
                 {"B", opts.B},
                 {"seed", opts.seed},
                 {"methods", methods},
                 {"drop_gaps", opts.drop_gaps},
                 {"pairs", pair_stat.size()},
                 {"clamped_pairs", clamped},
                 {"significant_pairs", significant},
                 {"significant_fraction", static_cast<double>(significant) / static_cast<double>(pair_stat.size())}};
  return report;
}

nlohmann::json groups_to_json(const std::vector<MethodTable>& tables) {
  using nlohmann::json;
  json out = json::array();
  for (const auto& t : tables) {
    json groups = json::array();
    for (const auto& g : t.groups) {
      json clamped = json::array();
      for (const auto& p : g.clamped_members) clamped.push_back({p.i + 1, p.j + 1});
      groups.push_back({{"label", g.label},
                        {"statistic", g.statistic},
                        {"critical", g.critical},
                        {"rejected", g.rejected},
                        {"adjusted_p", g.adjusted_p},
                        {"sentinel", g.sentinel},
                        {"clamped_members", clamped}});
    }
    out.push_back({{"method", t.method}, {"partition", t.partition}, {"groups", groups}});
  }
  return json{{"tables", out}};
}

std::vector<MethodTable> groups_from_json(const nlohmann::json& j) {
  std::vector<MethodTable> out;
  for (const auto& t : j.at("tables")) {
    MethodTable table;
    table.method = t.at("method").get<std::string>();
    table.partition = t.at("partition").get<std::string>();
    for (const auto& g : t.at("groups")) {
      GroupRow row;
      row.label = g.at("label").get<std::string>();
      row.statistic = g.at("statistic").get<double>();
      row.critical = g.at("critical").get<double>();
      row.rejected = g.at("rejected").get<bool>();
      row.adjusted_p = g.at("adjusted_p").get<double>();
      row.sentinel = g.at("sentinel").get<bool>();
      for (const auto& p : g.at("clamped_members")) row.clamped_members.push_back({p[0].get<int>() - 1, p[1].get<int>() - 1});
      table.groups.push_back(std::move(row));
    }
    out.push_back(std::move(table));
  }
  return out;
}

std::string matrix_csv(const AnalysisReport& report) {
  std::string out;
  for (const auto& id : report.asset_ids) out += "," + id;
  out += '\n';
  const auto k = static_cast<Eigen::Index>(report.asset_ids.size());
  for (Eigen::Index i = 0; i < k; ++i) {
    out += report.asset_ids[i];
    for (Eigen::Index j = 0; j < k; ++j) {
      out += ',';
      if (i == j || !report.mask(i, j)) out += fmt(report.correlation(i, j), "%.6f");
    }
    out += '\n';
  }
  return out;
}

void write_report(const AnalysisReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file(dir / "matrix.csv", matrix_csv(report));
  write_file(dir / "groups.json", groups_to_json(report.tables).dump(2) + "\n");
  write_file(dir / "meta.json", report.meta.dump(2) + "\n");
}

}  // namespace hicov
