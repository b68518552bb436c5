#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hicov/estimators.hpp"
#include "hicov/harness.hpp"
#include "hicov/mtest.hpp"

namespace hicov {

struct LoadOptions {
  /// Column holding a session id (e.g. trading date); absent columns are ignored.
  std::string session_column = "session";
  /// Drop increments that straddle a session change (over-night returns).
  bool drop_gaps = true;
  /// Extra non-price columns to ignore (timestamps, etc.).
  std::vector<std::string> skip_columns;
};

/// Log-price panel, one column per asset. When a factor is designated it is
/// stored last.
struct PricePanel {
  Eigen::MatrixXd prices;  // d x rows
  std::vector<std::string> asset_ids;
  std::vector<std::string> sessions;  // per row; empty when there is no session column
  bool has_factor = false;

  [[nodiscard]] int d() const { return static_cast<int>(prices.rows()); }
  [[nodiscard]] int rows() const { return static_cast<int>(prices.cols()); }
};

/// Parses a rectangular CSV with a header row. `factor_col` (if any) is moved
/// to the last position. Errors carry the row/column location.
PricePanel load_price_csv(const std::filesystem::path& path, const std::optional<std::string>& factor_col,
                          const LoadOptions& opts = {});
PricePanel parse_price_csv(const std::string& text, const std::optional<std::string>& factor_col,
                           const LoadOptions& opts = {}, const std::string& origin = "<csv>");

/// Increments, dropping those across session boundaries when requested.
IncrementMatrix panel_increments(const PricePanel& panel, bool drop_gaps = true);

/// Reads `asset,sector` lines and returns the sector of each id in `asset_ids`.
std::vector<std::string> load_sectors(const std::filesystem::path& path, const std::vector<std::string>& asset_ids);
std::vector<std::string> parse_sectors(const std::string& text, const std::vector<std::string>& asset_ids,
                                       const std::string& origin = "<sectors>");

/// Writes a PathGrid-style CSV: header of asset ids, one row per time.
void write_prices_csv(const std::filesystem::path& path, const Eigen::MatrixXd& prices,
                      const std::vector<std::string>& asset_ids);

struct GroupRow {
  std::string label;
  double statistic = 0.0;
  double critical = 0.0;
  double adjusted_p = 1.0;
  bool rejected = false;
  bool sentinel = false;
  std::vector<PairIndex> clamped_members;
  friend bool operator==(const GroupRow&, const GroupRow&) = default;
};

struct MethodTable {
  std::string method;
  std::string partition;  // "sector" or "pairwise"
  std::vector<GroupRow> groups;
  friend bool operator==(const MethodTable&, const MethodTable&) = default;
};

struct AnalysisReport {
  std::vector<std::string> asset_ids;  // tested assets
  Eigen::MatrixXd correlation;         // residual (factor) or raw realized correlation
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask;  // true: H0 not rejected (blanked)
  std::vector<MethodTable> tables;
  nlohmann::json meta;
};

struct AnalyzeOptions {
  double alpha = 0.05;
  int B = 999;
  std::vector<Method> methods{Method::kRomanoWolf};
  std::uint64_t seed = 1;
  bool drop_gaps = true;
  /// Directory for cached bootstrap draws; empty disables caching.
  std::filesystem::path cache_dir;
};

/// increments -> pair statistics -> bootstrap -> stepdown -> mask and group
/// tables. The mask always comes from the pairwise partition and the first
/// method; `sectors` (one label per tested asset) adds sector-pair tables.
AnalysisReport analyze(const PricePanel& panel, const std::optional<std::vector<std::string>>& sectors,
                       const AnalyzeOptions& opts);

/// matrix.csv (masked cells empty), groups.json, meta.json. Byte-deterministic.
void write_report(const AnalysisReport& report, const std::filesystem::path& dir);

nlohmann::json groups_to_json(const std::vector<MethodTable>& tables);
std::vector<MethodTable> groups_from_json(const nlohmann::json& j);
std::string matrix_csv(const AnalysisReport& report);

}  // namespace hicov
