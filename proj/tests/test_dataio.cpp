#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "hicov/dataio.hpp"
#include "hicov/model_sim.hpp"

using namespace hicov;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path temp_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("hicov_dataio_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

PricePanel simulated_panel(int n, int d_under, int blocks, double rho, std::uint64_t seed) {
  const SimScenario s = make_scenario(n, d_under, blocks, rho, HestonParams{}, 2, StreamKey(seed));
  Rng rng = StreamKey(seed).child(stream_tag::kPaths).engine();
  const PathGrid g = simulate_paths(s, rng);
  PricePanel p;
  p.prices = g.prices;
  for (int k = 1; k <= d_under; ++k) p.asset_ids.push_back("Y" + std::to_string(k));
  p.asset_ids.push_back("F");
  p.has_factor = true;
  return p;
}

}  // namespace

TEST(LoadCsv, ShapeAndFactorPlacement) {
  const auto p = parse_price_csv("F,A,B\n1,2,3\n1.5,2,3.5\n1,2.5,3\n", std::string("F"));
  EXPECT_EQ(p.d(), 3);
  EXPECT_EQ(p.rows(), 3);
  EXPECT_EQ(p.asset_ids, (std::vector<std::string>{"A", "B", "F"}));
  EXPECT_TRUE(p.has_factor);
  EXPECT_EQ(p.prices(2, 1), 1.5);
  EXPECT_EQ(panel_increments(p).n(), 2);
}

TEST(LoadCsv, Errors) {
  try {
    parse_price_csv("A,B\n1,2\n", std::string("SPY"));
    FAIL();
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("SPY"), std::string::npos);
    EXPECT_NE(msg.find("A, B"), std::string::npos);
  }
  try {
    parse_price_csv("A,B\n1,2\n3,x\n", std::nullopt);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("row 3, column 2"), std::string::npos);
  }
  EXPECT_THROW(parse_price_csv("A,B\n1,2,3\n", std::nullopt), std::invalid_argument);
  EXPECT_THROW(parse_price_csv("", std::nullopt), std::invalid_argument);
  EXPECT_THROW(load_price_csv("/nonexistent/prices.csv", std::nullopt), std::runtime_error);
}

TEST(LoadCsv, SessionGapsAreDropped) {
  std::string csv = "session,A,B\n";
  for (int r = 0; r < 11; ++r) csv += (r < 5 ? "d1," : "d2,") + std::to_string(r) + "," + std::to_string(r * r) + "\n";
  const auto p = parse_price_csv(csv, std::nullopt);
  EXPECT_EQ(p.d(), 2);
  EXPECT_EQ(panel_increments(p, true).n(), 9);
  EXPECT_EQ(panel_increments(p, false).n(), 10);
  LoadOptions opts;
  opts.skip_columns = {"B"};
  EXPECT_EQ(parse_price_csv(csv, std::nullopt, opts).d(), 1);
}

TEST(LoadCsv, PipelineMatchesInMemory) {
  const PricePanel sim = simulated_panel(60, 4, 2, 0.5, 3);
  const fs::path dir = temp_dir("pipeline");
  write_prices_csv(dir / "p.csv", sim.prices, sim.asset_ids);
  const PricePanel back = load_price_csv(dir / "p.csv", std::string("F"));
  EXPECT_EQ(back.prices, sim.prices);
  EXPECT_EQ(realized_cov(panel_increments(back)).rc,
            realized_cov(IncrementMatrix::from_prices(sim.prices)).rc);
  fs::remove_all(dir);
}

TEST(Sectors, ParseAndErrors) {
  const auto s = parse_sectors("asset,sector\nB,Tech\nA,Energy\n", {"A", "B"});
  EXPECT_EQ(s, (std::vector<std::string>{"Energy", "Tech"}));
  EXPECT_THROW(parse_sectors("A,Energy\n", {"A", "B"}), std::invalid_argument);
  EXPECT_THROW(parse_sectors("A\n", {"A"}), std::invalid_argument);
}

TEST(Report, EmptyTablesAndAllMaskedMatrix) {
  EXPECT_EQ(groups_to_json({}).dump(), R"({"tables":[]})");
  AnalysisReport r;
  r.asset_ids = {"A", "B"};
  r.correlation = Eigen::MatrixXd::Identity(2, 2);
  r.correlation(0, 1) = r.correlation(1, 0) = 0.3;
  r.mask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(2, 2, true);
  EXPECT_EQ(matrix_csv(r), ",A,B\nA,1.000000,\nB,,1.000000\n");
}

TEST(Report, JsonRoundTrip) {
  MethodTable t;
  t.method = "RW";
  t.partition = "sector";
  t.groups.push_back({"A|B", 3.25, 2.5, 0.012, true, false, {{0, 2}}});
  t.groups.push_back({"A|A", 1e15, 2.0, 0.1, true, true, {}});
  const std::vector<MethodTable> tables{t};
  EXPECT_EQ(groups_from_json(nlohmann::json::parse(groups_to_json(tables).dump())), tables);
}

TEST(Analyze, ConstantPanelIsClampedAndEmitted) {
  PricePanel p;
  p.prices = Eigen::MatrixXd::Ones(4, 20);
  p.prices.row(3) = Eigen::VectorXd::LinSpaced(20, 0.0, 1.0).transpose();
  p.asset_ids = {"A", "B", "C", "F"};
  p.has_factor = true;
  AnalyzeOptions o;
  o.B = 19;
  o.methods = {Method::kRomanoWolf, Method::kHolm};
  const auto r = analyze(p, std::nullopt, o);
  EXPECT_EQ(r.meta.at("clamped_pairs"), 3);
  EXPECT_EQ(r.meta.at("significant_pairs"), 0);
  for (const auto& t : r.tables) {
    for (const auto& g : t.groups) EXPECT_FALSE(g.rejected);
  }
  const fs::path dir = temp_dir("constant");
  write_report(r, dir);
  EXPECT_TRUE(fs::exists(dir / "matrix.csv"));
  EXPECT_TRUE(fs::exists(dir / "meta.json"));
  fs::remove_all(dir);
}

TEST(Analyze, MaskIsSymmetricViewOfRejections) {
  const PricePanel p = simulated_panel(195, 8, 2, 0.75, 5);
  AnalyzeOptions o;
  o.B = 99;
  o.methods = {Method::kRomanoWolf, Method::kHolm};
  const auto r = analyze(p, std::vector<std::string>{"a", "a", "a", "a", "b", "b", "b", "b"}, o);
  ASSERT_EQ(r.tables.size(), 4u);  // sector RW, sector Holm, pairwise RW, pairwise Holm
  EXPECT_EQ(r.tables[0].partition, "sector");
  EXPECT_EQ(r.tables[0].groups.size(), 3u);
  const MethodTable& pw = r.tables[2];
  EXPECT_EQ(pw.method, "RW");
  const auto pairs = pairwise_partition(8).flattened();
  for (std::size_t g = 0; g < pairs.size(); ++g) {
    EXPECT_EQ(r.mask(pairs[g].i, pairs[g].j), !pw.groups[g].rejected);
    EXPECT_EQ(r.mask(pairs[g].j, pairs[g].i), !pw.groups[g].rejected);
  }
  EXPECT_EQ(r.meta.at("mode"), "residual");
}

TEST(Analyze, OutputIsByteDeterministicAndCached) {
  const PricePanel p = simulated_panel(78, 6, 3, 0.5, 6);
  const fs::path dir = temp_dir("det");
  AnalyzeOptions o;
  o.B = 49;
  o.cache_dir = dir / "cache";
  write_report(analyze(p, std::nullopt, o), dir / "a");
  write_report(analyze(p, std::nullopt, o), dir / "b");  // second run reads the cache
  EXPECT_FALSE(fs::is_empty(dir / "cache"));
  for (const char* f : {"matrix.csv", "groups.json", "meta.json"}) EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f));
  fs::remove_all(dir);
}

TEST(Analyze, RecoversOffBlockZerosWithControlledFwer) {
  // Two blocks of four: 12 true nulls between blocks.
  const int runs = 200;
  int fwe = 0;
  for (int r = 0; r < runs; ++r) {
    const PricePanel p = simulated_panel(195, 8, 2, 0.5, 1000 + r);
    AnalyzeOptions o;
    o.B = 199;
    o.seed = 7 + r;
    const auto rep = analyze(p, std::nullopt, o);
    bool any = false;
    for (int i = 0; i < 4; ++i) {
      for (int j = 4; j < 8; ++j) any = any || !rep.mask(i, j);
    }
    fwe += any ? 1 : 0;
  }
  EXPECT_LE(fwe / double(runs), 0.05 + 2.0 * std::sqrt(0.05 * 0.95 / runs));
}
