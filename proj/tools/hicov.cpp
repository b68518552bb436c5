#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "hicov/bootstrap.hpp"
#include "hicov/config.hpp"
#include "hicov/dataio.hpp"
#include "hicov/harness.hpp"
#include "hicov/model_sim.hpp"
#include "hicov/mtest.hpp"
#include "hicov/selftest.hpp"

namespace fs = std::filesystem;
using namespace hicov;

namespace {

std::atomic<bool> g_cancel{false};

extern "C" void on_sigint(int) { g_cancel.store(true); }

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<long long> seed;
  std::optional<int> jobs;
  std::string out_dir = ".";
};

void add_common(CLI::App* app, Common& c, bool with_out_dir = true) {
  app->add_option("--config", c.config_path, "Flat key=value config file")->check(CLI::ExistingFile);
  app->add_option("--set", c.overrides, "Override a config key (key=value); repeatable");
  app->add_option("--seed", c.seed, "Root seed (falls back to HICOV_SEED)");
  app->add_option("--jobs", c.jobs, "Worker threads (0: OpenMP default)");
  if (with_out_dir) app->add_option("--out-dir", c.out_dir, "Output directory");
}

// Layers: defaults < preset < file < HICOV_SEED (seed only, if still unset) < flags < --set.
FlatConfig resolve(const Common& c, const FlatConfig& preset, const FlatConfig& flags) {
  FlatConfig cfg = preset;
  if (!c.config_path.empty()) cfg.merge(FlatConfig::load(c.config_path));
  if (!cfg.has("seed")) {
    if (const char* env = std::getenv("HICOV_SEED"); env != nullptr && *env != '\0') cfg.set("seed", env);
  }
  cfg.merge(flags);
  if (c.seed) cfg.set("seed", std::to_string(*c.seed));
  if (c.jobs) cfg.set("jobs", std::to_string(*c.jobs));
  for (const auto& a : c.overrides) cfg.set_assignment(a);
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void echo_config(const fs::path& path, const FlatConfig& cfg) {
  write_text(path, "# resolved configuration; rerun with --config " + path.filename().string() + "\n" + cfg.dump());
}

std::vector<std::string> asset_ids(int d_under) {
  std::vector<std::string> ids;
  for (int k = 1; k <= d_under; ++k) ids.push_back("Y" + std::to_string(k));
  ids.push_back("FACTOR");
  return ids;
}

nlohmann::json truth_json(const TrueQuantities& t) {
  using nlohmann::json;
  const auto du = t.tau.rows();
  json tau = json::array();
  json nulls = json::array();
  for (Eigen::Index i = 0; i < du; ++i) {
    json row = json::array();
    json nrow = json::array();
    for (Eigen::Index j = 0; j < du; ++j) {
      row.push_back(t.tau(i, j));
      nrow.push_back(static_cast<bool>(t.null_truth(i, j)));
    }
    tau.push_back(row);
    nulls.push_back(nrow);
  }
  return json{{"integrated_variance", t.integrated_variance}, {"tau", tau}, {"null_truth", nulls}};
}

int run_simulate(const Common& c, const FlatConfig& flags, const std::string& out, const std::string& truth_out) {
  const FlatConfig cfg = resolve(c, {}, flags);
  const SimScenario s = scenario_from_config(cfg);
  Rng rng = StreamKey(s.seed).child(stream_tag::kPaths).engine();
  const PathGrid grid = simulate_paths(s, rng);
  const fs::path out_path(out);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  write_prices_csv(out_path, grid.prices, asset_ids(s.d - 1));
  if (!truth_out.empty()) write_text(truth_out, truth_json(*grid.truth).dump(2) + "\n");
  fs::path echo = out_path;
  echo.replace_extension(".resolved.cfg");
  echo_config(echo, scenario_to_config(s));
  std::cerr << "wrote " << out_path.string() << " (d=" << s.d << ", n=" << s.n << ")\n";
  return 0;
}

int run_test(const Common& c, const FlatConfig& flags) {
  const FlatConfig cfg = resolve(c, {}, flags);
  const SimScenario s = scenario_from_config(cfg);
  const double alpha = cfg.get_double("alpha", 0.05);
  const int B = static_cast<int>(cfg.get_int("B", 999));
  std::vector<Method> methods;
  for (const auto& m : cfg.get_strings("methods", {"Holm", "RW"})) methods.push_back(parse_method(m));

  const StreamKey key = StreamKey(s.seed).child({stream_tag::kReplication, 0});
  Rng rng = key.child(stream_tag::kPaths).engine();
  const PathGrid grid = simulate_paths(s, rng);
  const TrueQuantities& truth = *grid.truth;
  const IncrementMatrix inc = IncrementMatrix::from_prices(grid.prices);
  const RealizedCov rc = realized_cov(inc);
  const AsyCovOracle oracle(inc);
  const HypothesisPartition part = pairwise_partition(s.d - 1);
  const auto stats = pair_stats(inc, rc, oracle, part.flattened(), &truth);
  const auto gstats = group_statistics(part, stats);

  nlohmann::json report = {{"n", s.n}, {"d", s.d}, {"alpha", alpha}, {"B", B}, {"seed", s.seed}};
  std::optional<BootstrapDraws> draws;
  for (Method m : methods) {
    StepdownResult r;
    if (m == Method::kHolm) {
      r = stepdown(gstats, HolmProvider(part), alpha);
    } else {
      if (!draws) draws = bootstrap_group_maxima(inc, rc, part, stats, B, key.child(stream_tag::kBootstrap));
      r = stepdown(gstats, RomanoWolfProvider(*draws), alpha);
    }
    int false_rej = 0;
    int true_rej = 0;
    for (std::size_t g = 0; g < part.size(); ++g) {
      if (!r.rejected[g]) continue;
      const PairIndex p = part.groups[g].front();
      (truth.null_truth(p.i, p.j) ? false_rej : true_rej) += 1;
    }
    nlohmann::json mj = stepdown_to_json(r, part, stats);
    mj["false_rejections"] = false_rej;
    mj["true_rejections"] = true_rej;
    report["methods"][method_name(m)] = mj;
    std::cout << method_name(m) << ": " << r.rejections() << " rejections (" << true_rej << " true, " << false_rej
              << " false)\n";
  }
  const fs::path dir(c.out_dir);
  write_text(dir / "test.json", report.dump(2) + "\n");
  FlatConfig echo = scenario_to_config(s);
  echo.set("alpha", format_double(alpha));
  echo.set("B", std::to_string(B));
  std::string ms = "[";
  for (std::size_t k = 0; k < methods.size(); ++k) ms += (k ? ", " : "") + method_name(methods[k]);
  echo.set("methods", ms + "]");
  echo_config(dir / "resolved.cfg", echo);
  return 0;
}

FlatConfig full_scale_preset() {
  FlatConfig p;
  p.set("d_under", "100");
  p.set("num_blocks", "10");
  p.set("n_grid", "[26, 39, 78, 130, 195, 390]");
  p.set("rho_gamma_grid", "[0.25, 0.5, 0.75]");
  p.set("M", "10000");
  p.set("B", "999");
  return p;
}

int run_mc(const Common& c, const FlatConfig& flags, bool power, bool paper_scale) {
  FlatConfig preset;
  if (power) {
    preset.set("n_grid", "[78, 195, 390]");
    preset.set("rho_gamma_grid", "[0.75]");
  }
  if (paper_scale) {
    preset.merge(full_scale_preset());
    std::cerr << "warning: --paper-scale runs the full published design (d_under=100, M=10000, B=999); "
                 "expect many hours of compute\n";
  }
  const FlatConfig cfg = resolve(c, preset, flags);
  const ExperimentSpec spec = experiment_from_config(cfg);
  std::signal(SIGINT, on_sigint);
  const ExperimentTable table = run_experiment(spec, &g_cancel);
  const fs::path dir(c.out_dir);
  const std::string metric = power ? "power" : "fwer";
  write_text(dir / (metric + ".csv"), table.to_csv(metric));
  write_text(dir / (metric + "_table.json"), table.to_json().dump(2) + "\n");
  echo_config(dir / "resolved.cfg", experiment_to_config(spec));
  std::cout << table.to_csv(metric);
  std::cerr << "wall " << table.wall_seconds << " s\n";
  if (table.interrupted) {
    std::cerr << "interrupted: partial results written\n";
    return 2;
  }
  return 0;
}

int run_analyze(const Common& c, const FlatConfig& flags, const std::string& prices, const std::string& factor,
                const std::string& sectors_path, bool keep_gaps) {
  const FlatConfig cfg = resolve(c, {}, flags);
  const std::string price_file = cfg.get_string("prices", prices);
  if (price_file.empty()) throw CLI::RequiredError("--prices");
  const std::string factor_col = cfg.get_string("factor", factor);
  const std::string sector_file = cfg.get_string("sectors", sectors_path);

  AnalyzeOptions opts;
  opts.alpha = cfg.get_double("alpha", opts.alpha);
  opts.B = static_cast<int>(cfg.get_int("B", opts.B));
  opts.seed = static_cast<std::uint64_t>(cfg.get_int("seed", static_cast<long long>(opts.seed)));
  opts.drop_gaps = cfg.get_bool("drop_gaps", !keep_gaps);
  if (cfg.has("methods")) {
    opts.methods.clear();
    for (const auto& m : cfg.get_strings("methods", {})) opts.methods.push_back(parse_method(m));
  }
  const fs::path dir(c.out_dir);
  opts.cache_dir = cfg.get_string("cache_dir", (dir / "cache").string());

  const PricePanel panel =
      load_price_csv(price_file, factor_col.empty() ? std::nullopt : std::optional<std::string>(factor_col));
  std::optional<std::vector<std::string>> sectors;
  if (!sector_file.empty()) {
    const int tested = panel.has_factor ? panel.d() - 1 : panel.d();
    sectors = load_sectors(sector_file, std::vector<std::string>(panel.asset_ids.begin(),
                                                                 panel.asset_ids.begin() + tested));
  }
  const AnalysisReport report = analyze(panel, sectors, opts);
  write_report(report, dir);

  FlatConfig echo;
  echo.set("prices", price_file);
  if (!factor_col.empty()) echo.set("factor", factor_col);
  if (!sector_file.empty()) echo.set("sectors", sector_file);
  echo.set("alpha", format_double(opts.alpha));
  echo.set("B", std::to_string(opts.B));
  echo.set("seed", std::to_string(opts.seed));
  echo.set("drop_gaps", opts.drop_gaps ? "true" : "false");
  echo.set("cache_dir", opts.cache_dir.string());
  std::string ms = "[";
  for (std::size_t k = 0; k < opts.methods.size(); ++k) ms += (k ? ", " : "") + method_name(opts.methods[k]);
  echo.set("methods", ms + "]");
  echo_config(dir / "resolved.cfg", echo);
  std::cout << "significant pairs: " << report.meta.at("significant_pairs") << " of " << report.meta.at("pairs")
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"High-dimensional residual covariation tests"};
  app.require_subcommand(1);

  Common common;
  FlatConfig flags;

  // simulate
  auto* sim = app.add_subcommand("simulate", "Simulate one factor-model path and write a price CSV");
  add_common(sim, common, false);
  std::optional<int> sim_n, sim_d, sim_blocks;
  std::optional<double> sim_rho;
  std::string sim_out, sim_truth;
  sim->add_option("--n", sim_n, "Number of increments");
  sim->add_option("--d", sim_d, "Number of assets including the factor");
  sim->add_option("--rho-gamma", sim_rho, "Within-block residual correlation");
  sim->add_option("--num-blocks", sim_blocks, "Number of residual blocks");
  sim->add_option("--out", sim_out, "Output CSV path")->required();
  sim->add_option("--truth", sim_truth, "Optional JSON sidecar with the true quantities");

  // test
  auto* test = app.add_subcommand("test", "Run the pair tests on one simulated scenario");
  add_common(test, common);
  std::optional<int> test_n, test_d, test_B;
  std::optional<double> test_alpha, test_rho;
  test->add_option("--n", test_n, "Number of increments");
  test->add_option("--d", test_d, "Number of assets including the factor");
  test->add_option("--rho-gamma", test_rho, "Within-block residual correlation");
  test->add_option("--alpha", test_alpha, "Level");
  test->add_option("--B", test_B, "Bootstrap resamples");

  // mc-fwer / mc-power
  auto* fwer = app.add_subcommand("mc-fwer", "Monte Carlo family-wise error rate table");
  auto* power = app.add_subcommand("mc-power", "Monte Carlo average power table");
  bool paper_scale = false;
  std::optional<int> mc_M, mc_B;
  for (auto* sub : {fwer, power}) {
    add_common(sub, common);
    sub->add_flag("--paper-scale", paper_scale, "Use the full published design (slow)");
    sub->add_option("--M", mc_M, "Monte Carlo replications per cell");
    sub->add_option("--B", mc_B, "Bootstrap resamples");
  }

  // analyze
  auto* an = app.add_subcommand("analyze", "Test a price panel and write matrix.csv, groups.json, meta.json");
  add_common(an, common);
  std::string an_prices, an_factor, an_sectors;
  std::optional<double> an_alpha;
  std::optional<int> an_B;
  bool keep_gaps = false;
  an->add_option("--prices", an_prices, "CSV of log-prices (header of asset ids)");
  an->add_option("--factor", an_factor, "Column to use as the observable factor");
  an->add_option("--sectors", an_sectors, "asset,sector file for sector-pair tests");
  an->add_option("--alpha", an_alpha, "Level");
  an->add_option("--B", an_B, "Bootstrap resamples");
  an->add_flag("--keep-gaps", keep_gaps, "Keep increments across session boundaries");

  auto* self = app.add_subcommand("selftest", "Run the fast invariant checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  auto set_opt = [&flags](const char* key, const auto& v) {
    if (v) {
      if constexpr (std::is_floating_point_v<std::decay_t<decltype(*v)>>) {
        flags.set(key, format_double(*v));
      } else {
        flags.set(key, std::to_string(*v));
      }
    }
  };

  try {
    if (*sim) {
      set_opt("n", sim_n);
      set_opt("d", sim_d);
      set_opt("structure.rho_gamma", sim_rho);
      set_opt("structure.num_blocks", sim_blocks);
      return run_simulate(common, flags, sim_out, sim_truth);
    }
    if (*test) {
      set_opt("n", test_n);
      set_opt("d", test_d);
      set_opt("structure.rho_gamma", test_rho);
      set_opt("alpha", test_alpha);
      set_opt("B", test_B);
      return run_test(common, flags);
    }
    if (*fwer || *power) {
      set_opt("M", mc_M);
      set_opt("B", mc_B);
      return run_mc(common, flags, static_cast<bool>(*power), paper_scale);
    }
    if (*an) {
      set_opt("alpha", an_alpha);
      set_opt("B", an_B);
      return run_analyze(common, flags, an_prices, an_factor, an_sectors, keep_gaps);
    }
    if (*self) return run_selftest(std::cout) ? 0 : 2;
  } catch (const CLI::Error& e) {
    std::cerr << "usage error: " << e.what() << "\n" << app.help();
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
