#include "hicov/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hicov {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string unquote(std::string v) {
  if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front()) {
    return v.substr(1, v.size() - 2);
  }
  return v;
}

// Strips a trailing `# comment` that is outside quotes.
std::string strip_comment(const std::string& line) {
  char quote = 0;
  for (std::size_t k = 0; k < line.size(); ++k) {
    const char c = line[k];
    if (quote) {
      if (c == quote) quote = 0;
    } else if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '#') {
      return line.substr(0, k);
    }
  }
  return line;
}

std::vector<std::string> split_list(const std::string& raw) {
  std::string v = trim(raw);
  if (!v.empty() && v.front() == '[' && v.back() == ']') v = v.substr(1, v.size() - 2);
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = unquote(trim(item));
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long x = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': expected an integer, got '" + v + "'");
  }
}

}  // namespace

FlatConfig FlatConfig::parse(const std::string& text, const std::string& origin) {
  FlatConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']' && line.find('=') == std::string::npos) {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": empty key");
    cfg.values_[section.empty() ? key : section + "." + key] = unquote(trim(line.substr(eq + 1)));
  }
  return cfg;
}

FlatConfig FlatConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void FlatConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || trim(assignment.substr(0, eq)).empty()) {
    throw std::invalid_argument("override '" + assignment + "' is not key=value");
  }
  values_[trim(assignment.substr(0, eq))] = unquote(trim(assignment.substr(eq + 1)));
}

void FlatConfig::merge(const FlatConfig& other) {
  for (const auto& [k, v] : other.values_) values_[k] = v;
}

std::string FlatConfig::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double FlatConfig::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : to_double(key, it->second);
}

long long FlatConfig::get_int(const std::string& key, long long fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : to_int(key, it->second);
}

bool FlatConfig::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::string v = it->second;
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("config key '" + key + "': expected a boolean, got '" + it->second + "'");
}

std::vector<double> FlatConfig::get_doubles(const std::string& key, const std::vector<double>& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<double> out;
  for (const auto& s : split_list(it->second)) out.push_back(to_double(key, s));
  return out;
}

std::vector<int> FlatConfig::get_ints(const std::string& key, const std::vector<int>& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<int> out;
  for (const auto& s : split_list(it->second)) out.push_back(static_cast<int>(to_int(key, s)));
  return out;
}

std::vector<std::string> FlatConfig::get_strings(const std::string& key,
                                                 const std::vector<std::string>& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : split_list(it->second);
}

std::string FlatConfig::dump() const {
  std::ostringstream out;
  for (const auto& [k, v] : values_) {
    const bool needs_quotes = v.find('#') != std::string::npos || v != trim(v);
    out << k << " = " << (needs_quotes ? "\"" + v + "\"" : v) << '\n';
  }
  return out.str();
}

// Shortest %g form that reads back to the same double.
std::string format_double(double v) {
  char buf[40];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::string join_doubles(const std::vector<double>& v) {
  std::string out = "[";
  for (std::size_t k = 0; k < v.size(); ++k) out += (k ? ", " : "") + format_double(v[k]);
  return out + "]";
}

namespace {

std::string join_ints(const std::vector<int>& v) {
  std::string out = "[";
  for (std::size_t k = 0; k < v.size(); ++k) out += (k ? ", " : "") + std::to_string(v[k]);
  return out + "]";
}

HestonParams heston_from(const FlatConfig& cfg) {
  HestonParams h;
  h.mu = cfg.get_double("heston.mu", h.mu);
  h.kappa = cfg.get_double("heston.kappa", h.kappa);
  h.theta = cfg.get_double("heston.theta", h.theta);
  h.eta = cfg.get_double("heston.eta", h.eta);
  h.rho = cfg.get_double("heston.rho", h.rho);
  return h;
}

void heston_to(const HestonParams& h, FlatConfig& cfg) {
  cfg.set("heston.mu", format_double(h.mu));
  cfg.set("heston.kappa", format_double(h.kappa));
  cfg.set("heston.theta", format_double(h.theta));
  cfg.set("heston.eta", format_double(h.eta));
  cfg.set("heston.rho", format_double(h.rho));
}

}  // namespace

SimScenario scenario_from_config(const FlatConfig& cfg) {
  SimScenario s;
  s.n = static_cast<int>(cfg.get_int("n", s.n));
  s.d = static_cast<int>(cfg.get_int("d", s.d));
  s.heston = heston_from(cfg);
  s.fine_factor = static_cast<int>(cfg.get_int("fine_factor", s.fine_factor));
  s.seed = static_cast<std::uint64_t>(cfg.get_int("seed", 1));
  if (cfg.has("v0")) s.v0 = cfg.get_double("v0", 0.0);
  if (s.d < 3) throw std::invalid_argument("scenario: d must be >= 3");
  const int du = s.d - 1;

  Rng rng = StreamKey(s.seed).child(stream_tag::kStructure).engine();
  const double rho_gamma = cfg.get_double("structure.rho_gamma", 0.5);
  std::vector<int> sizes = cfg.get_ints("structure.block_sizes", {});
  if (sizes.empty()) {
    const int blocks = static_cast<int>(cfg.get_int("structure.num_blocks", std::min(10, du)));
    if (blocks < 1 || du % blocks != 0) {
      throw std::invalid_argument("scenario: structure.num_blocks=" + std::to_string(blocks) +
                                  " does not divide d-1=" + std::to_string(du));
    }
    sizes.assign(blocks, du / blocks);
  }
  std::vector<double> diagonals = cfg.get_doubles("structure.diagonals", {});
  if (diagonals.empty()) {
    std::uniform_real_distribution<double> unif(0.2, 0.5);
    diagonals.resize(du);
    for (auto& v : diagonals) v = unif(rng);
  }
  s.structure = make_residual_structure(sizes, rho_gamma, diagonals);
  s.betas = cfg.get_doubles("betas", {});
  if (s.betas.empty()) s.betas = draw_betas(du, rng);
  s.validate();
  return s;
}

FlatConfig scenario_to_config(const SimScenario& s) {
  FlatConfig cfg;
  cfg.set("n", std::to_string(s.n));
  cfg.set("d", std::to_string(s.d));
  heston_to(s.heston, cfg);
  cfg.set("fine_factor", std::to_string(s.fine_factor));
  cfg.set("seed", std::to_string(s.seed));
  if (s.v0) cfg.set("v0", format_double(*s.v0));
  cfg.set("structure.rho_gamma", format_double(s.structure.rho_gamma));
  cfg.set("structure.block_sizes", join_ints(s.structure.block_sizes));
  cfg.set("structure.diagonals", join_doubles(s.structure.variances));
  cfg.set("betas", join_doubles(s.betas));
  return cfg;
}

ExperimentSpec experiment_from_config(const FlatConfig& cfg) {
  ExperimentSpec e;
  e.n_grid = cfg.get_ints("n_grid", e.n_grid);
  e.rho_gamma_grid = cfg.get_doubles("rho_gamma_grid", e.rho_gamma_grid);
  e.d_under = static_cast<int>(cfg.get_int("d_under", e.d_under));
  e.num_blocks = static_cast<int>(cfg.get_int("num_blocks", e.num_blocks));
  e.heston = heston_from(cfg);
  if (cfg.has("methods")) {
    e.methods.clear();
    for (const auto& m : cfg.get_strings("methods", {})) e.methods.push_back(parse_method(m));
  }
  e.alpha = cfg.get_double("alpha", e.alpha);
  e.M = static_cast<int>(cfg.get_int("M", e.M));
  e.B = static_cast<int>(cfg.get_int("B", e.B));
  e.seed = static_cast<std::uint64_t>(cfg.get_int("seed", static_cast<long long>(e.seed)));
  e.jobs = static_cast<int>(cfg.get_int("jobs", e.jobs));
  e.redraw_structure = cfg.get_bool("redraw_structure", e.redraw_structure);
  e.fine_factor = static_cast<int>(cfg.get_int("fine_factor", e.fine_factor));
  e.validate();
  return e;
}

FlatConfig experiment_to_config(const ExperimentSpec& e) {
  FlatConfig cfg;
  cfg.set("n_grid", join_ints(e.n_grid));
  cfg.set("rho_gamma_grid", join_doubles(e.rho_gamma_grid));
  cfg.set("d_under", std::to_string(e.d_under));
  cfg.set("num_blocks", std::to_string(e.num_blocks));
  heston_to(e.heston, cfg);
  std::string methods = "[";
  for (std::size_t k = 0; k < e.methods.size(); ++k) methods += (k ? ", " : "") + method_name(e.methods[k]);
  cfg.set("methods", methods + "]");
  cfg.set("alpha", format_double(e.alpha));
  cfg.set("M", std::to_string(e.M));
  cfg.set("B", std::to_string(e.B));
  cfg.set("seed", std::to_string(e.seed));
  cfg.set("jobs", std::to_string(e.jobs));
  cfg.set("redraw_structure", e.redraw_structure ? "true" : "false");
  cfg.set("fine_factor", std::to_string(e.fine_factor));
  return cfg;
}

}  // namespace hicov
