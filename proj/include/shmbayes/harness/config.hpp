#pragma once

// Experiment configuration files.
//
//   # comment
//   experiment = active
//   seeds = 1,2,3
//   out_dir = results/active
//   source = synthetic
//
//   [active]
//   budget_fraction = 0.25
//
// Keys before the first section header are global. Lists are
// comma-separated. Relative paths resolve against the working directory.

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shmbayes/gmm/active_learner.hpp"

namespace shmbayes::harness {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg, std::size_t line = 0)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + msg : msg), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct ActiveParams {
  double budget_fraction = 0.25;
  std::size_t batch_size = 50;
  gmm::Strategy strategy = gmm::Strategy::split;
  gmm::Strategy baseline = gmm::Strategy::random;
};

struct SemisupParams {
  std::vector<double> fractions = {0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50,
                                   0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95, 1.00};
  int ae_per_class = 60;
  double tol = 1e-6;
  int max_iters = 200;
};

struct DpParams {
  double alpha = 10.0;
  int sweeps = 5;
  std::size_t alarm_threshold = 50;
  int batch_size = 10;
  int init_sweeps = 20;
  std::size_t n_init = 100;
  std::optional<std::size_t> onset;  // defaults to the generator's damage onset
  std::size_t window = 200;
};

struct KbtlParams {
  int subspace_dim = 2;
  double margin = 1.0;
  double sigma_h = 0.1;
  int max_iters = 200;
  double tol = 1e-5;
  std::vector<std::string> train_files;  // CSV domains with +-1 labels; empty selects the generated population
  std::vector<std::string> test_files;
};

struct GenParams {
  std::string kind = "z24";  // ae | z24 | population
  int ae_per_class = 200;
};

struct EvalParams {
  std::string predictions;  // CSV with header y_true,y_pred or y_true,cluster
  int num_classes = 0;      // 0 takes the largest label present
};

struct ExperimentConfig {
  std::string experiment;
  std::vector<std::uint64_t> seeds = {1};
  std::string out_dir = "results";
  std::string source = "synthetic";  // or a CSV path
  ActiveParams active;
  SemisupParams semisup;
  DpParams dp;
  KbtlParams kbtl;
  GenParams gen;
  EvalParams eval;

  bool synthetic() const { return source == "synthetic"; }
};

inline const std::vector<std::string>& experiment_ids() {
  static const std::vector<std::string> ids = {"active", "semisup", "dp", "kbtl", "gen", "eval"};
  return ids;
}

// ---------------------------------------------------------------------------
// Value parsing

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(s);
  while (std::getline(in, cell, ',')) out.push_back(trim(cell));
  if (!s.empty() && s.back() == ',') out.emplace_back();
  return out;
}

inline double to_double(const std::string& key, const std::string& v, std::size_t line) {
  errno = 0;
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || *end != '\0' || errno == ERANGE || !std::isfinite(x))
    throw ConfigError("key '" + key + "' expects a number, got '" + v + "'", line);
  return x;
}

inline long long to_integer(const std::string& key, const std::string& v, std::size_t line, long long lo) {
  errno = 0;
  char* end = nullptr;
  const long long x = std::strtoll(v.c_str(), &end, 10);
  if (v.empty() || *end != '\0' || errno == ERANGE)
    throw ConfigError("key '" + key + "' expects an integer, got '" + v + "'", line);
  if (x < lo) throw ConfigError("key '" + key + "' must be >= " + std::to_string(lo) + ", got " + v, line);
  return x;
}

inline std::vector<std::uint64_t> to_seeds(const std::string& key, const std::string& v, std::size_t line) {
  std::vector<std::uint64_t> out;
  for (const auto& s : split_list(v)) out.push_back(static_cast<std::uint64_t>(to_integer(key, s, line, 0)));
  if (out.empty()) throw ConfigError("key '" + key + "' needs at least one seed", line);
  return out;
}

inline std::vector<double> to_doubles(const std::string& key, const std::string& v, std::size_t line) {
  std::vector<double> out;
  for (const auto& s : split_list(v)) out.push_back(to_double(key, s, line));
  if (out.empty()) throw ConfigError("key '" + key + "' needs at least one value", line);
  return out;
}

inline std::vector<std::string> to_strings(const std::string& key, const std::string& v, std::size_t line) {
  auto out = split_list(v);
  for (const auto& s : out)
    if (s.empty()) throw ConfigError("key '" + key + "' has an empty list entry", line);
  return out;
}

inline gmm::Strategy to_strategy(const std::string& key, const std::string& v, std::size_t line) {
  try {
    return gmm::strategy_from_string(v);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' expects entropy, likelihood, split or random, got '" + v + "'", line);
  }
}

using Setter = std::function<void(ExperimentConfig&, const std::string& value, std::size_t line)>;
using KeyTable = std::map<std::string, Setter>;

inline const std::map<std::string, KeyTable>& key_tables() {
  static const std::map<std::string, KeyTable> tables = [] {
    std::map<std::string, KeyTable> t;
    // Each entry: section -> key -> setter.
    t[""] = {
        {"experiment", [](ExperimentConfig& c, const std::string& v, std::size_t) { c.experiment = v; }},
        {"seeds", [](ExperimentConfig& c, const std::string& v, std::size_t l) { c.seeds = to_seeds("seeds", v, l); }},
        {"out_dir", [](ExperimentConfig& c, const std::string& v, std::size_t) { c.out_dir = v; }},
        {"source", [](ExperimentConfig& c, const std::string& v, std::size_t) { c.source = v; }},
    };
    t["active"] = {
        {"budget_fraction",
         [](ExperimentConfig& c, const std::string& v, std::size_t l) {
           c.active.budget_fraction = to_double("budget_fraction", v, l);
         }},
        {"batch_size",
         [](ExperimentConfig& c, const std::string& v, std::size_t l) {
           c.active.batch_size = static_cast<std::size_t>(to_integer("batch_size", v, l, 1));
         }},
        {"strategy",
         [](ExperimentConfig& c, const std::string& v, std::size_t l) {
           c.active.strategy = to_strategy("strategy", v, l);
         }},
        {"baseline",
         [](ExperimentConfig& c, const std::string& v, std::size_t l) {
           c.active.baseline = to_strategy("baseline", v, l);
         }},
    };
    t["semisup"] = {
        {"fractions",
         [](ExperimentConfig& c, const std::string& v, std::size_t l) {
           c.semisup.fractions = to_doubles("fractions", v, l);
         }},
        {"ae_per_class",
         [](ExperimentConfig& c, const std::string& v, std::size_t l) {
           c.semisup.ae_per_class = static_cast<int>(to_integer("ae_per_class", v, l, 1));
         }},
        {"tol", [](ExperimentConfig& c, const std::string& v, std::size_t l) { c.semisup.tol = to_double("tol", v, l); }},
        {"max_iters",
         [](ExperimentConfig& c, const std::string& v, std::size_t l) {
           c.semisup.max_iters = static_cast<int>(to_integer("max_iters", v, l, 1));
         }},
    };
    t["dp"] = {
        {"alpha", [](ExperimentConfig& c, const std::string& v, std::size_t l) { c.dp.alpha = to_double("alpha", v, l); }},
        {"sweeps",
         [](ExperimentConfig& c, const std::string& v, std::size_t l) {
           c.dp.sweeps = static_cast<int>(to_integer("sweeps", v, l, 0));
         }},
        {"alarm_threshold",
         [](ExperimentConfig& c, const std::string& v, std::size_t l) {
           c.dp.alarm_threshold = static_cast<std::size_t>(to_integer("alarm_threshold", v, l, 1));
         }},
        {"batch_size",
         [](ExperimentConfig& c, const std::string& v, std::size_t l) {
           c.dp.batch_size = static_cast<int>(to_integer("batch_size", v, l, 1));
         }},
        {"init_sweeps",
         [](ExperimentConfig& c, const std::string& v, std::size_t l) {
           c.dp.init_sweeps = static_cast<int>(to_integer("init_sweeps", v, l, 0));
         }},
        {"n_init",
         [](ExperimentConfig& c, const std::string& v, std::size_t l) {
           c.dp.n_init = static_cast<std::size_t>(to_integer("n_init", v, l, 2));
         }},
        {"onset",
         [](ExperimentConfig& c, const std::string& v, std::size_t l) {
           c.dp.onset = static_cast<std::size_t>(to_integer("onset", v, l, 0));
         }},
        {"window",
         [](ExperimentConfig& c, const std::string& v, std::size_t l) {
           c.dp.window = static_cast<std::size_t>(to_integer("window", v, l, 0));
         }},
    };
    t["kbtl"] = {
        {"subspace_dim",
         [](ExperimentConfig& c, const std::string& v, std::size_t l) {
           c.kbtl.subspace_dim = static_cast<int>(to_integer("subspace_dim", v, l, 1));
         }},
        {"margin", [](ExperimentConfig& c, const std::string& v, std::size_t l) { c.kbtl.margin = to_double("margin", v, l); }},
        {"sigma_h",
         [](ExperimentConfig& c, const std::string& v, std::size_t l) { c.kbtl.sigma_h = to_double("sigma_h", v, l); }},
        {"max_iters",
         [](ExperimentConfig& c, const std::string& v, std::size_t l) {
           c.kbtl.max_iters = static_cast<int>(to_integer("max_iters", v, l, 1));
         }},
        {"tol", [](ExperimentConfig& c, const std::string& v, std::size_t l) { c.kbtl.tol = to_double("tol", v, l); }},
        {"train_files",
         [](ExperimentConfig& c, const std::string& v, std::size_t l) {
           c.kbtl.train_files = to_strings("train_files", v, l);
         }},
        {"test_files",
         [](ExperimentConfig& c, const std::string& v, std::size_t l) {
           c.kbtl.test_files = to_strings("test_files", v, l);
         }},
    };
    t["gen"] = {
        {"kind", [](ExperimentConfig& c, const std::string& v, std::size_t) { c.gen.kind = v; }},
        {"ae_per_class",
         [](ExperimentConfig& c, const std::string& v, std::size_t l) {
           c.gen.ae_per_class = static_cast<int>(to_integer("ae_per_class", v, l, 1));
         }},
    };
    t["eval"] = {
        {"predictions", [](ExperimentConfig& c, const std::string& v, std::size_t) { c.eval.predictions = v; }},
        {"num_classes",
         [](ExperimentConfig& c, const std::string& v, std::size_t l) {
           c.eval.num_classes = static_cast<int>(to_integer("num_classes", v, l, 0));
         }},
    };
    return t;
  }();
  return tables;
}

inline void require_file(const std::string& what, const std::string& path) {
  if (!std::filesystem::is_regular_file(path)) throw ConfigError(what + ": file not found: " + path);
}

}  // namespace detail

/// Checks values and referenced paths once all keys and overrides are in.
inline void validate(const ExperimentConfig& c) {
  const auto& ids = experiment_ids();
  if (c.experiment.empty()) throw ConfigError("missing required key 'experiment'");
  if (std::find(ids.begin(), ids.end(), c.experiment) == ids.end())
    throw ConfigError("unknown experiment '" + c.experiment + "'");
  if (c.seeds.empty()) throw ConfigError("seeds must not be empty");
  if (c.out_dir.empty()) throw ConfigError("out_dir must not be empty");
  if (!c.synthetic() && (c.experiment == "active" || c.experiment == "semisup" || c.experiment == "dp"))
    detail::require_file("source", c.source);

  const auto& a = c.active;
  if (!(a.budget_fraction >= 0.0 && a.budget_fraction <= 1.0))
    throw ConfigError("active.budget_fraction must lie in [0, 1]");
  for (double f : c.semisup.fractions)
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("semisup.fractions must lie in (0, 1]");
  if (!(c.semisup.tol > 0.0)) throw ConfigError("semisup.tol must be > 0");
  if (!(c.dp.alpha > 0.0)) throw ConfigError("dp.alpha must be > 0");
  if (!(c.kbtl.margin >= 0.0)) throw ConfigError("kbtl.margin must be >= 0");
  if (!(c.kbtl.sigma_h > 0.0)) throw ConfigError("kbtl.sigma_h must be > 0");
  if (!(c.kbtl.tol > 0.0)) throw ConfigError("kbtl.tol must be > 0");
  if (c.kbtl.train_files.size() != c.kbtl.test_files.size())
    throw ConfigError("kbtl.train_files and kbtl.test_files must list the same number of domains");
  if (c.experiment == "kbtl") {
    for (const auto& f : c.kbtl.train_files) detail::require_file("kbtl.train_files", f);
    for (const auto& f : c.kbtl.test_files) detail::require_file("kbtl.test_files", f);
  }
  if (c.gen.kind != "ae" && c.gen.kind != "z24" && c.gen.kind != "population")
    throw ConfigError("gen.kind must be ae, z24 or population, got '" + c.gen.kind + "'");
  if (c.experiment == "eval") {
    if (c.eval.predictions.empty()) throw ConfigError("missing required key 'eval.predictions'");
    detail::require_file("eval.predictions", c.eval.predictions);
  }
}

/// Sets one `section.key` (or a global key) as if read from a file.
inline void set_value(ExperimentConfig& c, const std::string& section, const std::string& key,
                      const std::string& value, std::size_t line = 0) {
  const auto& tables = detail::key_tables();
  const auto sec = tables.find(section);
  if (sec == tables.end()) throw ConfigError("unknown section [" + section + "]", line);
  const auto it = sec->second.find(key);
  if (it == sec->second.end())
    throw ConfigError("unknown key '" + key + "'" + (section.empty() ? "" : " in section [" + section + "]"), line);
  it->second(c, value, line);
}

/// Reads keys without validating; `implied_experiment` stands in for a
/// missing `experiment` key and must agree with a present one.
inline ExperimentConfig parse_config_stream(std::istream& in, const std::string& implied_experiment = "") {
  ExperimentConfig c;
  std::string raw, section;
  std::size_t line = 0;
  std::map<std::string, std::size_t> seen;
  while (std::getline(in, raw)) {
    ++line;
    const std::string s = detail::trim(raw);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ConfigError("malformed section header '" + s + "'", line);
      section = detail::trim(s.substr(1, s.size() - 2));
      if (!detail::key_tables().count(section) || section.empty())
        throw ConfigError("unknown section [" + section + "]", line);
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key = value, got '" + s + "'", line);
    const std::string key = detail::trim(s.substr(0, eq)), value = detail::trim(s.substr(eq + 1));
    if (key.empty()) throw ConfigError("empty key", line);
    const std::string full = section.empty() ? key : section + "." + key;
    if (auto prev = seen.find(full); prev != seen.end())
      throw ConfigError("duplicate key '" + key + "' (first set on line " + std::to_string(prev->second) + ")", line);
    seen[full] = line;
    set_value(c, section, key, value, line);
  }
  if (!implied_experiment.empty()) {
    if (!c.experiment.empty() && c.experiment != implied_experiment)
      throw ConfigError("config names experiment '" + c.experiment + "' but '" + implied_experiment + "' was requested");
    c.experiment = implied_experiment;
  }
  if (c.experiment.empty()) throw ConfigError("missing required key 'experiment'");
  return c;
}

inline ExperimentConfig parse_config(const std::string& path, const std::string& implied_experiment = "") {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path);
  try {
    auto c = parse_config_stream(in, implied_experiment);
    validate(c);
    return c;
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["experiment"] = c.experiment;
  j["seeds"] = c.seeds;
  j["out_dir"] = c.out_dir;
  j["source"] = c.source;
  j["active"] = {{"budget_fraction", c.active.budget_fraction},
                 {"batch_size", c.active.batch_size},
                 {"strategy", gmm::to_string(c.active.strategy)},
                 {"baseline", gmm::to_string(c.active.baseline)}};
  j["semisup"] = {{"fractions", c.semisup.fractions},
                  {"ae_per_class", c.semisup.ae_per_class},
                  {"tol", c.semisup.tol},
                  {"max_iters", c.semisup.max_iters}};
  j["dp"] = {{"alpha", c.dp.alpha},           {"sweeps", c.dp.sweeps},   {"alarm_threshold", c.dp.alarm_threshold},
             {"batch_size", c.dp.batch_size}, {"init_sweeps", c.dp.init_sweeps}, {"n_init", c.dp.n_init},
             {"window", c.dp.window}};
  j["dp"]["onset"] = c.dp.onset ? nlohmann::json(*c.dp.onset) : nlohmann::json(nullptr);
  j["kbtl"] = {{"subspace_dim", c.kbtl.subspace_dim}, {"margin", c.kbtl.margin},     {"sigma_h", c.kbtl.sigma_h},
               {"max_iters", c.kbtl.max_iters},       {"tol", c.kbtl.tol},           {"train_files", c.kbtl.train_files},
               {"test_files", c.kbtl.test_files}};
  j["gen"] = {{"kind", c.gen.kind}, {"ae_per_class", c.gen.ae_per_class}};
  j["eval"] = {{"predictions", c.eval.predictions}, {"num_classes", c.eval.num_classes}};
  return j;
}

}  // namespace shmbayes::harness
