#pragma once

// Experiment runner: executes a configured experiment for every seed,
// writes CSV/JSON outputs under the output directory and aggregates the
// per-seed metrics.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "shmbayes/data/csv.hpp"
#include "shmbayes/harness/config.hpp"
#include "shmbayes/harness/protocols.hpp"

namespace shmbayes::harness {

/// One seed's metrics for one group (strategy, fraction, domain, ...).
struct MetricRecord {
  std::string group;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, double>> values;
};

struct Aggregate {
  std::string group;
  std::string metric;
  std::size_t n = 0;
  double mean = 0.0;
  double se = 0.0;  // sample sd / sqrt(n); 0 for a single record
};

struct ResultBundle {
  nlohmann::json config;
  std::vector<MetricRecord> records;
  std::vector<Aggregate> aggregates;
  std::vector<std::string> files;     // every file written, in order
  std::vector<std::string> failures;  // "seed N: message"
  double runtime_seconds = 0.0;

  bool ok() const { return failures.empty(); }
};

/// Mean and standard error per (group, metric), groups and metrics in
/// first-seen order.
inline std::vector<Aggregate> aggregate(const std::vector<MetricRecord>& records) {
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::vector<double>> vals;
  for (const auto& r : records)
    for (const auto& [name, v] : r.values) {
      auto key = std::make_pair(r.group, name);
      if (!vals.count(key)) order.push_back(key);
      vals[key].push_back(v);
    }
  std::vector<Aggregate> out;
  for (const auto& key : order) {
    const auto& v = vals[key];
    Aggregate a{key.first, key.second, v.size(), 0.0, 0.0};
    for (double x : v) a.mean += x;
    a.mean /= static_cast<double>(v.size());
    if (v.size() > 1) {
      double ss = 0.0;
      for (double x : v) ss += (x - a.mean) * (x - a.mean);
      a.se = std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
    }
    out.push_back(a);
  }
  return out;
}

inline nlohmann::json to_json(const ResultBundle& b) {
  nlohmann::json j;
  j["config"] = b.config;
  j["records"] = nlohmann::json::array();
  for (const auto& r : b.records) {
    nlohmann::json v = nlohmann::json::object();
    for (const auto& [k, x] : r.values) v[k] = x;
    j["records"].push_back({{"group", r.group}, {"seed", r.seed}, {"values", v}});
  }
  j["aggregates"] = nlohmann::json::array();
  for (const auto& a : b.aggregates)
    j["aggregates"].push_back({{"group", a.group}, {"metric", a.metric}, {"n", a.n}, {"mean", a.mean}, {"se", a.se}});
  j["files"] = b.files;
  j["failures"] = b.failures;
  j["runtime_seconds"] = b.runtime_seconds;
  return j;
}

namespace detail {

using datagen::format_real;

class Outputs {
 public:
  Outputs(const std::string& dir, ResultBundle& bundle) : dir_(dir), bundle_(bundle) {
    std::filesystem::create_directories(dir_);
  }

  std::filesystem::path path(const std::string& name) const { return dir_ / name; }

  void write(const std::string& name, const std::string& content) {
    const auto p = path(name);
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << content;
    if (!out) throw std::runtime_error("write failed for " + p.string());
    bundle_.files.push_back(p.string());
  }

  void save_dataset(const std::string& name, const LabeledDataset& ds) {
    datagen::save_csv(ds, path(name).string());
    bundle_.files.push_back(path(name).string());
  }

 private:
  std::filesystem::path dir_;
  ResultBundle& bundle_;
};

inline std::string seed_name(const std::string& stem, std::uint64_t seed, const std::string& ext) {
  return stem + "_seed" + std::to_string(seed) + ext;
}

inline std::string fraction_label(double f) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", f);
  return buf;
}

// --- active ------------------------------------------------------------------

inline LabeledDataset stream_source(const ExperimentConfig& c, std::uint64_t seed) {
  return c.synthetic() ? datagen::gen_z24_like(datagen::default_z24_spec(), seed) : datagen::load_csv(c.source);
}

inline void run_active_seed(const ExperimentConfig& c, std::uint64_t seed, Outputs& out,
                            std::vector<MetricRecord>& records) {
  const ActiveSettings settings{c.active.budget_fraction, c.active.batch_size};
  const auto split = split_active(stream_source(c, seed), settings.batch_size);
  const auto act = run_active(split, settings, c.active.strategy, seed);
  const auto pas = run_active(split, settings, c.active.baseline, seed);
  const int damage = split.num_classes;

  std::ostringstream hist;
  gmm::write_history_csv(act.history, hist, true);
  gmm::write_history_csv(pas.history, hist, false);
  out.write(seed_name("active_history", seed, ".csv"), hist.str());

  const auto n_batches = static_cast<double>(act.history.batches.size());
  auto record = [&](const gmm::RunHistory& h) {
    const auto d = h.discovery_index(damage);
    records.push_back({gmm::to_string(h.strategy),
                       seed,
                       {{"final_f1", h.final_f1()},
                        {"queries", static_cast<double>(h.total_queries())},
                        {"discovered", d ? 1.0 : 0.0},
                        {"discovery_batch", d ? static_cast<double>(*d) : n_batches}}});
  };
  record(act.history);
  record(pas.history);
  records.push_back({"paired",
                     seed,
                     {{"f1_gain", act.history.final_f1() - pas.history.final_f1()},
                      {"active_wins", act.history.final_f1() > pas.history.final_f1() ? 1.0 : 0.0},
                      {"discovers_no_later", discovers_no_later(act.history, pas.history, damage) ? 1.0 : 0.0}}});
}

// --- semisup -----------------------------------------------------------------

inline const char* kSemisupHeader = "fraction,seed,n_labelled,f1_supervised,f1_semisupervised,gain,iterations\n";

inline void run_semisup_seed(const ExperimentConfig& c, std::uint64_t seed, Outputs& out,
                             std::vector<MetricRecord>& records, std::string& combined) {
  const LabeledDataset all =
      c.synthetic() ? datagen::gen_ae_like(seed, c.semisup.ae_per_class) : datagen::load_csv(c.source);
  gmm::EmConfig em;
  em.tol = c.semisup.tol;
  em.max_iters = c.semisup.max_iters;
  std::ostringstream csv;
  csv << kSemisupHeader;
  for (double f : c.semisup.fractions) {
    const auto r = run_semisup(all, f, em, seed);
    const std::string row = fraction_label(f) + ',' + std::to_string(seed) + ',' + std::to_string(r.n_labelled) + ',' +
                            format_real(r.f1_supervised) + ',' + format_real(r.f1_semisupervised) + ',' +
                            format_real(r.gain()) + ',' + std::to_string(r.iterations) + '\n';
    csv << row;
    combined += row;
    records.push_back({fraction_label(f),
                       seed,
                       {{"f1_supervised", r.f1_supervised},
                        {"f1_semisupervised", r.f1_semisupervised},
                        {"gain", r.gain()},
                        {"iterations", static_cast<double>(r.iterations)}}});
  }
  out.write(seed_name("semisup", seed, ".csv"), csv.str());
}

// --- dp ----------------------------------------------------------------------

inline void run_dp_seed(const ExperimentConfig& c, std::uint64_t seed, Outputs& out,
                        std::vector<MetricRecord>& records) {
  const auto spec = datagen::default_z24_spec();
  const LabeledDataset data = c.synthetic() ? datagen::gen_z24_like(spec, seed) : datagen::load_csv(c.source);
  dp::DpConfig cfg;
  cfg.hyper = dp::default_hyper(data.dim());
  cfg.alpha = c.dp.alpha;
  cfg.sweeps_per_batch = c.dp.sweeps;
  cfg.alarm_threshold = c.dp.alarm_threshold;
  cfg.batch_size = c.dp.batch_size;
  cfg.init_sweeps = c.dp.init_sweeps;
  const auto r = dp::run_stream(data.X, c.dp.n_init, cfg, seed);

  std::ostringstream stream;
  dp::write_stream_csv(r.records, stream);
  out.write(seed_name("dp_stream", seed, ".csv"), stream.str());
  std::ostringstream alarms;
  alarms << "cluster,stream_index,size\n";
  for (const auto& a : r.alarms) alarms << a.cluster_id << ',' << a.stream_index << ',' << a.size << '\n';
  out.write(seed_name("dp_alarms", seed, ".csv"), alarms.str());

  std::optional<std::size_t> onset = c.dp.onset;
  if (!onset) onset = c.synthetic() ? std::optional<std::size_t>(spec.damage_onset) : onset_of_last_class(data.y);
  std::vector<std::pair<std::string, double>> v = {{"alarms", static_cast<double>(r.alarms.size())},
                                                   {"initial_clusters", static_cast<double>(r.initial_clusters)},
                                                   {"final_clusters", static_cast<double>(r.final_clusters)}};
  if (onset) {
    const auto s = summarise_dp(r, data.y, *onset, c.dp.window);
    v.push_back({"hit", s.hit ? 1.0 : 0.0});
    v.push_back({"pre_onset_alarms", static_cast<double>(s.pre_onset_alarms)});
    if (data.labelled()) v.push_back({"purity", s.purity});
  }
  records.push_back({"dp", seed, v});
}

// --- kbtl --------------------------------------------------------------------

inline void run_kbtl_seed(const ExperimentConfig& c, std::uint64_t seed, Outputs& out,
                          std::vector<MetricRecord>& records) {
  std::vector<LabeledDataset> train, test;
  if (c.kbtl.train_files.empty()) {
    auto pop = datagen::gen_population(datagen::population_specs(), datagen::reference_counts(), seed);
    train = std::move(pop.train);
    test = std::move(pop.test);
  } else {
    for (const auto& f : c.kbtl.train_files) train.push_back(datagen::load_csv(f));
    for (const auto& f : c.kbtl.test_files) test.push_back(datagen::load_csv(f));
  }
  kbtl::KbtlConfig cfg;
  cfg.R = c.kbtl.subspace_dim;
  cfg.nu_margin = c.kbtl.margin;
  cfg.sigma_h = c.kbtl.sigma_h;
  cfg.max_iters = c.kbtl.max_iters;
  cfg.param_tol = c.kbtl.tol;
  const auto r = run_kbtl(train, test, cfg, seed);

  std::ostringstream csv;
  csv << "domain,seed,f1_transfer,f1_single,gain\n";
  double mt = 0.0, ms = 0.0;
  for (std::size_t t = 0; t < r.f1_transfer.size(); ++t) {
    const double gain = r.f1_transfer[t] - r.f1_single[t];
    csv << (t + 1) << ',' << seed << ',' << format_real(r.f1_transfer[t]) << ',' << format_real(r.f1_single[t]) << ','
        << format_real(gain) << '\n';
    records.push_back({"domain" + std::to_string(t + 1),
                       seed,
                       {{"f1_transfer", r.f1_transfer[t]}, {"f1_single", r.f1_single[t]}, {"gain", gain}}});
    mt += r.f1_transfer[t];
    ms += r.f1_single[t];
  }
  const auto n = static_cast<double>(r.f1_transfer.size());
  records.push_back({"mean", seed, {{"f1_transfer", mt / n}, {"f1_single", ms / n}, {"gain", (mt - ms) / n}}});
  out.write(seed_name("kbtl_f1", seed, ".csv"), csv.str());
  out.write(seed_name("kbtl_model", seed, ".json"), kbtl::to_json(r.model).dump(2) + "\n");
}

// --- gen ---------------------------------------------------------------------

inline void run_gen_seed(const ExperimentConfig& c, std::uint64_t seed, Outputs& out,
                         std::vector<MetricRecord>& records) {
  if (c.gen.kind == "ae") {
    const auto ds = datagen::gen_ae_like(seed, c.gen.ae_per_class);
    out.save_dataset(seed_name("ae", seed, ".csv"), ds);
    records.push_back({"ae", seed, {{"rows", static_cast<double>(ds.size())}}});
  } else if (c.gen.kind == "z24") {
    const auto ds = datagen::gen_z24_like(datagen::default_z24_spec(), seed);
    out.save_dataset(seed_name("z24", seed, ".csv"), ds);
    records.push_back({"z24", seed, {{"rows", static_cast<double>(ds.size())}}});
  } else {
    const auto pop = datagen::gen_population(datagen::population_specs(), datagen::reference_counts(), seed);
    double rows = 0.0;
    for (std::size_t t = 0; t < pop.train.size(); ++t) {
      const std::string stem = "population_seed" + std::to_string(seed) + "_domain" + std::to_string(t + 1);
      out.save_dataset(stem + "_train.csv", pop.train[t]);
      out.save_dataset(stem + "_test.csv", pop.test[t]);
      rows += static_cast<double>(pop.train[t].size() + pop.test[t].size());
    }
    records.push_back({"population", seed, {{"rows", rows}}});
  }
}

}  // namespace detail

// --- eval --------------------------------------------------------------------

struct Predictions {
  std::vector<int> y_true;
  std::vector<int> y_pred;  // predicted classes or cluster ids
  bool clusters = false;    // second column was `cluster`
};

/// Reads `y_true,y_pred` (classification) or `y_true,cluster` (clustering).
inline Predictions load_predictions(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open predictions file " + path);
  std::string line;
  if (!std::getline(in, line)) throw datagen::CsvError(path, 1, "missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  Predictions p;
  if (line == "y_true,cluster") {
    p.clusters = true;
  } else if (line != "y_true,y_pred") {
    throw datagen::CsvError(path, 1, "header must be y_true,y_pred or y_true,cluster");
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = datagen::split_commas(line);
    if (cells.size() != 2) throw datagen::CsvError(path, lineno, "expected 2 columns");
    int v[2];
    for (int j = 0; j < 2; ++j) {
      char* end = nullptr;
      errno = 0;
      const long x = std::strtol(cells[static_cast<std::size_t>(j)].c_str(), &end, 10);
      if (cells[static_cast<std::size_t>(j)].empty() || *end != '\0' || errno == ERANGE)
        throw datagen::CsvError(path, lineno, "malformed integer '" + cells[static_cast<std::size_t>(j)] + "'");
      v[j] = static_cast<int>(x);
    }
    p.y_true.push_back(v[0]);
    p.y_pred.push_back(v[1]);
  }
  return p;
}

/// Metrics report for a predictions file. Cluster ids are first mapped to
/// their majority class.
inline nlohmann::json evaluate_predictions(const Predictions& p, int num_classes = 0) {
  std::vector<int> pred = p.y_pred;
  eval::ClusterMapping mapping;
  if (p.clusters) {
    mapping = eval::map_clusters(p.y_pred, p.y_true);
    for (auto& v : pred) v = mapping.cluster_to_class.at(v);
  }
  int k = num_classes;
  if (k == 0)
    for (std::size_t i = 0; i < p.y_true.size(); ++i) k = std::max({k, p.y_true[i], pred[i]});
  const eval::ConfusionMatrix cm(p.y_true, pred, std::max(k, 1));
  return eval::metrics_report(cm, p.clusters ? &mapping : nullptr);
}

// ---------------------------------------------------------------------------

inline void write_records_csv(const std::vector<MetricRecord>& records, std::ostream& out) {
  out << "group,seed,metric,value\n";
  for (const auto& r : records)
    for (const auto& [name, v] : r.values)
      out << r.group << ',' << r.seed << ',' << name << ',' << datagen::format_real(v) << '\n';
}

inline void write_aggregates_csv(const std::vector<Aggregate>& aggs, std::ostream& out) {
  out << "group,metric,n,mean,se\n";
  for (const auto& a : aggs)
    out << a.group << ',' << a.metric << ',' << a.n << ',' << datagen::format_real(a.mean) << ','
        << datagen::format_real(a.se) << '\n';
}

/// Runs the configured experiment for every seed. A seed that throws is
/// recorded in `failures` and the remaining seeds still run.
inline ResultBundle run_experiment(const ExperimentConfig& cfg) {
  validate(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  ResultBundle b;
  b.config = to_json(cfg);
  detail::Outputs out(cfg.out_dir, b);
  const std::string& e = cfg.experiment;

  if (e == "eval") {
    const auto report = evaluate_predictions(load_predictions(cfg.eval.predictions), cfg.eval.num_classes);
    out.write("eval_report.json", report.dump(2) + "\n");
    std::vector<std::pair<std::string, double>> v = {{"macro_f1", report["macro_f1"].get<double>()}};
    if (report.contains("purity")) v.push_back({"purity", report["purity"].get<double>()});
    b.records.push_back({"eval", 0, v});
  } else {
    std::string semisup_rows;
    for (const auto seed : cfg.seeds) {
      try {
        if (e == "active") detail::run_active_seed(cfg, seed, out, b.records);
        else if (e == "semisup") detail::run_semisup_seed(cfg, seed, out, b.records, semisup_rows);
        else if (e == "dp") detail::run_dp_seed(cfg, seed, out, b.records);
        else if (e == "kbtl") detail::run_kbtl_seed(cfg, seed, out, b.records);
        else detail::run_gen_seed(cfg, seed, out, b.records);
      } catch (const std::exception& ex) {
        b.failures.push_back("seed " + std::to_string(seed) + ": " + ex.what());
      }
    }
    if (e == "semisup") out.write("semisup.csv", detail::kSemisupHeader + semisup_rows);
  }

  b.aggregates = aggregate(b.records);
  std::ostringstream rec, agg;
  write_records_csv(b.records, rec);
  write_aggregates_csv(b.aggregates, agg);
  out.write(e + "_records.csv", rec.str());
  out.write(e + "_aggregates.csv", agg.str());
  b.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  b.files.push_back(out.path("results.json").string());
  std::ofstream(out.path("results.json"), std::ios::binary) << to_json(b).dump(2) << "\n";
  return b;
}

}  // namespace shmbayes::harness
