#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "neurocal/cli/config.hpp"
#include "neurocal/errors.hpp"
#include "neurocal/models.hpp"
#include "neurocal/morphometrics.hpp"
#include "neurocal/parallel.hpp"
#include "neurocal/posterior.hpp"
#include "neurocal/sensitivity.hpp"
#include "neurocal/smcabc.hpp"
#include "neurocal/study.hpp"
#include "neurocal/swc.hpp"

namespace neurocal::cli {

namespace fs = std::filesystem;

enum ExitCode : int { exit_ok = 0, exit_validation = 1, exit_runtime = 2, exit_partial = 3 };

/// Output the process could not write.
class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };

/// NEUROCAL_LOG = error | warn | info | debug (default info).
inline LogLevel log_level_from_env() {
  const char* v = std::getenv("NEUROCAL_LOG");
  if (!v) return LogLevel::info;
  const std::string s(v);
  if (s == "error" || s == "quiet") return LogLevel::error;
  if (s == "warn") return LogLevel::warn;
  if (s == "debug") return LogLevel::debug;
  return LogLevel::info;
}

class Logger {
public:
  explicit Logger(std::ostream& out = std::cerr, LogLevel level = log_level_from_env()) : out_(&out), level_(level) {}

  void log(LogLevel l, const std::string& msg) const {
    static const char* tags[] = {"error", "warn", "info", "debug"};
    if (l <= level_) *out_ << "neurocal: " << tags[static_cast<int>(l)] << ": " << msg << '\n';
  }
  void error(const std::string& m) const { log(LogLevel::error, m); }
  void warn(const std::string& m) const { log(LogLevel::warn, m); }
  void info(const std::string& m) const { log(LogLevel::info, m); }
  void debug(const std::string& m) const { log(LogLevel::debug, m); }

private:
  std::ostream* out_;
  LogLevel level_;
};

/// Run directory. Files are written through a temporary and renamed, and
/// every relative path is recorded for the manifest.
class OutputDir {
public:
  explicit OutputDir(const std::string& root) : root_(root) {
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec || !fs::is_directory(root_)) throw IoError("cannot create output directory '" + root + "'");
  }

  fs::path path(const std::string& rel) const { return root_ / rel; }

  void write(const std::string& rel, const std::string& content) {
    const fs::path target = path(rel);
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
    const fs::path tmp = target.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out << content;
      if (!out.flush()) throw IoError("cannot write '" + target.string() + "'");
    }
    fs::rename(tmp, target, ec);
    if (ec) throw IoError("cannot write '" + target.string() + "': " + ec.message());
    record(rel);
  }

  void record(const std::string& rel) {
    if (std::find(files_.begin(), files_.end(), rel) == files_.end()) files_.push_back(rel);
  }

  std::vector<std::string> files() const {
    auto f = files_;
    std::sort(f.begin(), f.end());
    return f;
  }

private:
  fs::path root_;
  std::vector<std::string> files_;
};

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

inline void write_config_and_manifest(OutputDir& out, const RunConfig& c, json extra = json::object()) {
  out.write("config.resolved.json", dump(to_json(c)));
  json m;
  m["command"] = c.command;
  m["seed"] = c.seed;
  m["workers"] = c.workers;
  m["config"] = "config.resolved.json";
  m["reproduce"] = "neurocal " + c.command + " --config config.resolved.json --out DIR";
  out.record("manifest.json");
  m["outputs"] = out.files();
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
  out.write("manifest.json", dump(m));
}

inline std::string csv_text(const QoIMatrix& m) {
  std::ostringstream s;
  write_csv(s, m);
  return s.str();
}

inline QoIMatrix load_qoi_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("cannot read QoI table '" + path + "'");
  try {
    return read_csv(in);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

/// Columns of `m` in the order of `names`.
inline QoIMatrix select_columns(const QoIMatrix& m, const std::vector<std::string>& names, const std::string& source) {
  Eigen::MatrixXd v(m.rows(), static_cast<Eigen::Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) {
    const auto it = std::find(m.columns.begin(), m.columns.end(), names[j]);
    if (it == m.columns.end()) throw ConfigurationError(source + " has no column '" + names[j] + "'");
    v.col(static_cast<Eigen::Index>(j)) = m.values.col(it - m.columns.begin());
  }
  return {names, std::move(v)};
}

/// Quantile with linear interpolation between order statistics.
inline double interpolated_quantile(const std::vector<double>& sorted, double q) {
  const double h = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// One line per QoI: mean, std, min, quartiles, max.
inline std::string describe(const QoIMatrix& m) {
  std::ostringstream s;
  s << "qoi,count,mean,std,min,q25,median,q75,max\n";
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    std::vector<double> x(m.values.col(j).data(), m.values.col(j).data() + m.rows());
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double mean = 0.0, var = 0.0;
    for (double v : x) mean += v / n;
    for (double v : x) var += (v - mean) * (v - mean);
    const double sd = x.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
    s << m.columns[static_cast<std::size_t>(j)] << ',' << x.size();
    for (double v : {mean, sd, x.front(), interpolated_quantile(x, 0.25), interpolated_quantile(x, 0.5),
                     interpolated_quantile(x, 0.75), x.back()})
      s << ',' << format_double(v);
    s << '\n';
  }
  return s.str();
}

inline std::string neuron_file_name(std::size_t i, std::size_t count) {
  const std::size_t width = std::max<std::size_t>(5, std::to_string(count - 1).size());
  std::string id = std::to_string(i);
  return "swc/neuron_" + std::string(width - id.size(), '0') + id + ".swc";
}

inline int cmd_simulate(const RunConfig& c, const Logger& log) {
  OutputDir out(c.out);
  const auto& s = c.simulate;
  const auto& m = c.model;
  log.info("simulating " + std::to_string(s.count) + " " + to_string(m.kind) + " neurons");
  Eigen::MatrixXd values(static_cast<Eigen::Index>(s.count), static_cast<Eigen::Index>(c.qois.size()));
  std::vector<std::string> swc(s.write_swc ? s.count : 0);
  std::vector<char> truncated(s.count, 0);
  parallel_for(s.count, c.workers, [&](std::size_t i) {
    const NeuronTree tree = neurocal::simulate(m.kind, m.soma, m.params, m.field, stream_key(c.seed, i));
    const auto q = extract(tree, c.qois);
    for (std::size_t j = 0; j < q.values.size(); ++j)
      values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = q.values[j];
    if (s.write_swc) swc[i] = write_swc(tree, s.type_override);
    truncated[i] = tree.truncated;
  });
  for (std::size_t i = 0; i < swc.size(); ++i) out.write(neuron_file_name(i, s.count), swc[i]);
  const QoIMatrix table(column_labels(c.qois), std::move(values));
  out.write("qoi.csv", csv_text(table));
  out.write("summary.csv", describe(table));
  const auto n_truncated = static_cast<std::size_t>(std::count(truncated.begin(), truncated.end(), 1));
  if (n_truncated > 0) log.warn(std::to_string(n_truncated) + " neurons hit max_agents and were truncated");
  write_config_and_manifest(out, c, {{"neurons", s.count}, {"truncated", n_truncated}});
  return exit_ok;
}

/// Files named directly plus the *.swc entries of named directories, sorted.
inline std::vector<std::string> expand_inputs(const std::vector<std::string>& inputs) {
  std::vector<std::string> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<std::string> dir;
      for (const auto& e : fs::directory_iterator(in))
        if (e.is_regular_file() && e.path().extension() == ".swc") dir.push_back(e.path().string());
      std::sort(dir.begin(), dir.end());
      files.insert(files.end(), dir.begin(), dir.end());
    } else {
      files.push_back(in);
    }
  }
  return files;
}

inline std::string csv_cell(std::string s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"') q += '"';
    q += ch == '\n' ? ' ' : ch;
  }
  return q + "\"";
}

inline int cmd_morphometrics(const RunConfig& c, const Logger& log) {
  const auto files = expand_inputs(c.morphometrics.inputs);
  if (files.empty()) throw ConfigurationError("no SWC files found in the given inputs");
  const std::set<int> codes(c.morphometrics.subtree.begin(), c.morphometrics.subtree.end());
  std::vector<std::vector<double>> rows;
  std::ostringstream report;
  report << "file,status,trees,first_row,detail\n";
  std::size_t failed = 0;
  for (const auto& f : files) {
    std::string detail;
    std::vector<NeuronTree> trees;
    std::ifstream in(f);
    if (!in) {
      detail = "cannot read file";
    } else {
      auto parsed = parse_swc(in);
      if (!parsed.report.accepted()) {
        detail = parsed.report.summary();
        while (!detail.empty() && detail.back() == '\n') detail.pop_back();
        std::replace(detail.begin(), detail.end(), '\n', ';');
      } else {
        try {
          for (auto& t : parsed.trees) trees.push_back(codes.empty() ? std::move(t) : select_subtree(t, codes));
        } catch (const ConfigurationError& e) {
          trees.clear();
          detail = e.what();
        }
      }
    }
    if (!detail.empty()) {
      ++failed;
      log.warn(f + ": " + detail);
      report << csv_cell(f) << ",rejected,0,," << csv_cell(detail) << '\n';
      continue;
    }
    report << csv_cell(f) << ",ok," << trees.size() << ',' << rows.size() << ",\n";
    for (const auto& t : trees) rows.push_back(extract(t, c.qois).values);
  }
  OutputDir out(c.out);
  out.write("report.csv", report.str());
  if (failed == files.size()) {
    log.error("all " + std::to_string(files.size()) + " input files were rejected");
    write_config_and_manifest(out, c, {{"files", files.size()}, {"rejected", failed}});
    return exit_validation;
  }
  Eigen::MatrixXd values(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(c.qois.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < c.qois.size(); ++j)
      values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  out.write("qoi.csv", csv_text(QoIMatrix(column_labels(c.qois), std::move(values))));
  write_config_and_manifest(out, c, {{"files", files.size()}, {"rejected", failed}, {"rows", rows.size()}});
  return exit_ok;
}

/// Stream counter of the posterior predictive simulations.
inline constexpr std::uint64_t kPredictiveStream = 0x70726564;

/// Config that must match for a checkpoint to be resumed.
inline json resume_key(const RunConfig& c) {
  json j = to_json(c);
  j.erase("workers");
  auto& k = j["calibrate"];
  k.erase("resume");
  k.erase("kde_resolution");
  k.erase("predictive");
  k["smc"].erase("wall_clock_seconds");
  return j;
}

inline std::string particles_csv(const std::vector<Particle>& ps, const std::vector<std::string>& names) {
  std::ostringstream s;
  s << "particle";
  for (const auto& n : names) s << ',' << n;
  s << ",weight,distance\n";
  for (std::size_t k = 0; k < ps.size(); ++k) {
    s << k;
    for (Eigen::Index j = 0; j < ps[k].theta.size(); ++j) s << ',' << format_double(ps[k].theta[j]);
    s << ',' << format_double(ps[k].weight) << ',' << format_double(ps[k].distance) << '\n';
  }
  return s.str();
}

template <SimulationModel M>
int run_calibration(const RunConfig& c, const M& model, const QoIMatrix& observed, const Logger& log) {
  const auto& k = c.calibrate;
  OutputDir out(c.out);
  const auto names = k.prior.names;
  const json key = resume_key(c);

  SmcState restored;
  bool resuming = false;
  if (k.resume && fs::exists(out.path("checkpoint.json"))) {
    json cp;
    {
      std::ifstream in(out.path("checkpoint.json"));
      try {
        cp = json::parse(in);
      } catch (const json::parse_error& e) {
        throw FormatError(std::string("checkpoint.json is not valid JSON: ") + e.what());
      }
    }
    if (!cp.contains("config") || cp["config"] != key)
      throw ConfigurationError("checkpoint.json was written by a different configuration");
    restored = state_from_json(cp.at("state"));
    resuming = true;
    log.info("resuming after iteration " + std::to_string(restored.records.size() - 1));
  } else if (k.resume) {
    log.info("no checkpoint found; starting a fresh run");
  }

  // The trace on disk always mirrors the records of the last checkpoint.
  const fs::path trace_path = out.path("trace.jsonl");
  {
    std::ofstream t(trace_path, std::ios::trunc);
    if (!t) throw IoError("cannot write '" + trace_path.string() + "'");
    for (const auto& r : restored.records) t << to_json(r).dump() << '\n';
  }
  out.record("trace.jsonl");
  std::ofstream trace(trace_path, std::ios::app);

  SmcHooks hooks;
  if (resuming) hooks.resume = &restored;
  hooks.on_iteration = [&](const SmcState& s) {
    const auto& r = s.records.back();
    trace << to_json(r).dump() << '\n';
    trace.flush();
    if (!trace) throw IoError("cannot append to trace.jsonl");
    out.write("checkpoint.json", json{{"config", key}, {"state", to_json(s)}}.dump() + "\n");
    log.info("iteration " + std::to_string(r.iteration) + ": epsilon " + format_double(r.epsilon) + ", ess " +
             format_double(r.ess) + ", simulations " + std::to_string(r.cumulative_simulations));
  };
  const SmcState state = run_smcabc(k.prior, model, observed, k.smc, c.seed, hooks);
  trace.close();
  log.info("stopped: " + to_string(state.stop));

  out.write("particles.csv", particles_csv(state.particles, names));
  const auto w = state.weights();
  std::ostringstream summary;
  summary << "parameter,mean,std,q05,q50,q95,ess,kde_bandwidth\n";
  std::ostringstream kde;
  kde << "parameter,x,density\n";
  const auto marginals = kde_marginals(state.particles, names, k.kde_resolution);
  for (std::size_t j = 0; j < names.size(); ++j) {
    std::vector<double> x;
    for (const auto& p : state.particles) x.push_back(p.theta[static_cast<Eigen::Index>(j)]);
    const auto mo = weighted_moments(x, w);
    summary << names[j] << ',' << format_double(mo.mean) << ',' << format_double(mo.stddev) << ','
            << format_double(weighted_quantile(x, w, 0.05)) << ',' << format_double(weighted_quantile(x, w, 0.5)) << ','
            << format_double(weighted_quantile(x, w, 0.95)) << ',' << format_double(mo.ess) << ','
            << format_double(marginals[j].bandwidth) << '\n';
    const auto& mg = marginals[j];
    if (mg.degenerate) log.warn("posterior of " + names[j] + " collapsed to a single value; no KDE written");
    for (std::size_t g = 0; g < mg.grid.size(); ++g)
      kde << names[j] << ',' << format_double(mg.grid[g]) << ',' << format_double(mg.density[g]) << '\n';
  }
  out.write("posterior_summary.csv", summary.str());
  out.write("kde.csv", kde.str());

  if (k.predictive.enabled) {
    const auto pc = predictive_check(state.particles, model, observed, k.predictive.sims_per_param,
                                     stream_key(c.seed, kPredictiveStream), c.workers, k.predictive.resolution,
                                     k.predictive.bins);
    std::ostringstream ps, pk, ph;
    ps << "qoi,data_mean,data_std,sim_mean,sim_std,bandwidth\n";
    pk << "qoi,x,data_density,sim_density\n";
    ph << "qoi,left,right,data_density\n";
    for (const auto& q : pc.qois) {
      ps << q.qoi << ',' << format_double(q.data_mean) << ',' << format_double(q.data_std) << ','
         << format_double(q.sim_mean) << ',' << format_double(q.sim_std) << ',' << format_double(q.bandwidth) << '\n';
      for (std::size_t g = 0; g < q.grid.size(); ++g)
        pk << q.qoi << ',' << format_double(q.grid[g]) << ',' << format_double(q.data_density[g]) << ','
           << format_double(q.sim_density[g]) << '\n';
      for (std::size_t b = 0; b < q.hist_density.size(); ++b)
        ph << q.qoi << ',' << format_double(q.hist_edges[b]) << ',' << format_double(q.hist_edges[b + 1]) << ','
           << format_double(q.hist_density[b]) << '\n';
    }
    out.write("predictive_summary.csv", ps.str());
    out.write("predictive_kde.csv", pk.str());
    out.write("predictive_hist.csv", ph.str());
    out.write("predictive_sims.csv", csv_text(QoIMatrix(observed.columns, pc.simulated)));
  }

  json extra{{"stop", to_string(state.stop)},
             {"iterations", state.records.size()},
             {"simulations", state.simulations()},
             {"final_epsilon", std::isfinite(state.epsilon()) ? json(state.epsilon()) : json(nullptr)},
             {"notes", json::array()}};
  if (k.smc.distance.standardize)
    extra["notes"].push_back("QoI columns are divided by the observed per-column std before every distance");
  extra["notes"].push_back("simulations count model replicates; one dataset costs sims_per_param of them");
  write_config_and_manifest(out, c, extra);
  return state.stop == StopReason::wall_clock ? exit_partial : exit_ok;
}

inline int cmd_calibrate(const RunConfig& c, const Logger& log) {
  const auto& k = c.calibrate;
  const QoIMatrix raw = load_qoi_csv(k.observed);
  if (k.target == "toy") {
    const ToyGaussianModel model(static_cast<Eigen::Index>(k.toy.dim), k.toy.rho);
    if (k.prior.names != model.parameter_names())
      throw ConfigurationError("toy prior must name the mean coordinates mu1..mu" + std::to_string(k.toy.dim));
    return run_calibration(c, model, select_columns(raw, model.qoi_names(), k.observed), log);
  }
  const GrowthModel model(c.model.kind, c.model.params, c.model.soma, c.model.field, k.prior.names, c.qois);
  return run_calibration(c, model, select_columns(raw, model.qoi_names(), k.observed), log);
}

template <SimulationModel M>
int run_sensitivity(const RunConfig& c, const M& model, const Logger& log) {
  const auto& s = c.sensitivity;
  OutputDir out(c.out);
  log.info("Saltelli design with " + std::to_string(s.base_samples) + " base samples");
  const auto run = run_sa(model, s.space, s.base_samples, s.sims_per_param, c.seed, c.workers, s.resamples);
  for (const auto& w : run.result.warnings) log.warn(w);
  std::ostringstream raw, idx;
  write_raw_csv(raw, run);
  write_indices_csv(idx, run.result);
  out.write("raw.csv", raw.str());
  out.write("indices.csv", idx.str());
  json extra{{"base_samples", run.design.base},
             {"design_rows", run.design.rows.rows()},
             {"warnings", run.result.warnings},
             {"notes",
              {"outputs are replicate means standardized per QoI before estimation",
               "S1: Saltelli estimator averaged over the AB and BA blocks; S_tot: Jansen estimator, same symmetrization",
               "confidence half-widths: 1.96 bootstrap standard deviations over base samples",
               "all rows of a base block share replicate seeds (common random numbers)"}}};
  write_config_and_manifest(out, c, extra);
  return exit_ok;
}

inline int cmd_sensitivity(const RunConfig& c, const Logger& log) {
  if (c.sensitivity.target == "ishigami") return run_sensitivity(c, IshigamiModel(), log);
  const GrowthModel model(c.model.kind, c.model.params, c.model.soma, c.model.field, c.sensitivity.space.names, c.qois);
  return run_sensitivity(c, model, log);
}

inline int cmd_pair(const RunConfig& c, const Logger& log) {
  const QoIMatrix data = load_qoi_csv(c.pair.data), sim = load_qoi_csv(c.pair.sim);
  const auto pairs = pair_neurons(data, sim);
  OutputDir out(c.out);
  std::ostringstream s;
  s << "data_id,sim_id,distance\n";
  for (const auto& p : pairs) s << p.data_index << ',' << p.sim_index << ',' << format_double(p.distance) << '\n';
  out.write("pairs.csv", s.str());
  log.info("paired " + std::to_string(pairs.size()) + " data rows");
  write_config_and_manifest(out, c, {{"pairs", pairs.size()}});
  return exit_ok;
}

inline int cmd_wasserstein_study(const RunConfig& c, const Logger& log) {
  OutputDir out(c.out);
  const auto study = run_wasserstein_study(c.study, c.seed, c.workers);
  std::ostringstream samples, summary;
  samples << "dim,n,repetition,empirical,reference,relative_error\n";
  for (const auto& s : study.samples)
    samples << s.dim << ',' << s.size << ',' << s.repetition << ',' << format_double(s.empirical) << ','
            << format_double(s.reference) << ',' << format_double(s.relative_error) << '\n';
  summary << "dim,n,median_relative_error\n";
  for (const auto& cell : study.cells) {
    summary << cell.dim << ',' << cell.size << ',' << format_double(cell.median_relative_error) << '\n';
    log.info("dim " + std::to_string(cell.dim) + ", n = m = " + std::to_string(cell.size) +
             ": median relative error " + format_double(cell.median_relative_error));
  }
  out.write("samples.csv", samples.str());
  out.write("summary.csv", summary.str());
  write_config_and_manifest(out, c);
  return exit_ok;
}

inline int dispatch(const RunConfig& c, const Logger& log) {
  if (c.command == "simulate") return cmd_simulate(c, log);
  if (c.command == "morphometrics") return cmd_morphometrics(c, log);
  if (c.command == "calibrate") return cmd_calibrate(c, log);
  if (c.command == "sensitivity") return cmd_sensitivity(c, log);
  if (c.command == "pair") return cmd_pair(c, log);
  if (c.command == "wasserstein-study") return cmd_wasserstein_study(c, log);
  throw ConfigurationError("unknown command '" + c.command + "'");
}

} // namespace neurocal::cli
