#pragma once

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "neurocal/cli/commands.hpp"
#include "neurocal/cli/config.hpp"

namespace neurocal::cli {

/// Command-line values; set ones win over the config file.
struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::optional<std::string> out;
  std::optional<std::string> model;
  std::vector<std::string> qois;
  std::optional<std::size_t> count;
  bool no_swc = false;
  std::vector<std::string> inputs;
  std::vector<int> subtree;
  std::optional<std::string> target;
  std::optional<std::string> observed;
  std::optional<std::size_t> particles;
  std::optional<std::size_t> sims_per_param;
  std::optional<std::uint64_t> budget;
  std::optional<double> wall_clock;
  bool resume = false;
  std::optional<std::size_t> base_samples;
  std::vector<std::string> tables;
  std::optional<std::size_t> repetitions;
  std::vector<std::size_t> dims;
  std::vector<std::size_t> sizes;
};

inline void apply(const Overrides& o, RunConfig& c) {
  if (o.seed) c.seed = *o.seed;
  if (o.workers) c.workers = *o.workers;
  if (o.out) c.out = *o.out;
  if (o.model) {
    c.model.kind = parse_model_kind(*o.model);
    c.model.params = default_params(c.model.kind);
    c.model.soma = default_soma(c.model.kind);
    c.model.field = default_field(c.model.kind);
  }
  if (!o.qois.empty()) {
    c.qois.clear();
    for (const auto& q : o.qois) c.qois.push_back(parse_morphometric(q));
  }
  if (o.count) c.simulate.count = *o.count;
  if (o.no_swc) c.simulate.write_swc = false;
  if (!o.inputs.empty()) c.morphometrics.inputs = o.inputs;
  if (!o.subtree.empty()) c.morphometrics.subtree = o.subtree;
  if (o.target) {
    if (c.command == "calibrate") c.calibrate.target = *o.target;
    if (c.command == "sensitivity") c.sensitivity.target = *o.target;
  }
  if (o.observed) c.calibrate.observed = *o.observed;
  if (o.particles) c.calibrate.smc.particles = *o.particles;
  if (o.sims_per_param) {
    c.calibrate.smc.sims_per_param = *o.sims_per_param;
    c.sensitivity.sims_per_param = *o.sims_per_param;
  }
  if (o.budget) c.calibrate.smc.budget = *o.budget;
  if (o.wall_clock) c.calibrate.smc.wall_clock_seconds = *o.wall_clock;
  if (o.resume) c.calibrate.resume = true;
  if (o.base_samples) c.sensitivity.base_samples = *o.base_samples;
  if (o.tables.size() == 2) {
    c.pair.data = o.tables[0];
    c.pair.sim = o.tables[1];
  }
  if (o.repetitions) c.study.repetitions = *o.repetitions;
  if (!o.dims.empty()) c.study.dims = o.dims;
  if (!o.sizes.empty()) c.study.sizes = o.sizes;
}

/// Parses, validates and runs one subcommand; returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Calibration and analysis of agent-based neuron growth models", "neurocal"};
  app.require_subcommand(1);
  Overrides o;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON config file");
    sub->add_option("--seed", o.seed, "master seed");
    sub->add_option("--workers", o.workers, "worker threads");
    sub->add_option("--out", o.out, "output directory");
  };
  auto* simulate = app.add_subcommand("simulate", "grow synthetic neurons, write SWC files and a QoI table");
  common(simulate);
  simulate->add_option("--model", o.model, "model1 | model2");
  simulate->add_option("--count", o.count, "number of neurons");
  simulate->add_option("--qois", o.qois, "morphometrics, e.g. M1 M2");
  simulate->add_flag("--no-swc", o.no_swc, "skip SWC files");

  auto* morpho = app.add_subcommand("morphometrics", "QoI table from SWC files");
  common(morpho);
  morpho->add_option("inputs", o.inputs, "SWC files or directories");
  morpho->add_option("--subtree", o.subtree, "keep only these SWC type codes");
  morpho->add_option("--qois", o.qois, "morphometrics, e.g. M1 M2");

  auto* calibrate = app.add_subcommand("calibrate", "SMC-ABC calibration against an observed QoI table");
  common(calibrate);
  calibrate->add_option("--target", o.target, "growth | toy");
  calibrate->add_option("--model", o.model, "model1 | model2");
  calibrate->add_option("--observed", o.observed, "observed QoI CSV");
  calibrate->add_option("--qois", o.qois, "morphometrics, e.g. M1 M2");
  calibrate->add_option("--particles", o.particles, "number of particles");
  calibrate->add_option("--sims-per-param", o.sims_per_param, "replicates per dataset");
  calibrate->add_option("--budget", o.budget, "simulation budget");
  calibrate->add_option("--wall-clock", o.wall_clock, "stop after this many seconds (resumable)");
  calibrate->add_flag("--resume", o.resume, "continue from checkpoint.json in the output directory");

  auto* sensitivity = app.add_subcommand("sensitivity", "Sobol indices from a Saltelli design");
  common(sensitivity);
  sensitivity->add_option("--target", o.target, "growth | ishigami");
  sensitivity->add_option("--model", o.model, "model1 | model2");
  sensitivity->add_option("--qois", o.qois, "morphometrics, e.g. M1 M2");
  sensitivity->add_option("--base-samples", o.base_samples, "base samples N");
  sensitivity->add_option("--sims-per-param", o.sims_per_param, "replicates per design row");

  auto* pair = app.add_subcommand("pair", "nearest simulated neuron for every data neuron");
  common(pair);
  pair->add_option("tables", o.tables, "data CSV and simulated CSV")->expected(2);

  auto* study = app.add_subcommand("wasserstein-study", "empirical vs closed-form Gaussian Wasserstein error");
  common(study);
  study->add_option("--repetitions", o.repetitions, "repetitions per cell");
  study->add_option("--dims", o.dims, "dimensions");
  study->add_option("--sizes", o.sizes, "sample sizes n = m");

  const Logger log(err);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_ok : exit_validation;
  }
  std::string command;
  for (const auto* sub : app.get_subcommands()) command = sub->get_name();

  RunConfig config;
  try {
    const json j = o.config.empty() ? json::object() : read_config_file(o.config);
    config = parse_config(j, command);
    apply(o, config);
    finalize(config);
  } catch (const std::exception& e) {
    log.error(e.what());
    return exit_validation;
  }
  try {
    return dispatch(config, log);
  } catch (const ConfigurationError& e) {
    log.error(e.what());
    return exit_validation;
  } catch (const FormatError& e) {
    log.error(e.what());
    return exit_validation;
  } catch (const std::exception& e) {
    log.error(e.what());
    return exit_runtime;
  }
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<const char*> argv{"neurocal"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

} // namespace neurocal::cli
