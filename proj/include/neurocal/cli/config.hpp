#pragma once

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "neurocal/errors.hpp"
#include "neurocal/growth.hpp"
#include "neurocal/morphometrics.hpp"
#include "neurocal/parallel.hpp"
#include "neurocal/sensitivity.hpp"
#include "neurocal/smcabc.hpp"
#include "neurocal/study.hpp"

namespace neurocal::cli {

using nlohmann::json;

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"simulate",    "morphometrics", "calibrate",
                                              "sensitivity", "pair",          "wasserstein-study"};
  return names;
}

struct ModelConfig {
  ModelKind kind = ModelKind::model2;
  GrowthParams params = default_params(ModelKind::model2);
  SomaSpec soma = default_soma(ModelKind::model2);
  GuidanceField field = default_field(ModelKind::model2);
};

struct ToyConfig {
  std::size_t dim = 2;
  double rho = 0.2;
};

struct SimulateConfig {
  std::size_t count = 100;
  bool write_swc = true;
  int type_override = 0; ///< 0 keeps the agents' own type codes
};

struct MorphometricsConfig {
  std::vector<std::string> inputs; ///< SWC files or directories of *.swc
  std::vector<int> subtree;        ///< empty keeps the whole reconstruction
};

struct PredictiveConfig {
  bool enabled = true;
  std::size_t sims_per_param = 0; ///< 0 means the sampler's M'
  std::size_t resolution = 256;
  std::size_t bins = 30;
};

struct CalibrateConfig {
  std::string target = "growth"; ///< growth | toy
  std::string observed;
  Prior prior;
  SmcConfig smc;
  ToyConfig toy;
  std::size_t kde_resolution = 512;
  PredictiveConfig predictive;
  bool resume = false;
};

struct SensitivityConfig {
  std::string target = "growth"; ///< growth | ishigami
  ParamSpace space;
  std::size_t base_samples = 256;
  std::size_t sims_per_param = 10;
  std::size_t resamples = 1000;
};

struct PairConfig {
  std::string data;
  std::string sim;
};

struct RunConfig {
  std::string command;
  std::uint64_t seed = 1;
  std::size_t workers = default_workers();
  std::string out = "neurocal-out";
  ModelConfig model;
  std::vector<Morphometric> qois = all_morphometrics();
  SimulateConfig simulate;
  MorphometricsConfig morphometrics;
  CalibrateConfig calibrate;
  SensitivityConfig sensitivity;
  PairConfig pair;
  WassersteinStudyConfig study;
};

inline Prior default_growth_prior() {
  return Prior({"p_bra", "R", "v"}, {0.003, 0.4e-3, 30.0}, {0.1, 1.2e-3, 150.0});
}

inline Prior default_toy_prior(std::size_t dim) {
  std::vector<std::string> names;
  for (std::size_t i = 1; i <= dim; ++i) names.push_back("mu" + std::to_string(i));
  return Prior(names, std::vector<double>(dim, -10.0), std::vector<double>(dim, 10.0));
}

namespace detail {

inline void check_keys(const json& j, const std::string& where, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw ConfigurationError((where.empty() ? "config" : where) + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw ConfigurationError("unknown key '" + (where.empty() ? "" : where + ".") + it.key() + "'");
}

inline std::string key_path(const std::string& where, std::string_view key) {
  return (where.empty() ? "" : where + ".") + std::string(key);
}

template <class T>
T as(const json& v, const std::string& path) {
  auto fail = [&](const char* what) { return ConfigurationError(path + " must be " + what); };
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw fail("a boolean");
    return v.get<bool>();
  } else if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T>) {
    if (!v.is_number_unsigned()) throw fail("a nonnegative integer");
    return v.get<T>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) throw fail("an integer");
    return v.get<T>();
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw fail("a number");
    return v.get<T>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) throw fail("a string");
    return v.get<std::string>();
  } else {
    if (!v.is_array()) throw fail("an array");
    T out;
    for (std::size_t i = 0; i < v.size(); ++i)
      out.push_back(as<typename T::value_type>(v[i], path + "[" + std::to_string(i) + "]"));
    return out;
  }
}

template <class T>
void read(const json& j, const std::string& where, std::string_view key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = as<T>(*it, key_path(where, key));
}

inline Vec3 as_vec3(const json& v, const std::string& path) {
  const auto x = as<std::vector<double>>(v, path);
  if (x.size() != 3) throw ConfigurationError(path + " must have 3 components");
  return {x[0], x[1], x[2]};
}

inline json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

inline void read_params(const json& j, GrowthParams& p) {
  const std::string w = "model.params";
  check_keys(j, w, {"p_bra", "R", "v", "r_min", "r_init", "r0", "walk", "dt", "T", "L_max", "bifurcation_angle",
                    "stub_length", "diameter", "max_agents"});
  read(j, w, "p_bra", p.branch_probability);
  read(j, w, "R", p.consumption);
  read(j, w, "v", p.speed);
  read(j, w, "r_min", p.resource_threshold);
  read(j, w, "r_init", p.initial_resource);
  read(j, w, "r0", p.branch_resource);
  read(j, w, "dt", p.dt);
  read(j, w, "T", p.total_time);
  read(j, w, "L_max", p.max_agent_length);
  read(j, w, "bifurcation_angle", p.bifurcation_angle);
  read(j, w, "stub_length", p.stub_length);
  read(j, w, "diameter", p.diameter);
  read(j, w, "max_agents", p.max_agents);
  if (auto it = j.find("walk"); it != j.end()) {
    check_keys(*it, w + ".walk", {"random", "persistence", "guidance"});
    read(*it, w + ".walk", "random", p.walk.random);
    read(*it, w + ".walk", "persistence", p.walk.persistence);
    read(*it, w + ".walk", "guidance", p.walk.guidance);
  }
}

inline json params_json(const GrowthParams& p) {
  return {{"p_bra", p.branch_probability},
          {"R", p.consumption},
          {"v", p.speed},
          {"r_min", p.resource_threshold},
          {"r_init", p.initial_resource},
          {"r0", p.branch_resource},
          {"walk", {{"random", p.walk.random}, {"persistence", p.walk.persistence}, {"guidance", p.walk.guidance}}},
          {"dt", p.dt},
          {"T", p.total_time},
          {"L_max", p.max_agent_length},
          {"bifurcation_angle", p.bifurcation_angle},
          {"stub_length", p.stub_length},
          {"diameter", p.diameter},
          {"max_agents", p.max_agents}};
}

inline void read_model(const json& j, ModelConfig& m) {
  check_keys(j, "model", {"kind", "params", "soma", "field"});
  if (auto it = j.find("kind"); it != j.end()) m.kind = parse_model_kind(as<std::string>(*it, "model.kind"));
  m.params = default_params(m.kind);
  m.soma = default_soma(m.kind);
  m.field = default_field(m.kind);
  if (auto it = j.find("params"); it != j.end()) read_params(*it, m.params);
  if (auto it = j.find("soma"); it != j.end()) {
    check_keys(*it, "model.soma", {"position", "radius", "neurites"});
    if (auto p = it->find("position"); p != it->end()) m.soma.position = as_vec3(*p, "model.soma.position");
    read(*it, "model.soma", "radius", m.soma.radius);
    if (auto n = it->find("neurites"); n != it->end()) {
      if (!n->is_array()) throw ConfigurationError("model.soma.neurites must be an array");
      m.soma.neurites.clear();
      for (std::size_t i = 0; i < n->size(); ++i) {
        const std::string w = "model.soma.neurites[" + std::to_string(i) + "]";
        const json& e = (*n)[i];
        check_keys(e, w, {"direction", "type"});
        NeuriteSeed s;
        if (auto d = e.find("direction"); d != e.end()) s.direction = as_vec3(*d, w + ".direction");
        read(e, w, "type", s.type_code);
        if (!(s.direction.norm() > 0.0)) throw ConfigurationError(w + ".direction must be nonzero");
        s.direction.normalize();
        m.soma.neurites.push_back(s);
      }
    }
  }
  if (auto it = j.find("field"); it != j.end()) {
    check_keys(*it, "model.field", {"kind", "vector", "amplitude"});
    if (auto k = it->find("kind"); k != it->end()) {
      const auto s = as<std::string>(*k, "model.field.kind");
      if (s == "constant")
        m.field.kind = GuidanceField::Kind::constant_gradient;
      else if (s == "point")
        m.field.kind = GuidanceField::Kind::point_source;
      else
        throw ConfigurationError("model.field.kind must be 'constant' or 'point'");
    }
    if (auto v = it->find("vector"); v != it->end()) m.field.vector = as_vec3(*v, "model.field.vector");
    read(*it, "model.field", "amplitude", m.field.amplitude);
  }
}

inline json model_json(const ModelConfig& m) {
  json neurites = json::array();
  for (const auto& n : m.soma.neurites) neurites.push_back({{"direction", vec3_json(n.direction)}, {"type", n.type_code}});
  return {{"kind", to_string(m.kind)},
          {"params", params_json(m.params)},
          {"soma", {{"position", vec3_json(m.soma.position)}, {"radius", m.soma.radius}, {"neurites", neurites}}},
          {"field",
           {{"kind", m.field.kind == GuidanceField::Kind::constant_gradient ? "constant" : "point"},
            {"vector", vec3_json(m.field.vector)},
            {"amplitude", m.field.amplitude}}}};
}

/// Bounds as an ordered list of {name, lower, upper}.
inline void read_bounds(const json& j, const std::string& where, std::vector<std::string>& names,
                        std::vector<double>& lo, std::vector<double>& hi) {
  if (!j.is_array()) throw ConfigurationError(where + " must be an array of {name, lower, upper}");
  names.clear();
  lo.clear();
  hi.clear();
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string w = where + "[" + std::to_string(i) + "]";
    check_keys(j[i], w, {"name", "lower", "upper"});
    if (!j[i].contains("name") || !j[i].contains("lower") || !j[i].contains("upper"))
      throw ConfigurationError(w + " needs name, lower and upper");
    names.push_back(as<std::string>(j[i]["name"], w + ".name"));
    lo.push_back(as<double>(j[i]["lower"], w + ".lower"));
    hi.push_back(as<double>(j[i]["upper"], w + ".upper"));
  }
}

inline json bounds_json(const std::vector<std::string>& names, const auto& lo, const auto& hi) {
  json out = json::array();
  for (std::size_t i = 0; i < names.size(); ++i)
    out.push_back({{"name", names[i]}, {"lower", lo[static_cast<Eigen::Index>(i)]}, {"upper", hi[static_cast<Eigen::Index>(i)]}});
  return out;
}

inline void read_distance(const json& j, DistanceSpec& d) {
  const std::string w = "calibrate.smc.distance";
  check_keys(j, w, {"kind", "order", "projections", "neighbors", "gamma", "standardize"});
  if (auto it = j.find("kind"); it != j.end()) d.kind = parse_distance_kind(as<std::string>(*it, w + ".kind"));
  read(j, w, "order", d.order);
  read(j, w, "projections", d.projections);
  read(j, w, "neighbors", d.neighbors);
  read(j, w, "gamma", d.gamma);
  read(j, w, "standardize", d.standardize);
}

template <class T>
void read_optional(const json& j, const std::string& where, std::string_view key, std::optional<T>& out) {
  if (auto it = j.find(key); it != j.end()) {
    if (it->is_null())
      out.reset();
    else
      out = as<T>(*it, key_path(where, key));
  }
}

inline void read_smc(const json& j, SmcConfig& s) {
  const std::string w = "calibrate.smc";
  check_keys(j, w, {"particles", "alpha", "sims_per_param", "budget", "hits", "ess_resample_fraction",
                    "epsilon_target", "wall_clock_seconds", "race_cap", "min_acceptance_rate", "distance"});
  read(j, w, "particles", s.particles);
  read(j, w, "alpha", s.alpha);
  read(j, w, "sims_per_param", s.sims_per_param);
  read(j, w, "budget", s.budget);
  read(j, w, "hits", s.hits);
  read(j, w, "ess_resample_fraction", s.ess_resample_fraction);
  read_optional(j, w, "epsilon_target", s.epsilon_target);
  read_optional(j, w, "wall_clock_seconds", s.wall_clock_seconds);
  read(j, w, "race_cap", s.race_cap);
  read_optional(j, w, "min_acceptance_rate", s.min_acceptance_rate);
  if (auto it = j.find("distance"); it != j.end()) read_distance(*it, s.distance);
}

inline json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline json smc_json(const SmcConfig& s) {
  const auto& d = s.distance;
  return {{"particles", s.particles},
          {"alpha", s.alpha},
          {"sims_per_param", s.sims_per_param},
          {"budget", s.budget},
          {"hits", s.hits},
          {"ess_resample_fraction", s.ess_resample_fraction},
          {"epsilon_target", optional_json(s.epsilon_target)},
          {"wall_clock_seconds", optional_json(s.wall_clock_seconds)},
          {"race_cap", s.race_cap},
          {"min_acceptance_rate", optional_json(s.min_acceptance_rate)},
          {"distance",
           {{"kind", to_string(d.kind)},
            {"order", d.order},
            {"projections", d.projections},
            {"neighbors", d.neighbors},
            {"gamma", d.gamma},
            {"standardize", d.standardize}}}};
}

inline void read_calibrate(const json& j, CalibrateConfig& c) {
  const std::string w = "calibrate";
  check_keys(j, w, {"target", "observed", "prior", "smc", "toy", "kde_resolution", "predictive", "resume"});
  read(j, w, "target", c.target);
  read(j, w, "observed", c.observed);
  if (auto it = j.find("toy"); it != j.end()) {
    check_keys(*it, w + ".toy", {"dim", "rho"});
    read(*it, w + ".toy", "dim", c.toy.dim);
    read(*it, w + ".toy", "rho", c.toy.rho);
  }
  if (auto it = j.find("prior"); it != j.end()) {
    std::vector<std::string> names;
    std::vector<double> lo, hi;
    read_bounds(*it, w + ".prior", names, lo, hi);
    c.prior = Prior(names, lo, hi);
  }
  if (auto it = j.find("smc"); it != j.end()) read_smc(*it, c.smc);
  read(j, w, "kde_resolution", c.kde_resolution);
  if (auto it = j.find("predictive"); it != j.end()) {
    const std::string pw = w + ".predictive";
    check_keys(*it, pw, {"enabled", "sims_per_param", "resolution", "bins"});
    read(*it, pw, "enabled", c.predictive.enabled);
    read(*it, pw, "sims_per_param", c.predictive.sims_per_param);
    read(*it, pw, "resolution", c.predictive.resolution);
    read(*it, pw, "bins", c.predictive.bins);
  }
  read(j, w, "resume", c.resume);
}

inline void read_sensitivity(const json& j, SensitivityConfig& s) {
  const std::string w = "sensitivity";
  check_keys(j, w, {"target", "space", "base_samples", "sims_per_param", "resamples"});
  read(j, w, "target", s.target);
  if (auto it = j.find("space"); it != j.end()) read_bounds(*it, w + ".space", s.space.names, s.space.lower, s.space.upper);
  read(j, w, "base_samples", s.base_samples);
  read(j, w, "sims_per_param", s.sims_per_param);
  read(j, w, "resamples", s.resamples);
}

} // namespace detail

/// Strict reader: every key must be known. Sections of other subcommands
/// are validated too, so one file can drive a whole pipeline.
inline RunConfig parse_config(const json& j, const std::string& command) {
  using namespace detail;
  if (std::find(command_names().begin(), command_names().end(), command) == command_names().end())
    throw ConfigurationError("unknown command '" + command + "'");
  check_keys(j, "", {"seed", "workers", "out", "model", "qois", "simulate", "morphometrics", "calibrate", "sensitivity",
                     "pair", "wasserstein_study"});
  RunConfig c;
  c.command = command;
  read(j, "", "seed", c.seed);
  read(j, "", "workers", c.workers);
  read(j, "", "out", c.out);
  if (auto it = j.find("model"); it != j.end()) read_model(*it, c.model);
  if (auto it = j.find("qois"); it != j.end()) {
    c.qois.clear();
    for (const auto& id : as<std::vector<std::string>>(*it, "qois")) c.qois.push_back(parse_morphometric(id));
  }
  if (auto it = j.find("simulate"); it != j.end()) {
    check_keys(*it, "simulate", {"count", "write_swc", "type_override"});
    read(*it, "simulate", "count", c.simulate.count);
    read(*it, "simulate", "write_swc", c.simulate.write_swc);
    read(*it, "simulate", "type_override", c.simulate.type_override);
  }
  if (auto it = j.find("morphometrics"); it != j.end()) {
    check_keys(*it, "morphometrics", {"inputs", "subtree"});
    read(*it, "morphometrics", "inputs", c.morphometrics.inputs);
    read(*it, "morphometrics", "subtree", c.morphometrics.subtree);
  }
  if (auto it = j.find("calibrate"); it != j.end()) read_calibrate(*it, c.calibrate);
  if (auto it = j.find("sensitivity"); it != j.end()) read_sensitivity(*it, c.sensitivity);
  if (auto it = j.find("pair"); it != j.end()) {
    check_keys(*it, "pair", {"data", "sim"});
    read(*it, "pair", "data", c.pair.data);
    read(*it, "pair", "sim", c.pair.sim);
  }
  if (auto it = j.find("wasserstein_study"); it != j.end()) {
    const std::string w = "wasserstein_study";
    check_keys(*it, w, {"dims", "sizes", "repetitions", "rho", "shift", "order"});
    read(*it, w, "dims", c.study.dims);
    read(*it, w, "sizes", c.study.sizes);
    read(*it, w, "repetitions", c.study.repetitions);
    read(*it, w, "rho", c.study.rho);
    read(*it, w, "shift", c.study.shift);
    read(*it, w, "order", c.study.order);
  }
  return c;
}

inline json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigurationError("cannot read config file '" + path + "'");
  try {
    return json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigurationError("config file '" + path + "' is not valid JSON: " + e.what());
  }
}

/// Fills defaults that depend on other settings and checks the sections the
/// command will use.
inline void finalize(RunConfig& c) {
  if (c.workers == 0) throw ConfigurationError("workers must be >= 1");
  if (c.out.empty()) throw ConfigurationError("output directory must not be empty");
  if (c.qois.empty()) throw ConfigurationError("qois must select at least one morphometric");
  c.model.params.validate();
  c.model.soma.validate();
  if (c.command == "simulate") {
    if (c.simulate.count == 0) throw ConfigurationError("simulate.count must be >= 1");
  } else if (c.command == "morphometrics") {
    if (c.morphometrics.inputs.empty()) throw ConfigurationError("morphometrics.inputs lists no SWC files");
  } else if (c.command == "calibrate") {
    auto& k = c.calibrate;
    if (k.target != "growth" && k.target != "toy") throw ConfigurationError("calibrate.target must be 'growth' or 'toy'");
    if (k.observed.empty()) throw ConfigurationError("calibrate.observed names no QoI table");
    if (k.toy.dim == 0) throw ConfigurationError("calibrate.toy.dim must be >= 1");
    if (k.prior.names.empty()) k.prior = k.target == "growth" ? default_growth_prior() : default_toy_prior(k.toy.dim);
    k.smc.workers = c.workers;
    k.smc.validate();
    if (k.kde_resolution < 2) throw ConfigurationError("calibrate.kde_resolution must be >= 2");
    if (k.predictive.sims_per_param == 0) k.predictive.sims_per_param = k.smc.sims_per_param;
    if (k.predictive.resolution < 2 || k.predictive.bins == 0)
      throw ConfigurationError("calibrate.predictive needs resolution >= 2 and bins >= 1");
  } else if (c.command == "sensitivity") {
    auto& s = c.sensitivity;
    if (s.target != "growth" && s.target != "ishigami")
      throw ConfigurationError("sensitivity.target must be 'growth' or 'ishigami'");
    if (s.space.names.empty()) s.space = s.target == "growth" ? ParamSpace::growth_default() : ParamSpace::ishigami();
    s.space.validate();
    if (s.base_samples == 0) throw ConfigurationError("sensitivity.base_samples must be >= 1");
    if (s.sims_per_param == 0) throw ConfigurationError("sensitivity.sims_per_param must be >= 1");
    if (s.resamples < 2) throw ConfigurationError("sensitivity.resamples must be >= 2");
  } else if (c.command == "pair") {
    if (c.pair.data.empty() || c.pair.sim.empty()) throw ConfigurationError("pair needs both data and sim tables");
  } else if (c.command == "wasserstein-study") {
    c.study.validate();
  }
}

/// Fully resolved config of the command: common keys plus its own section.
/// The output directory is left out since the file lives inside it.
inline json to_json(const RunConfig& c) {
  using namespace detail;
  json j;
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  json q = json::array();
  for (auto m : c.qois) q.push_back(morphometric_id(m));
  const bool growth = c.command == "simulate" || (c.command == "calibrate" && c.calibrate.target == "growth") ||
                      (c.command == "sensitivity" && c.sensitivity.target == "growth");
  if (growth) j["model"] = model_json(c.model);
  if (growth || c.command == "morphometrics") j["qois"] = q;
  if (c.command == "simulate") {
    j["simulate"] = {{"count", c.simulate.count}, {"write_swc", c.simulate.write_swc},
                     {"type_override", c.simulate.type_override}};
  } else if (c.command == "morphometrics") {
    j["morphometrics"] = {{"inputs", c.morphometrics.inputs}, {"subtree", c.morphometrics.subtree}};
  } else if (c.command == "calibrate") {
    const auto& k = c.calibrate;
    j["calibrate"] = {{"target", k.target},
                      {"observed", k.observed},
                      {"prior", bounds_json(k.prior.names, k.prior.lower, k.prior.upper)},
                      {"smc", smc_json(k.smc)},
                      {"toy", {{"dim", k.toy.dim}, {"rho", k.toy.rho}}},
                      {"kde_resolution", k.kde_resolution},
                      {"predictive",
                       {{"enabled", k.predictive.enabled},
                        {"sims_per_param", k.predictive.sims_per_param},
                        {"resolution", k.predictive.resolution},
                        {"bins", k.predictive.bins}}},
                      {"resume", k.resume}};
  } else if (c.command == "sensitivity") {
    const auto& s = c.sensitivity;
    j["sensitivity"] = {{"target", s.target},
                        {"space", bounds_json(s.space.names, s.space.lower, s.space.upper)},
                        {"base_samples", s.base_samples},
                        {"sims_per_param", s.sims_per_param},
                        {"resamples", s.resamples}};
  } else if (c.command == "pair") {
    j["pair"] = {{"data", c.pair.data}, {"sim", c.pair.sim}};
  } else if (c.command == "wasserstein-study") {
    j["wasserstein_study"] = {{"dims", c.study.dims},   {"sizes", c.study.sizes}, {"repetitions", c.study.repetitions},
                              {"rho", c.study.rho},     {"shift", c.study.shift}, {"order", c.study.order}};
  }
  return j;
}

} // namespace neurocal::cli
