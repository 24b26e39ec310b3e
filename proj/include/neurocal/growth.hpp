#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <boost/container/small_vector.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "neurocal/errors.hpp"
#include "neurocal/random.hpp"

namespace neurocal {

using Vec3 = Eigen::Vector3d;
using AgentId = std::int32_t;

/// Parent id of agents attached directly to the soma.
inline constexpr AgentId kSoma = -1;

enum class ModelKind {
  model1, ///< symmetric bifurcation, only tips consume resource
  model2, ///< asymmetric side branching, every agent consumes resource
};

inline std::string to_string(ModelKind kind) { return kind == ModelKind::model1 ? "model1" : "model2"; }

inline ModelKind parse_model_kind(const std::string& name) {
  if (name == "model1") return ModelKind::model1;
  if (name == "model2") return ModelKind::model2;
  throw ConfigurationError("unknown growth model '" + name + "'");
}

struct NeuriteSeed {
  Vec3 direction = Vec3::UnitZ();
  int type_code = 3;
};

struct SomaSpec {
  Vec3 position = Vec3::Zero();
  double radius = 10.0;
  std::vector<NeuriteSeed> neurites;

  void validate() const {
    if (!(radius > 0.0) || !std::isfinite(radius)) throw ConfigurationError("soma radius must be positive");
    if (!position.allFinite()) throw ConfigurationError("soma position must be finite");
    if (neurites.empty()) throw ConfigurationError("soma needs at least one initial neurite");
    for (const auto& n : neurites) {
      if (std::abs(n.direction.norm() - 1.0) > 1e-9)
        throw ConfigurationError("initial neurite directions must have unit length");
    }
  }
};

/// Cylindrical compartment of a neurite.
struct Agent {
  AgentId id = 0;
  AgentId parent = kSoma;
  Vec3 start = Vec3::Zero();
  Vec3 end = Vec3::Zero();
  double diameter = 1.0;
  double resource = 0.0;
  int type_code = 3;
  // Simulated trees never exceed two daughters; parsed reconstructions may.
  boost::container::small_vector<AgentId, 2> daughters;

  double length() const { return (end - start).norm(); }
  bool is_tip() const { return daughters.empty(); }

  Vec3 direction() const {
    const Vec3 d = end - start;
    const double n = d.norm();
    return n > 0.0 ? Vec3(d / n) : Vec3::Zero();
  }

  void replace_daughter(AgentId old_id, AgentId new_id) {
    std::replace(daughters.begin(), daughters.end(), old_id, new_id);
  }
};

/// Rooted tree of agents hanging off a spherical soma. Agent ids are dense
/// indices into `agents`.
struct NeuronTree {
  SomaSpec soma;
  std::vector<Agent> agents;
  std::vector<AgentId> roots;
  /// Set when a simulation stopped early because it hit the agent limit.
  bool truncated = false;

  bool empty() const { return agents.empty(); }

  AgentId add_agent(Agent a) {
    a.id = static_cast<AgentId>(agents.size());
    agents.push_back(std::move(a));
    return agents.back().id;
  }

  std::vector<AgentId> tips() const {
    std::vector<AgentId> out;
    for (const auto& a : agents)
      if (a.is_tip()) out.push_back(a.id);
    return out;
  }

  double total_length() const {
    double sum = 0.0;
    for (const auto& a : agents) sum += a.length();
    return sum;
  }

  /// Structural problems; empty for a valid tree.
  std::vector<std::string> problems(std::size_t max_daughters = 2) const {
    std::vector<std::string> out;
    const auto n = static_cast<AgentId>(agents.size());
    auto valid = [&](AgentId id) { return id >= 0 && id < n; };
    for (const auto& a : agents) {
      const std::string tag = "agent " + std::to_string(a.id);
      if (a.id < 0 || a.id >= n || agents[static_cast<std::size_t>(a.id)].id != a.id) out.push_back(tag + ": bad id");
      if (a.daughters.size() > max_daughters) out.push_back(tag + ": too many daughters");
      if (a.parent == kSoma) {
        if (std::find(roots.begin(), roots.end(), a.id) == roots.end()) out.push_back(tag + ": root not registered");
      } else if (!valid(a.parent)) {
        out.push_back(tag + ": missing parent");
        continue;
      } else {
        const Agent& mother = agents[static_cast<std::size_t>(a.parent)];
        if (std::find(mother.daughters.begin(), mother.daughters.end(), a.id) == mother.daughters.end())
          out.push_back(tag + ": not listed by its parent");
        if ((mother.end - a.start).norm() > 1e-9) out.push_back(tag + ": start differs from parent end");
      }
      for (AgentId d : a.daughters)
        if (!valid(d) || agents[static_cast<std::size_t>(d)].parent != a.id) out.push_back(tag + ": bad daughter link");
      // Parent chains must reach the soma within n hops.
      AgentId cur = a.parent;
      for (AgentId hops = 0; cur != kSoma; ++hops) {
        if (!valid(cur) || hops > n) {
          out.push_back(tag + ": cycle or broken ancestry");
          break;
        }
        cur = agents[static_cast<std::size_t>(cur)].parent;
      }
    }
    for (AgentId r : roots)
      if (!valid(r) || agents[static_cast<std::size_t>(r)].parent != kSoma) out.push_back("bad root " + std::to_string(r));
    return out;
  }
};

struct WalkWeights {
  double random = 0.3;      ///< w1, uniform noise in [-1,1]^3
  double persistence = 0.7; ///< w2, current orientation
  double guidance = 0.15;   ///< w3, normalized cue gradient
};

/// Parameters of both growth models. Rates are per time step of length dt;
/// elongation per step is speed * dt.
struct GrowthParams {
  double branch_probability = 0.038; ///< p_bra
  double consumption = 0.71e-3;      ///< R
  double speed = 100.0;              ///< v, um per time unit
  double resource_threshold = 0.5;   ///< r_min
  double initial_resource = 1.0;     ///< resource of soma-attached neurites
  double branch_resource = 0.51;     ///< r0, Model 2 side branches
  WalkWeights walk{};
  double dt = 0.01;
  double total_time = 5.0;
  double max_agent_length = 10.0; ///< L_max
  double bifurcation_angle = 0.5; ///< radians
  double stub_length = 1.0;
  double diameter = 1.0;
  std::size_t max_agents = 20000;

  std::size_t steps() const { return static_cast<std::size_t>(std::ceil(total_time / dt - 1e-9)); }

  void validate() const {
    auto finite = [](double x) { return std::isfinite(x); };
    if (!(branch_probability >= 0.0 && branch_probability <= 1.0))
      throw ConfigurationError("p_bra must lie in [0, 1]");
    if (!(speed >= 0.0) || !finite(speed)) throw ConfigurationError("speed v must be >= 0");
    if (!(consumption >= 0.0) || !finite(consumption)) throw ConfigurationError("consumption R must be >= 0");
    if (!(dt > 0.0) || !finite(dt)) throw ConfigurationError("dt must be > 0");
    if (!(total_time >= dt) || !finite(total_time)) throw ConfigurationError("total time T must be >= dt");
    if (!(max_agent_length > 0.0)) throw ConfigurationError("L_max must be > 0");
    if (!(stub_length > 0.0)) throw ConfigurationError("stub length must be > 0");
    if (!(diameter > 0.0)) throw ConfigurationError("diameter must be > 0");
    if (!finite(resource_threshold) || !finite(initial_resource) || !finite(branch_resource))
      throw ConfigurationError("resource levels must be finite");
    if (!finite(walk.random) || !finite(walk.persistence) || !finite(walk.guidance) || !finite(bifurcation_angle))
      throw ConfigurationError("walk weights and bifurcation angle must be finite");
    if (max_agents == 0) throw ConfigurationError("max_agents must be positive");
  }
};

/// Static guidance cue. Only the gradient direction enters the walk.
struct GuidanceField {
  enum class Kind { constant_gradient, point_source };

  Kind kind = Kind::constant_gradient;
  Vec3 vector = Vec3::UnitZ(); ///< gradient (constant) or source position (point)
  double amplitude = 1.0;

  static GuidanceField constant(const Vec3& gradient) { return {Kind::constant_gradient, gradient, 1.0}; }
  static GuidanceField point_source(const Vec3& source, double amplitude = 1.0) {
    return {Kind::point_source, source, amplitude};
  }

  /// Gradient of phi(x) = -amplitude * |x - source| for point sources, which
  /// points towards the source. Zero at the source itself.
  Vec3 gradient(const Vec3& x) const {
    if (kind == Kind::constant_gradient) return vector;
    const Vec3 d = vector - x;
    const double n = d.norm();
    return n > 0.0 ? Vec3(amplitude * d / n) : Vec3::Zero();
  }
};

/// Parameters used by the model stochasticity study: Model 1 models basal,
/// Model 2 apical dendrites.
inline GrowthParams default_params(ModelKind kind) {
  GrowthParams p;
  if (kind == ModelKind::model1) {
    p.branch_probability = 0.006;
    p.consumption = 0.85e-3;
    p.speed = 50.0;
    p.resource_threshold = 0.75;
    p.initial_resource = 1.0;
    p.branch_resource = 1.0; // unused by Model 1
  }
  return p;
}

inline SomaSpec default_soma(ModelKind kind) {
  SomaSpec soma;
  soma.radius = 10.0;
  if (kind == ModelKind::model1) {
    // Three basal dendrites spread below the soma.
    for (int i = 0; i < 3; ++i) {
      const double phi = 2.0 * std::numbers::pi * i / 3.0;
      const double polar = 0.75 * std::numbers::pi;
      soma.neurites.push_back(
          {Vec3(std::sin(polar) * std::cos(phi), std::sin(polar) * std::sin(phi), std::cos(polar)).normalized(), 3});
    }
  } else {
    soma.neurites.push_back({Vec3::UnitZ(), 4});
  }
  return soma;
}

inline GuidanceField default_field(ModelKind kind) {
  return GuidanceField::constant(kind == ModelKind::model1 ? Vec3(-Vec3::UnitZ()) : Vec3(Vec3::UnitZ()));
}

/// One root agent per initial neurite, starting on the soma surface.
inline NeuronTree init_neuron(const SomaSpec& soma, double stub_length, double initial_resource,
                              double diameter = 1.0) {
  soma.validate();
  if (!(stub_length > 0.0)) throw ConfigurationError("stub length must be > 0");
  NeuronTree tree;
  tree.soma = soma;
  for (const auto& n : soma.neurites) {
    Agent a;
    a.parent = kSoma;
    a.start = soma.position + soma.radius * n.direction;
    a.end = a.start + stub_length * n.direction;
    a.diameter = diameter;
    a.resource = initial_resource;
    a.type_code = n.type_code;
    tree.roots.push_back(tree.add_agent(std::move(a)));
  }
  return tree;
}

/// Correlated, biased random walk: normalized w1*noise + w2*orientation +
/// w3*cue direction. Consumes exactly three uniform variates.
inline Vec3 walk_direction(const Agent& agent, const GrowthParams& params, const GuidanceField& field, Stream& rng) {
  Vec3 noise;
  for (int i = 0; i < 3; ++i) noise[i] = 2.0 * rng.uniform() - 1.0;
  const Vec3 orientation = agent.direction();
  Vec3 cue = field.gradient(0.5 * (agent.start + agent.end));
  const double cue_norm = cue.norm();
  cue = cue_norm > 0.0 ? Vec3(cue / cue_norm) : Vec3::Zero();
  const Vec3 y = params.walk.random * noise + params.walk.persistence * orientation + params.walk.guidance * cue;
  const double n = y.norm();
  if (!(n > 0.0) || !std::isfinite(n)) return orientation;
  return y / n;
}

/// Per-step random streams: each agent draws from its own stream keyed by
/// (seed, agent id, step index).
struct StepStreams {
  std::uint64_t seed = 0;
  std::uint64_t step = 0;

  Stream for_agent(AgentId id) const { return Stream(stream_key(seed, static_cast<std::uint64_t>(id), step)); }
};

struct StepReport {
  std::size_t elongations = 0;
  std::size_t branch_events = 0;
  std::size_t splits = 0;
  std::size_t new_agents = 0;
};

namespace detail {

struct AgentUpdate {
  bool active = false;
  bool moved = false;
  bool branch = false;
  double resource = 0.0;
  double azimuth = 0.0;
  Vec3 end = Vec3::Zero();
};

/// Unit vector orthogonal to u at the given azimuth.
inline Vec3 orthogonal(const Vec3& u, double azimuth) {
  const Vec3 helper = std::abs(u.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 e1 = u.cross(helper).normalized();
  const Vec3 e2 = u.cross(e1);
  return std::cos(azimuth) * e1 + std::sin(azimuth) * e2;
}

inline void link_replacement(NeuronTree& tree, AgentId parent, AgentId old_id, AgentId new_id) {
  if (parent == kSoma)
    std::replace(tree.roots.begin(), tree.roots.end(), old_id, new_id);
  else
    tree.agents[static_cast<std::size_t>(parent)].replace_daughter(old_id, new_id);
}

/// Splits an over-long agent into a chain of equal pieces no longer than
/// max_length. The original agent keeps its id as the distal piece.
inline std::size_t split_long_agent(NeuronTree& tree, AgentId id, double max_length) {
  const Agent snapshot = tree.agents[static_cast<std::size_t>(id)];
  const double len = snapshot.length();
  if (len <= max_length) return 0;
  const auto pieces = static_cast<std::size_t>(std::ceil(len / max_length));
  const Vec3 step = (snapshot.end - snapshot.start) / static_cast<double>(pieces);
  AgentId parent = snapshot.parent;
  AgentId previous = kSoma;
  for (std::size_t k = 0; k + 1 < pieces; ++k) {
    Agent piece;
    piece.parent = parent;
    piece.start = k == 0 ? snapshot.start : tree.agents[static_cast<std::size_t>(previous)].end;
    piece.end = snapshot.start + static_cast<double>(k + 1) * step;
    piece.diameter = snapshot.diameter;
    piece.resource = snapshot.resource;
    piece.type_code = snapshot.type_code;
    const AgentId pid = tree.add_agent(std::move(piece));
    if (k == 0)
      link_replacement(tree, parent, id, pid);
    else
      tree.agents[static_cast<std::size_t>(previous)].daughters.push_back(pid);
    previous = pid;
    parent = pid;
  }
  Agent& distal = tree.agents[static_cast<std::size_t>(id)];
  distal.parent = previous;
  distal.start = tree.agents[static_cast<std::size_t>(previous)].end;
  tree.agents[static_cast<std::size_t>(previous)].daughters.push_back(id);
  return pieces - 1;
}

inline AgentId add_daughter(NeuronTree& tree, AgentId mother_id, const Vec3& direction, double resource,
                            double stub_length) {
  const Agent& mother = tree.agents[static_cast<std::size_t>(mother_id)];
  Agent d;
  d.parent = mother_id;
  d.start = mother.end;
  d.end = mother.end + stub_length * direction;
  d.diameter = mother.diameter;
  d.resource = resource;
  d.type_code = mother.type_code;
  const AgentId id = tree.add_agent(std::move(d));
  tree.agents[static_cast<std::size_t>(mother_id)].daughters.push_back(id);
  return id;
}

} // namespace detail

/// Executes one time step of the selected model.
///
/// All decisions are taken against a pre-step snapshot (tip status and
/// resource) and every agent draws from its own keyed stream, so the visit
/// order in `visit_order` (a permutation of the pre-step ids; empty means
/// ascending) cannot change the outcome. Structural changes are applied in
/// ascending id order afterwards.
inline StepReport step(ModelKind kind, NeuronTree& tree, const GrowthParams& params, const GuidanceField& field,
                       const StepStreams& streams, std::span<const AgentId> visit_order = {}) {
  const std::size_t n0 = tree.agents.size();
  std::vector<detail::AgentUpdate> updates(n0);
  const double displacement = params.speed * params.dt;

  auto decide = [&](AgentId id) {
    const Agent& a = tree.agents[static_cast<std::size_t>(id)];
    if (!(a.resource > params.resource_threshold)) return;
    const bool tip = a.is_tip();
    if (kind == ModelKind::model1 && !tip) return;
    auto& u = updates[static_cast<std::size_t>(id)];
    u.active = true;
    u.resource = a.resource - params.consumption;
    if (!tip) return;
    Stream rng = streams.for_agent(id);
    const Vec3 dir = walk_direction(a, params, field, rng);
    u.moved = true;
    u.end = a.end + displacement * dir;
    if (rng.uniform() < params.branch_probability) {
      u.branch = true;
      u.azimuth = 2.0 * std::numbers::pi * rng.uniform();
    }
  };

  if (visit_order.empty()) {
    for (std::size_t i = 0; i < n0; ++i) decide(static_cast<AgentId>(i));
  } else {
    if (visit_order.size() != n0) throw ConfigurationError("visit order must cover every agent exactly once");
    std::vector<bool> seen(n0, false);
    for (AgentId id : visit_order) {
      if (id < 0 || static_cast<std::size_t>(id) >= n0 || seen[static_cast<std::size_t>(id)])
        throw ConfigurationError("visit order must be a permutation of agent ids");
      seen[static_cast<std::size_t>(id)] = true;
      decide(id);
    }
  }

  StepReport report;
  const double angle = params.bifurcation_angle;
  for (std::size_t i = 0; i < n0; ++i) {
    const auto& u = updates[i];
    if (!u.active) continue;
    const auto id = static_cast<AgentId>(i);
    tree.agents[i].resource = u.resource;
    if (!u.moved) continue;
    tree.agents[i].end = u.end;
    ++report.elongations;
    const std::size_t before = tree.agents.size();
    report.splits += detail::split_long_agent(tree, id, params.max_agent_length);
    if (u.branch) {
      ++report.branch_events;
      const Vec3 axis = tree.agents[i].direction();
      const Vec3 side = detail::orthogonal(axis, u.azimuth);
      const double r = tree.agents[i].resource;
      const Vec3 left = std::cos(angle) * axis + std::sin(angle) * side;
      if (kind == ModelKind::model1) {
        const Vec3 right = std::cos(angle) * axis - std::sin(angle) * side;
        detail::add_daughter(tree, id, left, r, params.stub_length);
        detail::add_daughter(tree, id, right, r, params.stub_length);
      } else {
        detail::add_daughter(tree, id, axis, r, params.stub_length);
        detail::add_daughter(tree, id, left, params.branch_resource, params.stub_length);
      }
    }
    report.new_agents += tree.agents.size() - before;
  }
  return report;
}

inline StepReport step_model1(NeuronTree& tree, const GrowthParams& params, const GuidanceField& field,
                              const StepStreams& streams) {
  return step(ModelKind::model1, tree, params, field, streams);
}

inline StepReport step_model2(NeuronTree& tree, const GrowthParams& params, const GuidanceField& field,
                              const StepStreams& streams) {
  return step(ModelKind::model2, tree, params, field, streams);
}

/// Grows one neuron from its initial stubs over ceil(T / dt) steps. Fully
/// determined by its arguments.
inline NeuronTree simulate(ModelKind kind, const SomaSpec& soma, const GrowthParams& params,
                           const GuidanceField& field, std::uint64_t seed) {
  params.validate();
  NeuronTree tree = init_neuron(soma, params.stub_length, params.initial_resource, params.diameter);
  const std::size_t steps = params.steps();
  for (std::size_t s = 0; s < steps; ++s) {
    step(kind, tree, params, field, StepStreams{seed, s});
    if (tree.agents.size() > params.max_agents) {
      tree.truncated = true;
      break;
    }
  }
  return tree;
}

} // namespace neurocal
