#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "neurocal/distances.hpp"
#include "neurocal/errors.hpp"
#include "neurocal/models.hpp"
#include "neurocal/parallel.hpp"
#include "neurocal/random.hpp"

namespace neurocal {

/// Independent uniform priors.
struct Prior {
  std::vector<std::string> names;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  Prior() = default;
  Prior(std::vector<std::string> n, std::vector<double> lo, std::vector<double> hi)
      : names(std::move(n)), lower(Eigen::Map<const Eigen::VectorXd>(lo.data(), static_cast<Eigen::Index>(lo.size()))),
        upper(Eigen::Map<const Eigen::VectorXd>(hi.data(), static_cast<Eigen::Index>(hi.size()))) {
    validate();
  }

  Eigen::Index dim() const { return lower.size(); }

  void validate() const {
    if (lower.size() == 0) throw ConfigurationError("prior needs at least one parameter");
    if (lower.size() != upper.size() || static_cast<std::size_t>(lower.size()) != names.size())
      throw ConfigurationError("prior names and bounds differ in length");
    for (Eigen::Index j = 0; j < dim(); ++j)
      if (!(lower[j] < upper[j]) || !std::isfinite(lower[j]) || !std::isfinite(upper[j]))
        throw ConfigurationError("prior bounds for '" + names[static_cast<std::size_t>(j)] + "' need lo < hi");
  }

  bool contains(const Eigen::VectorXd& theta) const {
    return ((theta.array() >= lower.array()) && (theta.array() <= upper.array())).all();
  }

  Eigen::VectorXd sample(Stream& rng) const {
    Eigen::VectorXd t(dim());
    for (Eigen::Index j = 0; j < dim(); ++j) t[j] = rng.uniform(lower[j], upper[j]);
    return t;
  }
};

struct SmcConfig {
  std::size_t particles = 1024;        ///< N
  double alpha = 0.6;                  ///< ESS decay per iteration
  std::size_t sims_per_param = 50;     ///< M', neurons per dataset
  std::uint64_t budget = 5'000'000;    ///< total simulations (neurons or toy rows)
  DistanceSpec distance{};
  std::size_t hits = 2;                ///< r of the r-hit kernel
  double ess_resample_fraction = 0.5;
  std::optional<double> epsilon_target;
  std::optional<double> wall_clock_seconds;
  std::size_t race_cap = 10;           ///< datasets per race side before giving up
  /// Stop after an iteration whose move acceptance rate falls below this.
  /// Past that point races mostly hit race_cap and resampling only clones.
  std::optional<double> min_acceptance_rate = 0.05;
  std::size_t workers = 1;

  void validate() const {
    if (particles < 2) throw ConfigurationError("need at least 2 particles");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigurationError("alpha must lie in (0, 1)");
    if (sims_per_param < 1) throw ConfigurationError("sims_per_param must be >= 1");
    if (hits < 1) throw ConfigurationError("hits r must be >= 1");
    if (!(ess_resample_fraction >= 0.0 && ess_resample_fraction <= 1.0))
      throw ConfigurationError("ess_resample_fraction must lie in [0, 1]");
    if (race_cap < hits) throw ConfigurationError("race_cap must be >= hits");
    if (wall_clock_seconds && !(*wall_clock_seconds > 0.0)) throw ConfigurationError("wall clock cap must be > 0");
    if (min_acceptance_rate && !(*min_acceptance_rate >= 0.0 && *min_acceptance_rate <= 1.0))
      throw ConfigurationError("min_acceptance_rate must lie in [0, 1]");
    distance.validate();
  }
};

struct Particle {
  Eigen::VectorXd theta;
  double weight = 0.0;
  Eigen::MatrixXd data; ///< raw QoI rows of the attached dataset
  double distance = std::numeric_limits<double>::infinity();
};

inline double ess(std::span<const double> w) {
  double s = 0.0, s2 = 0.0;
  for (double x : w) {
    if (!(x >= 0.0)) throw ConfigurationError("weights must be nonnegative");
    s += x;
    s2 += x * x;
  }
  if (!(s > 0.0)) throw ConfigurationError("all weights are zero");
  return s * s / s2;
}

struct EpsilonUpdate {
  double epsilon;
  bool stagnated;
};

namespace detail {

inline double masked_ess(std::span<const double> d, std::span<const double> w, double bound) {
  double s = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d[i] <= bound) {
      s += w[i];
      s2 += w[i] * w[i];
    }
  return s2 > 0.0 ? s * s / s2 : 0.0;
}

/// A value a hair above u that stays below limit.
inline double just_above(double u, double limit) {
  const double step = 1e-12 * std::max(std::abs(u), 1e-300);
  const double e = u + step;
  return e < limit ? e : u + 0.5 * (limit - u);
}

} // namespace detail

/// Next tolerance: particles survive when d < epsilon. Picks the tightest
/// set of surviving distance values whose ESS is at least alpha times the
/// current ESS, and returns the largest epsilon with that survivor set.
/// Stagnation is flagged when the target cannot be met by a strict decrease
/// (then epsilon lands just above the largest surviving distance) or when
/// ties at the smallest distance already overshoot it.
inline EpsilonUpdate next_epsilon(std::span<const double> d, std::span<const double> w, double eps_prev, double alpha) {
  if (d.size() != w.size()) throw ConfigurationError("distances and weights differ in length");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigurationError("alpha must lie in (0, 1)");
  std::vector<double> alive_w(w.size(), 0.0);
  std::vector<double> unique;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d[i] < eps_prev && w[i] > 0.0) {
      alive_w[i] = w[i];
      unique.push_back(d[i]);
    }
  if (unique.empty()) throw ConfigurationError("no particle lies below the previous tolerance");
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());

  const double target = alpha * ess(w);
  // Smallest index whose survivor set reaches the target. ESS of equal
  // weights grows with the set, so bisection applies; for unequal weights it
  // still returns a valid (if not the smallest) index.
  std::size_t lo = 0, hi = unique.size() - 1;
  if (detail::masked_ess(d, alive_w, unique[hi]) < target * (1.0 - 1e-12)) lo = hi;
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (detail::masked_ess(d, alive_w, unique[mid]) >= target * (1.0 - 1e-12))
      hi = mid;
    else
      lo = mid + 1;
  }
  const std::size_t j = lo;
  if (j + 1 == unique.size()) return {detail::just_above(unique[j], eps_prev), true};
  // Ties at the smallest distance can keep the ESS above target.
  const bool overshoot = j == 0 && detail::masked_ess(d, alive_w, unique[0]) > target * (1.0 + 1e-9);
  return {unique[j + 1], overshoot};
}

/// Systematic resampling: returns N ancestor indices for offset u in [0,1).
inline std::vector<std::size_t> systematic_indices(std::span<const double> w, std::size_t n, double u) {
  double total = 0.0;
  for (double x : w) total += x;
  if (!(total > 0.0)) throw ConfigurationError("all weights are zero");
  std::vector<std::size_t> out;
  out.reserve(n);
  // Compare (k + u) / n against cumulative w / total without dividing, so
  // integer-valued weights are resolved exactly.
  const auto nd = static_cast<double>(n);
  double cum = w.empty() ? 0.0 : w[0];
  std::size_t i = 0;
  for (std::size_t k = 0; k < n; ++k) {
    const double point = (static_cast<double>(k) + u) * total;
    while (point >= cum * nd && i + 1 < w.size()) cum += w[++i];
    out.push_back(i);
  }
  return out;
}

inline void resample(std::vector<Particle>& particles, Stream& rng) {
  std::vector<double> w;
  w.reserve(particles.size());
  for (const auto& p : particles) w.push_back(p.weight);
  const auto idx = systematic_indices(w, particles.size(), rng.uniform());
  std::vector<Particle> out;
  out.reserve(particles.size());
  for (auto i : idx) out.push_back(particles[i]);
  for (auto& p : out) p.weight = 1.0 / static_cast<double>(out.size());
  particles = std::move(out);
}

/// Weighted mean and covariance of the particle parameters.
inline Eigen::VectorXd weighted_mean(const std::vector<Particle>& ps) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(ps.front().theta.size());
  double s = 0.0;
  for (const auto& p : ps) {
    m += p.weight * p.theta;
    s += p.weight;
  }
  return m / s;
}

inline Eigen::MatrixXd weighted_covariance(const std::vector<Particle>& ps) {
  const Eigen::VectorXd m = weighted_mean(ps);
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(m.size(), m.size());
  double s = 0.0;
  for (const auto& p : ps) {
    const Eigen::VectorXd d = p.theta - m;
    c += p.weight * d * d.transpose();
    s += p.weight;
  }
  return c / s;
}

struct RaceResult {
  std::size_t proposal_datasets = 0;
  std::size_t current_datasets = 0;
  bool capped = false;
  bool proposal_won = false; ///< 1-hit kernel only
};

/// Alternately draws datasets under the proposal (first) and the current
/// parameter until each side has `hits` hits. With hits == 1 the race ends at
/// the first hit on either side. A side exceeding `cap` draws aborts it.
template <class DrawProposal, class DrawCurrent>
RaceResult run_race(std::size_t hits, std::size_t cap, DrawProposal&& draw_proposal, DrawCurrent&& draw_current) {
  RaceResult r;
  std::size_t hp = 0, hc = 0;
  while (hp < hits || hc < hits) {
    if (hp < hits) {
      if (r.proposal_datasets == cap) {
        r.capped = true;
        return r;
      }
      ++r.proposal_datasets;
      if (draw_proposal()) ++hp;
      if (hits == 1 && hp == 1) {
        r.proposal_won = true;
        return r;
      }
    }
    if (hc < hits) {
      if (r.current_datasets == cap) {
        r.capped = true;
        return r;
      }
      ++r.current_datasets;
      if (draw_current()) ++hc;
      if (hits == 1 && hc == 1) return r;
    }
  }
  return r;
}

/// Acceptance probability of a finished race.
inline double race_acceptance(const RaceResult& r, std::size_t hits) {
  if (r.capped) return 0.0;
  if (hits == 1) return r.proposal_won ? 1.0 : 0.0;
  return std::min(1.0, static_cast<double>(r.current_datasets - 1) / static_cast<double>(r.proposal_datasets - 1));
}

/// Scores simulated datasets against the observed data.
class DatasetScorer {
public:
  DatasetScorer(const QoIMatrix& observed, const DistanceSpec& spec) : spec_(spec) {
    spec_.validate();
    if (observed.rows() == 0) throw ConfigurationError("observed data is empty");
    if (spec_.standardize) {
      scales_ = column_scales(observed.values, observed.columns);
      observed_ = standardize(observed.values, scales_);
    } else {
      scales_ = Eigen::VectorXd::Ones(observed.cols());
      observed_ = observed.values;
    }
  }

  const Eigen::VectorXd& scales() const { return scales_; }

  double operator()(const Eigen::MatrixXd& sim, Stream& rng, KnnDiagnostics* diag = nullptr) const {
    if (sim.cols() != observed_.cols()) throw ConfigurationError("simulated QoIs do not match the observed columns");
    const Eigen::MatrixXd s = spec_.standardize ? standardize(sim, scales_) : sim;
    return distance(observed_, s, spec_, rng, diag);
  }

private:
  DistanceSpec spec_;
  Eigen::VectorXd scales_;
  Eigen::MatrixXd observed_;
};

struct MoveOutcome {
  bool in_support = false;
  bool accepted = false;
  bool capped = false;
  std::size_t datasets = 0;
  std::size_t knn_jittered = 0;
};

/// r-hit move of one alive particle. `chol` is the lower Cholesky factor of
/// the random-walk proposal covariance.
template <SimulationModel M>
MoveOutcome move_particle(Particle& particle, double epsilon, const Eigen::MatrixXd& chol, const Prior& prior,
                          const M& model, const DatasetScorer& score, const SmcConfig& config, Stream& rng) {
  MoveOutcome out;
  Eigen::VectorXd z(chol.rows());
  for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = rng.normal();
  const Eigen::VectorXd proposal = particle.theta + chol * z;
  if (!prior.contains(proposal)) return out;
  out.in_support = true;

  KnnDiagnostics diag;
  Eigen::MatrixXd last_hit;
  double last_hit_distance = 0.0;
  auto draw = [&](const Eigen::VectorXd& theta, bool keep) {
    const auto sim = model.simulate(std::span<const double>(theta.data(), static_cast<std::size_t>(theta.size())),
                                    config.sims_per_param, rng.seed());
    Stream drng(rng.seed());
    const double d = score(sim.values, drng, &diag);
    const bool hit = d < epsilon;
    if (hit && keep) {
      last_hit = sim.values;
      last_hit_distance = d;
    }
    return hit;
  };
  const auto race = run_race(config.hits, config.race_cap, [&] { return draw(proposal, true); },
                             [&] { return draw(particle.theta, false); });
  out.datasets = race.proposal_datasets + race.current_datasets;
  out.capped = race.capped;
  out.knn_jittered = diag.jittered;
  const double a = race_acceptance(race, config.hits);
  if (a > 0.0 && (a >= 1.0 || rng.uniform() < a)) {
    particle.theta = proposal;
    particle.data = std::move(last_hit);
    particle.distance = last_hit_distance;
    out.accepted = true;
  }
  return out;
}

/// Per-iteration trace record. Deliberately free of timing data so traces
/// are byte-comparable.
struct IterationRecord {
  std::size_t iteration = 0;
  double epsilon = std::numeric_limits<double>::infinity();
  double ess = 0.0;
  std::size_t alive = 0;
  bool resampled = false;
  bool stagnated = false;
  std::size_t proposed = 0;
  std::size_t out_of_support = 0;
  std::size_t accepted = 0;
  std::size_t capped = 0;
  std::uint64_t simulations = 0;
  std::uint64_t cumulative_simulations = 0;
  std::size_t knn_jittered = 0;

  std::optional<double> acceptance_rate() const {
    if (proposed == 0) return std::nullopt;
    return static_cast<double>(accepted) / static_cast<double>(proposed);
  }
};

enum class StopReason { running, budget, epsilon_target, wall_clock, stagnation, low_acceptance };

inline std::string to_string(StopReason r) {
  switch (r) {
  case StopReason::running: return "running";
  case StopReason::budget: return "budget";
  case StopReason::epsilon_target: return "epsilon_target";
  case StopReason::wall_clock: return "wall_clock";
  case StopReason::stagnation: return "stagnation";
  case StopReason::low_acceptance: return "low_acceptance";
  }
  return {};
}

inline StopReason parse_stop_reason(const std::string& s) {
  for (auto r : {StopReason::running, StopReason::budget, StopReason::epsilon_target, StopReason::wall_clock,
                 StopReason::stagnation, StopReason::low_acceptance})
    if (to_string(r) == s) return r;
  throw FormatError("unknown stop reason '" + s + "'", 0);
}

/// Everything needed to continue a run after the last completed iteration.
struct SmcState {
  std::vector<Particle> particles;
  std::vector<IterationRecord> records;
  std::size_t consecutive_stagnations = 0;
  StopReason stop = StopReason::running;

  double epsilon() const { return records.empty() ? std::numeric_limits<double>::infinity() : records.back().epsilon; }
  std::uint64_t simulations() const { return records.empty() ? 0 : records.back().cumulative_simulations; }
  std::vector<double> weights() const {
    std::vector<double> w;
    for (const auto& p : particles) w.push_back(p.weight);
    return w;
  }
};

struct SmcHooks {
  /// Called after every completed iteration (including initialization).
  std::function<void(const SmcState&)> on_iteration;
  /// Continue from this state instead of initializing.
  const SmcState* resume = nullptr;
};

namespace detail {

inline Eigen::MatrixXd proposal_cholesky(const std::vector<Particle>& ps, const Prior& prior) {
  const auto d = static_cast<double>(prior.dim());
  Eigen::MatrixXd cov = (2.38 * 2.38 / d) * weighted_covariance(ps);
  // Collapsed populations still need a usable proposal.
  const Eigen::VectorXd width = prior.upper - prior.lower;
  for (int attempt = 0; attempt < 8; ++attempt) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() == Eigen::Success && llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 0.0)
      return llt.matrixL();
    cov.diagonal() += (1e-10 * std::pow(100.0, attempt)) * width.array().square().matrix();
  }
  throw std::runtime_error("proposal covariance is not positive definite");
}

} // namespace detail

/// Adaptive SMC-ABC with the r-hit move kernel. Variates for particle k in
/// iteration i come from stream (seed, i, k), so results do not depend on the
/// worker count.
template <SimulationModel M>
SmcState run_smcabc(const Prior& prior, const M& model, const QoIMatrix& observed, const SmcConfig& config,
                    std::uint64_t seed, const SmcHooks& hooks = {}) {
  config.validate();
  prior.validate();
  if (model.parameter_names().size() != static_cast<std::size_t>(prior.dim()))
    throw ConfigurationError("prior dimension does not match the model parameters");
  if (model.qoi_names() != observed.columns) throw ConfigurationError("observed columns do not match the model QoIs");
  const DatasetScorer score(observed, config.distance);
  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = config.particles;
  const std::uint64_t per_dataset = config.sims_per_param;

  SmcState state;
  auto finish_iteration = [&](IterationRecord rec) {
    rec.cumulative_simulations = state.simulations() + rec.simulations;
    state.records.push_back(rec);
    if (rec.stagnated)
      ++state.consecutive_stagnations;
    else
      state.consecutive_stagnations = 0;
    if (rec.cumulative_simulations >= config.budget)
      state.stop = StopReason::budget;
    else if (config.epsilon_target && rec.epsilon <= *config.epsilon_target)
      state.stop = StopReason::epsilon_target;
    else if (state.consecutive_stagnations >= 2)
      state.stop = StopReason::stagnation;
    else if (config.min_acceptance_rate && rec.acceptance_rate() && *rec.acceptance_rate() < *config.min_acceptance_rate)
      state.stop = StopReason::low_acceptance;
    else if (config.wall_clock_seconds &&
             std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() >= *config.wall_clock_seconds)
      state.stop = StopReason::wall_clock;
    if (hooks.on_iteration) hooks.on_iteration(state);
  };

  if (hooks.resume) {
    state = *hooks.resume;
    if (state.particles.size() != n) throw ConfigurationError("checkpoint particle count does not match the config");
    if (state.stop == StopReason::wall_clock) state.stop = StopReason::running;
  } else {
    state.particles.resize(n);
    std::vector<std::size_t> jitter(n, 0);
    parallel_for(n, config.workers, [&](std::size_t k) {
      Stream rng(stream_key(seed, 0, k));
      Particle& p = state.particles[k];
      p.theta = prior.sample(rng);
      p.weight = 1.0 / static_cast<double>(n);
      p.data = model.simulate(std::span<const double>(p.theta.data(), static_cast<std::size_t>(p.theta.size())),
                              config.sims_per_param, rng.seed()).values;
      Stream drng(rng.seed());
      KnnDiagnostics diag;
      p.distance = score(p.data, drng, &diag);
      jitter[k] = diag.jittered;
    });
    IterationRecord rec;
    rec.ess = static_cast<double>(n);
    rec.alive = n;
    rec.simulations = n * per_dataset;
    for (auto j : jitter) rec.knn_jittered += j;
    finish_iteration(rec);
  }

  while (state.stop == StopReason::running) {
    IterationRecord rec;
    rec.iteration = state.records.size();
    std::vector<double> d, w = state.weights();
    for (const auto& p : state.particles) d.push_back(p.distance);
    const auto upd = next_epsilon(d, w, state.epsilon(), config.alpha);
    rec.epsilon = upd.epsilon;
    rec.stagnated = upd.stagnated;
    for (auto& p : state.particles)
      if (!(p.distance < rec.epsilon)) p.weight = 0.0;
    double total = 0.0;
    for (const auto& p : state.particles) total += p.weight;
    for (auto& p : state.particles) p.weight /= total;
    rec.ess = ess(state.weights());
    if (rec.ess < config.ess_resample_fraction * static_cast<double>(n)) {
      Stream rng(stream_key(seed, rec.iteration));
      resample(state.particles, rng);
      rec.resampled = true;
    }
    const Eigen::MatrixXd chol = detail::proposal_cholesky(state.particles, prior);

    std::vector<MoveOutcome> moves(n);
    parallel_for(n, config.workers, [&](std::size_t k) {
      if (!(state.particles[k].weight > 0.0)) return;
      Stream rng(stream_key(seed, rec.iteration, k));
      moves[k] = move_particle(state.particles[k], rec.epsilon, chol, prior, model, score, config, rng);
    });
    for (std::size_t k = 0; k < n; ++k) {
      if (!(state.particles[k].weight > 0.0)) continue;
      ++rec.alive;
      ++rec.proposed;
      const auto& m = moves[k];
      if (!m.in_support) ++rec.out_of_support;
      if (m.accepted) ++rec.accepted;
      if (m.capped) ++rec.capped;
      rec.simulations += m.datasets * per_dataset;
      rec.knn_jittered += m.knn_jittered;
    }
    finish_iteration(rec);
  }
  return state;
}

// Serialization of traces and checkpoints.

inline nlohmann::json to_json(const IterationRecord& r) {
  nlohmann::json j;
  j["iteration"] = r.iteration;
  j["epsilon"] = std::isfinite(r.epsilon) ? nlohmann::json(r.epsilon) : nlohmann::json(nullptr);
  j["ess"] = r.ess;
  j["alive"] = r.alive;
  j["resampled"] = r.resampled;
  j["stagnated"] = r.stagnated;
  j["proposed"] = r.proposed;
  j["out_of_support"] = r.out_of_support;
  j["accepted"] = r.accepted;
  j["race_capped"] = r.capped;
  const auto rate = r.acceptance_rate();
  j["acceptance_rate"] = rate ? nlohmann::json(*rate) : nlohmann::json(nullptr);
  j["simulations"] = r.simulations;
  j["cumulative_simulations"] = r.cumulative_simulations;
  j["knn_jittered"] = r.knn_jittered;
  return j;
}

inline IterationRecord record_from_json(const nlohmann::json& j) {
  IterationRecord r;
  r.iteration = j.at("iteration").get<std::size_t>();
  r.epsilon = j.at("epsilon").is_null() ? std::numeric_limits<double>::infinity() : j.at("epsilon").get<double>();
  r.ess = j.at("ess").get<double>();
  r.alive = j.at("alive").get<std::size_t>();
  r.resampled = j.at("resampled").get<bool>();
  r.stagnated = j.at("stagnated").get<bool>();
  r.proposed = j.at("proposed").get<std::size_t>();
  r.out_of_support = j.at("out_of_support").get<std::size_t>();
  r.accepted = j.at("accepted").get<std::size_t>();
  r.capped = j.at("race_capped").get<std::size_t>();
  r.simulations = j.at("simulations").get<std::uint64_t>();
  r.cumulative_simulations = j.at("cumulative_simulations").get<std::uint64_t>();
  r.knn_jittered = j.at("knn_jittered").get<std::size_t>();
  return r;
}

inline nlohmann::json to_json(const SmcState& s) {
  nlohmann::json j;
  j["schema"] = "neurocal.smc-checkpoint/1";
  j["stop"] = to_string(s.stop);
  j["consecutive_stagnations"] = s.consecutive_stagnations;
  j["records"] = nlohmann::json::array();
  for (const auto& r : s.records) j["records"].push_back(to_json(r));
  j["particles"] = nlohmann::json::array();
  for (const auto& p : s.particles) {
    nlohmann::json pj;
    pj["theta"] = std::vector<double>(p.theta.data(), p.theta.data() + p.theta.size());
    pj["weight"] = p.weight;
    pj["distance"] = p.distance;
    pj["rows"] = p.data.rows();
    pj["data"] = std::vector<double>(p.data.data(), p.data.data() + p.data.size()); // column-major
    j["particles"].push_back(std::move(pj));
  }
  return j;
}

inline SmcState state_from_json(const nlohmann::json& j) {
  if (j.value("schema", "") != "neurocal.smc-checkpoint/1") throw FormatError("not an SMC checkpoint", 0);
  SmcState s;
  s.stop = parse_stop_reason(j.at("stop").get<std::string>());
  s.consecutive_stagnations = j.at("consecutive_stagnations").get<std::size_t>();
  for (const auto& r : j.at("records")) s.records.push_back(record_from_json(r));
  for (const auto& pj : j.at("particles")) {
    Particle p;
    const auto theta = pj.at("theta").get<std::vector<double>>();
    p.theta = Eigen::Map<const Eigen::VectorXd>(theta.data(), static_cast<Eigen::Index>(theta.size()));
    p.weight = pj.at("weight").get<double>();
    p.distance = pj.at("distance").get<double>();
    const auto rows = pj.at("rows").get<Eigen::Index>();
    const auto data = pj.at("data").get<std::vector<double>>();
    if (rows <= 0 || static_cast<Eigen::Index>(data.size()) % rows != 0) throw FormatError("bad particle dataset", 0);
    p.data = Eigen::Map<const Eigen::MatrixXd>(data.data(), rows, static_cast<Eigen::Index>(data.size()) / rows);
    s.particles.push_back(std::move(p));
  }
  return s;
}

} // namespace neurocal
