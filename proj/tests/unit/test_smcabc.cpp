#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "neurocal/smcabc.hpp"

using namespace neurocal;

namespace {

// Returns a fixed set of rows whatever the parameter.
struct ConstantModel {
  double value = 5.0;
  std::vector<std::string> parameter_names() const { return {"a"}; }
  std::vector<std::string> qoi_names() const { return {"y"}; }
  QoIMatrix simulate(std::span<const double>, std::size_t count, std::uint64_t) const {
    return {qoi_names(), Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(count), 1, value)};
  }
};

// One N(mu(theta), 1) draw per replicate; mu is 0 at theta0 exactly and
// `shift` anywhere else.
struct SwitchingGaussian {
  double theta0 = 0.5;
  double shift = 0.0;
  std::vector<std::string> parameter_names() const { return {"a"}; }
  std::vector<std::string> qoi_names() const { return {"y"}; }
  QoIMatrix simulate(std::span<const double> theta, std::size_t count, std::uint64_t seed) const {
    Stream rng(seed);
    const double mu = theta[0] == theta0 ? 0.0 : shift;
    Eigen::MatrixXd v(static_cast<Eigen::Index>(count), 1);
    for (Eigen::Index i = 0; i < v.rows(); ++i) v(i, 0) = mu + rng.normal();
    return {qoi_names(), v};
  }
};

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// P(|mu + Z| < eps)
double hit_probability(double mu, double eps) { return normal_cdf(eps - mu) - normal_cdf(-eps - mu); }

// E[min(1, (N-1)/(N'-1))] for independent negative binomial counts of
// trials to the second success.
double race_acceptance_mean(double q, double qp) {
  double m = 0.0;
  for (int n = 2; n < 2000; ++n) {
    const double pn = (n - 1) * q * q * std::pow(1 - q, n - 2);
    if (pn < 1e-300) continue;
    for (int np = 2; np < 2000; ++np) {
      const double pnp = (np - 1) * qp * qp * std::pow(1 - qp, np - 2);
      m += pn * pnp * std::min(1.0, static_cast<double>(n - 1) / (np - 1));
    }
  }
  return m;
}

QoIMatrix toy_data(const Eigen::VectorXd& mean, std::size_t rows, std::uint64_t seed) {
  ToyGaussianModel model(mean.size());
  auto d = model.simulate(std::span<const double>(mean.data(), static_cast<std::size_t>(mean.size())), rows, seed);
  const Eigen::RowVectorXd shift = mean.transpose() - d.values.colwise().mean();
  d.values.rowwise() += shift;
  return d;
}

SmcConfig small_config() {
  SmcConfig c;
  c.particles = 64;
  c.sims_per_param = 20;
  c.budget = 64 * 20 * 40;
  return c;
}

} // namespace

TEST(Ess, Examples) {
  EXPECT_DOUBLE_EQ(ess(std::vector<double>(8, 0.125)), 8.0);
  EXPECT_DOUBLE_EQ(ess(std::vector<double>{0, 0, 3, 0}), 1.0);
  EXPECT_DOUBLE_EQ(ess(std::vector<double>{0.5, 0.5, 0, 0}), 2.0);
  EXPECT_THROW(ess(std::vector<double>{0, 0}), ConfigurationError);
}

TEST(NextEpsilon, HalvesFourParticles) {
  const std::vector<double> d{1, 2, 3, 4}, w(4, 0.25);
  const auto u = next_epsilon(d, w, std::numeric_limits<double>::infinity(), 0.5);
  EXPECT_GT(u.epsilon, 2.0);
  EXPECT_LE(u.epsilon, 3.0);
  EXPECT_FALSE(u.stagnated);
}

TEST(NextEpsilon, EqualDistancesStagnate) {
  const std::vector<double> d(5, 0.7), w(5, 0.2);
  const auto u = next_epsilon(d, w, 2.0, 0.6);
  EXPECT_TRUE(u.stagnated);
  EXPECT_GT(u.epsilon, 0.7);
  EXPECT_LT(u.epsilon, 0.7 + 1e-9);
}

TEST(NextEpsilon, AlphaNearOneKeepsAlmostEverything) {
  std::vector<double> d(1000), w(1000, 1.0);
  std::iota(d.begin(), d.end(), 1.0);
  const auto u = next_epsilon(d, w, 1000.5, 0.999);
  EXPECT_FALSE(u.stagnated);
  EXPECT_DOUBLE_EQ(u.epsilon, 1000.0);
}

TEST(NextEpsilon, IgnoresDeadParticlesAndNeedsSurvivors) {
  const std::vector<double> d{1, 2, 3, 4}, w{0.5, 0.5, 0, 0};
  EXPECT_THROW(next_epsilon(d, w, 0.5, 0.5), ConfigurationError);
  const auto u = next_epsilon(d, w, 5.0, 0.5);
  EXPECT_DOUBLE_EQ(u.epsilon, 2.0);
}

TEST(Resample, SystematicExamples) {
  for (double u : {0.0, 0.3, 0.999}) {
    const auto even = systematic_indices(std::vector<double>(5, 1.0), 5, u);
    EXPECT_EQ(even, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
    const auto one = systematic_indices(std::vector<double>{0, 1, 0}, 3, u);
    EXPECT_EQ(one, (std::vector<std::size_t>{1, 1, 1}));
    const auto skew = systematic_indices(std::vector<double>{0.75, 0.25}, 4, u);
    EXPECT_EQ(std::count(skew.begin(), skew.end(), 0u), 3);
    EXPECT_EQ(std::count(skew.begin(), skew.end(), 1u), 1);
  }
}

TEST(Resample, OffspringCountsBracketExpectation) {
  Stream rng(3);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<Particle> ps(17);
    double total = 0.0;
    for (auto& p : ps) {
      p.theta = Eigen::VectorXd::Constant(1, static_cast<double>(&p - ps.data()));
      p.weight = rng.uniform() * (rng.uniform() < 0.3 ? 0.0 : 1.0) + 1e-3;
      total += p.weight;
    }
    std::vector<double> expected;
    for (const auto& p : ps) expected.push_back(17.0 * p.weight / total);
    resample(ps, rng);
    std::vector<int> counts(17, 0);
    for (const auto& p : ps) {
      ++counts[static_cast<std::size_t>(p.theta[0])];
      EXPECT_DOUBLE_EQ(p.weight, 1.0 / 17.0);
    }
    for (std::size_t i = 0; i < 17; ++i) {
      EXPECT_GE(counts[i], std::floor(expected[i] - 1e-9));
      EXPECT_LE(counts[i], std::ceil(expected[i] + 1e-9));
    }
  }
}

TEST(Race, ImmediateHitsAcceptSurely) {
  const auto r = run_race(2, 10, [] { return true; }, [] { return true; });
  EXPECT_EQ(r.proposal_datasets, 2u);
  EXPECT_EQ(r.current_datasets, 2u);
  EXPECT_DOUBLE_EQ(race_acceptance(r, 2), 1.0);
}

TEST(Race, CapRejects) {
  const auto r = run_race(2, 5, [] { return false; }, [] { return true; });
  EXPECT_TRUE(r.capped);
  EXPECT_EQ(race_acceptance(r, 2), 0.0);
}

TEST(Race, OneHitKernelProposalFirst) {
  const auto r = run_race(1, 10, [] { return true; }, [] { return true; });
  EXPECT_EQ(r.current_datasets, 0u);
  EXPECT_DOUBLE_EQ(race_acceptance(r, 1), 1.0);
  int calls = 0;
  const auto s = run_race(1, 10, [&] { return ++calls > 3; }, [] { return false; });
  EXPECT_EQ(s.proposal_datasets, 4u);
  EXPECT_EQ(s.current_datasets, 3u);
}

TEST(MoveParticle, OutsideSupportCostsNothing) {
  const Prior prior({"a"}, {0.0}, {1.0});
  ConstantModel model;
  QoIMatrix data({"y"}, Eigen::MatrixXd::Constant(3, 1, 5.0));
  data.values(0, 0) = 4.0;
  SmcConfig cfg = small_config();
  const DatasetScorer score(data, cfg.distance);
  Particle p{Eigen::VectorXd::Constant(1, 0.999), 1.0, Eigen::MatrixXd::Constant(20, 1, 5.0), 0.1};
  int outside = 0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    Stream rng(s);
    const auto m = move_particle(p, 1.0, Eigen::MatrixXd::Constant(1, 1, 1e6), prior, model, score, cfg, rng);
    if (!m.in_support) {
      ++outside;
      EXPECT_EQ(m.datasets, 0u);
      EXPECT_FALSE(m.accepted);
    }
  }
  EXPECT_GE(outside, 49);
}

TEST(MoveParticle, AcceptanceMatchesNegativeBinomialRaces) {
  const double eps = 1.0;
  const double q = hit_probability(0.0, eps);
  // Shift giving half the hit probability, by bisection on the closed form.
  double lo = 0.0, hi = 5.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (hit_probability(mid, eps) > 0.5 * q ? lo : hi) = mid;
  }
  SwitchingGaussian model{0.5, 0.5 * (lo + hi)};
  const double qp = hit_probability(model.shift, eps);
  ASSERT_NEAR(qp, 0.5 * q, 1e-12);
  const double m1 = race_acceptance_mean(q, qp);

  const Prior prior({"a"}, {0.0}, {1.0});
  QoIMatrix data({"y"}, Eigen::MatrixXd::Zero(1, 1));
  SmcConfig cfg;
  cfg.sims_per_param = 1;
  cfg.race_cap = 100000;
  cfg.distance.standardize = false;
  const DatasetScorer score(data, cfg.distance);
  const int moves = 10000;
  int accepted = 0;
  for (int k = 0; k < moves; ++k) {
    Particle p{Eigen::VectorXd::Constant(1, 0.5), 1.0, Eigen::MatrixXd::Zero(1, 1), 0.0};
    Stream rng(stream_key(99, k));
    const auto m = move_particle(p, eps, Eigen::MatrixXd::Constant(1, 1, 1e-3), prior, model, score, cfg, rng);
    ASSERT_TRUE(m.in_support);
    ASSERT_FALSE(m.capped);
    if (m.accepted) {
      ++accepted;
      EXPECT_LT(p.distance, eps);
      EXPECT_NE(p.theta[0], 0.5);
    }
  }
  const double rate = static_cast<double>(accepted) / moves;
  const double se = std::sqrt(m1 * (1 - m1) / moves);
  EXPECT_NEAR(rate, m1, 3 * se) << "analytic " << m1;
}

TEST(RunSmcabc, InitializationOnlyBudget) {
  const Prior prior({"mu1", "mu2"}, {-5, -5}, {5, 5});
  ToyGaussianModel model(2);
  const auto data = toy_data(Eigen::Vector2d(1.0, -1.0), 50, 1);
  SmcConfig cfg = small_config();
  cfg.budget = cfg.particles * cfg.sims_per_param;
  const auto s = run_smcabc(prior, model, data, cfg, 7);
  ASSERT_EQ(s.records.size(), 1u);
  EXPECT_EQ(s.stop, StopReason::budget);
  EXPECT_EQ(s.records[0].cumulative_simulations, cfg.budget);
}

TEST(RunSmcabc, ToyPosteriorCoversDataMean) {
  const Prior prior({"mu1", "mu2"}, {-5, -5}, {5, 5});
  ToyGaussianModel model(2);
  const Eigen::Vector2d truth(1.0, -0.5);
  const auto data = toy_data(truth, 100, 2);
  SmcConfig cfg = small_config();
  cfg.workers = 4;
  const auto s = run_smcabc(prior, model, data, cfg, 11);
  const Eigen::VectorXd mean = weighted_mean(s.particles);
  const Eigen::MatrixXd cov = weighted_covariance(s.particles);
  for (int j = 0; j < 2; ++j) EXPECT_LT(std::abs(mean[j] - truth[j]), 3.0 * std::sqrt(cov(j, j)));
  EXPECT_LT(std::sqrt(cov(0, 0)), 1.0);
}

TEST(RunSmcabc, TraceInvariants) {
  const Prior prior({"mu1", "mu2"}, {-5, -5}, {5, 5});
  ToyGaussianModel model(2);
  const auto data = toy_data(Eigen::Vector2d(0.0, 2.0), 60, 3);
  SmcConfig cfg = small_config();
  cfg.workers = 3;
  std::size_t checked = 0;
  SmcHooks hooks;
  hooks.on_iteration = [&](const SmcState& st) {
    const auto& r = st.records.back();
    for (const auto& p : st.particles)
      if (p.weight > 0.0) EXPECT_LT(p.distance, r.epsilon);
    ++checked;
  };
  const auto s = run_smcabc(prior, model, data, cfg, 5, hooks);
  EXPECT_EQ(checked, s.records.size());
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < s.records.size(); ++i) {
    const auto& r = s.records[i];
    EXPECT_EQ(r.iteration, i);
    total += r.simulations;
    EXPECT_EQ(r.cumulative_simulations, total);
    if (i > 0) EXPECT_LT(r.epsilon, s.records[i - 1].epsilon);
    if (i > 0) EXPECT_LE(r.accepted, r.proposed - r.out_of_support);
  }
  EXPECT_GE(total, cfg.budget);
}

TEST(RunSmcabc, DeterministicAcrossWorkerCounts) {
  const Prior prior({"mu1", "mu2"}, {-5, -5}, {5, 5});
  ToyGaussianModel model(2);
  const auto data = toy_data(Eigen::Vector2d(0.3, 0.1), 40, 4);
  SmcConfig cfg = small_config();
  cfg.budget = 64 * 20 * 15;
  cfg.workers = 1;
  const auto a = to_json(run_smcabc(prior, model, data, cfg, 21)).dump();
  EXPECT_EQ(a, to_json(run_smcabc(prior, model, data, cfg, 21)).dump());
  cfg.workers = 6;
  EXPECT_EQ(a, to_json(run_smcabc(prior, model, data, cfg, 21)).dump());
  EXPECT_NE(a, to_json(run_smcabc(prior, model, data, cfg, 22)).dump());
}

TEST(RunSmcabc, StopsWhenMovesStopBeingAccepted) {
  const Prior prior({"mu1", "mu2"}, {-5, -5}, {5, 5});
  ToyGaussianModel model(2);
  const auto data = toy_data(Eigen::Vector2d(0.5, 0.5), 60, 6);
  SmcConfig cfg = small_config();
  cfg.budget = 64 * 20 * 1000;
  cfg.min_acceptance_rate = 0.2;
  const auto s = run_smcabc(prior, model, data, cfg, 9);
  ASSERT_EQ(s.stop, StopReason::low_acceptance);
  EXPECT_LT(*s.records.back().acceptance_rate(), 0.2);
  for (std::size_t i = 1; i + 1 < s.records.size(); ++i) EXPECT_GE(*s.records[i].acceptance_rate(), 0.2);

  cfg.min_acceptance_rate.reset();
  const auto off = run_smcabc(prior, model, data, cfg, 9);
  EXPECT_NE(off.stop, StopReason::low_acceptance);
  EXPECT_GT(off.records.size(), s.records.size());
}

TEST(RunSmcabc, ResumeReproducesUninterruptedRun) {
  const Prior prior({"mu1", "mu2"}, {-5, -5}, {5, 5});
  ToyGaussianModel model(2);
  const auto data = toy_data(Eigen::Vector2d(-1.0, 0.5), 40, 5);
  SmcConfig cfg = small_config();
  cfg.budget = 64 * 20 * 20;
  std::optional<SmcState> snapshot;
  SmcHooks grab;
  grab.on_iteration = [&](const SmcState& st) {
    if (st.records.size() == 4) snapshot = state_from_json(nlohmann::json::parse(to_json(st).dump()));
  };
  const auto full = run_smcabc(prior, model, data, cfg, 8, grab);
  ASSERT_TRUE(snapshot.has_value());
  ASSERT_GT(full.records.size(), 4u);
  SmcHooks resume;
  resume.resume = &*snapshot;
  const auto again = run_smcabc(prior, model, data, cfg, 8, resume);
  EXPECT_EQ(to_json(again).dump(), to_json(full).dump());
}

TEST(RunSmcabc, DistanceKindDoesNotChangeTheSchema) {
  const Prior prior({"mu1", "mu2"}, {-5, -5}, {5, 5});
  ToyGaussianModel model(2);
  const auto data = toy_data(Eigen::Vector2d(0.0, 0.0), 60, 6);
  SmcConfig cfg = small_config();
  cfg.budget = 64 * 20 * 5;
  const auto w = run_smcabc(prior, model, data, cfg, 1);
  cfg.distance.kind = DistanceKind::kl;
  const auto k = run_smcabc(prior, model, data, cfg, 1);
  ASSERT_GT(k.records.size(), 1u);
  std::vector<std::string> kw, kk;
  const auto jw = to_json(w.records.back()), jk = to_json(k.records.back());
  for (const auto& [key, _] : jw.items()) kw.push_back(key);
  for (const auto& [key, _] : jk.items()) kk.push_back(key);
  EXPECT_EQ(kw, kk);
}

TEST(RunSmcabc, ConstantModelStopsOnStagnation) {
  const Prior prior({"a"}, {0.0}, {1.0});
  ConstantModel model;
  QoIMatrix data({"y"}, Eigen::MatrixXd(3, 1));
  data.values << 0.0, 1.0, 2.0;
  SmcConfig cfg = small_config();
  const auto s = run_smcabc(prior, model, data, cfg, 2);
  EXPECT_EQ(s.stop, StopReason::stagnation);
  ASSERT_EQ(s.records.size(), 3u);
  EXPECT_TRUE(s.records[1].stagnated);
  EXPECT_TRUE(s.records[2].stagnated);
  EXPECT_LT(s.records[2].epsilon, s.records[1].epsilon);
}

TEST(RunSmcabc, EpsilonTargetStops) {
  const Prior prior({"mu1"}, {-5}, {5});
  ToyGaussianModel model(1);
  const auto data = toy_data(Eigen::VectorXd::Constant(1, 0.5), 50, 9);
  SmcConfig cfg = small_config();
  cfg.epsilon_target = 1.0;
  const auto s = run_smcabc(prior, model, data, cfg, 3);
  EXPECT_EQ(s.stop, StopReason::epsilon_target);
  EXPECT_LE(s.records.back().epsilon, 1.0);
}

TEST(RunSmcabc, ValidatesConfig) {
  const Prior prior({"mu1"}, {-5}, {5});
  ToyGaussianModel model(1);
  const auto data = toy_data(Eigen::VectorXd::Constant(1, 0.5), 10, 9);
  SmcConfig cfg = small_config();
  cfg.alpha = 1.0;
  EXPECT_THROW(run_smcabc(prior, model, data, cfg, 3), ConfigurationError);
  EXPECT_THROW(Prior({"a"}, {1.0}, {1.0}), ConfigurationError);
}
