#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "neurocal/distances.hpp"
#include "neurocal/errors.hpp"
#include "neurocal/models.hpp"
#include "neurocal/parallel.hpp"
#include "neurocal/random.hpp"
#include "neurocal/smcabc.hpp"

namespace neurocal {

/// Weighted quantile: smallest x whose cumulative normalized weight is >= q.
inline double weighted_quantile(std::span<const double> x, std::span<const double> w, double q) {
  if (x.size() != w.size() || x.empty()) throw ConfigurationError("values and weights must be nonempty and aligned");
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  double total = 0.0;
  for (double v : w) total += v;
  if (!(total > 0.0)) throw ConfigurationError("all weights are zero");
  double cum = 0.0;
  for (auto i : order) {
    cum += w[i] / total;
    if (cum >= q * (1.0 - 1e-12)) return x[i];
  }
  return x[order.back()];
}

struct WeightedMoments {
  double mean = 0.0;
  double stddev = 0.0;
  double ess = 0.0;
};

inline WeightedMoments weighted_moments(std::span<const double> x, std::span<const double> w) {
  double s = 0.0, m = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    s += w[i];
    m += w[i] * x[i];
  }
  m /= s;
  double v = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) v += w[i] * (x[i] - m) * (x[i] - m);
  return {m, std::sqrt(v / s), ess(w)};
}

/// Scott's rule for a weighted 1D sample.
inline double scott_bandwidth(std::span<const double> x, std::span<const double> w) {
  const auto mo = weighted_moments(x, w);
  return mo.stddev * std::pow(mo.ess, -0.2);
}

inline double gaussian_kde(double at, std::span<const double> x, std::span<const double> w, double h) {
  double s = 0.0, total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double z = (at - x[i]) / h;
    s += w[i] * std::exp(-0.5 * z * z);
    total += w[i];
  }
  return s / (total * h * std::sqrt(2.0 * std::numbers::pi));
}

struct Marginal {
  std::string name;
  bool degenerate = false;
  double value = 0.0; ///< the single support point when degenerate
  double bandwidth = 0.0;
  std::vector<double> grid;
  std::vector<double> density;
};

/// Weighted Gaussian KDE of one parameter on a grid spanning the sample
/// +- 4 bandwidths. A zero-spread sample is reported as degenerate.
inline Marginal kde_marginal(const std::string& name, std::span<const double> x, std::span<const double> w,
                             std::size_t resolution = 512, std::optional<double> bandwidth = std::nullopt) {
  if (resolution < 2) throw ConfigurationError("KDE grid needs at least 2 points");
  Marginal m;
  m.name = name;
  std::vector<double> xs, ws;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (w[i] > 0.0) {
      xs.push_back(x[i]);
      ws.push_back(w[i]);
    }
  if (xs.empty()) throw ConfigurationError("KDE needs at least one weighted point");
  const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
  if (*lo == *hi) {
    m.degenerate = true;
    m.value = *lo;
    return m;
  }
  m.bandwidth = bandwidth ? *bandwidth : scott_bandwidth(xs, ws);
  if (!(m.bandwidth > 0.0)) throw ConfigurationError("KDE bandwidth must be > 0");
  const double a = *lo - 4.0 * m.bandwidth, b = *hi + 4.0 * m.bandwidth;
  for (std::size_t i = 0; i < resolution; ++i) {
    const double g = a + (b - a) * static_cast<double>(i) / static_cast<double>(resolution - 1);
    m.grid.push_back(g);
    m.density.push_back(gaussian_kde(g, xs, ws, m.bandwidth));
  }
  return m;
}

inline double trapezoid(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
  return s;
}

inline std::vector<Marginal> kde_marginals(const std::vector<Particle>& particles, const std::vector<std::string>& names,
                                           std::size_t resolution = 512) {
  if (particles.empty()) throw ConfigurationError("empty particle population");
  std::vector<Marginal> out;
  std::vector<double> w;
  for (const auto& p : particles) w.push_back(p.weight);
  for (Eigen::Index j = 0; j < particles.front().theta.size(); ++j) {
    std::vector<double> x;
    for (const auto& p : particles) x.push_back(p.theta[j]);
    out.push_back(kde_marginal(names.at(static_cast<std::size_t>(j)), x, w, resolution));
  }
  return out;
}

struct QoiComparison {
  std::string qoi;
  double data_mean = 0.0, data_std = 0.0;
  double sim_mean = 0.0, sim_std = 0.0;
  double bandwidth = 0.0; ///< data bandwidth used for both KDEs
  std::vector<double> grid;
  std::vector<double> data_density;
  std::vector<double> sim_density;
  std::vector<double> hist_edges;   ///< bins + 1 edges
  std::vector<double> hist_density; ///< normalized data histogram
};

struct PredictiveCheck {
  std::vector<QoiComparison> qois;
  Eigen::MatrixXd simulated; ///< all posterior-predictive QoI rows
};

/// Draws one parameter per particle slot (multinomial by weight), simulates
/// M' replicates each and compares the QoI marginals with the data. Both
/// KDEs use the data's Scott bandwidth so the curves are comparable.
template <SimulationModel M>
PredictiveCheck predictive_check(const std::vector<Particle>& particles, const M& model, const QoIMatrix& observed,
                                 std::size_t sims_per_param, std::uint64_t seed, std::size_t workers = 1,
                                 std::size_t resolution = 256, std::size_t bins = 30) {
  if (particles.empty()) throw ConfigurationError("empty posterior");
  if (model.qoi_names() != observed.columns) throw ConfigurationError("observed columns do not match the model QoIs");
  if (observed.rows() < 2) throw ConfigurationError("predictive check needs at least 2 data rows");
  const std::size_t n = particles.size();
  std::vector<double> w;
  for (const auto& p : particles) w.push_back(p.weight);
  std::vector<double> cdf(n);
  std::partial_sum(w.begin(), w.end(), cdf.begin());
  Stream pick(stream_key(seed, 0));
  std::vector<std::size_t> draws(n);
  for (auto& d : draws) {
    const double u = pick.uniform() * cdf.back();
    d = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    d = std::min(d, n - 1);
  }
  const auto q = static_cast<Eigen::Index>(observed.cols());
  const auto m = static_cast<Eigen::Index>(sims_per_param);
  PredictiveCheck out;
  out.simulated.resize(static_cast<Eigen::Index>(n) * m, q);
  parallel_for(n, workers, [&](std::size_t i) {
    const auto& theta = particles[draws[i]].theta;
    const auto sim = model.simulate(std::span<const double>(theta.data(), static_cast<std::size_t>(theta.size())),
                                    sims_per_param, stream_key(seed, 1, i));
    if (sim.rows() != m) throw ConfigurationError("model returned the wrong number of rows");
    out.simulated.middleRows(static_cast<Eigen::Index>(i) * m, m) = sim.values;
  });

  for (Eigen::Index c = 0; c < q; ++c) {
    QoiComparison cmp;
    cmp.qoi = observed.columns[static_cast<std::size_t>(c)];
    const std::vector<double> dx = detail::column(observed.values, c), sx = detail::column(out.simulated, c);
    const std::vector<double> dw(dx.size(), 1.0), sw(sx.size(), 1.0);
    const auto dm = weighted_moments(dx, dw), sm = weighted_moments(sx, sw);
    cmp.data_mean = dm.mean;
    cmp.data_std = dm.stddev;
    cmp.sim_mean = sm.mean;
    cmp.sim_std = sm.stddev;
    double lo = std::min(*std::min_element(dx.begin(), dx.end()), *std::min_element(sx.begin(), sx.end()));
    double hi = std::max(*std::max_element(dx.begin(), dx.end()), *std::max_element(sx.begin(), sx.end()));
    cmp.bandwidth = scott_bandwidth(dx, dw);
    if (!(cmp.bandwidth > 0.0)) cmp.bandwidth = std::max(1e-9, 1e-3 * std::max(std::abs(lo), std::abs(hi)));
    const double a = lo - 4.0 * cmp.bandwidth, b = hi + 4.0 * cmp.bandwidth;
    for (std::size_t i = 0; i < resolution; ++i) {
      const double g = a + (b - a) * static_cast<double>(i) / static_cast<double>(resolution - 1);
      cmp.grid.push_back(g);
      cmp.data_density.push_back(gaussian_kde(g, dx, dw, cmp.bandwidth));
      cmp.sim_density.push_back(gaussian_kde(g, sx, sw, cmp.bandwidth));
    }
    const auto [dlo, dhi] = std::minmax_element(dx.begin(), dx.end());
    const double hlo = *dlo, hhi = *dhi > *dlo ? *dhi : *dlo + 1.0;
    for (std::size_t k = 0; k <= bins; ++k) cmp.hist_edges.push_back(hlo + (hhi - hlo) * static_cast<double>(k) / static_cast<double>(bins));
    std::vector<double> counts(bins, 0.0);
    for (double v : dx) {
      auto k = static_cast<std::size_t>((v - hlo) / (hhi - hlo) * static_cast<double>(bins));
      counts[std::min(k, bins - 1)] += 1.0;
    }
    const double width = (hhi - hlo) / static_cast<double>(bins);
    for (double c2 : counts) cmp.hist_density.push_back(c2 / (static_cast<double>(dx.size()) * width));
    out.qois.push_back(std::move(cmp));
  }
  return out;
}

struct Pairing {
  std::size_t data_index;
  std::size_t sim_index;
  double distance;
};

/// Nearest simulated row for every data row after standardizing both by the
/// data's column std. Ties go to the lowest simulated index.
inline std::vector<Pairing> pair_neurons(const QoIMatrix& data, const QoIMatrix& sim) {
  if (data.columns != sim.columns) {
    std::string a, b;
    for (const auto& c : data.columns) a += (a.empty() ? "" : ",") + c;
    for (const auto& c : sim.columns) b += (b.empty() ? "" : ",") + c;
    throw ConfigurationError("column mismatch: data has [" + a + "], simulation has [" + b + "]");
  }
  if (sim.rows() == 0) throw ConfigurationError("no simulated rows to pair with");
  if (data.rows() == 0) throw ConfigurationError("no data rows to pair");
  const Eigen::VectorXd scales = column_scales(data.values, data.columns);
  const Eigen::MatrixXd x = standardize(data.values, scales), y = standardize(sim.values, scales);
  std::vector<Pairing> out;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::Index best = 0;
    double bd = (x.row(i) - y.row(0)).squaredNorm();
    for (Eigen::Index j = 1; j < y.rows(); ++j) {
      const double d = (x.row(i) - y.row(j)).squaredNorm();
      if (d < bd) {
        bd = d;
        best = j;
      }
    }
    out.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(best), std::sqrt(bd)});
  }
  return out;
}

} // namespace neurocal
