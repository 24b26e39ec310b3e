#pragma once

#include <Eigen/Core>
#include <boost/random/sobol.hpp>

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "neurocal/errors.hpp"
#include "neurocal/models.hpp"
#include "neurocal/morphometrics.hpp"
#include "neurocal/parallel.hpp"
#include "neurocal/random.hpp"

namespace neurocal {

struct ParamSpace {
  std::vector<std::string> names;
  std::vector<double> lower;
  std::vector<double> upper;

  std::size_t dim() const { return names.size(); }

  void validate() const {
    if (names.empty()) throw ConfigurationError("parameter space needs at least one parameter");
    if (lower.size() != names.size() || upper.size() != names.size())
      throw ConfigurationError("parameter space names and bounds differ in length");
    for (std::size_t j = 0; j < names.size(); ++j)
      if (!(lower[j] < upper[j]) || !std::isfinite(lower[j]) || !std::isfinite(upper[j]))
        throw ConfigurationError("bounds for '" + names[j] + "' need lo < hi");
  }

  /// Bounds of the growth-model sensitivity study (same for both models).
  static ParamSpace growth_default() { return {{"p_bra", "R", "v"}, {0.003, 0.4e-3, 30.0}, {0.01, 1.2e-3, 100.0}}; }

  static ParamSpace ishigami() {
    const double pi = std::numbers::pi;
    return {{"x1", "x2", "x3"}, {-pi, -pi, -pi}, {pi, pi, pi}};
  }
};

/// Saltelli design. Each base sample k owns a block of 2D+2 consecutive rows:
/// A, AB_1..AB_D, BA_1..BA_D, B, where AB_i is A with column i from B and
/// BA_i is B with column i from A.
struct SaltelliDesign {
  std::size_t base = 0;
  std::size_t dim = 0;
  Eigen::MatrixXd rows;

  std::size_t block() const { return 2 * dim + 2; }
  Eigen::Index a(std::size_t k) const { return static_cast<Eigen::Index>(k * block()); }
  Eigen::Index ab(std::size_t k, std::size_t i) const { return static_cast<Eigen::Index>(k * block() + 1 + i); }
  Eigen::Index ba(std::size_t k, std::size_t i) const { return static_cast<Eigen::Index>(k * block() + 1 + dim + i); }
  Eigen::Index b(std::size_t k) const { return static_cast<Eigen::Index>(k * block() + block() - 1); }
};

inline bool is_power_of_two(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

/// Rounds N up to a power of two; `warning` receives a note when it did.
inline SaltelliDesign saltelli_sample(const ParamSpace& space, std::size_t n, std::string* warning = nullptr) {
  space.validate();
  if (n == 0) throw ConfigurationError("base sample count N must be >= 1");
  if (!is_power_of_two(n)) {
    std::size_t m = 1;
    while (m < n) m <<= 1;
    if (warning) *warning = "N = " + std::to_string(n) + " is not a power of 2; rounded up to " + std::to_string(m);
    n = m;
  }
  const std::size_t d = space.dim();
  SaltelliDesign des{n, d, Eigen::MatrixXd(static_cast<Eigen::Index>(n * (2 * d + 2)), static_cast<Eigen::Index>(d))};
  boost::random::sobol gen(static_cast<std::size_t>(2 * d));
  gen.discard(2 * d); // the first point is all zeros
  std::vector<double> u(2 * d);
  auto scale = [&](std::size_t j, double x) { return space.lower[j] + (space.upper[j] - space.lower[j]) * x; };
  for (std::size_t k = 0; k < n; ++k) {
    for (auto& x : u) x = std::ldexp(static_cast<double>(gen()), -64);
    for (std::size_t j = 0; j < d; ++j) {
      const double aj = scale(j, u[j]), bj = scale(j, u[d + j]);
      des.rows(des.a(k), static_cast<Eigen::Index>(j)) = aj;
      des.rows(des.b(k), static_cast<Eigen::Index>(j)) = bj;
      for (std::size_t i = 0; i < d; ++i) {
        des.rows(des.ab(k, i), static_cast<Eigen::Index>(j)) = i == j ? bj : aj;
        des.rows(des.ba(k, i), static_cast<Eigen::Index>(j)) = i == j ? aj : bj;
      }
    }
  }
  return des;
}

/// Mean QoI vector over M' replicates at theta.
template <SimulationModel M>
Eigen::VectorXd model_expectation(const M& model, std::span<const double> theta, std::size_t replicates,
                                  std::uint64_t seed) {
  if (replicates < 1) throw ConfigurationError("M' must be >= 1");
  return model.simulate(theta, replicates, seed).values.colwise().mean().transpose();
}

struct SobolIndex {
  std::string parameter;
  std::string qoi;
  bool defined = true; ///< false when the QoI has zero variance
  double s1 = 0.0, s1_ci = 0.0;
  double st = 0.0, st_ci = 0.0;
};

struct SobolResult {
  std::vector<SobolIndex> indices; ///< parameter-major within each QoI
  std::size_t base = 0;
  std::size_t replicates = 0;
  std::string model;
  std::vector<std::string> warnings;

  const SobolIndex& at(const std::string& parameter, const std::string& qoi) const {
    for (const auto& i : indices)
      if (i.parameter == parameter && i.qoi == qoi) return i;
    throw ConfigurationError("no index for (" + parameter + ", " + qoi + ")");
  }
};

namespace detail {

struct IndexPair {
  double s1, st;
};

// Symmetric Saltelli (first order) and Jansen (total) estimators over the
// base samples listed in `ks`, using both the AB and the BA blocks.
inline IndexPair sobol_estimate(const SaltelliDesign& des, const Eigen::VectorXd& y, std::size_t i,
                                std::span<const std::size_t> ks) {
  double mean = 0.0;
  for (auto k : ks) mean += y[des.a(k)] + y[des.b(k)];
  mean /= static_cast<double>(2 * ks.size());
  double var = 0.0, s1 = 0.0, st = 0.0;
  for (auto k : ks) {
    const double fa = y[des.a(k)], fb = y[des.b(k)], fab = y[des.ab(k, i)], fba = y[des.ba(k, i)];
    var += (fa - mean) * (fa - mean) + (fb - mean) * (fb - mean);
    s1 += fb * (fab - fa) + fa * (fba - fb);
    st += (fa - fab) * (fa - fab) + (fb - fba) * (fb - fba);
  }
  const auto n = static_cast<double>(ks.size());
  var /= 2.0 * n;
  return {s1 / (2.0 * n) / var, st / (4.0 * n) / var};
}

} // namespace detail

/// Indices of every parameter for every output column of `outputs` (rows
/// aligned with the design). Outputs are standardized per column first, so
/// the estimates are invariant under affine rescaling of a QoI. 95% CIs are
/// 1.96 bootstrap standard deviations over resampled base indices.
inline SobolResult sobol_indices(const SaltelliDesign& des, const Eigen::MatrixXd& outputs,
                                 const std::vector<std::string>& parameters, const std::vector<std::string>& qois,
                                 std::size_t resamples = 1000, std::uint64_t seed = 0) {
  if (outputs.rows() != des.rows.rows()) throw ConfigurationError("outputs do not match the design rows");
  if (static_cast<std::size_t>(outputs.cols()) != qois.size()) throw ConfigurationError("QoI labels do not match outputs");
  if (parameters.size() != des.dim) throw ConfigurationError("parameter labels do not match the design");
  if (!outputs.allFinite()) throw ConfigurationError("model outputs must be finite");
  SobolResult res;
  res.base = des.base;
  std::vector<std::size_t> all(des.base);
  for (std::size_t k = 0; k < des.base; ++k) all[k] = k;
  for (Eigen::Index q = 0; q < outputs.cols(); ++q) {
    Eigen::VectorXd y = outputs.col(q);
    const double mean = y.mean();
    const double sd = std::sqrt((y.array() - mean).square().mean());
    const bool defined = sd > 1e-12 * std::max(1.0, std::abs(mean));
    if (defined) y = (y.array() - mean) / sd;
    for (std::size_t i = 0; i < des.dim; ++i) {
      SobolIndex idx{parameters[i], qois[static_cast<std::size_t>(q)]};
      idx.defined = defined;
      if (!defined) {
        idx.s1 = idx.st = idx.s1_ci = idx.st_ci = std::numeric_limits<double>::quiet_NaN();
        res.indices.push_back(idx);
        continue;
      }
      const auto est = detail::sobol_estimate(des, y, i, all);
      idx.s1 = est.s1;
      idx.st = est.st;
      Stream rng(stream_key(seed, static_cast<std::uint64_t>(q), i));
      std::vector<std::size_t> ks(des.base);
      double m1 = 0.0, m2 = 0.0, t1 = 0.0, t2 = 0.0;
      for (std::size_t r = 0; r < resamples; ++r) {
        for (auto& k : ks) k = static_cast<std::size_t>(rng.below(des.base));
        const auto b = detail::sobol_estimate(des, y, i, ks);
        if (!std::isfinite(b.s1) || !std::isfinite(b.st)) continue;
        m1 += b.s1;
        m2 += b.s1 * b.s1;
        t1 += b.st;
        t2 += b.st * b.st;
      }
      const auto nr = static_cast<double>(resamples);
      if (resamples > 1) {
        idx.s1_ci = 1.96 * std::sqrt(std::max(0.0, (m2 - m1 * m1 / nr) / (nr - 1.0)));
        idx.st_ci = 1.96 * std::sqrt(std::max(0.0, (t2 - t1 * t1 / nr) / (nr - 1.0)));
      }
      res.indices.push_back(idx);
    }
  }
  return res;
}

struct SensitivityRun {
  SaltelliDesign design;
  Eigen::MatrixXd expectations; ///< one row per design row
  std::vector<std::string> parameters;
  std::vector<std::string> qois;
  SobolResult result;
};

/// Full analysis. All rows of base block k use the replicate seeds
/// stream_key(seed, k): common random numbers across A, B and the mixed
/// rows, so the index estimators see model differences rather than
/// replicate noise.
template <SimulationModel M>
SensitivityRun run_sa(const M& model, const ParamSpace& space, std::size_t n, std::size_t replicates,
                      std::uint64_t seed, std::size_t workers = 1, std::size_t resamples = 1000) {
  if (model.parameter_names() != space.names)
    throw ConfigurationError("parameter space names do not match the model parameters");
  SensitivityRun run;
  std::string warning;
  run.design = saltelli_sample(space, n, &warning);
  run.parameters = space.names;
  run.qois = model.qoi_names();
  const auto rows = run.design.rows.rows();
  run.expectations.resize(rows, static_cast<Eigen::Index>(run.qois.size()));
  parallel_for(static_cast<std::size_t>(rows), workers, [&](std::size_t r) {
    const Eigen::VectorXd theta = run.design.rows.row(static_cast<Eigen::Index>(r)).transpose();
    const std::uint64_t base = r / run.design.block();
    run.expectations.row(static_cast<Eigen::Index>(r)) =
        model_expectation(model, std::span<const double>(theta.data(), static_cast<std::size_t>(theta.size())),
                          replicates, stream_key(seed, base))
            .transpose();
  });
  run.result = sobol_indices(run.design, run.expectations, run.parameters, run.qois, resamples, stream_key(seed, ~0ULL));
  run.result.replicates = replicates;
  if (!warning.empty()) run.result.warnings.push_back(warning);
  return run;
}

/// Long format: row, parameters..., qoi, value.
inline void write_raw_csv(std::ostream& out, const SensitivityRun& run) {
  out << "row";
  for (const auto& p : run.parameters) out << ',' << p;
  out << ",qoi,value\n";
  for (Eigen::Index r = 0; r < run.expectations.rows(); ++r)
    for (Eigen::Index q = 0; q < run.expectations.cols(); ++q) {
      out << r;
      for (Eigen::Index j = 0; j < run.design.rows.cols(); ++j) out << ',' << format_double(run.design.rows(r, j));
      out << ',' << run.qois[static_cast<std::size_t>(q)] << ',' << format_double(run.expectations(r, q)) << '\n';
    }
}

inline void write_indices_csv(std::ostream& out, const SobolResult& res) {
  out << "parameter,qoi,defined,S1,S1_ci95,S_tot,S_tot_ci95\n";
  for (const auto& i : res.indices) {
    out << i.parameter << ',' << i.qoi << ',' << (i.defined ? "true" : "false");
    if (i.defined)
      out << ',' << format_double(i.s1) << ',' << format_double(i.s1_ci) << ',' << format_double(i.st) << ','
          << format_double(i.st_ci) << '\n';
    else
      out << ",,,,\n";
  }
}

} // namespace neurocal
