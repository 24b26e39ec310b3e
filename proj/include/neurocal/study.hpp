#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "neurocal/distances.hpp"
#include "neurocal/errors.hpp"
#include "neurocal/models.hpp"
#include "neurocal/parallel.hpp"
#include "neurocal/random.hpp"

namespace neurocal {

/// Empirical Wasserstein error study: clouds from N(0, C) and N(shift, C)
/// with C = equicorrelation(dim, rho), compared with the Gaussian closed form.
struct WassersteinStudyConfig {
  std::vector<std::size_t> dims{1, 2, 4};
  std::vector<std::size_t> sizes{100, 1000};
  std::size_t repetitions = 100;
  double rho = 0.2;
  double shift = 1.0;
  double order = 2.0;

  void validate() const {
    if (dims.empty() || sizes.empty()) throw ConfigurationError("study needs at least one dimension and one size");
    for (auto d : dims)
      if (d == 0) throw ConfigurationError("study dimensions must be >= 1");
    for (auto n : sizes)
      if (n == 0) throw ConfigurationError("study sample sizes must be >= 1");
    if (repetitions == 0) throw ConfigurationError("study needs at least one repetition");
    if (!(rho >= 0.0 && rho < 1.0)) throw ConfigurationError("correlation must lie in [0, 1)");
    if (!(order >= 1.0)) throw ConfigurationError("Wasserstein order p must be >= 1");
    if (!(shift != 0.0) || !std::isfinite(shift)) throw ConfigurationError("mean shift must be finite and nonzero");
  }
};

struct StudySample {
  std::size_t dim = 0;
  std::size_t size = 0;
  std::size_t repetition = 0;
  double empirical = 0.0;
  double reference = 0.0;
  double relative_error = 0.0;
};

struct StudyCell {
  std::size_t dim = 0;
  std::size_t size = 0;
  double median_relative_error = 0.0;
};

struct WassersteinStudy {
  std::vector<StudySample> samples;
  std::vector<StudyCell> cells; ///< one per (dim, size), in config order
};

inline PointCloud gaussian_cloud(std::size_t n, const Eigen::VectorXd& mean, const Eigen::MatrixXd& chol, Stream& rng) {
  PointCloud x(static_cast<Eigen::Index>(n), mean.size());
  Eigen::VectorXd z(mean.size());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = rng.normal();
    x.row(i) = (mean + chol * z).transpose();
  }
  return x;
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw ConfigurationError("median of an empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

/// Repetition r of cell (dim, n) draws from stream (seed, dim, n, r).
inline WassersteinStudy run_wasserstein_study(const WassersteinStudyConfig& cfg, std::uint64_t seed,
                                              std::size_t workers = 1) {
  cfg.validate();
  WassersteinStudy out;
  for (auto dim : cfg.dims) {
    const auto d = static_cast<Eigen::Index>(dim);
    const Eigen::MatrixXd c = equicorrelation(d, cfg.rho);
    const Eigen::MatrixXd chol = Eigen::LLT<Eigen::MatrixXd>(c).matrixL();
    const Eigen::VectorXd mu0 = Eigen::VectorXd::Zero(d), mu1 = Eigen::VectorXd::Constant(d, cfg.shift);
    const double reference = gaussian_w2_oracle(mu0, c, mu1, c);
    for (auto n : cfg.sizes) {
      std::vector<StudySample> cell(cfg.repetitions);
      parallel_for(cfg.repetitions, workers, [&](std::size_t r) {
        Stream rng(stream_key(seed, dim, n, r));
        const PointCloud x = gaussian_cloud(n, mu0, chol, rng);
        const PointCloud y = gaussian_cloud(n, mu1, chol, rng);
        auto& s = cell[r];
        s = {dim, n, r, wasserstein(x, y, cfg.order), reference, 0.0};
        s.relative_error = std::abs(s.empirical - reference) / reference;
      });
      std::vector<double> errors;
      for (const auto& s : cell) errors.push_back(s.relative_error);
      out.cells.push_back({dim, n, median(errors)});
      out.samples.insert(out.samples.end(), cell.begin(), cell.end());
    }
  }
  return out;
}

} // namespace neurocal
