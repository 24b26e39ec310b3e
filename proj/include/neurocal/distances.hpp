#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "neurocal/errors.hpp"
#include "neurocal/knn.hpp"
#include "neurocal/random.hpp"
#include "neurocal/transport.hpp"

namespace neurocal {

/// Rows are points with uniform weights.
using PointCloud = Eigen::MatrixXd;

enum class DistanceKind { wasserstein, sliced_wasserstein, kl, gamma };

inline std::string to_string(DistanceKind k) {
  switch (k) {
  case DistanceKind::wasserstein: return "wasserstein";
  case DistanceKind::sliced_wasserstein: return "sliced-wasserstein";
  case DistanceKind::kl: return "kl";
  case DistanceKind::gamma: return "gamma";
  }
  return {};
}

inline DistanceKind parse_distance_kind(const std::string& s) {
  for (auto k : {DistanceKind::wasserstein, DistanceKind::sliced_wasserstein, DistanceKind::kl, DistanceKind::gamma})
    if (s == to_string(k)) return k;
  throw ConfigurationError("unknown distance kind '" + s + "'");
}

struct DistanceSpec {
  DistanceKind kind = DistanceKind::wasserstein;
  double order = 2.0;
  std::size_t projections = 50;
  std::size_t neighbors = 1;
  double gamma = 0.1;
  /// Standardize columns by the observed data's per-column std.
  bool standardize = true;

  void validate() const {
    if (!(order >= 1.0) || !std::isfinite(order)) throw ConfigurationError("Wasserstein order p must be >= 1");
    if (projections == 0) throw ConfigurationError("number of projections must be >= 1");
    if (neighbors == 0) throw ConfigurationError("k_neighbors must be >= 1");
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ConfigurationError("gamma exponent must be > 0");
  }
};

/// Counters filled by the kNN estimators.
struct KnnDiagnostics {
  std::size_t jittered = 0; ///< zero neighbour distances replaced by the jitter floor
};

inline constexpr double kKnnJitter = 1e-12;

namespace detail {

inline void check_clouds(const PointCloud& x, const PointCloud& y) {
  if (x.rows() == 0 || y.rows() == 0) throw ConfigurationError("point clouds must be nonempty");
  if (x.cols() != y.cols())
    throw ConfigurationError("dimension mismatch: " + std::to_string(x.cols()) + " vs " + std::to_string(y.cols()));
  if (!x.allFinite() || !y.allFinite()) throw ConfigurationError("point clouds must be finite");
}

inline double pow_p(double d, double p) { return p == 2.0 ? d * d : p == 1.0 ? d : std::pow(d, p); }

/// W_p^p between two 1D samples by merging their quantile functions. The
/// cloud sizes give a common grid of n*m cells, so the merge is exact.
inline double wasserstein_1d_pow(std::vector<double> x, std::vector<double> y, double p) {
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const auto n = static_cast<long double>(x.size()), m = static_cast<long double>(y.size());
  if (x.size() == y.size()) {
    long double sum = 0.0L;
    for (std::size_t i = 0; i < x.size(); ++i) sum += pow_p(std::abs(x[i] - y[i]), p);
    return static_cast<double>(sum / n);
  }
  // x_i covers cells [i*m, (i+1)*m), y_j covers [j*n, (j+1)*n).
  const auto nn = static_cast<std::uint64_t>(x.size()), mm = static_cast<std::uint64_t>(y.size());
  std::uint64_t pos = 0, i = 0, j = 0;
  long double sum = 0.0L;
  while (i < nn && j < mm) {
    const std::uint64_t next = std::min((i + 1) * mm, (j + 1) * nn);
    sum += static_cast<long double>(next - pos) * pow_p(std::abs(x[i] - y[j]), p);
    pos = next;
    if (pos == (i + 1) * mm) ++i;
    if (pos == (j + 1) * nn) ++j;
  }
  return static_cast<double>(sum / (n * m));
}

inline std::vector<double> column(const PointCloud& x, Eigen::Index c) {
  std::vector<double> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) out[static_cast<std::size_t>(i)] = x(i, c);
  return out;
}

} // namespace detail

/// Exact p-Wasserstein distance between uniform empirical measures with a
/// Euclidean ground metric. One-dimensional clouds use the monotone coupling;
/// otherwise the transport LP is solved by network simplex with integer
/// masses m/g per x-point and n/g per y-point, g = gcd(n, m).
inline double wasserstein(const PointCloud& x, const PointCloud& y, double p = 2.0) {
  detail::check_clouds(x, y);
  if (!(p >= 1.0)) throw ConfigurationError("Wasserstein order p must be >= 1");
  if (x.cols() == 1) return std::pow(detail::wasserstein_1d_pow(detail::column(x, 0), detail::column(y, 0), p), 1.0 / p);

  const auto n = static_cast<std::int64_t>(x.rows()), m = static_cast<std::int64_t>(y.rows());
  const std::int64_t g = std::gcd(n, m);
  std::vector<std::int64_t> supply(static_cast<std::size_t>(n), m / g), demand(static_cast<std::size_t>(m), n / g);
  std::vector<double> cost(static_cast<std::size_t>(n * m));
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < m; ++j)
      cost[static_cast<std::size_t>(i * m + j)] = detail::pow_p((x.row(i) - y.row(j)).norm(), p);
  TransportSimplex solver(supply, demand, cost);
  if (solver.run() != TransportSimplex::Status::optimal) throw std::runtime_error("transport solver failed");
  const double mass = static_cast<double>(n) * static_cast<double>(m / g);
  return std::pow(std::max(0.0, solver.total_cost() / mass), 1.0 / p);
}

namespace detail {

inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& a, const char* what) {
  if (a.rows() != a.cols()) throw ConfigurationError(std::string(what) + " must be square");
  if (!(a - a.transpose()).isZero(1e-9 * std::max(1.0, a.cwiseAbs().maxCoeff())))
    throw ConfigurationError(std::string(what) + " must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (a + a.transpose()));
  Eigen::VectorXd ev = es.eigenvalues();
  const double tol = 1e-10 * std::max(1.0, ev.cwiseAbs().maxCoeff());
  if (ev.minCoeff() < -tol) throw ConfigurationError(std::string(what) + " is not positive semidefinite");
  ev = ev.cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

} // namespace detail

/// Closed-form W2 between two Gaussians.
inline double gaussian_w2_oracle(const Eigen::VectorXd& mu1, const Eigen::MatrixXd& s1, const Eigen::VectorXd& mu2,
                                 const Eigen::MatrixXd& s2) {
  const auto d = mu1.size();
  if (mu2.size() != d || s1.rows() != d || s2.rows() != d) throw ConfigurationError("dimension mismatch");
  detail::psd_sqrt(s1, "covariance 1");
  const Eigen::MatrixXd r2 = detail::psd_sqrt(s2, "covariance 2");
  const Eigen::MatrixXd cross = detail::psd_sqrt(r2 * s1 * r2, "cross term");
  const double w2 = (mu1 - mu2).squaredNorm() + (s1 + s2 - 2.0 * cross).trace();
  return std::sqrt(std::max(0.0, w2));
}

/// Sliced Wasserstein distance over random unit directions.
inline double sliced_wasserstein(const PointCloud& x, const PointCloud& y, std::size_t projections, double p,
                                 Stream& rng) {
  detail::check_clouds(x, y);
  if (projections == 0) throw ConfigurationError("number of projections must be >= 1");
  if (!(p >= 1.0)) throw ConfigurationError("Wasserstein order p must be >= 1");
  const Eigen::Index d = x.cols();
  Eigen::VectorXd theta(d);
  std::vector<double> px(static_cast<std::size_t>(x.rows())), py(static_cast<std::size_t>(y.rows()));
  long double sum = 0.0L;
  for (std::size_t k = 0; k < projections; ++k) {
    double norm = 0.0;
    do {
      for (Eigen::Index c = 0; c < d; ++c) theta[c] = rng.normal();
      norm = theta.norm();
    } while (!(norm > 0.0));
    theta /= norm;
    for (Eigen::Index i = 0; i < x.rows(); ++i) px[static_cast<std::size_t>(i)] = x.row(i).dot(theta);
    for (Eigen::Index j = 0; j < y.rows(); ++j) py[static_cast<std::size_t>(j)] = y.row(j).dot(theta);
    sum += detail::wasserstein_1d_pow(px, py, p);
  }
  return std::pow(static_cast<double>(sum / static_cast<long double>(projections)), 1.0 / p);
}

namespace detail {

inline void check_knn(const PointCloud& x, const PointCloud& y, std::size_t k) {
  check_clouds(x, y);
  if (k == 0) throw ConfigurationError("k_neighbors must be >= 1");
  if (static_cast<std::size_t>(x.rows()) <= k || static_cast<std::size_t>(y.rows()) <= k)
    throw ConfigurationError("kNN estimators need more than k points in each sample");
}

inline double floored(double r, KnnDiagnostics* diag) {
  if (r > 0.0) return r;
  if (diag) ++diag->jittered;
  return kKnnJitter;
}

/// log of the unit-ball volume in d dimensions.
inline double log_unit_ball(double d) {
  return 0.5 * d * std::log(std::numbers::pi) - std::lgamma(0.5 * d + 1.0);
}

inline double log_mean_exp(const std::vector<double>& v) {
  const double mx = *std::max_element(v.begin(), v.end());
  long double s = 0.0L;
  for (double a : v) s += std::exp(static_cast<long double>(a - mx));
  return mx + static_cast<double>(std::log(s / static_cast<long double>(v.size())));
}

} // namespace detail

/// k-nearest-neighbour estimate of KL(P || Q) from X ~ P and Y ~ Q. Can be
/// negative for finite samples.
inline double kl_knn(const PointCloud& x, const PointCloud& y, std::size_t k = 1, KnnDiagnostics* diag = nullptr) {
  detail::check_knn(x, y, k);
  const KdTree tx(x), ty(y);
  const auto n = static_cast<double>(x.rows()), m = static_cast<double>(y.rows());
  const auto d = static_cast<double>(x.cols());
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> xr = x;
  long double sum = 0.0L;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double* q = xr.data() + i * xr.cols();
    const double rho = detail::floored(tx.kth_distance(q, static_cast<int>(k), i), diag);
    const double nu = detail::floored(ty.kth_distance(q, static_cast<int>(k)), diag);
    sum += std::log(nu / rho);
  }
  return d / n * static_cast<double>(sum) + std::log(m / (n - 1.0));
}

/// Plug-in gamma-divergence with kNN density estimates at the sample points.
inline double gamma_divergence(const PointCloud& x, const PointCloud& y, double gamma, std::size_t k = 1,
                               KnnDiagnostics* diag = nullptr) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ConfigurationError("gamma exponent must be > 0");
  detail::check_knn(x, y, k);
  const KdTree tx(x), ty(y);
  const auto n = static_cast<double>(x.rows()), m = static_cast<double>(y.rows());
  const auto d = static_cast<double>(x.cols());
  const double log_k = std::log(static_cast<double>(k));
  const double log_v = detail::log_unit_ball(d);
  const int kk = static_cast<int>(k);
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> xr = x, yr = y;

  // Log densities: p(x_i) from X without x_i, q(x_i) from Y, q(y_j) from Y
  // without y_j.
  std::vector<double> lp(static_cast<std::size_t>(x.rows())), lqx(lp.size()), lqy(static_cast<std::size_t>(y.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double* q = xr.data() + i * xr.cols();
    const double rho = detail::floored(tx.kth_distance(q, kk, i), diag);
    const double nu = detail::floored(ty.kth_distance(q, kk), diag);
    lp[static_cast<std::size_t>(i)] = gamma * (log_k - std::log(n - 1.0) - log_v - d * std::log(rho));
    lqx[static_cast<std::size_t>(i)] = gamma * (log_k - std::log(m) - log_v - d * std::log(nu));
  }
  for (Eigen::Index j = 0; j < y.rows(); ++j) {
    const double* q = yr.data() + j * yr.cols();
    const double nu = detail::floored(ty.kth_distance(q, kk, j), diag);
    lqy[static_cast<std::size_t>(j)] = gamma * (log_k - std::log(m - 1.0) - log_v - d * std::log(nu));
  }
  return (detail::log_mean_exp(lp) - (gamma + 1.0) * detail::log_mean_exp(lqx) + gamma * detail::log_mean_exp(lqy)) /
         (gamma * (gamma + 1.0));
}

/// Population standard deviation of every column; throws on a constant one.
inline Eigen::VectorXd column_scales(const PointCloud& x, const std::vector<std::string>& names = {}) {
  if (x.rows() == 0) throw ConfigurationError("cannot compute scales of an empty matrix");
  Eigen::VectorXd s(x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double mean = x.col(c).mean();
    s[c] = std::sqrt((x.col(c).array() - mean).square().mean());
    if (!(s[c] > 0.0)) {
      const std::string name =
          static_cast<std::size_t>(c) < names.size() ? names[static_cast<std::size_t>(c)] : std::to_string(c);
      throw ConfigurationError("column " + name + " has zero variance");
    }
  }
  return s;
}

inline PointCloud standardize(const PointCloud& x, const Eigen::VectorXd& scales) {
  if (scales.size() != x.cols()) throw ConfigurationError("scale vector does not match the column count");
  for (Eigen::Index c = 0; c < scales.size(); ++c)
    if (!(scales[c] > 0.0) || !std::isfinite(scales[c]))
      throw ConfigurationError("column " + std::to_string(c) + " has a degenerate scale");
  return x.array().rowwise() / scales.transpose().array();
}

/// Dispatch on the configured kind. Inputs are used as given; callers
/// standardize beforehand.
inline double distance(const PointCloud& x, const PointCloud& y, const DistanceSpec& spec, Stream& rng,
                       KnnDiagnostics* diag = nullptr) {
  switch (spec.kind) {
  case DistanceKind::wasserstein: return wasserstein(x, y, spec.order);
  case DistanceKind::sliced_wasserstein: return sliced_wasserstein(x, y, spec.projections, spec.order, rng);
  case DistanceKind::kl: return kl_knn(x, y, spec.neighbors, diag);
  case DistanceKind::gamma: return gamma_divergence(x, y, spec.gamma, spec.neighbors, diag);
  }
  throw ConfigurationError("unknown distance kind");
}

} // namespace neurocal
