#pragma once

// Independent reference computations used as test oracles. None of these
// share code with the library implementations they check.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace oracle {

/// Minimum-cost perfect assignment by O(n^3) shortest augmenting paths
/// (Hungarian method with potentials). Returns the total cost.
inline double hungarian(const std::vector<std::vector<double>>& a) {
  const int n = static_cast<int>(a.size());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  double total = 0.0;
  for (int j = 1; j <= n; ++j) total += a[p[j] - 1][j - 1];
  return total;
}

/// Minimum-cost perfect assignment by enumerating all permutations.
inline double enumerate_assignments(const std::vector<std::vector<double>>& a) {
  const std::size_t n = a.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i][perm[i]];
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

/// W_p between uniform clouds by replicating every point so both clouds
/// have lcm(n, m) atoms, then solving the assignment problem exactly:
/// enumeration when the expanded size is small, Hungarian otherwise.
inline double wasserstein_by_assignment(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double p) {
  const long n = static_cast<long>(x.rows()), m = static_cast<long>(y.rows());
  const long l = std::lcm(n, m);
  std::vector<std::vector<double>> c(static_cast<std::size_t>(l), std::vector<double>(static_cast<std::size_t>(l)));
  for (long i = 0; i < l; ++i)
    for (long j = 0; j < l; ++j)
      c[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
          std::pow((x.row(i / (l / n)) - y.row(j / (l / m))).norm(), p);
  const double total = l <= 8 ? enumerate_assignments(c) : hungarian(c);
  return std::pow(total / static_cast<double>(l), 1.0 / p);
}

/// Square root of a 2x2 symmetric positive definite matrix by the closed
/// form sqrt(A) = (A + sqrt(det A) I) / sqrt(tr A + 2 sqrt(det A)).
inline Eigen::Matrix2d sqrt2x2(const Eigen::Matrix2d& a) {
  const double s = std::sqrt(a.determinant());
  const double t = std::sqrt(a.trace() + 2.0 * s);
  return (a + s * Eigen::Matrix2d::Identity()) / t;
}

inline double gaussian_w2_2d(const Eigen::Vector2d& m1, const Eigen::Matrix2d& s1, const Eigen::Vector2d& m2,
                             const Eigen::Matrix2d& s2) {
  const Eigen::Matrix2d r2 = sqrt2x2(s2);
  const Eigen::Matrix2d cross = sqrt2x2(r2 * s1 * r2);
  return std::sqrt((m1 - m2).squaredNorm() + (s1 + s2 - 2.0 * cross).trace());
}

/// Ishigami function and its analytic first-order indices.
inline double ishigami(double x1, double x2, double x3, double a = 7.0, double b = 0.1) {
  return std::sin(x1) + a * std::sin(x2) * std::sin(x2) + b * std::pow(x3, 4) * std::sin(x1);
}

struct IshigamiIndices {
  double s1, s2, s3, st1, st2, st3;
};

inline IshigamiIndices ishigami_indices(double a = 7.0, double b = 0.1) {
  const double pi = 3.14159265358979323846;
  const double v1 = 0.5 * std::pow(1.0 + b * std::pow(pi, 4) / 5.0, 2);
  const double v2 = a * a / 8.0;
  const double v13 = b * b * std::pow(pi, 8) * (1.0 / 18.0 - 1.0 / 50.0);
  const double v = v1 + v2 + v13;
  return {v1 / v, v2 / v, 0.0, (v1 + v13) / v, v2 / v, v13 / v};
}

} // namespace oracle
