#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "neurocal/errors.hpp"
#include "neurocal/growth.hpp"
#include "neurocal/morphometrics.hpp"
#include "neurocal/random.hpp"

namespace neurocal {

/// Anything that maps a parameter vector to a batch of QoI rows. `count`
/// rows are produced from independent replicates driven by `seed`.
template <class M>
concept SimulationModel = requires(const M& m, std::span<const double> theta, std::size_t count, std::uint64_t seed) {
  { m.parameter_names() } -> std::convertible_to<std::vector<std::string>>;
  { m.qoi_names() } -> std::convertible_to<std::vector<std::string>>;
  { m.simulate(theta, count, seed) } -> std::same_as<QoIMatrix>;
};

/// Parameters of a growth model that can be exposed to calibration or
/// sensitivity analysis.
inline const std::vector<std::string>& growth_parameter_names() {
  static const std::vector<std::string> names{"p_bra", "R", "v", "r_min", "r_init", "r0"};
  return names;
}

inline double& growth_parameter(GrowthParams& p, const std::string& name) {
  if (name == "p_bra") return p.branch_probability;
  if (name == "R") return p.consumption;
  if (name == "v") return p.speed;
  if (name == "r_min") return p.resource_threshold;
  if (name == "r_init") return p.initial_resource;
  if (name == "r0") return p.branch_resource;
  throw ConfigurationError("unknown growth parameter '" + name + "'");
}

/// One of the two growth models with a subset of its parameters free.
class GrowthModel {
public:
  GrowthModel(ModelKind kind, std::vector<std::string> free = {"p_bra", "R", "v"},
              std::vector<Morphometric> qois = all_morphometrics())
      : kind_(kind), params_(default_params(kind)), soma_(default_soma(kind)), field_(default_field(kind)),
        free_(std::move(free)), qois_(std::move(qois)) {
    if (free_.empty()) throw ConfigurationError("growth model needs at least one free parameter");
    for (const auto& n : free_) growth_parameter(params_, n);
    if (qois_.empty()) throw ConfigurationError("growth model needs at least one morphometric");
  }

  GrowthModel(ModelKind kind, GrowthParams base, SomaSpec soma, GuidanceField field, std::vector<std::string> free,
              std::vector<Morphometric> qois)
      : GrowthModel(kind, std::move(free), std::move(qois)) {
    params_ = base;
    soma_ = std::move(soma);
    field_ = field;
    params_.validate();
    soma_.validate();
  }

  ModelKind kind() const { return kind_; }
  const GrowthParams& base() const { return params_; }
  const SomaSpec& soma() const { return soma_; }
  const GuidanceField& field() const { return field_; }
  const std::vector<Morphometric>& qois() const { return qois_; }

  std::vector<std::string> parameter_names() const { return free_; }
  std::vector<std::string> qoi_names() const { return column_labels(qois_); }

  GrowthParams params_at(std::span<const double> theta) const {
    if (theta.size() != free_.size()) throw ConfigurationError("parameter vector has the wrong length");
    GrowthParams p = params_;
    for (std::size_t i = 0; i < free_.size(); ++i) growth_parameter(p, free_[i]) = theta[i];
    p.validate();
    return p;
  }

  /// Neuron i grows from stream_key(seed, i).
  NeuronTree grow(std::span<const double> theta, std::uint64_t seed, std::size_t index) const {
    return neurocal::simulate(kind_, soma_, params_at(theta), field_, stream_key(seed, index));
  }

  QoIMatrix simulate(std::span<const double> theta, std::size_t count, std::uint64_t seed) const {
    const GrowthParams p = params_at(theta);
    Eigen::MatrixXd values(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(qois_.size()));
    for (std::size_t i = 0; i < count; ++i) {
      const auto tree = neurocal::simulate(kind_, soma_, p, field_, stream_key(seed, i));
      const auto q = extract(tree, qois_);
      for (std::size_t j = 0; j < q.values.size(); ++j)
        values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = q.values[j];
    }
    return {qoi_names(), std::move(values)};
  }

private:
  ModelKind kind_;
  GrowthParams params_;
  SomaSpec soma_;
  GuidanceField field_;
  std::vector<std::string> free_;
  std::vector<Morphometric> qois_;
};

/// Correlated Gaussian with unit variances and equal correlation rho.
inline Eigen::MatrixXd equicorrelation(Eigen::Index dim, double rho = 0.2) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Constant(dim, dim, rho);
  c.diagonal().setOnes();
  return c;
}

/// y ~ N(theta, C) with C = equicorrelation(dim); theta is the mean.
class ToyGaussianModel {
public:
  explicit ToyGaussianModel(Eigen::Index dim = 2, double rho = 0.2) : cov_(equicorrelation(dim, rho)) {
    if (dim < 1) throw ConfigurationError("toy model dimension must be >= 1");
    Eigen::LLT<Eigen::MatrixXd> llt(cov_);
    if (llt.info() != Eigen::Success) throw ConfigurationError("toy covariance is not positive definite");
    chol_ = llt.matrixL();
  }

  Eigen::Index dim() const { return cov_.rows(); }
  const Eigen::MatrixXd& covariance() const { return cov_; }

  std::vector<std::string> parameter_names() const { return labels("mu"); }
  std::vector<std::string> qoi_names() const { return labels("y"); }

  QoIMatrix simulate(std::span<const double> theta, std::size_t count, std::uint64_t seed) const {
    if (static_cast<Eigen::Index>(theta.size()) != dim()) throw ConfigurationError("parameter vector has the wrong length");
    const Eigen::Map<const Eigen::VectorXd> mu(theta.data(), dim());
    Stream rng(seed);
    Eigen::MatrixXd values(static_cast<Eigen::Index>(count), dim());
    Eigen::VectorXd z(dim());
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
      for (Eigen::Index j = 0; j < dim(); ++j) z(j) = rng.normal();
      values.row(i) = (mu + chol_ * z).transpose();
    }
    return {qoi_names(), std::move(values)};
  }

private:
  std::vector<std::string> labels(const std::string& prefix) const {
    std::vector<std::string> out;
    for (Eigen::Index i = 1; i <= dim(); ++i) out.push_back(prefix + std::to_string(i));
    return out;
  }

  Eigen::MatrixXd cov_;
  Eigen::MatrixXd chol_;
};

/// Ishigami test function sin x1 + a sin^2 x2 + b x3^4 sin x1 on [-pi, pi]^3.
/// Deterministic, so every replicate row is identical.
class IshigamiModel {
public:
  explicit IshigamiModel(double a = 7.0, double b = 0.1) : a_(a), b_(b) {}

  std::vector<std::string> parameter_names() const { return {"x1", "x2", "x3"}; }
  std::vector<std::string> qoi_names() const { return {"f"}; }

  double operator()(std::span<const double> x) const {
    if (x.size() != 3) throw ConfigurationError("Ishigami takes three inputs");
    const double s2 = std::sin(x[1]);
    return std::sin(x[0]) + a_ * s2 * s2 + b_ * std::pow(x[2], 4) * std::sin(x[0]);
  }

  QoIMatrix simulate(std::span<const double> theta, std::size_t count, std::uint64_t) const {
    return {qoi_names(), Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(count), 1, (*this)(theta))};
  }

private:
  double a_, b_;
};

} // namespace neurocal
