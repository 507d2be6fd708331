#pragma once

#include <span>

#include "cwm/core_math.hpp"

namespace cwm {

inline constexpr double kLogVarMin = -30.0;
inline constexpr double kLogVarMax = 30.0;

/// Diagonal Gaussian component N(mu, diag(exp(log_var))), viewed as the affine
/// map T(x) = diag(exp(-log_var / 2)) (x - mu) applied to a standard normal base.
class DiagGaussianComponent {
 public:
  DiagGaussianComponent() = default;
  DiagGaussianComponent(Vec mu, Vec log_var);

  std::size_t dim() const { return mu_.size(); }
  const Vec& mu() const { return mu_; }
  const Vec& log_var() const { return log_var_; }
  Vec& mu() { return mu_; }
  Vec& log_var() { return log_var_; }

  /// Clamps log-variances into [kLogVarMin, kLogVarMax].
  void clamp_log_var();

 private:
  Vec mu_;
  Vec log_var_;
};

/// z = (x - mu) * exp(-log_var / 2).
Vec forward_T(const DiagGaussianComponent& comp, std::span<const double> x);
/// x = mu + z * exp(log_var / 2).
Vec inverse_T(const DiagGaussianComponent& comp, std::span<const double> z);
/// log |det J_T| = -1/2 sum(log_var); constant in x.
double log_abs_det_jac(const DiagGaussianComponent& comp);
/// log N(x; mu, diag(exp(log_var))) evaluated through the change of variables.
double component_logpdf(const DiagGaussianComponent& comp, std::span<const double> x);

/// Gradient of component_logpdf with respect to (mu, log_var).
struct ComponentGrad {
  Vec d_mu;
  Vec d_log_var;
};
ComponentGrad component_logpdf_grad(const DiagGaussianComponent& comp, std::span<const double> x);

}  // namespace cwm
