#include "cwm/components.hpp"

#include <algorithm>
#include <cmath>

#include "cwm/errors.hpp"

namespace cwm {
namespace {

void check_dim(const DiagGaussianComponent& comp, std::span<const double> v) {
  if (v.size() != comp.dim()) throw ContractError("component: dimension mismatch");
}

}  // namespace

DiagGaussianComponent::DiagGaussianComponent(Vec mu, Vec log_var) : mu_(std::move(mu)), log_var_(std::move(log_var)) {
  if (mu_.size() != log_var_.size()) throw ContractError("DiagGaussianComponent: mu and log_var differ in size");
  if (mu_.empty()) throw ContractError("DiagGaussianComponent: zero dimension");
  require_finite(mu_, "DiagGaussianComponent mu");
  require_finite(log_var_, "DiagGaussianComponent log_var");
}

void DiagGaussianComponent::clamp_log_var() {
  for (double& v : log_var_) v = std::clamp(v, kLogVarMin, kLogVarMax);
}

Vec forward_T(const DiagGaussianComponent& comp, std::span<const double> x) {
  check_dim(comp, x);
  Vec z(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = (x[i] - comp.mu()[i]) * std::exp(-0.5 * comp.log_var()[i]);
  return z;
}

Vec inverse_T(const DiagGaussianComponent& comp, std::span<const double> z) {
  check_dim(comp, z);
  Vec x(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) x[i] = comp.mu()[i] + z[i] * std::exp(0.5 * comp.log_var()[i]);
  return x;
}

double log_abs_det_jac(const DiagGaussianComponent& comp) {
  double s = 0.0;
  for (double lv : comp.log_var()) s += lv;
  return -0.5 * s;
}

double component_logpdf(const DiagGaussianComponent& comp, std::span<const double> x) {
  return std_normal_logpdf(forward_T(comp, x)) + log_abs_det_jac(comp);
}

ComponentGrad component_logpdf_grad(const DiagGaussianComponent& comp, std::span<const double> x) {
  check_dim(comp, x);
  ComponentGrad g{Vec(x.size()), Vec(x.size())};
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double inv_sd = std::exp(-0.5 * comp.log_var()[i]);
    const double z = (x[i] - comp.mu()[i]) * inv_sd;
    g.d_mu[i] = z * inv_sd;
    g.d_log_var[i] = 0.5 * (z * z - 1.0);
  }
  return g;
}

}  // namespace cwm
