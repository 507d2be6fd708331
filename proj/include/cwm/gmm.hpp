#pragma once

#include <span>
#include <vector>

#include "cwm/components.hpp"
#include "cwm/core_math.hpp"
#include "cwm/model.hpp"

namespace cwm {

/// Constant-weight mixture of diagonal Gaussians.
class Gmm {
 public:
  Gmm() = default;
  /// pis must lie strictly inside (0, 1) and sum to one within 1e-9.
  Gmm(Vec pis, std::vector<DiagGaussianComponent> components);

  std::size_t dim() const { return components_.front().dim(); }
  std::size_t num_components() const { return components_.size(); }
  const Vec& pis() const { return pis_; }
  const std::vector<DiagGaussianComponent>& components() const { return components_; }

 private:
  Vec pis_;
  std::vector<DiagGaussianComponent> components_;
};

double gmm_log_prob(const Gmm& g, std::span<const double> x);
void gmm_log_prob(const Gmm& g, const Matrix& points, std::span<double> out);
double gmm_mean_log_prob(const Gmm& g, const Matrix& points);

struct EmOptions {
  std::size_t max_iters = 500;
  /// Stop once the mean log-likelihood improves by less than this.
  double tol = 1e-6;
  double var_floor = 1e-6;
};

struct EmResult {
  Gmm gmm;
  /// Mean log-likelihood of the initial model and after each M-step; the last
  /// entry belongs to the returned model.
  std::vector<double> loglik_trace;
  std::size_t iterations = 0;
  bool converged = false;
};

EmResult em_fit(const Gmm& init, const Matrix& points, const EmOptions& opts = {});

/// Starting point for EM: means at K data points chosen by k-means++ seeding, every
/// variance equal to the per-dimension data variance, uniform weights.
Gmm init_gmm(const Matrix& points, std::size_t K, RngHandle& rng, double var_floor = 1e-6);

/// CWM with the same components and a constant classifier returning g.pis, so
/// the two densities coincide.
CwmModel init_cwm_from_gmm(const Gmm& g, std::span<const std::size_t> hidden_sizes, RngHandle& rng);

}  // namespace cwm
