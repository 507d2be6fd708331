#pragma once

// Helpers shared by the test binaries: random models, finite differences,
// quadrature grids and chi-squared quantiles.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "cwm/classifier.hpp"
#include "cwm/gmm.hpp"
#include "cwm/model.hpp"

namespace cwm::test {

inline double uniform_in(RngHandle& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

inline Vec random_vec(RngHandle& rng, std::size_t d, double lo, double hi) {
  Vec v(d);
  for (double& x : v) x = uniform_in(rng, lo, hi);
  return v;
}

inline std::vector<DiagGaussianComponent> random_components(RngHandle& rng, std::size_t d, std::size_t K,
                                                            double mu_lo = -1.0, double mu_hi = 1.0,
                                                            double lv_lo = -1.5, double lv_hi = 0.5) {
  std::vector<DiagGaussianComponent> comps;
  for (std::size_t k = 0; k < K; ++k) {
    comps.emplace_back(random_vec(rng, d, mu_lo, mu_hi), random_vec(rng, d, lv_lo, lv_hi));
  }
  return comps;
}

/// Glorot classifier with random biases, so weights vary with z.
inline CwmModel random_model(RngHandle& rng, std::size_t d, std::size_t K, std::vector<std::size_t> hidden = {8}) {
  std::vector<std::size_t> sizes{d};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(K);
  MlpClassifier clf = MlpClassifier::glorot(sizes, rng);
  for (auto& layer : clf.layers()) {
    for (double& w : layer.weights) w *= 2.0;
    for (double& b : layer.bias) b = uniform_in(rng, -0.5, 0.5);
  }
  return CwmModel(random_components(rng, d, K), std::move(clf));
}

inline Vec random_simplex(RngHandle& rng, std::size_t K) {
  Vec p(K);
  double s = 0.0;
  for (double& x : p) s += (x = uniform_in(rng, 0.2, 1.0));
  for (double& x : p) x /= s;
  return p;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-4}); }

/// Central differences of f at theta, one coordinate at a time.
inline std::vector<double> central_diff(const std::function<double(const std::vector<double>&)>& f,
                                        std::vector<double> theta, double step = 1e-5) {
  std::vector<double> g(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double t0 = theta[i];
    theta[i] = t0 + step;
    const double up = f(theta);
    theta[i] = t0 - step;
    const double down = f(theta);
    theta[i] = t0;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

inline double max_rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, rel_err(a[i], b[i]));
  return worst;
}

/// Box containing [lo, hi]^2 and every component mean +- pad standard deviations.
struct Box2 {
  double x0, x1, y0, y1;
};

inline Box2 covering_box(const CwmModel& m, double pad, double lo = 0.0, double hi = 1.0) {
  Box2 b{lo, hi, lo, hi};
  for (const auto& c : m.components()) {
    const double sx = std::exp(0.5 * c.log_var()[0]);
    const double sy = std::exp(0.5 * c.log_var()[1]);
    b.x0 = std::min(b.x0, c.mu()[0] - pad * sx);
    b.x1 = std::max(b.x1, c.mu()[0] + pad * sx);
    b.y0 = std::min(b.y0, c.mu()[1] - pad * sy);
    b.y1 = std::max(b.y1, c.mu()[1] + pad * sy);
  }
  return b;
}

/// Trapezoid rule of exp(log_prob) on an n x n node grid over the box.
inline double trapezoid_mass(const CwmModel& m, const Box2& b, std::size_t n) {
  const double hx = (b.x1 - b.x0) / static_cast<double>(n - 1);
  const double hy = (b.y1 - b.y0) / static_cast<double>(n - 1);
  Matrix pts(n * n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      pts(i * n + j, 0) = b.x0 + static_cast<double>(j) * hx;
      pts(i * n + j, 1) = b.y0 + static_cast<double>(i) * hy;
    }
  }
  std::vector<double> lp(n * n);
  CwmEvaluator ev;
  ev.log_prob(m, pts, lp);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double wi = (i == 0 || i + 1 == n) ? 0.5 : 1.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double wj = (j == 0 || j + 1 == n) ? 0.5 : 1.0;
      s += wi * wj * std::exp(lp[i * n + j]);
    }
  }
  return s * hx * hy;
}

inline double chi2_quantile(double dof, double p) {
  return boost::math::quantile(boost::math::chi_squared_distribution<double>(dof), p);
}

/// Pearson statistic over bins; bins with expected count below min_expected
/// are pooled into one. Returns {statistic, degrees of freedom}.
inline std::pair<double, double> pearson(const std::vector<double>& observed, const std::vector<double>& expected,
                                         double min_expected = 5.0) {
  double stat = 0.0, pooled_obs = 0.0, pooled_exp = 0.0;
  std::size_t bins = 0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (expected[i] < min_expected) {
      pooled_obs += observed[i];
      pooled_exp += expected[i];
      continue;
    }
    stat += (observed[i] - expected[i]) * (observed[i] - expected[i]) / expected[i];
    ++bins;
  }
  if (pooled_exp > 0.0) {
    stat += (pooled_obs - pooled_exp) * (pooled_obs - pooled_exp) / pooled_exp;
    ++bins;
  }
  return {stat, static_cast<double>(bins - 1)};
}

}  // namespace cwm::test
