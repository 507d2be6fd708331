#include "cwm/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "cwm/errors.hpp"
#include "cwm/simd.hpp"

namespace cwm {

Gmm::Gmm(Vec pis, std::vector<DiagGaussianComponent> components)
    : pis_(std::move(pis)), components_(std::move(components)) {
  if (components_.empty()) throw ContractError("Gmm: no components");
  if (pis_.size() != components_.size()) throw ContractError("Gmm: weight count differs from component count");
  double total = 0.0;
  for (double p : pis_) {
    if (!(p > 0.0 && p < 1.0) && !(pis_.size() == 1 && p == 1.0)) {
      throw ContractError("Gmm: weights must lie in (0, 1)");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ContractError("Gmm: weights do not sum to one");
  for (const auto& c : components_) {
    if (c.dim() != components_.front().dim()) throw ContractError("Gmm: components differ in dimension");
  }
}

namespace {

// Fills log_terms (n x K) with log pi_k + log N(x_i; mu_k, Sigma_k) and
// returns per-row log-sum-exp in log_p; log_terms becomes responsibilities
// when post is set.
void e_step(const Gmm& g, const Matrix& points, std::vector<double>& terms, std::vector<double>& log_p, bool post) {
  const std::size_t n = points.rows;
  const std::size_t d = g.dim();
  const std::size_t K = g.num_components();
  if (points.cols != d) throw ContractError("Gmm: dimension mismatch");

  std::vector<double> inv_var(K * d), offset(K);
  for (std::size_t k = 0; k < K; ++k) {
    const auto& c = g.components()[k];
    for (std::size_t j = 0; j < d; ++j) inv_var[k * d + j] = std::exp(-c.log_var()[j]);
    offset[k] = std::log(g.pis()[k]) - 0.5 * static_cast<double>(d) * kLog2Pi + log_abs_det_jac(c);
  }
  terms.resize(n * K);
  log_p.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = points.data.data() + i * d;
    double* t = terms.data() + i * K;
    for (std::size_t k = 0; k < K; ++k) {
      const auto& mu = g.components()[k].mu();
      double q = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = x[j] - mu[j];
        q += diff * diff * inv_var[k * d + j];
      }
      t[k] = offset[k] - 0.5 * q;
    }
    const double mx = *std::max_element(t, t + K);
    log_p[i] = mx;
    for (std::size_t k = 0; k < K; ++k) t[k] -= mx;
  }
  std::vector<double> e(terms.size());
  simd::active().exp(terms.data(), e.data(), e.size());
  for (std::size_t i = 0; i < n; ++i) {
    double* ei = e.data() + i * K;
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) s += ei[k];
    log_p[i] += std::log(s);
    if (post) {
      const double inv = 1.0 / s;
      for (std::size_t k = 0; k < K; ++k) terms[i * K + k] = ei[k] * inv;
    }
  }
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

double gmm_log_prob(const Gmm& g, std::span<const double> x) {
  if (x.size() != g.dim()) throw ContractError("gmm_log_prob: dimension mismatch");
  Matrix p(1, x.size());
  std::copy(x.begin(), x.end(), p.data.begin());
  double out = 0.0;
  gmm_log_prob(g, p, {&out, 1});
  return out;
}

void gmm_log_prob(const Gmm& g, const Matrix& points, std::span<double> out) {
  if (out.size() != points.rows) throw ContractError("gmm_log_prob: output size mismatch");
  std::vector<double> terms, lp;
  e_step(g, points, terms, lp, false);
  std::copy(lp.begin(), lp.end(), out.begin());
}

double gmm_mean_log_prob(const Gmm& g, const Matrix& points) {
  if (points.rows == 0) throw ContractError("gmm_mean_log_prob: no points");
  std::vector<double> lp(points.rows);
  gmm_log_prob(g, points, lp);
  return mean(lp);
}

EmResult em_fit(const Gmm& init, const Matrix& points, const EmOptions& opts) {
  const std::size_t n = points.rows;
  const std::size_t d = init.dim();
  const std::size_t K = init.num_components();
  if (n == 0) throw ContractError("em_fit: empty dataset");
  if (K > n) throw ContractError("em_fit: more components than data points");
  if (opts.max_iters < 1) throw ContractError("em_fit: max_iters must be at least 1");
  if (points.cols != d) throw ContractError("em_fit: dimension mismatch");

  EmResult res{init, {}, 0, false};
  std::vector<double> gamma, log_p;
  for (std::size_t it = 0;; ++it) {
    e_step(res.gmm, points, gamma, log_p, true);
    const double ll = mean(log_p);
    if (!std::isfinite(ll)) throw NumericalError("em_fit: non-finite log-likelihood");
    res.loglik_trace.push_back(ll);
    if (it > 0 && ll - res.loglik_trace[it - 1] < opts.tol) {
      res.converged = true;
      break;
    }
    if (it == opts.max_iters) break;

    Vec pis(K);
    std::vector<DiagGaussianComponent> comps;
    comps.reserve(K);
    for (std::size_t k = 0; k < K; ++k) {
      double nk = 0.0;
      Vec mu(d, 0.0), var(d, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        const double w = gamma[i * K + k];
        nk += w;
        for (std::size_t j = 0; j < d; ++j) mu[j] += w * points(i, j);
      }
      if (!(nk > 0.0) || !std::isfinite(nk)) {
        throw NumericalError("em_fit: component " + std::to_string(k) + " collapsed (no responsibility mass)");
      }
      for (double& v : mu) v /= nk;
      for (std::size_t i = 0; i < n; ++i) {
        const double w = gamma[i * K + k];
        for (std::size_t j = 0; j < d; ++j) {
          const double diff = points(i, j) - mu[j];
          var[j] += w * diff * diff;
        }
      }
      Vec log_var(d);
      for (std::size_t j = 0; j < d; ++j) log_var[j] = std::log(std::max(var[j] / nk, opts.var_floor));
      pis[k] = nk / static_cast<double>(n);
      if (K > 1 && !(pis[k] > 0.0 && pis[k] < 1.0)) {
        throw NumericalError("em_fit: component " + std::to_string(k) + " collapsed (weight left (0, 1))");
      }
      comps.emplace_back(std::move(mu), std::move(log_var));
    }
    // Renormalize against accumulated rounding in the responsibility sums.
    const double total = std::accumulate(pis.begin(), pis.end(), 0.0);
    for (double& p : pis) p /= total;
    res.gmm = Gmm(std::move(pis), std::move(comps));
    res.iterations = it + 1;
  }
  return res;
}

Gmm init_gmm(const Matrix& points, std::size_t K, RngHandle& rng, double var_floor) {
  const std::size_t n = points.rows;
  const std::size_t d = points.cols;
  if (n == 0) throw ContractError("init_gmm: empty dataset");
  if (K == 0 || K > n) throw ContractError("init_gmm: need 1 <= K <= number of points");
  Vec mean(d, 0.0), var(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) mean[j] += points(i, j);
  }
  for (double& m : mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) var[j] += (points(i, j) - mean[j]) * (points(i, j) - mean[j]);
  }
  Vec log_var(d);
  for (std::size_t j = 0; j < d; ++j) log_var[j] = std::log(std::max(var[j] / static_cast<double>(n), var_floor));

  // k-means++ seeding: each further mean is a data point drawn with
  // probability proportional to its squared distance from the nearest chosen one.
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::vector<DiagGaussianComponent> comps;
  std::size_t pick = rng.index(n);
  for (std::size_t k = 0; k < K; ++k) {
    const auto row = points.row(pick);
    comps.emplace_back(Vec(row.begin(), row.end()), log_var);
    if (k + 1 == K) break;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += (points(i, j) - row[j]) * (points(i, j) - row[j]);
      d2[i] = std::min(d2[i], s);
      total += d2[i];
    }
    if (total > 0.0) {
      const double u = rng.uniform() * total;
      double acc = 0.0;
      pick = n;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (d2[i] > 0.0 && u < acc) {
          pick = i;
          break;
        }
      }
      if (pick == n) {
        for (pick = n - 1; d2[pick] == 0.0; --pick) {
        }
      }
    } else {
      // Every remaining point duplicates a chosen mean.
      pick = (pick + 1) % n;
    }
  }
  return Gmm(Vec(K, 1.0 / static_cast<double>(K)), std::move(comps));
}

CwmModel init_cwm_from_gmm(const Gmm& g, std::span<const std::size_t> hidden_sizes, RngHandle& rng) {
  return CwmModel(g.components(), make_constant_classifier(g.dim(), g.pis(), hidden_sizes, rng));
}

}  // namespace cwm
