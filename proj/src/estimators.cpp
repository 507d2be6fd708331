#include "cwm/estimators.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "cwm/errors.hpp"

namespace cwm {

TestFunction TestFunction::constant_one() { return {Kind::constant_one, "constant-one"}; }
TestFunction TestFunction::coordinate_sum() { return {Kind::coordinate_sum, "coordinate-sum"}; }
TestFunction TestFunction::squared_norm() { return {Kind::squared_norm, "squared-norm"}; }

TestFunction TestFunction::halfspace_indicator(Vec normal, double offset) {
  TestFunction h(Kind::halfspace_indicator, "halfspace");
  h.normal_ = std::move(normal);
  h.offset_ = offset;
  return h;
}

TestFunction TestFunction::custom(std::string name, ValueFn value, GradFn gradient) {
  if (!value) throw ContractError("TestFunction::custom: missing value function");
  TestFunction h(Kind::custom, std::move(name));
  h.value_ = std::move(value);
  h.grad_ = std::move(gradient);
  return h;
}

TestFunction TestFunction::from_name(std::string_view name, std::size_t dim) {
  if (name == "constant-one") return constant_one();
  if (name == "coordinate-sum") return coordinate_sum();
  if (name == "squared-norm") return squared_norm();
  if (name == "halfspace") {
    Vec normal(dim, 0.0);
    normal.at(0) = 1.0;
    return halfspace_indicator(std::move(normal), 0.0);
  }
  throw ContractError("unknown test function '" + std::string(name) + "'");
}

double TestFunction::value(std::span<const double> x) const {
  switch (kind_) {
    case Kind::constant_one:
      return 1.0;
    case Kind::coordinate_sum:
      return std::accumulate(x.begin(), x.end(), 0.0);
    case Kind::squared_norm: {
      double s = 0.0;
      for (double v : x) s += v * v;
      return s;
    }
    case Kind::halfspace_indicator: {
      if (x.size() != normal_.size()) throw ContractError("halfspace: dimension mismatch");
      double s = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) s += normal_[j] * x[j];
      return s > offset_ ? 1.0 : 0.0;
    }
    case Kind::custom:
      return value_(x);
  }
  return 0.0;
}

void TestFunction::gradient(std::span<const double> x, std::span<double> out) const {
  switch (kind_) {
    case Kind::constant_one:
    case Kind::halfspace_indicator:
      std::fill(out.begin(), out.end(), 0.0);
      return;
    case Kind::coordinate_sum:
      std::fill(out.begin(), out.end(), 1.0);
      return;
    case Kind::squared_norm:
      for (std::size_t j = 0; j < x.size(); ++j) out[j] = 2.0 * x[j];
      return;
    case Kind::custom:
      if (!grad_) throw ContractError("TestFunction '" + name_ + "' has no gradient");
      grad_(x, out);
      return;
  }
}

namespace {

void require_samples(std::size_t M) {
  if (M == 0) throw ContractError("estimator: M must be at least 1");
}

double checked(double v, const TestFunction& h) {
  if (!std::isfinite(v)) throw NumericalError("test function '" + h.name() + "' returned a non-finite value");
  return v;
}

Matrix draw_base(const CwmModel& m, std::size_t M, RngHandle& rng) {
  Matrix z(M, m.dim());
  rng.fill_normal(z.data);
  return z;
}

// Classifier weights w(z_i) and h at every T_k^{-1}(z_i), both M x K.
struct RbTerms {
  Matrix w;
  Matrix hx;
  Matrix x;  // (M*K) x d mapped points
};

RbTerms rb_terms(const CwmModel& m, const TestFunction& h, const Matrix& z, MlpWorkspace& ws) {
  const std::size_t M = z.rows;
  const std::size_t K = m.num_components();
  const std::size_t d = m.dim();
  if (z.cols != d) throw ContractError("rb estimator: base draws have wrong dimension");
  RbTerms t{Matrix(M, K), Matrix(M, K), Matrix(M * K, d)};
  ws.forward(m.classifier(), z.data.data(), M);
  for (std::size_t i = 0; i < M; ++i) {
    const Vec lw = log_softmax(ws.logits().row(i));
    for (std::size_t k = 0; k < K; ++k) t.w(i, k) = std::exp(lw[k]);
  }
  for (std::size_t k = 0; k < K; ++k) {
    const auto& c = m.components()[k];
    Vec sd(d);
    for (std::size_t j = 0; j < d; ++j) sd[j] = std::exp(0.5 * c.log_var()[j]);
    for (std::size_t i = 0; i < M; ++i) {
      auto x = t.x.row(i * K + k);
      for (std::size_t j = 0; j < d; ++j) x[j] = c.mu()[j] + sd[j] * z(i, j);
      t.hx(i, k) = checked(h.value(x), h);
    }
  }
  return t;
}

// E[h | z] written as h_0 + sum_k w_k (h_k - h_0), which is exact when h is
// constant across components.
double conditional_mean(const RbTerms& t, std::size_t i) {
  const std::size_t K = t.w.cols;
  const double h0 = t.hx(i, 0);
  double s = 0.0;
  for (std::size_t k = 1; k < K; ++k) s += t.w(i, k) * (t.hx(i, k) - h0);
  return h0 + s;
}

double sample_variance(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace

double crude_mc(const CwmModel& m, const TestFunction& h, std::size_t M, RngHandle& rng) {
  require_samples(M);
  const auto traces = sample(m, rng, M);
  double s = 0.0;
  for (const auto& t : traces) s += checked(h.value(t.x), h);
  return s / static_cast<double>(M);
}

double rb_estimate_at(const CwmModel& m, const TestFunction& h, const Matrix& z) {
  require_samples(z.rows);
  MlpWorkspace ws;
  const RbTerms t = rb_terms(m, h, z, ws);
  double s = 0.0;
  for (std::size_t i = 0; i < z.rows; ++i) s += conditional_mean(t, i);
  return s / static_cast<double>(z.rows);
}

CwmGrads rb_estimate_grad_at(const CwmModel& m, const TestFunction& h, const Matrix& z) {
  require_samples(z.rows);
  if (!h.has_gradient()) throw ContractError("rb_expectation_grad: test function has no gradient");
  const std::size_t M = z.rows;
  const std::size_t K = m.num_components();
  const std::size_t d = m.dim();
  const double inv_m = 1.0 / static_cast<double>(M);
  MlpWorkspace ws;
  const RbTerms t = rb_terms(m, h, z, ws);
  CwmGrads grads(m);

  // Through the classifier: d/dlogit_j sum_k w_k h_k = w_j (h_j - E[h | z]).
  Matrix upstream(M, K);
  for (std::size_t i = 0; i < M; ++i) {
    const double h0 = t.hx(i, 0);
    const double centered_mean = conditional_mean(t, i) - h0;
    for (std::size_t j = 0; j < K; ++j) {
      upstream(i, j) = inv_m * t.w(i, j) * ((t.hx(i, j) - h0) - centered_mean);
    }
  }
  ws.backward(m.classifier(), upstream.data.data(), grads.classifier, nullptr);

  // Through the components: x_ik = mu_k + sigma_k * z_i.
  Vec dh(d);
  for (std::size_t k = 0; k < K; ++k) {
    const auto& c = m.components()[k];
    for (std::size_t i = 0; i < M; ++i) {
      h.gradient(t.x.row(i * K + k), dh);
      const double wk = inv_m * t.w(i, k);
      for (std::size_t j = 0; j < d; ++j) {
        grads.d_mu[k][j] += wk * dh[j];
        grads.d_log_var[k][j] += wk * dh[j] * 0.5 * std::exp(0.5 * c.log_var()[j]) * z(i, j);
      }
    }
  }
  return grads;
}

double rb_expectation(const CwmModel& m, const TestFunction& h, std::size_t M, RngHandle& rng) {
  require_samples(M);
  return rb_estimate_at(m, h, draw_base(m, M, rng));
}

CwmGrads rb_expectation_grad(const CwmModel& m, const TestFunction& h, std::size_t M, RngHandle& rng) {
  require_samples(M);
  return rb_estimate_grad_at(m, h, draw_base(m, M, rng));
}

CwmGrads reinforce_grad(const CwmModel& m, const TestFunction& h, std::size_t M, RngHandle& rng) {
  require_samples(M);
  const auto traces = sample(m, rng, M);
  Matrix x(M, m.dim());
  std::vector<double> weights(M);
  for (std::size_t i = 0; i < M; ++i) {
    std::copy(traces[i].x.begin(), traces[i].x.end(), x.row(i).begin());
    weights[i] = checked(h.value(traces[i].x), h) / static_cast<double>(M);
  }
  CwmGrads grads(m);
  CwmEvaluator ev;
  ev.accumulate_grad(m, x.data.data(), M, weights, grads);
  return grads;
}

std::vector<EstimatorReport> variance_bench(const CwmModel& m, const TestFunction& h, std::size_t M,
                                            std::size_t M_rep, std::uint64_t seed) {
  require_samples(M);
  if (M_rep < 30) throw ContractError("variance_bench: need at least 30 replications");

  auto scalar_report = [&](const char* name, auto&& estimator) {
    EstimatorReport r{name, 0.0, {}, 0.0, M_rep, M, {}};
    for (std::size_t rep = 0; rep < M_rep; ++rep) {
      RngHandle rng(seed + rep);
      r.values.push_back(estimator(rng));
    }
    r.estimate = std::accumulate(r.values.begin(), r.values.end(), 0.0) / static_cast<double>(M_rep);
    r.variance = sample_variance(r.values);
    return r;
  };
  auto vector_report = [&](const char* name, auto&& estimator) {
    EstimatorReport r{name, 0.0, {}, 0.0, M_rep, M, {}};
    std::vector<std::vector<double>> reps;
    for (std::size_t rep = 0; rep < M_rep; ++rep) {
      RngHandle rng(seed + rep);
      reps.push_back(pack_gradients(estimator(rng)));
      double sq = 0.0;
      for (double g : reps.back()) sq += g * g;
      r.values.push_back(std::sqrt(sq));
    }
    const std::size_t n = reps.front().size();
    r.mean_vector.assign(n, 0.0);
    for (const auto& g : reps) for (std::size_t j = 0; j < n; ++j) r.mean_vector[j] += g[j] / static_cast<double>(M_rep);
    double norm = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      std::vector<double> col(M_rep);
      for (std::size_t rep = 0; rep < M_rep; ++rep) col[rep] = reps[rep][j];
      r.variance += sample_variance(col);
      norm += r.mean_vector[j] * r.mean_vector[j];
    }
    r.estimate = std::sqrt(norm);
    return r;
  };

  std::vector<EstimatorReport> out;
  out.push_back(scalar_report("crude", [&](RngHandle& rng) { return crude_mc(m, h, M, rng); }));
  out.push_back(scalar_report("rb", [&](RngHandle& rng) { return rb_expectation(m, h, M, rng); }));
  out.push_back(vector_report("reinforce-grad", [&](RngHandle& rng) { return reinforce_grad(m, h, M, rng); }));
  if (h.has_gradient()) {
    out.push_back(vector_report("rb-grad", [&](RngHandle& rng) { return rb_expectation_grad(m, h, M, rng); }));
  }
  return out;
}

std::string format_variance_table(const std::vector<EstimatorReport>& reports) {
  std::string out = "estimator,mean,variance,M,M_rep\n";
  char buf[160];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%zu,%zu\n", r.estimator.c_str(), r.estimate, r.variance,
                  r.inner_samples, r.replications);
    out += buf;
  }
  return out;
}

}  // namespace cwm
