#include "cwm/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cwm/errors.hpp"
#include "cwm/simd.hpp"

namespace cwm {

CwmModel::CwmModel(std::vector<DiagGaussianComponent> components, MlpClassifier classifier)
    : components_(std::move(components)), classifier_(std::move(classifier)) {
  if (components_.empty()) throw ContractError("CwmModel: no components");
  dim_ = components_.front().dim();
  for (const auto& c : components_) {
    if (c.dim() != dim_) throw ContractError("CwmModel: components differ in dimension");
  }
  if (classifier_.layer_sizes().empty() || classifier_.input_dim() != dim_) {
    throw ContractError("CwmModel: classifier input dimension must equal data dimension");
  }
  if (classifier_.num_classes() != components_.size()) {
    throw ContractError("CwmModel: classifier output count must equal component count");
  }
}

void CwmModel::clamp_log_var() {
  for (auto& c : components_) c.clamp_log_var();
}

CwmGrads::CwmGrads(const CwmModel& m) : classifier(m.classifier()) {
  d_mu.assign(m.num_components(), Vec(m.dim(), 0.0));
  d_log_var.assign(m.num_components(), Vec(m.dim(), 0.0));
}

void CwmGrads::scale(double s) {
  for (auto& v : d_mu) for (double& x : v) x *= s;
  for (auto& v : d_log_var) for (double& x : v) x *= s;
  for (auto& layer : classifier.layers) {
    for (double& x : layer.weights) x *= s;
    for (double& x : layer.bias) x *= s;
  }
  for (double& x : classifier.input) x *= s;
}

CwmGrads& CwmGrads::operator+=(const CwmGrads& o) {
  if (o.d_mu.size() != d_mu.size() || o.classifier.layers.size() != classifier.layers.size()) {
    throw ContractError("CwmGrads: shape mismatch");
  }
  auto add = [](std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw ContractError("CwmGrads: shape mismatch");
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  };
  for (std::size_t k = 0; k < d_mu.size(); ++k) {
    add(d_mu[k], o.d_mu[k]);
    add(d_log_var[k], o.d_log_var[k]);
  }
  for (std::size_t l = 0; l < classifier.layers.size(); ++l) {
    add(classifier.layers[l].weights, o.classifier.layers[l].weights);
    add(classifier.layers[l].bias, o.classifier.layers[l].bias);
  }
  add(classifier.input, o.classifier.input);
  return *this;
}

void CwmEvaluator::forward_chunk(const CwmModel& m, const double* points, std::size_t n) {
  const auto& kern = simd::active();
  const std::size_t K = m.num_components();
  const std::size_t d = m.dim();
  const std::size_t rows = n * K;

  scratch_.resize(K * d + K + rows);
  double* inv_sd = scratch_.data();
  double* log_det = inv_sd + K * d;
  double* row_lse = log_det + K;
  for (std::size_t k = 0; k < K; ++k) {
    const auto& c = m.components()[k];
    for (std::size_t j = 0; j < d; ++j) inv_sd[k * d + j] = std::exp(-0.5 * c.log_var()[j]);
    log_det[k] = log_abs_det_jac(c);
  }

  z_.resize(rows * d);
  for (std::size_t i = 0; i < n; ++i) {
    const double* x = points + i * d;
    for (std::size_t k = 0; k < K; ++k) {
      const auto& mu = m.components()[k].mu();
      double* z = z_.data() + (i * K + k) * d;
      for (std::size_t j = 0; j < d; ++j) z[j] = (x[j] - mu[j]) * inv_sd[k * d + j];
    }
  }

  mlp_.forward(m.classifier(), z_.data(), rows);
  const double* logits = mlp_.logits().data.data();

  // Row-wise softmax of the classifier outputs.
  probs_.resize(rows * K);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* l = logits + r * K;
    const double mx = *std::max_element(l, l + K);
    row_lse[r] = mx;
    for (std::size_t j = 0; j < K; ++j) probs_[r * K + j] = l[j] - mx;
  }
  kern.exp(probs_.data(), probs_.data(), probs_.size());
  for (std::size_t r = 0; r < rows; ++r) {
    double* p = probs_.data() + r * K;
    double s = 0.0;
    for (std::size_t j = 0; j < K; ++j) s += p[j];
    row_lse[r] += std::log(s);
    const double inv = 1.0 / s;
    for (std::size_t j = 0; j < K; ++j) p[j] *= inv;
  }

  const double base = -0.5 * static_cast<double>(d) * kLog2Pi;
  joint_.resize(n * K);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < K; ++k) {
      const std::size_t r = i * K + k;
      const double* z = z_.data() + r * d;
      double sq = 0.0;
      for (std::size_t j = 0; j < d; ++j) sq += z[j] * z[j];
      const double log_w = logits[r * K + k] - row_lse[r];
      joint_[r] = log_w + base - 0.5 * sq + log_det[k];
    }
  }

  post_.resize(n * K);
  log_p_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* a = joint_.data() + i * K;
    const double mx = *std::max_element(a, a + K);
    log_p_[i] = mx;
    for (std::size_t k = 0; k < K; ++k) post_[i * K + k] = a[k] - mx;
  }
  kern.exp(post_.data(), post_.data(), post_.size());
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    double* g = post_.data() + i * K;
    if (log_p_[i] == kNegInf) {
      std::fill(g, g + K, 0.0);
      continue;
    }
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) s += g[k];
    log_p_[i] += std::log(s);
    const double inv = 1.0 / s;
    for (std::size_t k = 0; k < K; ++k) g[k] *= inv;
  }
}

void CwmEvaluator::backward_chunk(const CwmModel& m, std::size_t n, const double* weights, CwmGrads& grads) {
  const std::size_t K = m.num_components();
  const std::size_t d = m.dim();
  const std::size_t rows = n * K;
  const double* inv_sd = scratch_.data();

  // d log p / d logits[r, j] = g_ik (delta_jk - softmax_j), with g_ik = weight_i * gamma_ik.
  upstream_.resize(rows * K);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < K; ++k) {
      const std::size_t r = i * K + k;
      const double g = weights[i] * post_[r];
      const double* p = probs_.data() + r * K;
      double* u = upstream_.data() + r * K;
      for (std::size_t j = 0; j < K; ++j) u[j] = -g * p[j];
      u[k] += g;
    }
  }

  dz_.resize(rows * d);
  mlp_.backward(m.classifier(), upstream_.data(), grads.classifier, dz_.data());

  // The whitened point z_ik feeds both the classifier and the Gaussian term.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < K; ++k) {
      const std::size_t r = i * K + k;
      const double g = weights[i] * post_[r];
      const double* z = z_.data() + r * d;
      const double* dz_clf = dz_.data() + r * d;
      Vec& d_mu = grads.d_mu[k];
      Vec& d_lv = grads.d_log_var[k];
      for (std::size_t j = 0; j < d; ++j) {
        const double dz = dz_clf[j] - g * z[j];
        d_mu[j] -= dz * inv_sd[k * d + j];
        d_lv[j] -= 0.5 * (dz * z[j] + g);
      }
    }
  }
}

void CwmEvaluator::log_prob(const CwmModel& m, const double* points, std::size_t n, std::span<double> out) {
  if (out.size() != n) throw ContractError("log_prob: output size mismatch");
  for (std::size_t start = 0; start < n; start += chunk_) {
    const std::size_t cnt = std::min(chunk_, n - start);
    forward_chunk(m, points + start * m.dim(), cnt);
    std::copy(log_p_.begin(), log_p_.begin() + cnt, out.begin() + start);
  }
}

Matrix CwmEvaluator::log_joint(const CwmModel& m, const double* points, std::size_t n) {
  const std::size_t K = m.num_components();
  Matrix out(n, K);
  for (std::size_t start = 0; start < n; start += chunk_) {
    const std::size_t cnt = std::min(chunk_, n - start);
    forward_chunk(m, points + start * m.dim(), cnt);
    std::copy(joint_.begin(), joint_.begin() + cnt * K, out.data.begin() + start * K);
  }
  return out;
}

void CwmEvaluator::accumulate_grad(const CwmModel& m, const double* points, std::size_t n,
                                   std::span<const double> weights, CwmGrads& grads, std::span<double> log_probs) {
  if (weights.size() != n) throw ContractError("accumulate_grad: weight count mismatch");
  if (!log_probs.empty() && log_probs.size() != n) throw ContractError("accumulate_grad: output size mismatch");
  for (std::size_t start = 0; start < n; start += chunk_) {
    const std::size_t cnt = std::min(chunk_, n - start);
    forward_chunk(m, points + start * m.dim(), cnt);
    backward_chunk(m, cnt, weights.data() + start, grads);
    if (!log_probs.empty()) std::copy(log_p_.begin(), log_p_.begin() + cnt, log_probs.begin() + start);
  }
}

double CwmEvaluator::mean_log_prob(const CwmModel& m, const Matrix& points) {
  if (points.rows == 0) throw ContractError("mean_log_prob: no points");
  std::vector<double> lp(points.rows);
  log_prob(m, points, lp);
  double s = 0.0;
  for (double v : lp) s += v;
  return s / static_cast<double>(points.rows);
}

namespace {

void check_point(const CwmModel& m, std::span<const double> x) {
  if (x.size() != m.dim()) throw ContractError("CwmModel: dimension mismatch");
}

}  // namespace

double log_prob(const CwmModel& m, std::span<const double> x) {
  check_point(m, x);
  CwmEvaluator ev(1);
  double out = 0.0;
  ev.log_prob(m, x.data(), 1, {&out, 1});
  return out;
}

double log_joint(const CwmModel& m, std::span<const double> x, std::size_t k) {
  check_point(m, x);
  if (k >= m.num_components()) throw ContractError("log_joint: component index out of range");
  CwmEvaluator ev(1);
  return ev.log_joint(m, x.data(), 1)(0, k);
}

Vec responsibilities(const CwmModel& m, std::span<const double> x) {
  check_point(m, x);
  CwmEvaluator ev(1);
  const Matrix a = ev.log_joint(m, x.data(), 1);
  Vec r = log_softmax(a.row(0));
  for (double& e : r) e = std::exp(e);
  return r;
}

std::pair<double, CwmGrads> log_prob_backward(const CwmModel& m, std::span<const double> x) {
  check_point(m, x);
  CwmEvaluator ev(1);
  CwmGrads grads(m);
  const double one = 1.0;
  double lp = 0.0;
  ev.accumulate_grad(m, x.data(), 1, {&one, 1}, grads, {&lp, 1});
  return {lp, std::move(grads)};
}

std::vector<SampleTrace> sample(const CwmModel& m, RngHandle& rng, std::size_t n) {
  if (n == 0) throw ContractError("sample: n must be at least 1");
  const std::size_t d = m.dim();
  const std::size_t K = m.num_components();
  std::vector<SampleTrace> out(n);
  Matrix z(n, d);
  rng.fill_normal(z.data);

  MlpWorkspace ws;
  Vec probs(K);
  constexpr std::size_t kChunk = 4096;
  std::vector<std::size_t> labels(n);
  Matrix weights(n, K);
  for (std::size_t start = 0; start < n; start += kChunk) {
    const std::size_t cnt = std::min(kChunk, n - start);
    ws.forward(m.classifier(), z.data.data() + start * d, cnt);
    for (std::size_t i = 0; i < cnt; ++i) {
      const Vec lw = log_softmax(ws.logits().row(i));
      for (std::size_t k = 0; k < K; ++k) weights(start + i, k) = std::exp(lw[k]);
    }
  }
  for (std::size_t i = 0; i < n; ++i) labels[i] = rng.categorical(weights.row(i));

  for (std::size_t i = 0; i < n; ++i) {
    SampleTrace& t = out[i];
    t.z.assign(z.row(i).begin(), z.row(i).end());
    t.r = labels[i];
    t.x = inverse_T(m.components()[t.r], t.z);
  }
  return out;
}

std::vector<double> pack_parameters(const CwmModel& m) {
  std::vector<double> theta;
  for (const auto& c : m.components()) {
    theta.insert(theta.end(), c.mu().begin(), c.mu().end());
    theta.insert(theta.end(), c.log_var().begin(), c.log_var().end());
  }
  for (const auto& layer : m.classifier().layers()) {
    theta.insert(theta.end(), layer.weights.begin(), layer.weights.end());
    theta.insert(theta.end(), layer.bias.begin(), layer.bias.end());
  }
  return theta;
}

void unpack_parameters(CwmModel& m, std::span<const double> theta) {
  std::size_t pos = 0;
  auto take = [&](std::vector<double>& dst) {
    if (pos + dst.size() > theta.size()) throw ContractError("unpack_parameters: vector too short");
    std::copy(theta.begin() + pos, theta.begin() + pos + dst.size(), dst.begin());
    pos += dst.size();
  };
  for (auto& c : m.components()) {
    take(c.mu());
    take(c.log_var());
  }
  for (auto& layer : m.classifier().layers()) {
    take(layer.weights);
    take(layer.bias);
  }
  if (pos != theta.size()) throw ContractError("unpack_parameters: vector too long");
}

std::vector<double> pack_gradients(const CwmGrads& g) {
  std::vector<double> out;
  for (std::size_t k = 0; k < g.d_mu.size(); ++k) {
    out.insert(out.end(), g.d_mu[k].begin(), g.d_mu[k].end());
    out.insert(out.end(), g.d_log_var[k].begin(), g.d_log_var[k].end());
  }
  for (const auto& layer : g.classifier.layers) {
    out.insert(out.end(), layer.weights.begin(), layer.weights.end());
    out.insert(out.end(), layer.bias.begin(), layer.bias.end());
  }
  return out;
}

}  // namespace cwm
