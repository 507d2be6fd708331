#include "cwm/training.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

#include "cwm/errors.hpp"

namespace cwm {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ContractError("TrainConfig: learning_rate must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ContractError("TrainConfig: beta1 must lie in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ContractError("TrainConfig: beta2 must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ContractError("TrainConfig: eps must be positive");
  if (batch_size < 1) throw ContractError("TrainConfig: batch_size must be at least 1");
  if (em_max_iters < 1) throw ContractError("TrainConfig: em_max_iters must be at least 1");
  for (std::size_t h : hidden) {
    if (h == 0) throw ContractError("TrainConfig: zero-width hidden layer");
  }
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const TrainConfig& config) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw ContractError("adam_step: shape mismatch");
  }
  ++state.step;
  const double b1 = config.adam_beta1;
  const double b2 = config.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * grads[i];
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    params[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.adam_eps);
  }
}

std::pair<double, CwmGrads> nll_batch_grad(const CwmModel& m, const Matrix& batch) {
  if (batch.rows == 0) throw ContractError("nll_batch_grad: empty batch");
  if (batch.cols != m.dim()) throw ContractError("nll_batch_grad: dimension mismatch");
  const std::vector<double> weights(batch.rows, -1.0 / static_cast<double>(batch.rows));
  std::vector<double> lp(batch.rows);
  CwmGrads grads(m);
  CwmEvaluator ev;
  ev.accumulate_grad(m, batch.data.data(), batch.rows, weights, grads, lp);
  const double nll = -std::accumulate(lp.begin(), lp.end(), 0.0) / static_cast<double>(batch.rows);
  return {nll, std::move(grads)};
}

std::size_t count_parameters(const CwmModel& m) {
  return m.classifier().parameter_count() + 2 * m.dim() * m.num_components();
}

std::size_t count_parameters(const Gmm& g) { return (g.num_components() - 1) + 2 * g.dim() * g.num_components(); }

FitResult fit_cwm(const DensityDataset& data, std::size_t K, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const Matrix train = data.train_points();
  const Matrix val = data.validation_points();
  if (K == 0) throw ContractError("fit_cwm: K must be at least 1");
  if (train.rows < K) throw ContractError("fit_cwm: training split smaller than K");

  RngHandle rng(config.seed);
  const Gmm start = init_gmm(train, K, rng);
  FitResult out;
  if (config.pretrain) {
    EmResult em = em_fit(start, train, {config.em_max_iters, config.em_tol});
    out.model = init_cwm_from_gmm(em.gmm, config.hidden, rng);
    out.report.em_trace = std::move(em.loglik_trace);
    out.report.em_train_ll = out.report.em_trace.back();
    if (val.rows > 0) out.report.em_val_ll = gmm_mean_log_prob(em.gmm, val);
    out.gmm = std::move(em.gmm);
  } else {
    std::vector<std::size_t> sizes{data.dim()};
    sizes.insert(sizes.end(), config.hidden.begin(), config.hidden.end());
    sizes.push_back(K);
    out.model = CwmModel(start.components(), MlpClassifier::glorot(sizes, rng));
  }
  CwmModel& model = out.model;
  model.clamp_log_var();

  std::vector<double> theta = pack_parameters(model);
  AdamState adam(theta.size());
  CwmEvaluator ev;
  CwmGrads grads(model);
  std::vector<std::size_t> order(train.rows);
  std::iota(order.begin(), order.end(), 0);
  Matrix batch(config.batch_size, data.dim());
  std::vector<double> weights, lp;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_indices(order, rng);
    double ll_sum = 0.0;
    for (std::size_t start_i = 0; start_i < order.size(); start_i += config.batch_size) {
      const std::size_t b = std::min(config.batch_size, order.size() - start_i);
      for (std::size_t i = 0; i < b; ++i) {
        const auto row = train.row(order[start_i + i]);
        std::copy(row.begin(), row.end(), batch.data.begin() + i * data.dim());
      }
      weights.assign(b, -1.0 / static_cast<double>(b));
      lp.resize(b);
      grads = CwmGrads(model);
      ev.accumulate_grad(model, batch.data.data(), b, weights, grads, lp);
      const double batch_ll = std::accumulate(lp.begin(), lp.end(), 0.0);
      if (!std::isfinite(batch_ll)) {
        throw NumericalError("fit_cwm: non-finite log-likelihood in epoch " + std::to_string(epoch + 1) +
                             " (try a smaller learning rate)");
      }
      ll_sum += batch_ll;
      const std::vector<double> g = pack_gradients(grads);
      adam_step(theta, g, adam, config);
      unpack_parameters(model, theta);
      model.clamp_log_var();
      theta = pack_parameters(model);
    }
    const double train_ll = ll_sum / static_cast<double>(train.rows);
    const double val_ll = val.rows > 0 ? ev.mean_log_prob(model, val) : std::nan("");
    out.report.train_ll.push_back(train_ll);
    out.report.val_ll.push_back(val_ll);
    if (on_epoch) on_epoch(epoch + 1, train_ll, val_ll);
  }

  out.report.parameter_count = count_parameters(model);
  out.report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

}  // namespace cwm
