#pragma once

#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "cwm/data.hpp"
#include "cwm/gmm.hpp"
#include "cwm/model.hpp"

namespace cwm {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 256;
  std::size_t epochs = 200;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  bool pretrain = true;
  std::size_t em_max_iters = 500;
  double em_tol = 1e-6;
  std::vector<std::size_t> hidden{64, 64};

  /// Throws ContractError on out-of-range settings.
  void validate() const;
};

struct TrainReport {
  /// Mean log-likelihood of the training minibatches seen during each epoch.
  std::vector<double> train_ll;
  /// Mean log-likelihood of the validation split after each epoch.
  std::vector<double> val_ll;
  double wall_seconds = 0.0;
  std::size_t parameter_count = 0;
  /// EM warm start, when pretraining ran.
  std::vector<double> em_trace;
  std::optional<double> em_train_ll;
  std::optional<double> em_val_ll;
};

struct FitResult {
  CwmModel model;
  TrainReport report;
  std::optional<Gmm> gmm;  // EM solution used as the warm start
};

/// Adam moments for a flat parameter vector.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;

  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

/// One bias-corrected Adam update, descending along grads.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const TrainConfig& config);

/// Mean negative log-likelihood of the batch rows and its gradient.
std::pair<double, CwmGrads> nll_batch_grad(const CwmModel& m, const Matrix& batch);

/// Classifier weights and biases plus 2d per component.
std::size_t count_parameters(const CwmModel& m);
/// (K - 1) free weights plus 2d per component.
std::size_t count_parameters(const Gmm& g);

using EpochCallback = std::function<void(std::size_t epoch, double train_ll, double val_ll)>;

/// EM pre-training (optional), constant-classifier warm start, then shuffled
/// minibatch Adam on the negative mean log-likelihood of data.train. Throws
/// NumericalError if the objective becomes non-finite.
FitResult fit_cwm(const DensityDataset& data, std::size_t K, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

}  // namespace cwm
