#include "cwm/classifier.hpp"

#include <algorithm>
#include <cmath>

#include "cwm/errors.hpp"
#include "cwm/simd.hpp"

namespace cwm {
namespace {

void add_column_sums(const double* __restrict m, std::size_t rows, std::size_t cols, double* __restrict out) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < cols; ++j) out[j] += m[r * cols + j];
  }
}

void add_row_vector(const double* __restrict v, std::size_t rows, std::size_t cols, double* __restrict m) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < cols; ++j) m[r * cols + j] += v[j];
  }
}

// delta *= 1 - h^2, the derivative of tanh written in terms of its output h.
void scale_by_tanh_derivative(const double* __restrict h, double* __restrict delta, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) delta[i] *= 1.0 - h[i] * h[i];
}

}  // namespace

MlpClassifier::MlpClassifier(std::vector<std::size_t> layer_sizes) : sizes_(std::move(layer_sizes)) {
  if (sizes_.size() < 2) throw ContractError("MlpClassifier: need at least input and output sizes");
  for (std::size_t s : sizes_) {
    if (s == 0) throw ContractError("MlpClassifier: zero layer width");
  }
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) layers_.emplace_back(sizes_[l], sizes_[l + 1]);
}

MlpClassifier MlpClassifier::glorot(std::vector<std::size_t> layer_sizes, RngHandle& rng) {
  MlpClassifier clf(std::move(layer_sizes));
  for (DenseLayer& layer : clf.layers_) {
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
    for (double& w : layer.weights) w = limit * (2.0 * rng.uniform() - 1.0);
  }
  return clf;
}

std::size_t MlpClassifier::parameter_count() const {
  std::size_t n = 0;
  for (const DenseLayer& layer : layers_) n += layer.in * layer.out + layer.out;
  return n;
}

ClassifierGrads::ClassifierGrads(const MlpClassifier& clf) : input(clf.input_dim(), 0.0) {
  for (const DenseLayer& layer : clf.layers()) layers.emplace_back(layer.in, layer.out);
}

void MlpWorkspace::forward(const MlpClassifier& clf, const double* inputs, std::size_t rows) {
  const auto& kern = simd::active();
  const auto& layers = clf.layers();
  inputs_ = inputs;
  rows_ = rows;
  activations_.resize(layers.size());
  const double* in = inputs;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const DenseLayer& layer = layers[l];
    Matrix& act = activations_[l];
    act.rows = rows;
    act.cols = layer.out;
    act.data.resize(rows * layer.out);
    kern.gemm({rows, layer.out, layer.in, in, layer.in, 1, layer.weights.data(), layer.out, act.data.data(), layer.out, false});
    add_row_vector(layer.bias.data(), rows, layer.out, act.data.data());
    if (l + 1 < layers.size()) kern.tanh(act.data.data(), act.data.data(), act.data.size());
    in = act.data.data();
  }
}

void MlpWorkspace::backward(const MlpClassifier& clf, const double* upstream, ClassifierGrads& grads,
                            double* input_grad) {
  const auto& kern = simd::active();
  const auto& layers = clf.layers();
  const std::size_t rows = rows_;
  const std::size_t last = layers.size() - 1;
  delta_.rows = rows;
  delta_.cols = layers[last].out;
  delta_.data.assign(upstream, upstream + rows * layers[last].out);

  for (std::size_t l = layers.size(); l-- > 0;) {
    const DenseLayer& layer = layers[l];
    DenseLayer& g = grads.layers[l];
    const double* a_in = (l == 0) ? inputs_ : activations_[l - 1].data.data();

    // dW += A_in^T delta, db += column sums of delta.
    kern.gemm({layer.in, layer.out, rows, a_in, 1, layer.in, delta_.data.data(), layer.out, g.weights.data(), layer.out, true});
    add_column_sums(delta_.data.data(), rows, layer.out, g.bias.data());

    if (l == 0 && input_grad == nullptr) break;

    weights_t_.resize(layer.in * layer.out);
    for (std::size_t i = 0; i < layer.in; ++i) {
      for (std::size_t j = 0; j < layer.out; ++j) weights_t_[j * layer.in + i] = layer.weights[i * layer.out + j];
    }
    double* dst = input_grad;
    if (l > 0) {
      delta_in_.rows = rows;
      delta_in_.cols = layer.in;
      delta_in_.data.resize(rows * layer.in);
      dst = delta_in_.data.data();
    }
    kern.gemm({rows, layer.in, layer.out, delta_.data.data(), layer.out, 1, weights_t_.data(), layer.in, dst, layer.in, false});
    if (l == 0) break;

    scale_by_tanh_derivative(activations_[l - 1].data.data(), delta_in_.data.data(), delta_in_.data.size());
    std::swap(delta_, delta_in_);
  }
}

Vec logits(const MlpClassifier& clf, std::span<const double> z) {
  if (z.size() != clf.input_dim()) throw ContractError("logits: input dimension mismatch");
  MlpWorkspace ws;
  ws.forward(clf, z.data(), 1);
  return ws.logits().data;
}

Vec log_softmax(std::span<const double> logits) {
  const double lse = log_sum_exp(logits);
  Vec out(logits.begin(), logits.end());
  for (double& v : out) v -= lse;
  return out;
}

ClassifierGrads backprop(const MlpClassifier& clf, std::span<const double> z, std::span<const double> upstream) {
  if (z.size() != clf.input_dim()) throw ContractError("backprop: input dimension mismatch");
  if (upstream.size() != clf.num_classes()) throw ContractError("backprop: upstream size mismatch");
  MlpWorkspace ws;
  ws.forward(clf, z.data(), 1);
  ClassifierGrads grads(clf);
  ws.backward(clf, upstream.data(), grads, grads.input.data());
  return grads;
}

MlpClassifier make_constant_classifier(std::size_t dim, std::span<const double> pis,
                                       std::span<const std::size_t> hidden_sizes, RngHandle& rng) {
  if (pis.empty()) throw ContractError("make_constant_classifier: empty weights");
  double total = 0.0;
  for (double p : pis) {
    if (!(p > 0.0)) throw ContractError("make_constant_classifier: weights must be strictly positive");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ContractError("make_constant_classifier: weights do not sum to one");

  std::vector<std::size_t> sizes{dim};
  sizes.insert(sizes.end(), hidden_sizes.begin(), hidden_sizes.end());
  sizes.push_back(pis.size());
  MlpClassifier clf = MlpClassifier::glorot(sizes, rng);
  DenseLayer& out = clf.layers().back();
  std::fill(out.weights.begin(), out.weights.end(), 0.0);
  for (std::size_t k = 0; k < pis.size(); ++k) out.bias[k] = std::log(pis[k]);
  return clf;
}

}  // namespace cwm
