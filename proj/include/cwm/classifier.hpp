#pragma once

#include <span>
#include <vector>

#include "cwm/core_math.hpp"

namespace cwm {

/// Fully connected layer y = x W + b with W stored in x out, row-major.
struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;
  std::vector<double> bias;

  DenseLayer() = default;
  DenseLayer(std::size_t fan_in, std::size_t fan_out)
      : in(fan_in), out(fan_out), weights(fan_in * fan_out, 0.0), bias(fan_out, 0.0) {}
};

/// Feed-forward network with tanh hidden units producing K logits. The
/// classifying weights are softmax(logits).
class MlpClassifier {
 public:
  MlpClassifier() = default;
  /// All weights and biases zero. layer_sizes = [d, h1, ..., K].
  explicit MlpClassifier(std::vector<std::size_t> layer_sizes);

  /// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
  static MlpClassifier glorot(std::vector<std::size_t> layer_sizes, RngHandle& rng);

  const std::vector<std::size_t>& layer_sizes() const { return sizes_; }
  std::size_t input_dim() const { return sizes_.front(); }
  std::size_t num_classes() const { return sizes_.back(); }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  /// Sum over layers of in * out + out.
  std::size_t parameter_count() const;

 private:
  std::vector<std::size_t> sizes_;
  std::vector<DenseLayer> layers_;
};

/// Same shape as the classifier's parameters, plus the gradient with respect
/// to the input point.
struct ClassifierGrads {
  std::vector<DenseLayer> layers;
  Vec input;

  ClassifierGrads() = default;
  explicit ClassifierGrads(const MlpClassifier& clf);
};

Vec logits(const MlpClassifier& clf, std::span<const double> z);
/// logits - log_sum_exp(logits).
Vec log_softmax(std::span<const double> logits);
/// Reverse-mode gradients of L given upstream = dL/dlogits at input z.
ClassifierGrads backprop(const MlpClassifier& clf, std::span<const double> z, std::span<const double> upstream);

/// Classifier whose output is pis for every input: last-layer weights zero and
/// biases log(pis). Earlier layers are Glorot-initialized from rng.
MlpClassifier make_constant_classifier(std::size_t dim, std::span<const double> pis,
                                       std::span<const std::size_t> hidden_sizes, RngHandle& rng);

/// Scratch space for batched forward/backward passes. Holds the activations of
/// the most recent forward() so backward() can reuse them.
class MlpWorkspace {
 public:
  /// inputs: rows x d row-major; must stay alive until backward() returns.
  void forward(const MlpClassifier& clf, const double* inputs, std::size_t rows);

  /// rows x K logits from the last forward().
  const Matrix& logits() const { return activations_.back(); }

  /// upstream: rows x K. Adds parameter gradients into grads.layers and, when
  /// input_grad is non-null, writes dL/dinput (rows x d) there.
  void backward(const MlpClassifier& clf, const double* upstream, ClassifierGrads& grads, double* input_grad);

 private:
  const double* inputs_ = nullptr;
  std::size_t rows_ = 0;
  std::vector<Matrix> activations_;
  Matrix delta_;
  Matrix delta_in_;
  std::vector<double> weights_t_;
};

}  // namespace cwm
