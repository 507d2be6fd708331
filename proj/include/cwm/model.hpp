#pragma once

#include <span>
#include <utility>
#include <vector>

#include "cwm/classifier.hpp"
#include "cwm/components.hpp"
#include "cwm/core_math.hpp"

namespace cwm {

/// Classifier weighted mixture with a standard normal base:
///
///   p(x) = sum_k w_k(T_k(x)) N(x; mu_k, Sigma_k),   w = softmax(f(z)),
///
/// where T_k is component k's whitening map. Each component's weight is read
/// off the classifier at that component's own whitened point.
class CwmModel {
 public:
  CwmModel() = default;
  CwmModel(std::vector<DiagGaussianComponent> components, MlpClassifier classifier);

  std::size_t dim() const { return dim_; }
  std::size_t num_components() const { return components_.size(); }
  const std::vector<DiagGaussianComponent>& components() const { return components_; }
  std::vector<DiagGaussianComponent>& components() { return components_; }
  const MlpClassifier& classifier() const { return classifier_; }
  MlpClassifier& classifier() { return classifier_; }

  void clamp_log_var();

 private:
  std::size_t dim_ = 0;
  std::vector<DiagGaussianComponent> components_;
  MlpClassifier classifier_;
};

struct CwmGrads {
  std::vector<Vec> d_mu;
  std::vector<Vec> d_log_var;
  ClassifierGrads classifier;

  CwmGrads() = default;
  explicit CwmGrads(const CwmModel& m);

  void scale(double s);
  CwmGrads& operator+=(const CwmGrads& other);
};

/// One ancestral draw: z ~ N(0, I), r ~ Categorical(w(z)), x = T_r^{-1}(z).
struct SampleTrace {
  Vec z;
  std::size_t r = 0;
  Vec x;
};

double log_prob(const CwmModel& m, std::span<const double> x);
/// log w_k(T_k(x)) + log N(x; mu_k, Sigma_k). k is zero-based.
double log_joint(const CwmModel& m, std::span<const double> x, std::size_t k);
/// Posterior p(R = k | x).
Vec responsibilities(const CwmModel& m, std::span<const double> x);
/// Draws all latent z first, then the n component indices.
std::vector<SampleTrace> sample(const CwmModel& m, RngHandle& rng, std::size_t n);
std::pair<double, CwmGrads> log_prob_backward(const CwmModel& m, std::span<const double> x);

/// Flat parameter vector: for each component mu then log_var, followed by each
/// classifier layer's weights then bias.
std::vector<double> pack_parameters(const CwmModel& m);
void unpack_parameters(CwmModel& m, std::span<const double> theta);
/// Same ordering as pack_parameters.
std::vector<double> pack_gradients(const CwmGrads& g);

/// Batched evaluator. Reuses scratch buffers across calls; one instance per
/// thread.
class CwmEvaluator {
 public:
  explicit CwmEvaluator(std::size_t chunk_points = 32) : chunk_(chunk_points) {}

  /// out[i] = log p(row i of points); points is n x d row-major.
  void log_prob(const CwmModel& m, const double* points, std::size_t n, std::span<double> out);
  void log_prob(const CwmModel& m, const Matrix& points, std::span<double> out) {
    log_prob(m, points.data.data(), points.rows, out);
  }

  /// n x K matrix of log-joint terms.
  Matrix log_joint(const CwmModel& m, const double* points, std::size_t n);

  /// grads += sum_i weights[i] * grad log p(x_i). Writes log p(x_i) into
  /// log_probs when it is non-empty.
  void accumulate_grad(const CwmModel& m, const double* points, std::size_t n, std::span<const double> weights,
                       CwmGrads& grads, std::span<double> log_probs = {});

  /// Mean log-likelihood over the rows of points.
  double mean_log_prob(const CwmModel& m, const Matrix& points);

 private:
  void forward_chunk(const CwmModel& m, const double* points, std::size_t n);
  void backward_chunk(const CwmModel& m, std::size_t n, const double* weights, CwmGrads& grads);

  std::size_t chunk_;
  MlpWorkspace mlp_;
  std::vector<double> z_;         // (n*K) x d whitened points
  std::vector<double> probs_;     // (n*K) x K softmax of classifier outputs
  std::vector<double> joint_;     // n x K log-joint terms
  std::vector<double> post_;      // n x K responsibilities
  std::vector<double> log_p_;     // n
  std::vector<double> upstream_;  // (n*K) x K
  std::vector<double> dz_;        // (n*K) x d
  std::vector<double> scratch_;
};

}  // namespace cwm
