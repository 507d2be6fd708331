#pragma once

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cwm/model.hpp"

namespace cwm {

/// Integrand h for expectations E[h(X)], X ~ CWM.
class TestFunction {
 public:
  enum class Kind { constant_one, coordinate_sum, squared_norm, halfspace_indicator, custom };
  using ValueFn = std::function<double(std::span<const double>)>;
  using GradFn = std::function<void(std::span<const double>, std::span<double>)>;

  static TestFunction constant_one();
  static TestFunction coordinate_sum();
  static TestFunction squared_norm();
  /// 1{normal . x > offset}. Its gradient is zero almost everywhere.
  static TestFunction halfspace_indicator(Vec normal, double offset);
  /// A custom h must come with its gradient to be used by the gradient
  /// estimators.
  static TestFunction custom(std::string name, ValueFn value, GradFn gradient = {});
  /// Catalog lookup for "constant-one", "coordinate-sum", "squared-norm" and
  /// "halfspace" (x0 > 0).
  static TestFunction from_name(std::string_view name, std::size_t dim);

  Kind kind() const { return kind_; }
  const std::string& name() const { return name_; }
  double value(std::span<const double> x) const;
  bool has_gradient() const { return kind_ != Kind::custom || static_cast<bool>(grad_); }
  /// Writes dh/dx into out.
  void gradient(std::span<const double> x, std::span<double> out) const;

 private:
  TestFunction(Kind kind, std::string name) : kind_(kind), name_(std::move(name)) {}

  Kind kind_;
  std::string name_;
  Vec normal_;
  double offset_ = 0.0;
  ValueFn value_;
  GradFn grad_;
};

/// Mean of h over M ancestral samples.
double crude_mc(const CwmModel& m, const TestFunction& h, std::size_t M, RngHandle& rng);

/// Conditional-expectation estimate (1/M) sum_i sum_k w_k(z_i) h(T_k^{-1}(z_i)),
/// z_i ~ N(0, I). Draws only the base normals; no component index is sampled.
double rb_expectation(const CwmModel& m, const TestFunction& h, std::size_t M, RngHandle& rng);
/// Exact gradient of the estimate above for the drawn z_i.
CwmGrads rb_expectation_grad(const CwmModel& m, const TestFunction& h, std::size_t M, RngHandle& rng);

/// Same estimate and gradient for caller-supplied base draws (rows of z).
double rb_estimate_at(const CwmModel& m, const TestFunction& h, const Matrix& z);
CwmGrads rb_estimate_grad_at(const CwmModel& m, const TestFunction& h, const Matrix& z);

/// Score-function estimate (1/M) sum_i h(x_i) grad log p(x_i).
CwmGrads reinforce_grad(const CwmModel& m, const TestFunction& h, std::size_t M, RngHandle& rng);

struct EstimatorReport {
  std::string estimator;
  /// Mean over replications (norm of the mean vector for gradient estimators).
  double estimate = 0.0;
  /// One value per replication (gradient norm for gradient estimators).
  std::vector<double> values;
  /// Unbiased sample variance across replications; trace of the sample
  /// covariance for gradient estimators.
  double variance = 0.0;
  std::size_t replications = 0;
  std::size_t inner_samples = 0;
  /// Mean gradient vector (empty for scalar estimators).
  std::vector<double> mean_vector;
};

/// Runs crude, rb, reinforce-grad and rb-grad M_rep times each. Replication r
/// of every estimator uses RngHandle(seed + r), so estimators share their base
/// draws.
std::vector<EstimatorReport> variance_bench(const CwmModel& m, const TestFunction& h, std::size_t M,
                                            std::size_t M_rep, std::uint64_t seed);

/// CSV table: estimator,mean,variance,M,M_rep
std::string format_variance_table(const std::vector<EstimatorReport>& reports);

}  // namespace cwm
