#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace cwm {

/// A point in R^d. Entries are expected to be finite.
using Vec = std::vector<double>;

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

/// Dense row-major matrix. Used for point sets and batched activations.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

/// Throws ContractError unless every entry is finite.
void require_finite(std::span<const double> v, const char* what);

/// log(sum(exp(terms))) with max-shift. Empty input is a contract violation;
/// all -inf returns -inf.
double log_sum_exp(std::span<const double> terms);

/// log N(z; 0, I).
double std_normal_logpdf(std::span<const double> z);

/// Seeded random stream. Uniforms come from mt19937_64 (bit-exact across
/// platforms), normals from Box-Muller on those uniforms. Draw counters are
/// kept per kind so callers can check which draws a routine performed.
class RngHandle {
 public:
  explicit RngHandle(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double normal();
  void fill_normal(std::span<double> out);

  /// Inverse-CDF draw from a probability vector using one uniform. Returns a
  /// zero-based index; ties resolve toward the lower index.
  std::size_t categorical(std::span<const double> probs);

  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  /// Handle for an independent stream, seeded as seed + offset.
  RngHandle derive(std::uint64_t offset) const { return RngHandle(seed_ + offset); }

  std::uint64_t uniform_draws() const { return uniform_draws_; }
  std::uint64_t normal_draws() const { return normal_draws_; }
  std::uint64_t categorical_draws() const { return categorical_draws_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
  std::uint64_t uniform_draws_ = 0;
  std::uint64_t normal_draws_ = 0;
  std::uint64_t categorical_draws_ = 0;
};

/// Free-function form of RngHandle::categorical. Validates that probs lies on
/// the simplex (nonnegative, sum within 1e-9 of one).
std::size_t categorical_draw(std::span<const double> probs, RngHandle& rng);

/// Cumulative table for repeated categorical draws over many cells
/// (binary search instead of a linear scan). Weights need not be normalized.
class CategoricalTable {
 public:
  explicit CategoricalTable(std::span<const double> weights);
  std::size_t draw(RngHandle& rng) const;
  std::size_t size() const { return cumulative_.size(); }

 private:
  std::vector<double> cumulative_;
};

/// Deterministic in-place Fisher-Yates shuffle driven by rng.uniform().
void shuffle_indices(std::vector<std::size_t>& idx, RngHandle& rng);

}  // namespace cwm
