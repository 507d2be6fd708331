#include "cwm/core_math.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "cwm/errors.hpp"

namespace cwm {

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw ContractError(std::string(what) + ": non-finite entry");
  }
}

double log_sum_exp(std::span<const double> terms) {
  if (terms.empty()) throw ContractError("log_sum_exp: empty input");
  const double m = *std::max_element(terms.begin(), terms.end());
  if (m == -std::numeric_limits<double>::infinity()) return m;
  double s = 0.0;
  for (double t : terms) s += std::exp(t - m);
  return m + std::log(s);
}

double std_normal_logpdf(std::span<const double> z) {
  double sq = 0.0;
  for (double v : z) sq += v * v;
  return -0.5 * static_cast<double>(z.size()) * kLog2Pi - 0.5 * sq;
}

double RngHandle::uniform() {
  ++uniform_draws_;
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double RngHandle::normal() {
  ++normal_draws_;
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

void RngHandle::fill_normal(std::span<double> out) {
  for (double& v : out) v = normal();
}

std::size_t RngHandle::categorical(std::span<const double> probs) {
  if (probs.empty()) throw ContractError("categorical: empty probability vector");
  double total = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw ContractError("categorical: negative or NaN probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ContractError("categorical: probabilities do not sum to one");
  ++categorical_draws_;
  const double u = uniform();
  double cum = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (probs[k] > 0.0) last_positive = k;
    cum += probs[k];
    if (u < cum) return k;
  }
  // u landed in the rounding gap above the final cumulative sum.
  return last_positive;
}

std::size_t RngHandle::index(std::size_t n) {
  if (n == 0) throw ContractError("index: empty range");
  const auto i = static_cast<std::size_t>(uniform() * static_cast<double>(n));
  return std::min(i, n - 1);
}

std::size_t categorical_draw(std::span<const double> probs, RngHandle& rng) {
  return rng.categorical(probs);
}

CategoricalTable::CategoricalTable(std::span<const double> weights) {
  if (weights.empty()) throw ContractError("CategoricalTable: no cells");
  cumulative_.reserve(weights.size());
  double cum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ContractError("CategoricalTable: invalid weight");
    cum += w;
    cumulative_.push_back(cum);
  }
  if (!(cum > 0.0)) throw ContractError("CategoricalTable: zero total weight");
}

std::size_t CategoricalTable::draw(RngHandle& rng) const {
  const double u = rng.uniform() * cumulative_.back();
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  if (it == cumulative_.end()) --it;
  // Skip zero-weight cells sharing the same cumulative value.
  std::size_t k = static_cast<std::size_t>(it - cumulative_.begin());
  while (k > 0 && cumulative_[k] == cumulative_[k - 1] && u >= cumulative_[k]) --k;
  return k;
}

void shuffle_indices(std::vector<std::size_t>& idx, RngHandle& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = rng.index(i);
    std::swap(idx[i - 1], idx[j]);
  }
}

}  // namespace cwm
