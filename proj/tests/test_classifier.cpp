#include <doctest.h>

#include <cmath>

#include "cwm/classifier.hpp"
#include "cwm/errors.hpp"
#include "support.hpp"

using namespace cwm;

namespace {

// Forward pass written out with plain loops, independent of the GEMM kernels.
Vec oracle_logits(const MlpClassifier& clf, const Vec& z) {
  Vec h = z;
  const auto& layers = clf.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    Vec next(L.out);
    for (std::size_t o = 0; o < L.out; ++o) {
      long double s = L.bias[o];
      for (std::size_t i = 0; i < L.in; ++i) s += static_cast<long double>(h[i]) * L.weights[i * L.out + o];
      next[o] = static_cast<double>(s);
      if (l + 1 < layers.size()) next[o] = std::tanh(next[o]);
    }
    h = std::move(next);
  }
  return h;
}

std::vector<double> flatten(const std::vector<DenseLayer>& layers) {
  std::vector<double> out;
  for (const auto& L : layers) {
    out.insert(out.end(), L.weights.begin(), L.weights.end());
    out.insert(out.end(), L.bias.begin(), L.bias.end());
  }
  return out;
}

void assign(MlpClassifier& clf, const std::vector<double>& theta) {
  std::size_t pos = 0;
  for (auto& L : clf.layers()) {
    for (double& w : L.weights) w = theta[pos++];
    for (double& b : L.bias) b = theta[pos++];
  }
}

double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("zero classifier gives zero logits") {
  MlpClassifier clf({3, 5, 4});
  CHECK(logits(clf, Vec{0.2, -1.0, 7.0}) == Vec(4, 0.0));
}

TEST_CASE("linear classifier with zero weights returns its bias") {
  MlpClassifier clf({2, 3});
  clf.layers()[0].bias = {0.1, -0.4, 2.0};
  RngHandle rng(1);
  for (int i = 0; i < 20; ++i) CHECK(logits(clf, test::random_vec(rng, 2, -5.0, 5.0)) == clf.layers()[0].bias);
}

TEST_CASE("logits match an independent forward pass") {
  RngHandle rng(41);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t d = 1 + rng.index(4);
    std::vector<std::size_t> sizes{d};
    for (std::size_t h = 0, n = rng.index(3); h < n; ++h) sizes.push_back(1 + rng.index(70));
    sizes.push_back(1 + rng.index(8));
    auto clf = MlpClassifier::glorot(sizes, rng);
    for (auto& L : clf.layers()) for (double& b : L.bias) b = test::uniform_in(rng, -1.0, 1.0);
    const Vec z = test::random_vec(rng, d, -2.0, 2.0);
    const Vec got = logits(clf, z);
    const Vec expect = oracle_logits(clf, z);
    for (std::size_t k = 0; k < got.size(); ++k) CHECK(std::abs(got[k] - expect[k]) < 1e-12);
  }
}

TEST_CASE("batched workspace agrees with single-point logits") {
  RngHandle rng(42);
  auto clf = MlpClassifier::glorot({2, 64, 64, 16}, rng);
  for (auto& L : clf.layers()) for (double& b : L.bias) b = test::uniform_in(rng, -1.0, 1.0);
  const std::size_t rows = 37;
  const Vec pts = test::random_vec(rng, rows * 2, -3.0, 3.0);
  MlpWorkspace ws;
  ws.forward(clf, pts.data(), rows);
  for (std::size_t i = 0; i < rows; ++i) {
    const Vec one = logits(clf, Vec{pts[2 * i], pts[2 * i + 1]});
    for (std::size_t k = 0; k < 16; ++k) CHECK(std::abs(ws.logits()(i, k) - one[k]) < 1e-13);
  }
}

TEST_CASE("log_softmax examples") {
  for (double v : log_softmax(Vec(4, 0.0))) CHECK(v == doctest::Approx(-std::log(4.0)).epsilon(1e-15));
  const Vec shifted = log_softmax(Vec(4, 123.456));
  for (double v : shifted) CHECK(std::abs(v + std::log(4.0)) < 1e-12);
  const Vec big = log_softmax(Vec{1000.0, 0.0});
  // Exact: -log(1 + e^-1000) rounds to 0; the second entry is -1000 - that.
  CHECK(big[0] == 0.0);
  CHECK(big[1] == -1000.0);
}

TEST_CASE("softmax lies on the simplex") {
  RngHandle rng(43);
  for (int trial = 0; trial < 500; ++trial) {
    const Vec lg = test::random_vec(rng, 1 + rng.index(10), -30.0, 30.0);
    double s = 0.0;
    for (double v : log_softmax(lg)) {
      const double p = std::exp(v);
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
      s += p;
    }
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("backprop with zero upstream is zero") {
  RngHandle rng(44);
  auto clf = MlpClassifier::glorot({2, 8, 3}, rng);
  const auto g = backprop(clf, Vec{0.3, -0.2}, Vec(3, 0.0));
  for (double v : flatten(g.layers)) CHECK(v == 0.0);
  for (double v : g.input) CHECK(v == 0.0);
}

TEST_CASE("backprop matches finite differences") {
  RngHandle rng(45);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 1 + rng.index(4);
    const std::size_t K = 2 + rng.index(7);
    std::vector<std::size_t> sizes{d, 8, K};
    if (trial % 3 == 0) sizes = {2, 8, 3};
    if (trial % 3 == 1) sizes.insert(sizes.begin() + 1, 5);
    auto clf = MlpClassifier::glorot(sizes, rng);
    for (auto& L : clf.layers()) for (double& b : L.bias) b = test::uniform_in(rng, -0.5, 0.5);
    const Vec z = test::random_vec(rng, sizes.front(), -1.5, 1.5);
    const Vec up = test::random_vec(rng, sizes.back(), -1.0, 1.0);
    const auto g = backprop(clf, z, up);

    auto loss = [&](const std::vector<double>& theta) {
      MlpClassifier c = clf;
      assign(c, theta);
      return dot(logits(c, z), up);
    };
    CHECK(test::max_rel_err(flatten(g.layers), test::central_diff(loss, flatten(clf.layers()))) < 1e-6);

    auto loss_z = [&](const std::vector<double>& zz) { return dot(logits(clf, zz), up); };
    CHECK(test::max_rel_err(g.input, test::central_diff(loss_z, z)) < 1e-6);
  }
}

TEST_CASE("make_constant_classifier reproduces its weights everywhere") {
  RngHandle rng(46);
  const std::vector<std::size_t> hidden{64, 64};
  for (const Vec& pis : {Vec{0.5, 0.5}, Vec{0.2, 0.3, 0.5}, Vec{1.0}}) {
    const auto clf = make_constant_classifier(2, pis, hidden, rng);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const Vec w = log_softmax(logits(clf, test::random_vec(rng, 2, -10.0, 10.0)));
      for (std::size_t k = 0; k < pis.size(); ++k) worst = std::max(worst, std::abs(std::exp(w[k]) - pis[k]));
    }
    CHECK(worst < 1e-12);
    CHECK(clf.layer_sizes() == std::vector<std::size_t>{2, 64, 64, pis.size()});
  }
}

TEST_CASE("make_constant_classifier contracts") {
  RngHandle rng(47);
  CHECK_THROWS_AS(make_constant_classifier(2, Vec{0.5, 0.6}, std::vector<std::size_t>{4}, rng), ContractError);
  CHECK_THROWS_AS(make_constant_classifier(2, Vec{1.0, 0.0}, std::vector<std::size_t>{4}, rng), ContractError);
  CHECK_THROWS_AS(make_constant_classifier(2, Vec{1.2, -0.2}, std::vector<std::size_t>{4}, rng), ContractError);
}

TEST_CASE("glorot init respects its bounds and parameter count") {
  RngHandle rng(48);
  const auto clf = MlpClassifier::glorot({2, 64, 64, 50}, rng);
  CHECK(clf.parameter_count() == 192 + 4160 + 3250);
  for (const auto& L : clf.layers()) {
    const double bound = std::sqrt(6.0 / static_cast<double>(L.in + L.out));
    for (double w : L.weights) CHECK(std::abs(w) <= bound);
    for (double b : L.bias) CHECK(b == 0.0);
  }
}

TEST_CASE("classifier dimension checks") {
  MlpClassifier clf({2, 3});
  CHECK_THROWS_AS(logits(clf, Vec{1.0}), ContractError);
  CHECK_THROWS_AS(backprop(clf, Vec{1.0, 2.0}, Vec{1.0}), ContractError);
  CHECK_THROWS_AS(MlpClassifier(std::vector<std::size_t>{2}), ContractError);
}
