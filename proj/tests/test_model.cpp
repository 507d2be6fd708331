#include <doctest.h>

#include <cmath>

#include "cwm/errors.hpp"
#include "cwm/gmm.hpp"
#include "cwm/model.hpp"
#include "support.hpp"

using namespace cwm;

namespace {

// log p(x) evaluated term by term from the single-point building blocks.
double oracle_log_prob(const CwmModel& m, const Vec& x) {
  Vec terms;
  for (std::size_t k = 0; k < m.num_components(); ++k) {
    const auto& c = m.components()[k];
    const Vec lw = log_softmax(logits(m.classifier(), forward_T(c, x)));
    terms.push_back(lw[k] + component_logpdf(c, x));
  }
  return log_sum_exp(terms);
}

CwmModel constant_model(RngHandle& rng, const Vec& pis, std::vector<DiagGaussianComponent> comps) {
  const std::size_t d = comps.front().dim();
  return CwmModel(std::move(comps), make_constant_classifier(d, pis, std::vector<std::size_t>{6}, rng));
}

std::vector<double> theta_grad(const CwmModel& m, const Vec& x) { return pack_gradients(log_prob_backward(m, x).second); }

}  // namespace

TEST_CASE("log_prob agrees with the term-by-term oracle") {
  RngHandle rng(51);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t d = 1 + rng.index(3), K = 1 + rng.index(6);
    const auto m = test::random_model(rng, d, K, {7, 5});
    for (int i = 0; i < 20; ++i) {
      const Vec x = test::random_vec(rng, d, -2.0, 2.0);
      const double expect = oracle_log_prob(m, x);
      CHECK(std::abs(log_prob(m, x) - expect) < 1e-12 * std::max(1.0, std::abs(expect)));
    }
  }
}

TEST_CASE("single component reduces to its Gaussian") {
  RngHandle rng(52);
  const auto m = test::random_model(rng, 2, 1);
  for (int i = 0; i < 50; ++i) {
    const Vec x = test::random_vec(rng, 2, -3.0, 3.0);
    CHECK(log_prob(m, x) == doctest::Approx(component_logpdf(m.components()[0], x)).epsilon(1e-14));
    CHECK(log_joint(m, x, 0) == doctest::Approx(log_prob(m, x)).epsilon(1e-14));
    CHECK(responsibilities(m, x) == Vec{1.0});
  }
}

TEST_CASE("constant classifier reduces to the Gaussian mixture") {
  RngHandle rng(53);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 1 + rng.index(3), K = 1 + rng.index(5);
    const Vec pis = test::random_simplex(rng, K);
    auto comps = test::random_components(rng, d, K);
    const auto m = constant_model(rng, pis, comps);
    for (int i = 0; i < 30; ++i) {
      const Vec x = test::random_vec(rng, d, -3.0, 3.0);
      Vec terms;
      for (std::size_t k = 0; k < K; ++k) terms.push_back(std::log(pis[k]) + component_logpdf(comps[k], x));
      const double gmm = log_sum_exp(terms);
      CHECK(std::abs(log_prob(m, x) - gmm) < 1e-12 * std::max(1.0, std::abs(gmm)));
      const Vec r = responsibilities(m, x);
      for (std::size_t k = 0; k < K; ++k) {
        CHECK(std::abs(log_joint(m, x, k) - terms[k]) < 1e-12 * std::max(1.0, std::abs(terms[k])));
        CHECK(std::abs(r[k] - std::exp(terms[k] - gmm)) < 1e-12);
      }
    }
  }
}

TEST_CASE("log_joint marginalizes to log_prob and responsibilities sum to one") {
  RngHandle rng(54);
  const auto m = test::random_model(rng, 2, 5);
  for (int i = 0; i < 100; ++i) {
    const Vec x = test::random_vec(rng, 2, -2.0, 2.0);
    Vec terms;
    for (std::size_t k = 0; k < 5; ++k) terms.push_back(log_joint(m, x, k));
    CHECK(std::abs(log_sum_exp(terms) - log_prob(m, x)) < 1e-12);
    double s = 0.0;
    for (double r : responsibilities(m, x)) s += r;
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("symmetric two-component model splits responsibility evenly") {
  // Mirror-image components and an odd classifier: w_1(z) = w_2(-z), and the
  // two whitened points at the origin are negatives of each other.
  MlpClassifier clf({1, 2});
  clf.layers()[0].weights = {0.7, -0.7};
  CwmModel m({DiagGaussianComponent(Vec{-1.0}, Vec{0.3}), DiagGaussianComponent(Vec{1.0}, Vec{0.3})}, clf);
  const Vec r = responsibilities(m, Vec{0.0});
  CHECK(r[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(r[1] == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("batched evaluation matches single-point evaluation") {
  RngHandle rng(55);
  const auto m = test::random_model(rng, 2, 7, {16, 16});
  const std::size_t n = 1000;
  Matrix pts(n, 2);
  for (double& v : pts.data) v = test::uniform_in(rng, -2.0, 2.0);
  std::vector<double> lp(n);
  CwmEvaluator ev(64);
  ev.log_prob(m, pts, lp);
  const Matrix joint = ev.log_joint(m, pts.data.data(), n);
  for (std::size_t i = 0; i < n; ++i) {
    CHECK(std::abs(lp[i] - log_prob(m, pts.row(i))) < 1e-12);
    for (std::size_t k = 0; k < 7; ++k) CHECK(std::abs(joint(i, k) - log_joint(m, pts.row(i), k)) < 1e-12);
  }
}

TEST_CASE("log_prob_backward matches finite differences") {
  RngHandle rng(56);
  for (int trial = 0; trial < 10; ++trial) {
    const auto m = test::random_model(rng, 2, 3, {8});
    const Vec x = test::random_vec(rng, 2, -1.5, 1.5);
    const auto [lp, grads] = log_prob_backward(m, x);
    CHECK(lp == doctest::Approx(log_prob(m, x)).epsilon(1e-14));
    auto f = [&](const std::vector<double>& theta) {
      CwmModel c = m;
      unpack_parameters(c, theta);
      return log_prob(c, x);
    };
    CHECK(test::max_rel_err(pack_gradients(grads), test::central_diff(f, pack_parameters(m))) < 1e-4);
  }
}

TEST_CASE("constant classifier gradients equal the GMM score") {
  RngHandle rng(57);
  const Vec pis{0.3, 0.7};
  auto comps = test::random_components(rng, 2, 2);
  const auto m = constant_model(rng, pis, comps);
  for (int i = 0; i < 20; ++i) {
    const Vec x = test::random_vec(rng, 2, -2.0, 2.0);
    const auto [lp, g] = log_prob_backward(m, x);
    const Vec r = responsibilities(m, x);
    for (std::size_t k = 0; k < 2; ++k) {
      const auto cg = component_logpdf_grad(comps[k], x);
      for (std::size_t j = 0; j < 2; ++j) {
        CHECK(std::abs(g.d_mu[k][j] - r[k] * cg.d_mu[j]) < 1e-10);
        CHECK(std::abs(g.d_log_var[k][j] - r[k] * cg.d_log_var[j]) < 1e-10);
      }
    }
    // Last-layer bias gradient is r - pi, which is generally nonzero.
    const auto& bias = g.classifier.layers.back().bias;
    CHECK(std::abs(bias[0] - (r[0] - pis[0])) < 1e-12);
    CHECK(bias[0] + bias[1] == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("single component has zero classifier gradients") {
  RngHandle rng(58);
  const auto m = test::random_model(rng, 2, 1, {8});
  const auto [lp, g] = log_prob_backward(m, Vec{0.3, 0.1});
  for (const auto& L : g.classifier.layers) {
    for (double v : L.weights) CHECK(v == 0.0);
    for (double v : L.bias) CHECK(v == 0.0);
  }
}

TEST_CASE("accumulate_grad sums weighted per-point gradients") {
  RngHandle rng(59);
  const auto m = test::random_model(rng, 2, 4, {8});
  const std::size_t n = 300;
  Matrix pts(n, 2);
  for (double& v : pts.data) v = test::uniform_in(rng, -2.0, 2.0);
  std::vector<double> w(n);
  for (double& v : w) v = test::uniform_in(rng, -1.0, 1.0);
  CwmGrads batched(m);
  CwmEvaluator ev(50);
  std::vector<double> lp(n);
  ev.accumulate_grad(m, pts.data.data(), n, w, batched, lp);
  CwmGrads summed(m);
  for (std::size_t i = 0; i < n; ++i) {
    auto [l, g] = log_prob_backward(m, pts.row(i));
    CHECK(std::abs(l - lp[i]) < 1e-12);
    g.scale(w[i]);
    summed += g;
  }
  const auto a = pack_gradients(batched), b = pack_gradients(summed);
  for (std::size_t j = 0; j < a.size(); ++j) CHECK(std::abs(a[j] - b[j]) < 1e-11 * std::max(1.0, std::abs(b[j])));
}

TEST_CASE("pack and unpack are inverse") {
  RngHandle rng(60);
  auto m = test::random_model(rng, 3, 4, {5});
  const auto theta = pack_parameters(m);
  CHECK(theta.size() == 5 * 3 + 5 + 5 * 4 + 4 + 2 * 3 * 4);
  CwmModel copy = test::random_model(rng, 3, 4, {5});
  unpack_parameters(copy, theta);
  CHECK(pack_parameters(copy) == theta);
  CHECK(theta[0] == m.components()[0].mu()[0]);
  CHECK(theta[3] == m.components()[0].log_var()[0]);
  CHECK_THROWS_AS(unpack_parameters(copy, std::vector<double>(3, 0.0)), ContractError);
}

TEST_CASE("trained-looking model integrates to one") {
  RngHandle rng(61);
  auto m = test::random_model(rng, 2, 6, {16});
  for (auto& c : m.components()) {
    for (double& v : c.mu()) v = test::uniform_in(rng, 0.2, 0.8);
    for (double& v : c.log_var()) v = test::uniform_in(rng, -5.0, -3.0);
  }
  const double mass = test::trapezoid_mass(m, test::covering_box(m, 8.0), 400);
  CHECK(mass >= 0.99);
  CHECK(mass <= 1.01);
}

TEST_CASE("far-tail points give finite or -inf log densities, never NaN") {
  RngHandle rng(62);
  const auto m = test::random_model(rng, 2, 3);
  const double lp = log_prob(m, Vec{1e6, -1e6});
  CHECK(!std::isnan(lp));
  CHECK(lp < -1e10);
}

TEST_CASE("sampling: single component is Gaussian") {
  RngHandle rng(63);
  const auto m = test::random_model(rng, 2, 1);
  const std::size_t n = 100000;
  RngHandle srng(7);
  const auto traces = sample(m, srng, n);
  Vec mean(2, 0.0);
  for (const auto& t : traces) {
    CHECK(t.r == 0);
    const Vec x = inverse_T(m.components()[0], t.z);
    REQUIRE(x == t.x);
    for (std::size_t j = 0; j < 2; ++j) mean[j] += t.x[j] / n;
  }
  for (std::size_t j = 0; j < 2; ++j) {
    const double sd = std::exp(0.5 * m.components()[0].log_var()[j]);
    CHECK(std::abs(mean[j] - m.components()[0].mu()[j]) < 4.0 * sd / std::sqrt(static_cast<double>(n)));
  }
}

TEST_CASE("sampling: constant classifier picks components with frequencies pi") {
  RngHandle rng(64);
  const Vec pis{0.1, 0.6, 0.3};
  const auto m = constant_model(rng, pis, test::random_components(rng, 2, 3));
  RngHandle srng(8);
  const std::size_t n = 100000;
  std::vector<double> counts(3, 0.0);
  for (const auto& t : sample(m, srng, n)) counts[t.r] += 1.0;
  for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(counts[k] - n * pis[k]) < 3.0 * std::sqrt(n * pis[k] * (1 - pis[k])));
  CHECK(srng.categorical_draws() == n);
}

TEST_CASE("sampling: histogram agrees with quadrature of the density") {
  RngHandle rng(65);
  auto m = test::random_model(rng, 2, 4, {16});
  for (auto& c : m.components()) {
    for (double& v : c.mu()) v = test::uniform_in(rng, 0.3, 0.7);
    for (double& v : c.log_var()) v = test::uniform_in(rng, -4.0, -2.5);
  }
  const std::size_t n = 100000, cells = 20, sub = 10;
  const test::Box2 box{0.0, 1.0, 0.0, 1.0};
  const double hx = (box.x1 - box.x0) / cells, hy = (box.y1 - box.y0) / cells;
  // Cell masses by midpoint rule on a sub-grid.
  Matrix pts(cells * cells * sub * sub, 2);
  std::size_t p = 0;
  for (std::size_t cy = 0; cy < cells; ++cy)
    for (std::size_t cx = 0; cx < cells; ++cx)
      for (std::size_t sy = 0; sy < sub; ++sy)
        for (std::size_t sx = 0; sx < sub; ++sx, ++p) {
          pts(p, 0) = box.x0 + (cx + (sx + 0.5) / sub) * hx;
          pts(p, 1) = box.y0 + (cy + (sy + 0.5) / sub) * hy;
        }
  std::vector<double> lp(pts.rows);
  CwmEvaluator().log_prob(m, pts, lp);
  std::vector<double> expected(cells * cells + 1, 0.0);
  double inside = 0.0;
  for (std::size_t i = 0; i < lp.size(); ++i) {
    const double mass = std::exp(lp[i]) * hx * hy / (sub * sub);
    expected[i / (sub * sub)] += mass;
    inside += mass;
  }
  expected.back() = std::max(0.0, 1.0 - inside);
  for (double& e : expected) e *= n;

  std::vector<double> observed(cells * cells + 1, 0.0);
  RngHandle srng(9);
  for (const auto& t : sample(m, srng, n)) {
    const double x = t.x[0], y = t.x[1];
    if (x < box.x0 || x >= box.x1 || y < box.y0 || y >= box.y1) {
      observed.back() += 1.0;
    } else {
      observed[static_cast<std::size_t>((y - box.y0) / hy) * cells + static_cast<std::size_t>((x - box.x0) / hx)] += 1.0;
    }
  }
  const auto [stat, dof] = test::pearson(observed, expected);
  CHECK(stat < test::chi2_quantile(dof, 0.999));
}

TEST_CASE("model contracts") {
  RngHandle rng(66);
  auto comps = test::random_components(rng, 2, 3);
  CHECK_THROWS_AS(CwmModel(comps, MlpClassifier({2, 4})), ContractError);
  CHECK_THROWS_AS(CwmModel(comps, MlpClassifier({3, 3})), ContractError);
  comps.push_back(DiagGaussianComponent(Vec{0.0}, Vec{0.0}));
  CHECK_THROWS_AS(CwmModel(comps, MlpClassifier({2, 4})), ContractError);
  const auto m = test::random_model(rng, 2, 3);
  CHECK_THROWS_AS(log_prob(m, Vec{1.0}), ContractError);
  CHECK_THROWS_AS(log_joint(m, Vec{1.0, 1.0}, 3), ContractError);
}
