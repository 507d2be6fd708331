#include <doctest.h>

#include <cmath>
#include <limits>

#include "cwm/simd.hpp"
#include "support.hpp"

using namespace cwm;
using simd::Isa;

namespace {

// Naive product in the same argument convention, accumulated in long double.
void reference_gemm(const simd::GemmArgs& g) {
  for (std::size_t i = 0; i < g.m; ++i) {
    for (std::size_t j = 0; j < g.n; ++j) {
      long double s = g.accumulate ? g.c[i * g.ldc + j] : 0.0L;
      for (std::size_t p = 0; p < g.k; ++p) {
        s += static_cast<long double>(g.a[i * g.a_row + p * g.a_col]) * g.b[p * g.ldb + j];
      }
      g.c[i * g.ldc + j] = static_cast<double>(s);
    }
  }
}

std::vector<double> randoms(RngHandle& rng, std::size_t n) { return test::random_vec(rng, n, -1.0, 1.0); }

}  // namespace

TEST_CASE("scalar table is always available and listed first") {
  const auto isas = simd::available();
  REQUIRE(!isas.empty());
  CHECK(isas.front() == Isa::scalar);
  CHECK(simd::table_for(Isa::scalar) != nullptr);
  CHECK(simd::name(Isa::avx512) == "avx512");
}

TEST_CASE("gemm kernels agree with the reference on awkward shapes") {
  RngHandle rng(21);
  const std::size_t sizes[] = {1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 31, 33, 64, 65, 300};
  for (Isa isa : simd::available()) {
    const auto* table = simd::table_for(isa);
    REQUIRE(table != nullptr);
    CAPTURE(table->name);
    for (int trial = 0; trial < 60; ++trial) {
      const std::size_t m = sizes[rng.index(std::size(sizes))];
      const std::size_t n = sizes[rng.index(std::size(sizes))];
      const std::size_t k = sizes[rng.index(std::size(sizes))];
      const bool transposed = rng.uniform() < 0.5;
      const bool accumulate = rng.uniform() < 0.5;
      const std::size_t ldb = n + rng.index(3);
      const std::size_t ldc = n + rng.index(3);
      const auto a = randoms(rng, m * k);
      const auto b = randoms(rng, k * ldb);
      const auto c0 = randoms(rng, m * ldc);
      // Transposed view: A stored k x m, element (i, p) at p * m + i.
      simd::GemmArgs args{m, n, k, a.data(), transposed ? 1 : k, transposed ? m : 1, b.data(), ldb, nullptr, ldc,
                          accumulate};
      auto expect = c0;
      auto got = c0;
      args.c = expect.data();
      reference_gemm(args);
      args.c = got.data();
      table->gemm(args);
      double worst = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          worst = std::max(worst, std::abs(got[i * ldc + j] - expect[i * ldc + j]));
        }
        // Padding columns beyond n are untouched.
        for (std::size_t j = n; j < ldc; ++j) REQUIRE(got[i * ldc + j] == c0[i * ldc + j]);
      }
      CAPTURE(m);
      CAPTURE(n);
      CAPTURE(k);
      CHECK(worst <= 1e-13 * static_cast<double>(k + 1));
    }
  }
}

TEST_CASE("gemm with k = 0 clears or keeps C") {
  for (Isa isa : simd::available()) {
    const auto* table = simd::table_for(isa);
    std::vector<double> c(6, 3.0);
    table->gemm({2, 3, 0, nullptr, 0, 1, nullptr, 3, c.data(), 3, true});
    for (double v : c) CHECK(v == 3.0);
    table->gemm({2, 3, 0, nullptr, 0, 1, nullptr, 3, c.data(), 3, false});
    for (double v : c) CHECK(v == 0.0);
  }
}

TEST_CASE("exp kernels match std::exp across the double range") {
  RngHandle rng(22);
  std::vector<double> in;
  for (int i = 0; i < 20000; ++i) in.push_back(test::uniform_in(rng, -745.0, 709.0));
  for (int i = 0; i < 20000; ++i) in.push_back(test::uniform_in(rng, -5.0, 5.0));
  for (double v : {0.0, -0.0, 1.0, -1.0, 709.0, -708.0, -745.0, -746.0, -800.0, 1e-300, -1e-300}) in.push_back(v);
  in.push_back(-std::numeric_limits<double>::infinity());
  for (std::size_t n : {in.size(), std::size_t{1}, std::size_t{3}, std::size_t{7}, std::size_t{13}}) {
    for (Isa isa : simd::available()) {
      const auto* table = simd::table_for(isa);
      CAPTURE(table->name);
      std::vector<double> out(n);
      table->exp(in.data(), out.data(), n);
      for (std::size_t i = 0; i < n; ++i) {
        const double e = std::exp(in[i]);
        CAPTURE(in[i]);
        if (e < std::numeric_limits<double>::min()) {
          // Subnormal results only need to be tiny and nonnegative.
          CHECK(out[i] >= 0.0);
          CHECK(out[i] <= 1e-300);
        } else {
          CHECK(std::abs(out[i] - e) <= 4e-16 * e);
        }
      }
    }
  }
}

TEST_CASE("tanh kernels match std::tanh") {
  RngHandle rng(23);
  std::vector<double> in;
  for (int i = 0; i < 20000; ++i) in.push_back(test::uniform_in(rng, -3.0, 3.0));
  for (int i = 0; i < 2000; ++i) in.push_back(test::uniform_in(rng, -40.0, 40.0));
  for (double v : {0.0, 0.625, -0.625, 0.6249999999, 22.0, -22.0, 1e-10, -1e-10, 1e3, -1e3}) in.push_back(v);
  for (Isa isa : simd::available()) {
    const auto* table = simd::table_for(isa);
    CAPTURE(table->name);
    std::vector<double> out(in.size());
    table->tanh(in.data(), out.data(), in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
      CAPTURE(in[i]);
      CHECK(std::abs(out[i] - std::tanh(in[i])) <= 8e-16 * std::max(std::abs(std::tanh(in[i])), 1e-300) + 1e-300);
    }
  }
}

TEST_CASE("tanh kernels keep signed zeros and propagate NaN") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const std::vector<double> in{0.0, -0.0, nan, -nan, 1.0};
  for (Isa isa : simd::available()) {
    const auto* table = simd::table_for(isa);
    CAPTURE(table->name);
    std::vector<double> out(in.size());
    table->tanh(in.data(), out.data(), in.size());
    CHECK(out[0] == 0.0);
    CHECK(!std::signbit(out[0]));
    CHECK(out[1] == 0.0);
    CHECK(std::signbit(out[1]));
    CHECK(std::isnan(out[2]));
    CHECK(std::isnan(out[3]));
  }
}

TEST_CASE("select switches the active table") {
  const Isa original = simd::active().isa;
  for (Isa isa : simd::available()) {
    CHECK(simd::select(isa));
    CHECK(simd::active().isa == isa);
  }
  CHECK(simd::select(original));
}
