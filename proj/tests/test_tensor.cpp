#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "aura/error.hpp"
#include "aura/rng.hpp"
#include "aura/tensor.hpp"

using namespace aura;

namespace {

Tensor random_matrix(std::size_t m, std::size_t n, Rng& rng) {
  Tensor t({m, n});
  for (auto& v : t.data()) v = rng.normal();
  return t;
}

// Independent reference: textbook i-j-k triple loop.
Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor c({a.dim(0), b.dim(1)});
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < b.dim(1); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.dim(1); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

}  // namespace

TEST_CASE("matmul of identities is identity") {
  const Tensor eye = Tensor::matrix({{1, 0}, {0, 1}});
  CHECK(matmul(eye, eye) == eye);
}

TEST_CASE("matmul hand-checked 2x2 by 2x1") {
  const Tensor c = matmul(Tensor::matrix({{1, 2}, {3, 4}}), Tensor::matrix({{0}, {1}}));
  CHECK(c == Tensor::matrix({{2}, {4}}));
}

TEST_CASE("matmul equals the triple-loop oracle exactly") {
  Rng rng(0);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a = random_matrix(7, 5, rng);
    const Tensor b = random_matrix(5, 3, rng);
    CHECK(matmul(a, b) == naive_matmul(a, b));
  }
}

TEST_CASE("transposed matmul variants agree with explicit transposes") {
  Rng rng(3);
  const Tensor a = random_matrix(4, 6, rng);
  const Tensor b = random_matrix(5, 6, rng);
  CHECK(matmul_nt(a, b) == naive_matmul(a, transpose(b)));
  const Tensor c = random_matrix(4, 3, rng);
  const Tensor tn = matmul_tn(a, c);
  const Tensor ref = naive_matmul(transpose(a), c);
  for (std::size_t i = 0; i < tn.size(); ++i) CHECK(tn[i] == Catch::Approx(ref[i]).epsilon(1e-14));
}

TEST_CASE("matmul rejects mismatched shapes naming both") {
  try {
    matmul(Tensor({2, 3}), Tensor({2, 3}));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("softmax_rows examples") {
  SECTION("uniform row") {
    const Tensor y = softmax_rows(Tensor::matrix({{0, 0, 0}}));
    for (double v : y.data()) CHECK(v == Catch::Approx(1.0 / 3.0).margin(1e-15));
  }
  SECTION("large logits do not overflow") {
    const Tensor y = softmax_rows(Tensor::matrix({{1000, 0}}));
    CHECK(std::abs(y[0] - 1.0) < 1e-12);
    CHECK(std::abs(y[1]) < 1e-12);
  }
  SECTION("matches long double oracle") {
    const Tensor y = softmax_rows(Tensor::matrix({{1, 2, 3}}));
    long double z = 0;
    for (int k = 1; k <= 3; ++k) z += std::exp(static_cast<long double>(k));
    for (int k = 1; k <= 3; ++k) {
      const long double ref = std::exp(static_cast<long double>(k)) / z;
      CHECK(std::abs(static_cast<long double>(y[k - 1]) - ref) < 1e-15L);
    }
  }
}

TEST_CASE("softmax_rows rows sum to one on random inputs") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    Tensor x = random_matrix(3, 1 + rng.below(40), rng);
    for (auto& v : x.data()) v *= 50.0;
    const Tensor y = softmax_rows(x);
    for (std::size_t i = 0; i < y.dim(0); ++i) {
      double s = 0.0;
      for (double v : y.row(i)) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        s += v;
      }
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("l2_normalize yields unit norm and rejects zero") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    Tensor x({1 + static_cast<std::size_t>(rng.below(600))});
    const double mag = std::pow(10.0, rng.uniform(-6, 6));
    for (auto& v : x.data()) v = mag * rng.normal();
    CHECK(std::abs(l2_norm(l2_normalize(x).data()) - 1.0) <= 1e-9);
  }
  CHECK_THROWS_AS(l2_normalize(Tensor({4}, 0.0)), NumericError);
}

TEST_CASE("tensor construction validates shape") {
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor({0, 2}), DimensionError);
  const Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
}
