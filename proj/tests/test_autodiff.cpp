#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "aura/autodiff.hpp"
#include "aura/error.hpp"
#include "support/gradcheck.hpp"

using namespace aura;
using aura::testing::check_gradients;
using aura::testing::random_tensor;

namespace {

// Reduces an arbitrary-shaped Var to a scalar with a fixed random weighting
// so every output element influences the objective differently.
Var weighted_sum(Var y, std::uint64_t seed) {
  Rng rng(seed);
  Tensor w(y.shape());
  for (auto& v : w.data()) v = rng.normal();
  Var wv = y.tape()->constant(std::move(w));
  return ad::sum(ad::mul(y, wv));
}

void expect_gradients_match(const Objective& f, std::vector<Tensor> params) {
  const auto r = check_gradients(f, std::move(params));
  INFO("worst param " << r.worst_param << " index " << r.worst_index << " analytic "
                      << r.worst_analytic << " numeric " << r.worst_numeric);
  CHECK(r.max_rel_error < 1e-4);
}

}  // namespace

TEST_CASE("gradient of a quadratic is analytic") {
  const auto r = gradient(
      [](Tape&, std::span<const Var> p) { return ad::sum(ad::mul(p[0], p[0])); },
      std::vector<Tensor>{Tensor({1}, 3.0)});
  CHECK(r.value == 9.0);
  CHECK(r.grads[0][0] == 6.0);
}

TEST_CASE("constant objective has zero gradient") {
  const auto r = gradient(
      [](Tape& t, std::span<const Var>) { return t.constant(Tensor({1}, 4.0)); },
      std::vector<Tensor>{Tensor({3}, 1.0)});
  for (double g : r.grads[0].data()) CHECK(g == 0.0);
}

TEST_CASE("backward on a non-scalar objective is a contract error") {
  Tape t;
  const Tensor p({3}, 1.0);
  Var x = t.parameter(p);
  CHECK_THROWS_AS(t.backward(ad::affine(x, 2.0)), ContractError);
}

TEST_CASE("finite differences agree for every primitive") {
  Rng rng(42);
  SECTION("matmul and matmul_nt") {
    expect_gradients_match(
        [](Tape&, std::span<const Var> p) {
          return weighted_sum(ad::add(ad::matmul(p[0], p[1]), ad::matmul_nt(p[0], p[2])), 1);
        },
        {random_tensor({3, 4}, rng), random_tensor({4, 5}, rng), random_tensor({5, 4}, rng)});
  }
  SECTION("transpose, sub, affine") {
    expect_gradients_match(
        [](Tape&, std::span<const Var> p) {
          return weighted_sum(ad::sub(ad::transpose(p[0]), ad::affine(p[1], -1.5, 0.3)), 2);
        },
        {random_tensor({3, 2}, rng), random_tensor({2, 3}, rng)});
  }
  SECTION("add_row and add_col") {
    expect_gradients_match(
        [](Tape&, std::span<const Var> p) {
          return weighted_sum(ad::add_col(ad::add_row(p[0], p[1]), p[2]), 3);
        },
        {random_tensor({3, 4}, rng), random_tensor({4}, rng), random_tensor({3}, rng)});
  }
  SECTION("softmax_rows and log_softmax_rows") {
    expect_gradients_match(
        [](Tape&, std::span<const Var> p) {
          return ad::add(weighted_sum(ad::softmax_rows(p[0]), 4),
                         weighted_sum(ad::log_softmax_rows(p[0]), 5));
        },
        {random_tensor({3, 6}, rng, 2.0)});
  }
  SECTION("layer_norm") {
    expect_gradients_match(
        [](Tape&, std::span<const Var> p) {
          return weighted_sum(ad::layer_norm(p[0], p[1], p[2]), 6);
        },
        {random_tensor({4, 7}, rng), random_tensor({7}, rng), random_tensor({7}, rng)});
  }
  SECTION("group_norm") {
    expect_gradients_match(
        [](Tape&, std::span<const Var> p) {
          return weighted_sum(ad::group_norm(p[0], p[1], p[2], 2), 7);
        },
        {random_tensor({4, 5}, rng), random_tensor({4}, rng), random_tensor({4}, rng)});
  }
  SECTION("pointwise nonlinearities") {
    expect_gradients_match(
        [](Tape&, std::span<const Var> p) {
          Var a = weighted_sum(ad::gelu(p[0]), 8);
          Var b = weighted_sum(ad::tanh(p[0]), 9);
          Var c = weighted_sum(ad::sigmoid(p[0]), 10);
          Var d = weighted_sum(ad::log(ad::affine(ad::mul(p[0], p[0]), 1.0, 0.5)), 11);
          return ad::add(ad::add(a, b), ad::add(c, d));
        },
        {random_tensor({3, 5}, rng, 1.5)});
  }
  SECTION("relu away from the kink") {
    Tensor x({8});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = (i % 2 ? 1.0 : -1.0) * (0.5 + 0.1 * i);
    expect_gradients_match(
        [](Tape&, std::span<const Var> p) { return weighted_sum(ad::relu(p[0]), 12); }, {x});
  }
  SECTION("reductions and pick_mean") {
    expect_gradients_match(
        [](Tape&, std::span<const Var> p) {
          const std::vector<std::size_t> cols{2, 0, 1};
          return ad::add(ad::add(weighted_sum(ad::mean_rows(p[0]), 13), ad::mean(p[0])),
                         ad::pick_mean(p[0], cols));
        },
        {random_tensor({3, 4}, rng)});
  }
  SECTION("l2_normalize and l2_normalize_rows") {
    expect_gradients_match(
        [](Tape&, std::span<const Var> p) {
          return ad::add(weighted_sum(ad::l2_normalize(p[0]), 14),
                         weighted_sum(ad::l2_normalize_rows(p[1]), 15));
        },
        {random_tensor({6}, rng), random_tensor({3, 5}, rng)});
  }
  SECTION("slicing, concatenation, rows, stacking, reshape") {
    expect_gradients_match(
        [](Tape&, std::span<const Var> p) {
          Var a = ad::slice_cols(p[0], 1, 2);
          Var b = ad::slice_cols(p[0], 0, 3);
          const std::vector<Var> parts{a, b};
          Var c = ad::concat_cols(parts);
          const std::vector<Var> rows{ad::row(c, 2), ad::row(c, 0)};
          Var s = ad::stack_rows(rows);
          return weighted_sum(ad::reshape(s, {10}), 16);
        },
        {random_tensor({3, 4}, rng)});
  }
  SECTION("conv1d with stride and padding") {
    expect_gradients_match(
        [](Tape&, std::span<const Var> p) {
          return weighted_sum(ad::conv1d(p[0], p[1], p[2], 2, 2), 17);
        },
        {random_tensor({3, 11}, rng), random_tensor({4, 3, 5}, rng), random_tensor({4}, rng)});
  }
}

TEST_CASE("two-layer MLP with contrastive-style loss matches finite differences") {
  // Rows of X map through a 2-layer MLP; the loss treats the rows of the two
  // halves as diagonal pairs in a softmax cross-entropy over similarities.
  Rng rng(7);
  const Tensor x = random_tensor({6, 5}, rng);
  const std::vector<std::size_t> diag{0, 1, 2};
  const Objective f = [&](Tape& t, std::span<const Var> p) {
    Var h = ad::gelu(ad::add_row(ad::matmul(t.view(x), p[0]), p[1]));
    Var e = ad::l2_normalize_rows(ad::matmul(h, p[2]));
    Var a = ad::stack_rows(std::vector<Var>{ad::row(e, 0), ad::row(e, 1), ad::row(e, 2)});
    Var b = ad::stack_rows(std::vector<Var>{ad::row(e, 3), ad::row(e, 4), ad::row(e, 5)});
    Var s = ad::matmul_nt(a, b);
    Var l1 = ad::pick_mean(ad::log_softmax_rows(s), diag);
    Var l2 = ad::pick_mean(ad::log_softmax_rows(ad::transpose(s)), diag);
    return ad::affine(ad::add(l1, l2), -0.5);
  };
  expect_gradients_match(f, {random_tensor({5, 8}, rng), random_tensor({8}, rng),
                             random_tensor({8, 4}, rng)});
}

TEST_CASE("zero-norm normalization is a numeric error") {
  Tape t;
  const Tensor z({3}, 0.0);
  CHECK_THROWS_AS(ad::l2_normalize(t.view(z)), NumericError);
}

TEST_CASE("parameters that do not influence the objective get zero gradients") {
  const auto r = gradient([](Tape&, std::span<const Var> p) { return ad::sum(p[0]); },
                          std::vector<Tensor>{Tensor({2}, 1.0), Tensor({2}, 1.0)});
  CHECK(r.grads[1] == Tensor({2}, 0.0));
}
