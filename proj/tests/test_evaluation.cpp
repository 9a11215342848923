#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "aura/error.hpp"
#include "aura/evaluation.hpp"
#include "aura/log.hpp"
#include "aura/synthetic.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"
#include "support/tiny.hpp"

using namespace aura;
using namespace aura::testing;

namespace {

Tensor unit_rows(std::size_t n, std::size_t d, Rng& rng) { return l2_normalize_rows(random_tensor({n, d}, rng)); }

Tensor random_rotation_applied(const Tensor& x, Rng& rng) {
  // Orthogonal matrix via Gram-Schmidt on a Gaussian draw.
  const std::size_t d = x.dim(1);
  Tensor q = random_tensor({d, d}, rng);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      const double p = dot(q.row(i), q.row(j));
      for (std::size_t k = 0; k < d; ++k) q(i, k) -= p * q(j, k);
    }
    const double n = l2_norm(q.row(i));
    for (std::size_t k = 0; k < d; ++k) q(i, k) /= n;
  }
  return matmul(x, q);
}

/// Gaussian blobs around well separated class centres.
struct Blobs {
  Tensor x;
  std::vector<std::size_t> y;
};

Blobs blobs(std::size_t per_class, std::size_t classes, std::size_t d, double spread, Rng& rng) {
  Tensor centres = random_tensor({classes, d}, rng);
  Blobs b{Tensor({per_class * classes, d}), {}};
  for (std::size_t i = 0; i < per_class * classes; ++i) {
    const std::size_t c = i % classes;
    b.y.push_back(c);
    for (std::size_t k = 0; k < d; ++k) b.x(i, k) = 3.0 * centres(c, k) + spread * rng.normal();
  }
  return b;
}

std::vector<std::string> class_names(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t c = 0; c < n; ++c) out.push_back("c" + std::to_string(c));
  return out;
}

}  // namespace

TEST_CASE("retrieval ranks agree with a brute-force sort") {
  Rng rng(3);
  for (std::size_t n : {1u, 2u, 7u, 64u, 300u, 1000u}) {
    const Tensor q = unit_rows(n, 16, rng);
    const Tensor k = unit_rows(n, 16, rng);
    CHECK(true_key_ranks(q, k) == oracle::brute_force_ranks(q, k).ranks);
  }
  // Heavy ties: quantized scores.
  Tensor q({50, 2}), k({50, 2});
  for (std::size_t i = 0; i < 50; ++i) {
    q(i, 0) = static_cast<double>(rng.below(3));
    k(i, 0) = static_cast<double>(rng.below(3));
  }
  CHECK(true_key_ranks(q, k) == oracle::brute_force_ranks(q, k).ranks);
}

TEST_CASE("identical queries and keys retrieve perfectly") {
  Rng rng(4);
  const Tensor e = unit_rows(200, 32, rng);
  const auto r = retrieve(e, e, {1, 10, 50}, "a->a");
  CHECK(r.r_at.at(1) == 1.0);
  CHECK(r.r_at.at(10) == 1.0);
  CHECK(r.mrr == 1.0);
  CHECK(r.n_queries == 200);
}

TEST_CASE("true key at rank three gives reciprocal rank one third") {
  // Query 0 scores keys 1 and 2 above its own key 0.
  const Tensor q = Tensor::matrix({{1.0, 0.0}, {0.0, 1.0}, {0.0, 1.0}});
  const Tensor k = Tensor::matrix({{0.1, 0.0}, {0.9, 0.0}, {0.5, 1.0}});
  const auto ranks = true_key_ranks(q, k);
  CHECK(ranks[0] == 3);
  const auto r = retrieve(q.reshaped({3, 2}), k, {1, 2, 3});
  CHECK(r.r_at.at(3) == 1.0);
  const double expected = (1.0 / 3 + 1.0 / ranks[1] + 1.0 / ranks[2]) / 3;
  CHECK(r.mrr == Catch::Approx(expected).epsilon(1e-15));
  const auto single = retrieve(Tensor::matrix({{1.0, 0.0}}), Tensor::matrix({{0.1, 0.0}}), {1});
  CHECK(single.mrr == 1.0);
}

TEST_CASE("random embeddings retrieve at chance") {
  const std::size_t N = 240;
  double harmonic = 0.0;
  for (std::size_t i = 1; i <= N; ++i) harmonic += 1.0 / static_cast<double>(i);
  double mrr = 0.0, r1 = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const auto r = retrieve(unit_rows(N, 64, rng), unit_rows(N, 64, rng), {1, 10});
    mrr += r.mrr / 100;
    r1 += r.r_at.at(1) / 100;
  }
  CHECK(std::abs(mrr - harmonic / N) < 0.01);
  CHECK(std::abs(r1 - 1.0 / N) < 0.01);
}

TEST_CASE("retrieval is invariant to a shared rotation and recall is monotone in k") {
  Rng rng(9);
  const Tensor q = unit_rows(120, 12, rng);
  Tensor k = unit_rows(120, 12, rng);
  axpy(k, q, 2.0);  // correlated so ranks are informative
  k = l2_normalize_rows(k);
  const auto base = retrieve(q, k, {1, 5, 10, 50, 100});
  Rng rot(10);
  const std::size_t d = q.dim(1);
  Tensor both({240, d});
  for (std::size_t i = 0; i < 120; ++i) {
    std::copy(q.row(i).begin(), q.row(i).end(), both.row(i).begin());
    std::copy(k.row(i).begin(), k.row(i).end(), both.row(120 + i).begin());
  }
  const Tensor turned = random_rotation_applied(both, rot);
  Tensor q2({120, d}), k2({120, d});
  for (std::size_t i = 0; i < 120; ++i) {
    std::copy(turned.row(i).begin(), turned.row(i).end(), q2.row(i).begin());
    std::copy(turned.row(120 + i).begin(), turned.row(120 + i).end(), k2.row(i).begin());
  }
  const auto rotated = retrieve(q2, k2, {1, 5, 10, 50, 100});
  CHECK(rotated.mrr == Catch::Approx(base.mrr).epsilon(1e-9));
  double prev = 0.0;
  for (const auto& [kk, v] : base.r_at) {
    CHECK(v >= prev);
    prev = v;
  }
  CHECK(base.r_at.at(1) > 0.5);
}

TEST_CASE("k beyond the key count is clamped with a warning") {
  Rng rng(5);
  const Tensor e = unit_rows(20, 4, rng);
  log::ScopedWarningCapture warnings;
  const auto r = retrieve(e, unit_rows(20, 4, rng), {1, 50});
  CHECK(r.r_at.at(50) == 1.0);
  REQUIRE(warnings.messages().size() == 1);
  CHECK(warnings.messages()[0].find("k=50") != std::string::npos);
}

TEST_CASE("retrieval input errors") {
  CHECK_THROWS_AS(retrieve(Tensor({3, 4}), Tensor({2, 4})), DimensionError);
  CHECK_THROWS_AS(retrieve(Tensor({2, 2}), Tensor({2, 2}), {0}), ConfigError);
}

TEST_CASE("top-k listing orders by score") {
  const Tensor q = Tensor::matrix({{1.0, 0.0}});
  const Tensor k = Tensor::matrix({{0.2, 0.0}, {0.9, 0.0}, {0.5, 0.0}, {0.9, 0.0}});
  CHECK(top_k(q, k, 3)[0] == std::vector<std::size_t>{1, 3, 2});
  const std::string text = format_top_k(q, k, 2, {"q"}, {"a", "b", "c", "d"});
  CHECK(text == "q: b(0.900000) d(0.900000)\n");
}

TEST_CASE("zero-shot picks the closest label and breaks ties lexicographically") {
  std::map<std::string, Tensor> labels;
  for (std::size_t i = 0; i < ego_exo_labels().size(); ++i) {
    Tensor e({8});
    e[i] = 1.0;
    labels[ego_exo_labels()[i]] = e;
  }
  for (std::size_t i = 0; i < ego_exo_labels().size(); ++i) {
    Tensor q({8});
    q[i] = 1.0;
    CHECK(zero_shot_classify(q, labels) == ego_exo_labels()[i]);
  }
  const std::map<std::string, Tensor> tie{{"walk", Tensor({2}, {1.0, 0.0})}, {"run", Tensor({2}, {1.0, 0.0})}};
  CHECK(zero_shot_classify(Tensor({2}, {1.0, 0.0}), tie) == "run");
  CHECK_THROWS_AS(zero_shot_classify(Tensor({2}), {}), InsufficientDataError);
  CHECK_THROWS_AS(zero_shot_classify(Tensor({3}), tie), DimensionError);
}

TEST_CASE("zero-shot report over embeddings") {
  const auto names = class_names(3);
  std::map<std::string, Tensor> labels;
  for (std::size_t c = 0; c < 3; ++c) {
    Tensor e({3});
    e[c] = 1.0;
    labels[names[c]] = e;
  }
  const Tensor emb = Tensor::matrix({{0.9, 0.1, 0.0}, {0.0, 1.0, 0.2}, {0.1, 0.0, 0.8}, {0.7, 0.2, 0.1}});
  const std::vector<std::size_t> truth{0, 1, 2, 2};
  const auto r = zero_shot_report(emb, truth, names, labels);
  CHECK(r.predictions == std::vector<std::size_t>{0, 1, 2, 0});
  CHECK(r.accuracy == 0.75);
  CHECK(r.macro_f1 == Catch::Approx(oracle::confusion_macro_f1(r.predictions, truth, 3)));
}

TEST_CASE("macro F1 reference cases") {
  const std::vector<std::size_t> truth{0, 1, 2, 3, 0, 1, 2, 3};
  CHECK(macro_f1(truth, truth, 4) == 1.0);
  // Binary: one class perfectly recalled with half precision, the other missed.
  const std::vector<std::size_t> bin_truth{0, 1};
  const std::vector<std::size_t> bin_pred{0, 0};
  CHECK(macro_f1(bin_pred, bin_truth, 2) == Catch::Approx(1.0 / 3));
  const std::vector<std::size_t> swapped{1, 0};
  CHECK(macro_f1(swapped, bin_truth, 2) == 0.0);
  const std::vector<std::size_t> half_pred{0, 1, 1, 0};
  const std::vector<std::size_t> half_truth{0, 1, 0, 1};
  CHECK(macro_f1(half_pred, half_truth, 2) == Catch::Approx(0.5));
  // Eight balanced classes all predicted as class 0.
  std::vector<std::size_t> eight_truth, eight_pred;
  for (std::size_t i = 0; i < 64; ++i) {
    eight_truth.push_back(i % 8);
    eight_pred.push_back(0);
  }
  CHECK(macro_f1(eight_pred, eight_truth, 8) == Catch::Approx(oracle::confusion_macro_f1(eight_pred, eight_truth, 8)));
  CHECK(macro_f1(eight_pred, eight_truth, 8) == Catch::Approx((2.0 * 8 / (2 * 8 + 56)) / 8));
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::size_t> p, t;
    const std::size_t classes = 2 + rng.below(7);
    for (std::size_t i = 0; i < 1 + rng.below(60); ++i) {
      p.push_back(rng.below(classes));
      t.push_back(rng.below(classes));
    }
    CHECK(macro_f1(p, t, classes) == Catch::Approx(oracle::confusion_macro_f1(p, t, classes)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(macro_f1(std::vector<std::size_t>{0}, truth, 4), DimensionError);
}

TEST_CASE("linear probe separates separable data") {
  Rng rng(11);
  const Blobs train = blobs(40, 4, 16, 0.3, rng);
  const auto names = class_names(4);
  const auto fit = linear_probe(train.x, train.y, train.x, train.y, names, {300, 1e-2, 0});
  CHECK(fit.accuracy >= 0.99);
  CHECK(fit.macro_f1 >= 0.99);
}

TEST_CASE("linear probe on shuffled labels stays near chance on held-out data") {
  Rng rng(12);
  const Blobs data = blobs(50, 4, 16, 0.5, rng);
  std::vector<std::size_t> shuffled = data.y;
  rng.shuffle(shuffled);
  Tensor train_x({100, 16}), test_x({100, 16});
  for (std::size_t i = 0; i < 100; ++i) {
    std::copy(data.x.row(i).begin(), data.x.row(i).end(), train_x.row(i).begin());
    std::copy(data.x.row(100 + i).begin(), data.x.row(100 + i).end(), test_x.row(i).begin());
  }
  const std::vector<std::size_t> train_y(shuffled.begin(), shuffled.begin() + 100);
  const std::vector<std::size_t> test_y(shuffled.begin() + 100, shuffled.end());
  const auto names = class_names(4);
  const auto held_out = linear_probe(train_x, train_y, test_x, test_y, names);
  CHECK(std::abs(held_out.accuracy - 0.25) <= 0.1);
  const auto memorized = linear_probe(train_x, train_y, train_x, train_y, names);
  CHECK(memorized.accuracy >= held_out.accuracy);
}

TEST_CASE("linear probe warns about classes missing from training") {
  Rng rng(13);
  const Blobs b = blobs(10, 3, 4, 0.2, rng);
  log::ScopedWarningCapture warnings;
  const auto head = train_linear_head(b.x, b.y, 4, {5, 1e-2, 0});
  REQUIRE(warnings.messages().size() == 1);
  CHECK(warnings.messages()[0].find("class 3") != std::string::npos);
  CHECK(head.w.shape() == Shape{4, 4});
  CHECK_THROWS_AS(train_linear_head(b.x, std::vector<std::size_t>{0}, 4, {}), DimensionError);
}

TEST_CASE("linear probe on raw synthetic motion beats chance") {
  SyntheticSpec spec;
  spec.pairs_per_class = 24;
  spec.embedding_dim = 16;
  const Dataset ds = gen_synthetic(spec);
  std::map<std::string, std::size_t> index;
  for (std::size_t c = 0; c < ds.labels.size(); ++c) index[ds.labels[c]] = c;
  auto flatten = [&](Split s, std::vector<std::size_t>& y) {
    const auto recs = ds.split(s);
    // Every 10th sample keeps the probe small without losing the rhythm.
    Tensor x({recs.size(), 600});
    for (std::size_t i = 0; i < recs.size(); ++i) {
      const Tensor& w = *recs[i]->imu;
      for (std::size_t c = 0; c < 6; ++c)
        for (std::size_t t = 0; t < 100; ++t) x(i, c * 100 + t) = w(c, 10 * t) / 10.0;
      y.push_back(index.at(*recs[i]->label));
    }
    return x;
  };
  std::vector<std::size_t> ytr, yte;
  const Tensor xtr = flatten(Split::train, ytr);
  const Tensor xte = flatten(Split::test, yte);
  const auto r = linear_probe(xtr, ytr, xte, yte, ds.labels);
  CHECK(r.accuracy > 1.0 / 8 + 0.1);
}

TEST_CASE("finetuning with zero epochs equals the untrained head") {
  const auto cfg = tiny_transformer(Modality::imu);
  const EncoderParams enc = init_params(cfg, 3);
  Rng rng(14);
  std::vector<Tensor> windows;
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < 6; ++i) {
    windows.push_back(random_window(Modality::imu, rng));
    labels.push_back(i % 3);
  }
  FinetuneConfig fc;
  fc.epochs = 0;
  fc.seed = 21;
  const auto r = finetune_classify(enc, windows, labels, windows, labels, class_names(3), fc);
  const LinearHead head = LinearHead::init(cfg.out_dim, 3, 21);
  const Tensor emb = embed_all(enc, windows);
  for (std::size_t i = 0; i < windows.size(); ++i) CHECK(r.report.predictions[i] == head.predict(emb.row(i)));
  CHECK(r.encoder.checksum() == enc.checksum());
}

TEST_CASE("finetuning learns a trivially separable task and is thread-count invariant") {
  const auto cfg = tiny_transformer(Modality::imu);
  Rng rng(15);
  std::vector<Tensor> windows;
  std::vector<std::size_t> labels;
  for (std::size_t i = 0; i < 12; ++i) {
    Tensor w = random_window(Modality::imu, rng);
    const double shift = i % 2 ? 2.0 : -2.0;
    for (std::size_t t = 0; t < 1000; ++t) w(0, t) += shift;
    windows.push_back(w);
    labels.push_back(i % 2);
  }
  FinetuneConfig fc;
  fc.epochs = 40;
  fc.batch_size = 5;  // leaves a partial batch
  fc.lr = 1e-2;
  const auto one = finetune_classify(init_params(cfg, 1), windows, labels, windows, labels, class_names(2), fc);
  CHECK(one.report.accuracy == 1.0);
  fc.threads = 3;
  const auto three = finetune_classify(init_params(cfg, 1), windows, labels, windows, labels, class_names(2), fc);
  CHECK(three.encoder.checksum() == one.encoder.checksum());
  CHECK(three.head.w == one.head.w);
}

TEST_CASE("report formatting") {
  RetrievalReport r;
  r.direction = "imu->mocap";
  r.n_queries = 4;
  r.r_at = {{1, 0.25}, {10, 1.0}};
  r.mrr = 0.5;
  CHECK(format_retrieval(r) == "direction=imu->mocap\nn_queries=4\nr@1=0.250000\nr@10=1.000000\nmrr=0.500000\n");
  CHECK(retrieval_table({r}) == "direction\tn_queries\tr@1\tr@10\tmrr\nimu->mocap\t4\t0.250000\t1.000000\t0.500000\n");
  HarReport h;
  h.regime = Regime::transfer;
  h.n = 2;
  h.macro_f1 = 0.5;
  h.accuracy = 0.5;
  CHECK(har_table({{"rnn", h}}) == "encoder\tregime\tn\tmacro_f1\taccuracy\nrnn\ttransfer\t2\t0.500000\t0.500000\n");
  CHECK(format_har(h, "rnn").find("regime=transfer\n") != std::string::npos);
}
