#include "aura/contrastive.hpp"

#include <cmath>
#include <memory>

#include "aura/error.hpp"

namespace aura {
namespace {

void check_batch(const Tensor& I, const Tensor& M, double temperature) {
  require_rank(I, 2, "contrastive loss");
  require_rank(M, 2, "contrastive loss");
  if (I.shape() != M.shape()) {
    throw DimensionError("contrastive loss: batches " + shape_string(I.shape()) + " and " +
                         shape_string(M.shape()) + " do not pair up");
  }
  if (!(temperature > 0.0)) throw ConfigError("contrastive loss: temperature must be positive");
}

Tensor scaled(Tensor S, double temperature) {
  if (temperature != 1.0) {
    for (auto& v : S.data()) v /= temperature;
  }
  return S;
}

double directional_from(const Tensor& logits) {
  const std::size_t B = logits.dim(0);
  const auto lse = logsumexp_rows(logits);
  double total = 0.0;
  for (std::size_t i = 0; i < B; ++i) total += lse[i] - logits(i, i);
  return total / static_cast<double>(B);
}

}  // namespace

Tensor similarity_matrix(const Tensor& I, const Tensor& M) {
  require_rank(I, 2, "similarity_matrix");
  require_rank(M, 2, "similarity_matrix");
  if (I.dim(1) != M.dim(1)) {
    throw DimensionError("similarity_matrix: embedding widths differ, " + shape_string(I.shape()) + " vs " +
                         shape_string(M.shape()));
  }
  return matmul_nt(I, M);
}

double loss_directional(const Tensor& I, const Tensor& M, double temperature) {
  // Tensor forbids zero dims, so an empty batch can only arrive as an empty tensor.
  if (I.empty() || M.empty()) throw InsufficientDataError("contrastive loss: empty batch");
  check_batch(I, M, temperature);
  return directional_from(scaled(similarity_matrix(I, M), temperature));
}

double loss_symmetric(const Tensor& I, const Tensor& M, double temperature) {
  return 0.5 * (loss_directional(I, M, temperature) + loss_directional(M, I, temperature));
}

LossGrad loss_grad(const Tensor& I, const Tensor& M, double temperature) {
  if (I.empty() || M.empty()) throw InsufficientDataError("contrastive loss: empty batch");
  check_batch(I, M, temperature);
  const std::size_t B = I.dim(0);
  const Tensor logits = scaled(similarity_matrix(I, M), temperature);
  const Tensor logits_t = scaled(similarity_matrix(M, I), temperature);
  LossGrad out;
  out.loss = 0.5 * (directional_from(logits) + directional_from(logits_t));
  // dL/dS = [(P − Id) + (Q − Id)ᵀ] / (2Bτ), with P, Q the row softmaxes of
  // S/τ and Sᵀ/τ.
  const Tensor P = softmax_rows(logits);
  const Tensor Q = softmax_rows(logits_t);
  const double c = 1.0 / (2.0 * static_cast<double>(B) * temperature);
  Tensor G({B, B});
  for (std::size_t i = 0; i < B; ++i) {
    for (std::size_t k = 0; k < B; ++k) {
      const double id = i == k ? 1.0 : 0.0;
      G(i, k) = c * ((P(i, k) - id) + (Q(k, i) - id));
    }
  }
  out.dI = matmul(G, M);
  out.dM = matmul_tn(G, I);
  return out;
}

namespace ad {

Var info_nce(Var I, Var M, double temperature) {
  LossGrad lg = loss_grad(I.value(), M.value(), temperature);
  Tape& tape = *I.tape();
  auto dI = std::make_shared<Tensor>(std::move(lg.dI));
  auto dM = std::make_shared<Tensor>(std::move(lg.dM));
  return tape.record(Tensor({1}, lg.loss), {I, M},
                     [I, M, dI, dM](Tape& t, const Tensor&, const Tensor& g) {
                       t.accumulate(I, scale(*dI, g[0]));
                       t.accumulate(M, scale(*dM, g[0]));
                     });
}

}  // namespace ad
}  // namespace aura
