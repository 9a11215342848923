#pragma once

#include "aura/autodiff.hpp"
#include "aura/tensor.hpp"

namespace aura {

/// S[i][k] = <I_i, M_k> for row-paired batches I, M of shape [B × D].
Tensor similarity_matrix(const Tensor& I, const Tensor& M);

/// Mean over rows of logsumexp_k(S[i][k]/τ) − S[i][i]/τ, i.e. the InfoNCE
/// loss of mapping I onto M. Throws InsufficientDataError for B = 0 and
/// DimensionError for mismatched batches.
double loss_directional(const Tensor& I, const Tensor& M, double temperature = 1.0);

/// Average of both directions: ½(L(I→M) + L(M→I)).
double loss_symmetric(const Tensor& I, const Tensor& M, double temperature = 1.0);

struct LossGrad {
  double loss = 0.0;
  Tensor dI;  // [B × D]
  Tensor dM;  // [B × D]
};

/// Symmetric loss with its gradient with respect to the embedding rows.
LossGrad loss_grad(const Tensor& I, const Tensor& M, double temperature = 1.0);

namespace ad {
/// Symmetric InfoNCE as a single tape node (shape {1}).
Var info_nce(Var I, Var M, double temperature = 1.0);
}  // namespace ad

}  // namespace aura
