/*
 * Copyright 2026 The FD-VAE Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Loss terms of the representation and downstream objectives.
//
// Every function is pure: it returns the scalar value together with the
// gradient of that scalar with respect to each of its tensor inputs. All
// terms are stated for minimization. Batch reductions are means, so the
// returned gradients already carry the 1/B factor.

#ifndef FDVAE_LOSSES_HPP_
#define FDVAE_LOSSES_HPP_

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "fdvae/tensor.hpp"

namespace fdvae::loss {

using Labels = std::span<const std::uint8_t>;

template <typename T>
struct ValueAndGrad {
  T value = 0;
  BasicTensor<T> grad;
};

template <typename T>
struct KlResult {
  T value = 0;
  BasicTensor<T> grad_mu;
  BasicTensor<T> grad_log_var;
};

template <typename T>
struct DiscriminatorResult {
  T value = 0;
  BasicTensor<T> grad_real;  // [B,2]
  BasicTensor<T> grad_fake;  // [B,2]
};

template <typename T>
struct ClassificationResult {
  T value = 0;     // target + protected
  T target = 0;    // BCE of t(z_t) vs y_t
  T protected_ = 0;  // BCE of p(z_p) vs y_p
  BasicTensor<T> grad_target_logit;
  BasicTensor<T> grad_protected_logit;
};

// The adversary heads p~ (reads z_t, predicts y_p) and t~ (reads z_p,
// predicts y_t). The adversary minimizes its cross-entropy; the encoder gets
// the sign-reversed gradient and so maximizes it.
template <typename T>
struct AdversarialResult {
  T adversary_objective = 0;  // BCE(p~) + BCE(t~)
  T encoder_objective = 0;    // -adversary_objective
  T protected_from_target = 0;  // BCE(p~(z_t), y_p)
  T target_from_protected = 0;  // BCE(t~(z_p), y_t)
  // d(adversary_objective)/d logit; used to train the adversary heads.
  BasicTensor<T> adversary_grad_p;
  BasicTensor<T> adversary_grad_t;
  // d(encoder_objective)/d logit; back-propagated into the encoder.
  BasicTensor<T> encoder_grad_p;
  BasicTensor<T> encoder_grad_t;
};

template <typename T>
struct DownstreamResult {
  T task = 0;       // BCE of d(z_t + f(z_m)) vs y_t; minimized by d and f
  T adversary = 0;  // BCE of d~(f(z_m)) vs y_p; minimized by d~
  T transform = 0;  // task - adversary; the transform's objective
  BasicTensor<T> grad_task_logit;       // for d (and f through d)
  BasicTensor<T> grad_adversary_logit;  // for d~
  BasicTensor<T> grad_transform_logit;  // reversed adversary gradient for f
};

template <typename T>
inline T Softplus(T x) {
  return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <typename T>
inline T Sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

void CheckBinaryLabels(Labels labels, std::size_t expected, const char* what);

// 0.5 * sum of squared pixel residuals, averaged over the batch.
// Gradient is with respect to the reconstruction.
template <typename T>
ValueAndGrad<T> ReconstructionLoss(const BasicTensor<T>& x,
                                   const BasicTensor<T>& x_hat);

// KL(N(mu, exp(log_var)) || N(0, I)) averaged over the batch.
template <typename T>
KlResult<T> KlDivergence(const BasicTensor<T>& mu,
                         const BasicTensor<T>& log_var);

// Density-ratio estimate of total correlation: mean of l_real - l_fake.
template <typename T>
ValueAndGrad<T> TcLoss(const BasicTensor<T>& logits);

// Mean two-class cross-entropy; real samples are class 0, shuffled ones
// class 1.
template <typename T>
DiscriminatorResult<T> DiscriminatorLoss(const BasicTensor<T>& logits_real,
                                         const BasicTensor<T>& logits_fake);

// Mean binary cross-entropy with logits [B].
template <typename T>
ValueAndGrad<T> BinaryCrossEntropy(const BasicTensor<T>& logits, Labels labels);

template <typename T>
ClassificationResult<T> DecorrelationClsLoss(const BasicTensor<T>& logit_t,
                                             Labels y_t,
                                             const BasicTensor<T>& logit_p,
                                             Labels y_p);

// logit_p_adv = p~(z_t), logit_t_adv = t~(z_p).
template <typename T>
AdversarialResult<T> DecorrelationAdvLoss(const BasicTensor<T>& logit_p_adv,
                                          Labels y_p,
                                          const BasicTensor<T>& logit_t_adv,
                                          Labels y_t);

template <typename T>
DownstreamResult<T> DownstreamLoss(const BasicTensor<T>& logit_task, Labels y_t,
                                   const BasicTensor<T>& logit_adversary,
                                   Labels y_p);

// Gradient reversal: identity forward, -scale * grad backward.
template <typename T>
BasicTensor<T> ReverseGradient(const BasicTensor<T>& grad, T scale = T(1)) {
  BasicTensor<T> out = grad;
  out.Scale(-scale);
  return out;
}

struct LossWeights {
  double alpha = 50.0;   // total-correlation term
  double beta = 5.0;     // attribute classification term
  double gamma = 10.0;   // adversarial decorrelation term
  double kl_beta = 1.0;  // KL multiplier (beta-VAE)

  void Validate() const;
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

// Encoder-side components of one step. Absent terms are not part of the
// variant being trained. adv_t/adv_p hold the encoder's objective for the
// adversary terms (the negated adversary cross-entropy).
struct LossComponents {
  std::optional<double> recon, kl, tc, disc, cls_t, cls_p, adv_t, adv_p;
};

// One record per optimization step. `total` is what the encoder, decoder
// and heads t/p minimize:
//   recon + kl_beta*kl + alpha*tc + beta*(cls_t + cls_p) + gamma*(adv_t + adv_p)
// The discriminator loss is reported but never part of the total.
struct LossReport {
  LossComponents components;
  double total = 0;
};

LossReport TotalRepresentationLoss(const LossComponents& components,
                                   const LossWeights& weights);

}  // namespace fdvae::loss

#endif  // FDVAE_LOSSES_HPP_
