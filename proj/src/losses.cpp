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

#include "fdvae/losses.hpp"

#include <cmath>

namespace fdvae::loss {

void CheckBinaryLabels(Labels labels, std::size_t expected, const char* what) {
  if (labels.size() != expected) {
    throw DataError("ShapeMismatch", std::string(what) + ": " +
                                         std::to_string(labels.size()) +
                                         " labels for " +
                                         std::to_string(expected) + " logits");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > 1) {
      throw DataError("LabelOutOfRange", std::string(what) + ": label " +
                                             std::to_string(labels[i]) +
                                             " at index " + std::to_string(i));
    }
  }
}

namespace {

template <typename T>
std::size_t BatchOf(const BasicTensor<T>& t, const char* what) {
  if (t.rank() == 0 || t.dim(0) == 0) {
    throw DataError("ShapeMismatch", std::string(what) + ": empty batch");
  }
  return t.dim(0);
}

template <typename T>
void RequireTwoClass(const BasicTensor<T>& logits, const char* what) {
  if (logits.rank() != 2 || logits.dim(1) != 2) {
    throw DataError("ShapeMismatch", std::string(what) + ": expected [B,2], got " +
                                         ShapeString(logits.shape()));
  }
}

// Mean cross-entropy of two-class logits against a fixed class; adds the
// gradient (scaled by `scale`) into `grad`.
template <typename T>
T TwoClassCrossEntropy(const BasicTensor<T>& logits, std::size_t target,
                       T scale, BasicTensor<T>& grad) {
  const std::size_t batch = logits.dim(0);
  T sum = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    const T own = logits.at(b, target);
    const T other = logits.at(b, 1 - target);
    sum += Softplus(other - own);
    const T p_other = Sigmoid(other - own);
    grad.at(b, target) += scale * (-p_other) / T(batch);
    grad.at(b, 1 - target) += scale * p_other / T(batch);
  }
  return sum / T(batch);
}

}  // namespace

template <typename T>
ValueAndGrad<T> ReconstructionLoss(const BasicTensor<T>& x,
                                   const BasicTensor<T>& x_hat) {
  x_hat.RequireSameShape(x, "ReconstructionLoss");
  const std::size_t batch = BatchOf(x, "ReconstructionLoss");
  ValueAndGrad<T> out{T(0), BasicTensor<T>(x.shape())};
  double sum = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T r = x_hat[i] - x[i];
    sum += double(r) * double(r);
    out.grad[i] = r / T(batch);
  }
  out.value = static_cast<T>(0.5 * sum / double(batch));
  return out;
}

template <typename T>
KlResult<T> KlDivergence(const BasicTensor<T>& mu,
                         const BasicTensor<T>& log_var) {
  log_var.RequireSameShape(mu, "KlDivergence");
  const std::size_t batch = BatchOf(mu, "KlDivergence");
  KlResult<T> out{T(0), BasicTensor<T>(mu.shape()), BasicTensor<T>(mu.shape())};
  double sum = 0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    const T var = std::exp(log_var[i]);
    sum += 0.5 * (double(var) + double(mu[i]) * mu[i] - 1.0 - log_var[i]);
    out.grad_mu[i] = mu[i] / T(batch);
    out.grad_log_var[i] = T(0.5) * (var - T(1)) / T(batch);
  }
  out.value = static_cast<T>(sum / double(batch));
  return out;
}

template <typename T>
ValueAndGrad<T> TcLoss(const BasicTensor<T>& logits) {
  RequireTwoClass(logits, "TcLoss");
  const std::size_t batch = BatchOf(logits, "TcLoss");
  ValueAndGrad<T> out{T(0), BasicTensor<T>(logits.shape())};
  T sum = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    sum += logits.at(b, 0) - logits.at(b, 1);
    out.grad.at(b, 0) = T(1) / T(batch);
    out.grad.at(b, 1) = T(-1) / T(batch);
  }
  out.value = sum / T(batch);
  return out;
}

template <typename T>
DiscriminatorResult<T> DiscriminatorLoss(const BasicTensor<T>& logits_real,
                                         const BasicTensor<T>& logits_fake) {
  RequireTwoClass(logits_real, "DiscriminatorLoss(real)");
  RequireTwoClass(logits_fake, "DiscriminatorLoss(fake)");
  BatchOf(logits_real, "DiscriminatorLoss(real)");
  BatchOf(logits_fake, "DiscriminatorLoss(fake)");
  DiscriminatorResult<T> out{T(0), BasicTensor<T>(logits_real.shape()),
                             BasicTensor<T>(logits_fake.shape())};
  const T real = TwoClassCrossEntropy(logits_real, 0, T(0.5), out.grad_real);
  const T fake = TwoClassCrossEntropy(logits_fake, 1, T(0.5), out.grad_fake);
  out.value = T(0.5) * (real + fake);
  return out;
}

template <typename T>
ValueAndGrad<T> BinaryCrossEntropy(const BasicTensor<T>& logits, Labels labels) {
  if (logits.rank() != 1) {
    throw DataError("ShapeMismatch", "BinaryCrossEntropy expects [B] logits, got " +
                                         ShapeString(logits.shape()));
  }
  const std::size_t batch = BatchOf(logits, "BinaryCrossEntropy");
  CheckBinaryLabels(labels, batch, "BinaryCrossEntropy");
  ValueAndGrad<T> out{T(0), BasicTensor<T>(logits.shape())};
  T sum = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    const T l = logits[b];
    const T y = labels[b] ? T(1) : T(0);
    // -[y log s(l) + (1-y) log(1 - s(l))] = softplus(l) - y*l
    sum += Softplus(l) - y * l;
    out.grad[b] = (Sigmoid(l) - y) / T(batch);
  }
  out.value = sum / T(batch);
  return out;
}

template <typename T>
ClassificationResult<T> DecorrelationClsLoss(const BasicTensor<T>& logit_t,
                                             Labels y_t,
                                             const BasicTensor<T>& logit_p,
                                             Labels y_p) {
  auto t = BinaryCrossEntropy(logit_t, y_t);
  auto p = BinaryCrossEntropy(logit_p, y_p);
  ClassificationResult<T> out;
  out.target = t.value;
  out.protected_ = p.value;
  out.value = t.value + p.value;
  out.grad_target_logit = std::move(t.grad);
  out.grad_protected_logit = std::move(p.grad);
  return out;
}

template <typename T>
AdversarialResult<T> DecorrelationAdvLoss(const BasicTensor<T>& logit_p_adv,
                                          Labels y_p,
                                          const BasicTensor<T>& logit_t_adv,
                                          Labels y_t) {
  auto p = BinaryCrossEntropy(logit_p_adv, y_p);
  auto t = BinaryCrossEntropy(logit_t_adv, y_t);
  AdversarialResult<T> out;
  out.protected_from_target = p.value;
  out.target_from_protected = t.value;
  out.adversary_objective = p.value + t.value;
  out.encoder_objective = -out.adversary_objective;
  out.encoder_grad_p = ReverseGradient(p.grad);
  out.encoder_grad_t = ReverseGradient(t.grad);
  out.adversary_grad_p = std::move(p.grad);
  out.adversary_grad_t = std::move(t.grad);
  return out;
}

template <typename T>
DownstreamResult<T> DownstreamLoss(const BasicTensor<T>& logit_task, Labels y_t,
                                   const BasicTensor<T>& logit_adversary,
                                   Labels y_p) {
  auto task = BinaryCrossEntropy(logit_task, y_t);
  auto adv = BinaryCrossEntropy(logit_adversary, y_p);
  DownstreamResult<T> out;
  out.task = task.value;
  out.adversary = adv.value;
  out.transform = task.value - adv.value;
  out.grad_task_logit = std::move(task.grad);
  out.grad_transform_logit = ReverseGradient(adv.grad);
  out.grad_adversary_logit = std::move(adv.grad);
  return out;
}

void LossWeights::Validate() const {
  for (double w : {alpha, beta, gamma, kl_beta}) {
    if (!std::isfinite(w) || w < 0) {
      throw ConfigError("InvalidWeights",
                        "loss weights must be finite and non-negative");
    }
  }
}

LossReport TotalRepresentationLoss(const LossComponents& c,
                                   const LossWeights& w) {
  const std::pair<const char*, const std::optional<double>*> fields[] = {
      {"recon", &c.recon}, {"kl", &c.kl},       {"tc", &c.tc},       {"disc", &c.disc},
      {"cls_t", &c.cls_t}, {"cls_p", &c.cls_p}, {"adv_t", &c.adv_t}, {"adv_p", &c.adv_p}};
  for (const auto& [name, f] : fields) {
    if (*f && !std::isfinite(**f)) {
      throw TrainingError("NonFiniteComponent",
                          std::string("loss component ") + name + " is not finite");
    }
  }
  auto v = [](const std::optional<double>& x) { return x.value_or(0.0); };
  LossReport report{c, 0.0};
  report.total = v(c.recon) + w.kl_beta * v(c.kl) + w.alpha * v(c.tc) +
                 w.beta * (v(c.cls_t) + v(c.cls_p)) +
                 w.gamma * (v(c.adv_t) + v(c.adv_p));
  return report;
}

#define FDVAE_INSTANTIATE_LOSSES(T)                                           \
  template ValueAndGrad<T> ReconstructionLoss(const BasicTensor<T>&,          \
                                              const BasicTensor<T>&);         \
  template KlResult<T> KlDivergence(const BasicTensor<T>&,                    \
                                    const BasicTensor<T>&);                   \
  template ValueAndGrad<T> TcLoss(const BasicTensor<T>&);                     \
  template DiscriminatorResult<T> DiscriminatorLoss(const BasicTensor<T>&,    \
                                                    const BasicTensor<T>&);   \
  template ValueAndGrad<T> BinaryCrossEntropy(const BasicTensor<T>&, Labels); \
  template ClassificationResult<T> DecorrelationClsLoss(                      \
      const BasicTensor<T>&, Labels, const BasicTensor<T>&, Labels);          \
  template AdversarialResult<T> DecorrelationAdvLoss(                         \
      const BasicTensor<T>&, Labels, const BasicTensor<T>&, Labels);          \
  template DownstreamResult<T> DownstreamLoss(const BasicTensor<T>&, Labels,  \
                                              const BasicTensor<T>&, Labels);

FDVAE_INSTANTIATE_LOSSES(float)
FDVAE_INSTANTIATE_LOSSES(double)

#undef FDVAE_INSTANTIATE_LOSSES

}  // namespace fdvae::loss
