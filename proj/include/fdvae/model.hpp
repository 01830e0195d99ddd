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

// Networks of the fairness-aware disentangling VAE: convolutional encoder and
// decoder for 64x64 RGB input, the total-correlation discriminator, the
// attribute classification heads and the downstream transform/classifiers.

#ifndef FDVAE_MODEL_HPP_
#define FDVAE_MODEL_HPP_

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fdvae/layers.hpp"
#include "fdvae/random.hpp"
#include "fdvae/tensor.hpp"

namespace fdvae::model {

inline constexpr std::size_t kImageSize = 64;
inline constexpr std::size_t kImageChannels = 3;
inline constexpr std::size_t kLatentDim = 60;
inline constexpr std::size_t kSubspaceDim = 20;
inline constexpr float kLogVarClamp = 10.0f;

// A named contiguous block of latent dimensions.
struct Subspace {
  std::string name;
  std::size_t offset = 0;
  std::size_t width = 0;

  friend bool operator==(const Subspace&, const Subspace&) = default;
};

// How the latent code is cut into subspaces. The discriminator's fake
// samples permute each block independently.
struct LatentLayout {
  std::vector<Subspace> blocks;

  // TAL | PAL | MAL, 20 dims each.
  static LatentLayout ThreeWay();
  // TAL | PAL, 30 dims each (decorrelation without a mutual subspace).
  static LatentLayout TargetProtected();
  // Sensitive | non-sensitive, 30 dims each.
  static LatentLayout SensitiveSplit();
  // One block per latent dimension (dimension-wise factorization).
  static LatentLayout PerDimension();

  const Subspace& Find(const std::string& name) const;
  bool Has(const std::string& name) const;
  std::size_t total() const;

  friend bool operator==(const LatentLayout&, const LatentLayout&) = default;
};

struct GaussianPosterior {
  Tensor mu;       // [B, 60]
  Tensor log_var;  // [B, 60], clamped to [-10, 10]
};

// z = (z_t, z_p, z_m); concatenation order is fixed everywhere.
struct LatentPartition {
  Tensor z_t;  // [B, 20]
  Tensor z_p;  // [B, 20]
  Tensor z_m;  // [B, 20]

  std::size_t batch() const { return z_t.dim(0); }
};

LatentPartition SplitLatent(const Tensor& z);
Tensor ConcatLatent(const LatentPartition& part);

// z = mu + exp(log_var / 2) * noise.
Tensor SampleLatent(const GaussianPosterior& post, const Tensor& noise);
LatentPartition Reparameterize(const GaussianPosterior& post,
                               const Tensor& noise);

// Permutes every subspace of z along the batch axis with its own permutation.
// Throws BatchTooSmall when B < 2.
Tensor ShuffleSubspaces(const Tensor& z, const LatentLayout& layout,
                        RandomEngine& rng);
LatentPartition ShuffleSubspaces(const LatentPartition& part,
                                 std::uint64_t seed);

// Conv1..Conv6: [B,3,64,64] -> [B,120,1,1]; first 60 channels are the mean,
// last 60 the log-variance.
class Encoder {
 public:
  explicit Encoder(RandomEngine& rng);

  GaussianPosterior Forward(const Tensor& images);
  // Accumulates parameter gradients; the input gradient is discarded.
  void Backward(const Tensor& grad_mu, const Tensor& grad_log_var);

  std::vector<nn::Parameter<float>*> Parameters() { return net_.Parameters(); }
  std::vector<std::pair<std::string, Shape>> TraceShapes(std::size_t batch) const;

 private:
  nn::Sequential<float> net_;
  std::vector<std::uint8_t> inside_clamp_;
  std::size_t batch_ = 0;
};

// Conv7 + ConvTranspose1..5: [B,60] -> [B,3,64,64], linear output.
class Decoder {
 public:
  explicit Decoder(RandomEngine& rng);

  Tensor Forward(const Tensor& z);
  Tensor Backward(const Tensor& grad_output);  // returns dL/dz [B,60]

  std::vector<nn::Parameter<float>*> Parameters() { return net_.Parameters(); }
  std::vector<std::pair<std::string, Shape>> TraceShapes(std::size_t batch) const;

 private:
  nn::Sequential<float> net_;
  std::size_t batch_ = 0;
};

// MLP 60 -> 256 -> 256 -> 2 with leaky-ReLU(0.2); logits are (real, fake).
class Discriminator {
 public:
  explicit Discriminator(RandomEngine& rng);

  Tensor Forward(const Tensor& z);
  Tensor Backward(const Tensor& grad_logits);

  std::vector<nn::Parameter<float>*> Parameters() { return net_.Parameters(); }

 private:
  nn::Sequential<float> net_;
};

// Single affine layer [B, dim] -> logit [B].
class ClassifierHead {
 public:
  ClassifierHead(std::string name, std::size_t input_dim, RandomEngine& rng);

  Tensor Forward(const Tensor& input);
  Tensor Backward(const Tensor& grad_logit);

  std::size_t input_dim() const { return layer_.in_features(); }
  std::vector<nn::Parameter<float>*> Parameters() { return layer_.Parameters(); }

 private:
  nn::Linear<float> layer_;
};

// Affine 20 -> 20 map f applied to the mutual subspace.
class MutualTransform {
 public:
  explicit MutualTransform(RandomEngine& rng);

  Tensor Forward(const Tensor& z_m);
  Tensor Backward(const Tensor& grad_output);

  void SetIdentity();
  void SetZero();

  std::vector<nn::Parameter<float>*> Parameters() { return layer_.Parameters(); }

 private:
  nn::Linear<float> layer_;
};

// Which optional components a bundle carries.
struct ModelSpec {
  LatentLayout layout = LatentLayout::ThreeWay();
  bool discriminator = false;
  std::size_t target_head_dim = 0;     // head t on the target subspace
  std::size_t protected_head_dim = 0;  // head p on the protected subspace
  bool adversary_heads = false;        // heads t~ and p~

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

// Downstream classifier shape: task head d, and optionally f with d~.
struct DownstreamSpec {
  std::size_t task_input_dim = kSubspaceDim;
  bool transform = false;

  friend bool operator==(const DownstreamSpec&, const DownstreamSpec&) = default;
};

struct Downstream {
  Downstream(const DownstreamSpec& spec, std::uint64_t seed);

  DownstreamSpec spec;
  ClassifierHead task;                             // d
  std::unique_ptr<MutualTransform> transform;      // f
  std::unique_ptr<ClassifierHead> adversary;       // d~
};

// Every trainable component of one model, addressable by component name.
class ModelBundle {
 public:
  ModelBundle(const ModelSpec& spec, std::uint64_t seed);

  const ModelSpec& spec() const { return spec_; }

  Encoder encoder;
  Decoder decoder;
  std::unique_ptr<Discriminator> discriminator;
  std::unique_ptr<ClassifierHead> target_head;      // t
  std::unique_ptr<ClassifierHead> protected_head;   // p
  std::unique_ptr<ClassifierHead> adv_protected;    // p~ on the target subspace
  std::unique_ptr<ClassifierHead> adv_target;       // t~ on the protected subspace
  std::unique_ptr<Downstream> downstream;

  void AttachDownstream(const DownstreamSpec& spec, std::uint64_t seed);

  // Parameters keyed "<component>/<layer>.<weight|bias>", in a fixed order.
  std::vector<std::pair<std::string, nn::Parameter<float>*>> NamedParameters();
  std::vector<nn::Parameter<float>*> ComponentParameters(const std::string& component);

 private:
  ModelSpec spec_;
};

// Model-zoo operations on a bundle.
GaussianPosterior Encode(ModelBundle& bundle, const Tensor& images);
Tensor Decode(ModelBundle& bundle, const Tensor& z);
Tensor Discriminate(ModelBundle& bundle, const LatentPartition& part);
Tensor ClassifyHead(ClassifierHead& head, const Tensor& subspace);
Tensor TransformMal(ModelBundle& bundle, const Tensor& z_m);

// Stable digest of all parameter bytes; used by freezing and isolation checks.
std::uint64_t ParameterDigest(const std::vector<nn::Parameter<float>*>& params);

}  // namespace fdvae::model

#endif  // FDVAE_MODEL_HPP_
