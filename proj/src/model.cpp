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

#include "fdvae/model.hpp"

#include <algorithm>
#include <cmath>

#include "fdvae/digest.hpp"

namespace fdvae::model {

using nn::Conv2d;
using nn::ConvTranspose2d;
using nn::InitKind;
using nn::LeakyRelu;
using nn::Linear;

LatentLayout LatentLayout::ThreeWay() {
  return {{{"TAL", 0, kSubspaceDim},
           {"PAL", kSubspaceDim, kSubspaceDim},
           {"MAL", 2 * kSubspaceDim, kSubspaceDim}}};
}

LatentLayout LatentLayout::TargetProtected() {
  return {{{"TAL", 0, kLatentDim / 2}, {"PAL", kLatentDim / 2, kLatentDim / 2}}};
}

LatentLayout LatentLayout::SensitiveSplit() {
  return {{{"sensitive", 0, kLatentDim / 2},
           {"nonsensitive", kLatentDim / 2, kLatentDim / 2}}};
}

LatentLayout LatentLayout::PerDimension() {
  LatentLayout layout;
  for (std::size_t i = 0; i < kLatentDim; ++i) {
    layout.blocks.push_back({"z" + std::to_string(i), i, 1});
  }
  return layout;
}

const Subspace& LatentLayout::Find(const std::string& name) const {
  for (const auto& block : blocks) {
    if (block.name == name) return block;
  }
  throw InternalError("UnknownSubspace", "layout has no subspace " + name);
}

bool LatentLayout::Has(const std::string& name) const {
  return std::any_of(blocks.begin(), blocks.end(),
                     [&](const Subspace& b) { return b.name == name; });
}

std::size_t LatentLayout::total() const {
  std::size_t n = 0;
  for (const auto& block : blocks) n += block.width;
  return n;
}

LatentPartition SplitLatent(const Tensor& z) {
  if (z.rank() != 2 || z.dim(1) != kLatentDim) {
    throw DataError("ShapeMismatch", "latent must be [B,60], got " +
                                         ShapeString(z.shape()));
  }
  return {SliceColumns(z, 0, kSubspaceDim),
          SliceColumns(z, kSubspaceDim, kSubspaceDim),
          SliceColumns(z, 2 * kSubspaceDim, kSubspaceDim)};
}

Tensor ConcatLatent(const LatentPartition& part) {
  const std::size_t batch = part.batch();
  for (const Tensor* t : {&part.z_t, &part.z_p, &part.z_m}) {
    t->RequireShape({batch, kSubspaceDim}, "LatentPartition");
  }
  Tensor z({batch, kLatentDim});
  ScatterColumns(z, 0, part.z_t, false);
  ScatterColumns(z, kSubspaceDim, part.z_p, false);
  ScatterColumns(z, 2 * kSubspaceDim, part.z_m, false);
  return z;
}

Tensor SampleLatent(const GaussianPosterior& post, const Tensor& noise) {
  noise.RequireSameShape(post.mu, "reparameterize noise");
  post.log_var.RequireSameShape(post.mu, "reparameterize log_var");
  Tensor z(post.mu.shape());
  for (std::size_t i = 0; i < z.size(); ++i) {
    z[i] = post.mu[i] + std::exp(0.5f * post.log_var[i]) * noise[i];
  }
  return z;
}

LatentPartition Reparameterize(const GaussianPosterior& post,
                               const Tensor& noise) {
  return SplitLatent(SampleLatent(post, noise));
}

Tensor ShuffleSubspaces(const Tensor& z, const LatentLayout& layout,
                        RandomEngine& rng) {
  const std::size_t batch = z.dim(0);
  if (batch < 2) {
    throw DataError("BatchTooSmall",
                    "subspace shuffling needs a batch of at least 2");
  }
  const std::size_t cols = z.dim(1);
  Tensor out(z.shape());
  for (const auto& block : layout.blocks) {
    const auto perm = RandomPermutation(batch, rng);
    for (std::size_t r = 0; r < batch; ++r) {
      std::copy_n(z.data() + perm[r] * cols + block.offset, block.width,
                  out.data() + r * cols + block.offset);
    }
  }
  return out;
}

LatentPartition ShuffleSubspaces(const LatentPartition& part,
                                 std::uint64_t seed) {
  RandomEngine rng = MakeEngine(seed, Stream::kShuffle);
  return SplitLatent(
      ShuffleSubspaces(ConcatLatent(part), LatentLayout::ThreeWay(), rng));
}

// Encoder ------------------------------------------------------------------

Encoder::Encoder(RandomEngine& rng) {
  struct Row {
    const char* name;
    std::size_t in, out, kernel, stride, padding;
    bool relu;
  };
  const Row rows[] = {
      {"conv1", 3, 32, 4, 2, 1, true},   {"conv2", 32, 32, 4, 2, 1, true},
      {"conv3", 32, 64, 4, 2, 1, true},  {"conv4", 64, 64, 4, 2, 1, true},
      {"conv5", 64, 256, 4, 1, 0, true}, {"conv6", 256, 120, 1, 1, 0, false},
  };
  for (const Row& r : rows) {
    auto& conv = net_.Add(std::make_unique<Conv2d<float>>(
        r.name, r.in, r.out, r.kernel, r.stride, r.padding));
    conv.Initialize(r.relu ? InitKind::kRectifier : InitKind::kLinear, rng);
    if (r.relu) net_.Add(std::make_unique<LeakyRelu<float>>());
  }
}

GaussianPosterior Encoder::Forward(const Tensor& images) {
  if (images.rank() != 4 || images.dim(1) != kImageChannels ||
      images.dim(2) != kImageSize || images.dim(3) != kImageSize ||
      images.dim(0) == 0) {
    throw DataError("ShapeMismatch", "encoder expects [B,3,64,64], got " +
                                         ShapeString(images.shape()));
  }
  batch_ = images.dim(0);
  const Tensor head = net_.Forward(images);  // [B,120,1,1]
  GaussianPosterior post{Tensor({batch_, kLatentDim}),
                         Tensor({batch_, kLatentDim})};
  inside_clamp_.assign(batch_ * kLatentDim, 1);
  for (std::size_t b = 0; b < batch_; ++b) {
    const float* h = head.data() + b * 2 * kLatentDim;
    for (std::size_t j = 0; j < kLatentDim; ++j) {
      post.mu.at(b, j) = h[j];
      const float lv = h[kLatentDim + j];
      const float clamped = std::clamp(lv, -kLogVarClamp, kLogVarClamp);
      inside_clamp_[b * kLatentDim + j] = clamped == lv;
      post.log_var.at(b, j) = clamped;
    }
  }
  return post;
}

void Encoder::Backward(const Tensor& grad_mu, const Tensor& grad_log_var) {
  grad_mu.RequireShape({batch_, kLatentDim}, "Encoder::Backward mu");
  grad_log_var.RequireShape({batch_, kLatentDim}, "Encoder::Backward log_var");
  Tensor grad_head({batch_, 2 * kLatentDim, 1, 1});
  for (std::size_t b = 0; b < batch_; ++b) {
    float* g = grad_head.data() + b * 2 * kLatentDim;
    for (std::size_t j = 0; j < kLatentDim; ++j) {
      g[j] = grad_mu.at(b, j);
      g[kLatentDim + j] =
          inside_clamp_[b * kLatentDim + j] ? grad_log_var.at(b, j) : 0.0f;
    }
  }
  net_.Backward(grad_head);
}

std::vector<std::pair<std::string, Shape>> Encoder::TraceShapes(
    std::size_t batch) const {
  return net_.TraceShapes({batch, kImageChannels, kImageSize, kImageSize});
}

// Decoder ------------------------------------------------------------------

Decoder::Decoder(RandomEngine& rng) {
  auto& conv7 = net_.Add(
      std::make_unique<Conv2d<float>>("conv7", kLatentDim, 256, 1, 1, 0));
  conv7.Initialize(InitKind::kRectifier, rng);
  net_.Add(std::make_unique<LeakyRelu<float>>());
  struct Row {
    const char* name;
    std::size_t in, out, kernel, stride, padding;
    bool relu;
  };
  const Row rows[] = {
      {"convtranspose1", 256, 64, 4, 1, 0, true},
      {"convtranspose2", 64, 64, 4, 2, 1, true},
      {"convtranspose3", 64, 32, 4, 2, 1, true},
      {"convtranspose4", 32, 32, 4, 2, 1, true},
      {"convtranspose5", 32, 3, 4, 2, 1, false},
  };
  for (const Row& r : rows) {
    auto& deconv = net_.Add(std::make_unique<ConvTranspose2d<float>>(
        r.name, r.in, r.out, r.kernel, r.stride, r.padding));
    deconv.Initialize(r.relu ? InitKind::kRectifier : InitKind::kLinear, rng);
    if (r.relu) net_.Add(std::make_unique<LeakyRelu<float>>());
  }
}

Tensor Decoder::Forward(const Tensor& z) {
  if (z.rank() != 2 || z.dim(1) != kLatentDim || z.dim(0) == 0) {
    throw DataError("ShapeMismatch",
                    "decoder expects [B,60], got " + ShapeString(z.shape()));
  }
  batch_ = z.dim(0);
  return net_.Forward(z.Reshaped({batch_, kLatentDim, 1, 1}));
}

Tensor Decoder::Backward(const Tensor& grad_output) {
  return net_.Backward(grad_output).Reshaped({batch_, kLatentDim});
}

std::vector<std::pair<std::string, Shape>> Decoder::TraceShapes(
    std::size_t batch) const {
  return net_.TraceShapes({batch, kLatentDim, 1, 1});
}

// Discriminator ------------------------------------------------------------

Discriminator::Discriminator(RandomEngine& rng) {
  constexpr float kSlope = 0.2f;
  net_.Add(std::make_unique<Linear<float>>("fc1", kLatentDim, 256))
      .Initialize(InitKind::kRectifier, rng);
  net_.Add(std::make_unique<LeakyRelu<float>>(kSlope));
  net_.Add(std::make_unique<Linear<float>>("fc2", 256, 256))
      .Initialize(InitKind::kRectifier, rng);
  net_.Add(std::make_unique<LeakyRelu<float>>(kSlope));
  net_.Add(std::make_unique<Linear<float>>("fc3", 256, 2))
      .Initialize(InitKind::kLinear, rng);
}

Tensor Discriminator::Forward(const Tensor& z) {
  if (z.rank() != 2 || z.dim(1) != kLatentDim) {
    throw DataError("ShapeMismatch", "discriminator expects [B,60], got " +
                                         ShapeString(z.shape()));
  }
  return net_.Forward(z);
}

Tensor Discriminator::Backward(const Tensor& grad_logits) {
  return net_.Backward(grad_logits);
}

// Heads --------------------------------------------------------------------

ClassifierHead::ClassifierHead(std::string name, std::size_t input_dim,
                               RandomEngine& rng)
    : layer_(std::move(name), input_dim, 1) {
  layer_.Initialize(InitKind::kLinear, rng);
}

Tensor ClassifierHead::Forward(const Tensor& input) {
  const Tensor out = layer_.Forward(input);
  return out.Reshaped({input.dim(0)});
}

Tensor ClassifierHead::Backward(const Tensor& grad_logit) {
  return layer_.Backward(grad_logit.Reshaped({grad_logit.size(), 1}));
}

MutualTransform::MutualTransform(RandomEngine& rng)
    : layer_("f", kSubspaceDim, kSubspaceDim) {
  layer_.Initialize(InitKind::kLinear, rng);
}

Tensor MutualTransform::Forward(const Tensor& z_m) { return layer_.Forward(z_m); }

Tensor MutualTransform::Backward(const Tensor& grad_output) {
  return layer_.Backward(grad_output);
}

void MutualTransform::SetIdentity() {
  layer_.weight().value.Fill(0.0f);
  for (std::size_t i = 0; i < kSubspaceDim; ++i) layer_.weight().value.at(i, i) = 1.0f;
  layer_.bias().value.Fill(0.0f);
}

void MutualTransform::SetZero() {
  layer_.weight().value.Fill(0.0f);
  layer_.bias().value.Fill(0.0f);
}

// Bundle -------------------------------------------------------------------

namespace {

RandomEngine Engine(std::uint64_t seed, Stream stream, std::uint64_t sub = 0) {
  return MakeEngine(seed, stream, sub);
}

RandomEngine EncoderEngine(std::uint64_t seed) {
  return Engine(seed, Stream::kEncoderInit);
}
RandomEngine DecoderEngine(std::uint64_t seed) {
  return Engine(seed, Stream::kDecoderInit);
}

std::unique_ptr<ClassifierHead> MakeHead(const char* name, std::size_t dim,
                                         std::uint64_t seed, std::uint64_t sub) {
  RandomEngine rng = Engine(seed, Stream::kHeadInit, sub);
  return std::make_unique<ClassifierHead>(name, dim, rng);
}

}  // namespace

Downstream::Downstream(const DownstreamSpec& s, std::uint64_t seed)
    : spec(s),
      task([&] {
        RandomEngine rng = MakeEngine(seed, Stream::kDownstreamInit, 0);
        return ClassifierHead("d", s.task_input_dim, rng);
      }()) {
  if (spec.transform) {
    RandomEngine rng_f = MakeEngine(seed, Stream::kDownstreamInit, 1);
    transform = std::make_unique<MutualTransform>(rng_f);
    RandomEngine rng_d = MakeEngine(seed, Stream::kDownstreamInit, 2);
    adversary = std::make_unique<ClassifierHead>("d_adv", kSubspaceDim, rng_d);
  }
}

ModelBundle::ModelBundle(const ModelSpec& spec, std::uint64_t seed)
    : encoder([&] {
        RandomEngine rng = EncoderEngine(seed);
        return Encoder(rng);
      }()),
      decoder([&] {
        RandomEngine rng = DecoderEngine(seed);
        return Decoder(rng);
      }()),
      spec_(spec) {
  if (spec.discriminator) {
    RandomEngine rng = Engine(seed, Stream::kDiscriminatorInit);
    discriminator = std::make_unique<Discriminator>(rng);
  }
  if (spec.target_head_dim) target_head = MakeHead("t", spec.target_head_dim, seed, 0);
  if (spec.protected_head_dim) {
    protected_head = MakeHead("p", spec.protected_head_dim, seed, 1);
  }
  if (spec.adversary_heads) {
    const std::size_t t_dim = spec.layout.Find("TAL").width;
    const std::size_t p_dim = spec.layout.Find("PAL").width;
    adv_protected = MakeHead("p_adv", t_dim, seed, 2);
    adv_target = MakeHead("t_adv", p_dim, seed, 3);
  }
}

void ModelBundle::AttachDownstream(const DownstreamSpec& spec,
                                   std::uint64_t seed) {
  downstream = std::make_unique<Downstream>(spec, seed);
}

std::vector<std::pair<std::string, nn::Parameter<float>*>>
ModelBundle::NamedParameters() {
  std::vector<std::pair<std::string, nn::Parameter<float>*>> named;
  auto add = [&](const std::string& component,
                 const std::vector<nn::Parameter<float>*>& params) {
    for (auto* p : params) named.emplace_back(component + "/" + p->name, p);
  };
  add("encoder", encoder.Parameters());
  add("decoder", decoder.Parameters());
  if (discriminator) add("discriminator", discriminator->Parameters());
  if (target_head) add("head_t", target_head->Parameters());
  if (protected_head) add("head_p", protected_head->Parameters());
  if (adv_protected) add("head_p_adv", adv_protected->Parameters());
  if (adv_target) add("head_t_adv", adv_target->Parameters());
  if (downstream) {
    add("downstream_d", downstream->task.Parameters());
    if (downstream->transform) add("downstream_f", downstream->transform->Parameters());
    if (downstream->adversary) add("downstream_d_adv", downstream->adversary->Parameters());
  }
  return named;
}

std::vector<nn::Parameter<float>*> ModelBundle::ComponentParameters(
    const std::string& component) {
  std::vector<nn::Parameter<float>*> params;
  const std::string prefix = component + "/";
  for (auto& [name, p] : NamedParameters()) {
    if (name.compare(0, prefix.size(), prefix) == 0) params.push_back(p);
  }
  return params;
}

GaussianPosterior Encode(ModelBundle& bundle, const Tensor& images) {
  return bundle.encoder.Forward(images);
}

Tensor Decode(ModelBundle& bundle, const Tensor& z) {
  return bundle.decoder.Forward(z);
}

Tensor Discriminate(ModelBundle& bundle, const LatentPartition& part) {
  if (!bundle.discriminator) {
    throw InternalError("MissingComponent", "bundle has no discriminator");
  }
  return bundle.discriminator->Forward(ConcatLatent(part));
}

Tensor ClassifyHead(ClassifierHead& head, const Tensor& subspace) {
  return head.Forward(subspace);
}

Tensor TransformMal(ModelBundle& bundle, const Tensor& z_m) {
  if (!bundle.downstream || !bundle.downstream->transform) {
    throw InternalError("MissingComponent", "bundle has no downstream transform");
  }
  return bundle.downstream->transform->Forward(z_m);
}

std::uint64_t ParameterDigest(const std::vector<nn::Parameter<float>*>& params) {
  Fnv1a hash;
  for (const auto* p : params) {
    hash.Update(p->name);
    hash.Update(p->value.data(), p->value.size() * sizeof(float));
  }
  return hash.value();
}

}  // namespace fdvae::model
