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

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "fdvae/layers.hpp"

namespace fdvae::nn {
namespace {

using D = double;

BasicTensor<D> Random(const Shape& shape, std::mt19937_64& rng) {
  BasicTensor<D> t(shape);
  std::uniform_real_distribution<D> u(-1.0, 1.0);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

D Dot(const BasicTensor<D>& a, const BasicTensor<D>& b) {
  D s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Checks input and parameter gradients of L = <layer(x), r> against central
// differences.
void CheckLayer(Layer<D>& layer, const Shape& input_shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  BasicTensor<D> x = Random(input_shape, rng);
  const BasicTensor<D> probe = Random(layer.OutputShape(input_shape), rng);
  auto loss = [&] { return Dot(layer.Forward(x), probe); };

  layer.Forward(x);
  for (auto* p : layer.Parameters()) p->grad.Fill(0);
  const BasicTensor<D> dx = layer.Backward(probe);
  constexpr D h = 1e-6;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const D keep = x[i];
    x[i] = keep + h;
    const D up = loss();
    x[i] = keep - h;
    const D down = loss();
    x[i] = keep;
    EXPECT_NEAR(dx[i], (up - down) / (2 * h), 1e-6) << layer.Name() << " input " << i;
  }
  for (auto* p : layer.Parameters()) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const D keep = p->value[i];
      p->value[i] = keep + h;
      const D up = loss();
      p->value[i] = keep - h;
      const D down = loss();
      p->value[i] = keep;
      EXPECT_NEAR(p->grad[i], (up - down) / (2 * h), 1e-6) << p->name << " " << i;
    }
  }
}

TEST(LayerGradients, Conv2dStrided) {
  Conv2d<D> conv("c", 2, 3, 4, 2, 1);
  std::mt19937_64 rng(1);
  conv.Initialize(InitKind::kRectifier, rng);
  for (auto* p : conv.Parameters()) p->value = Random(p->value.shape(), rng);
  CheckLayer(conv, {2, 2, 6, 6}, 2);
}

TEST(LayerGradients, Conv2dValid) {
  Conv2d<D> conv("c", 3, 2, 4, 1, 0);
  std::mt19937_64 rng(3);
  for (auto* p : conv.Parameters()) p->value = Random(p->value.shape(), rng);
  CheckLayer(conv, {2, 3, 4, 4}, 4);
}

TEST(LayerGradients, ConvTransposeStrided) {
  ConvTranspose2d<D> conv("t", 3, 2, 4, 2, 1);
  std::mt19937_64 rng(5);
  for (auto* p : conv.Parameters()) p->value = Random(p->value.shape(), rng);
  CheckLayer(conv, {2, 3, 3, 3}, 6);
}

TEST(LayerGradients, ConvTransposeFromPoint) {
  ConvTranspose2d<D> conv("t", 3, 2, 4, 1, 0);
  std::mt19937_64 rng(7);
  for (auto* p : conv.Parameters()) p->value = Random(p->value.shape(), rng);
  CheckLayer(conv, {2, 3, 1, 1}, 8);
}

TEST(LayerGradients, Linear) {
  Linear<D> fc("fc", 5, 3);
  std::mt19937_64 rng(9);
  for (auto* p : fc.Parameters()) p->value = Random(p->value.shape(), rng);
  CheckLayer(fc, {4, 5}, 10);
}

TEST(LayerGradients, LeakyRelu) {
  LeakyRelu<D> act(0.2);
  CheckLayer(act, {3, 7}, 11);
}

TEST(LayerShapes, ConvTransposeDoublesSpatialSize) {
  ConvTranspose2d<D> conv("t", 1, 1, 4, 2, 1);
  EXPECT_EQ(conv.OutputShape({1, 1, 8, 8}), (Shape{1, 1, 16, 16}));
}

}  // namespace
}  // namespace fdvae::nn
