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
#include <numbers>
#include <random>

#include "fdvae/error.hpp"
#include "fdvae/losses.hpp"
#include "kl_oracle.hpp"
#include "loss_gradcheck.hpp"

namespace fdvae::loss {
namespace {

using TD = BasicTensor<double>;

TEST(LossGradients, EveryTermMatchesFiniteDifferences) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    testing::ToyNetwork net(seed);
    ASSERT_EQ(net.parameter_count(), 10u);
    for (const auto& check : net.CheckAll()) {
      EXPECT_LT(check.relative_error, 1e-6) << check.term << " seed " << seed;
    }
  }
}

TEST(KlDivergence, MatchesMonteCarlo) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> mu_dist(-2.0, 2.0), lv_dist(-2.0, 1.0);
  for (int k = 0; k < 5; ++k) {
    std::vector<double> mu(3), lv(3);
    for (auto& v : mu) v = mu_dist(rng);
    for (auto& v : lv) v = lv_dist(rng);
    const double analytic = KlDivergence(TD({1, 3}, mu), TD({1, 3}, lv)).value;
    const double mc = testing::MonteCarloKl(mu, lv, 200000, rng);
    EXPECT_NEAR(mc / analytic, 1.0, 0.02) << "posterior " << k;
  }
}

TEST(KlDivergence, ZeroAtPriorAndBatchMean) {
  EXPECT_DOUBLE_EQ(KlDivergence(TD({4, 5}), TD({4, 5})).value, 0.0);
  // Two samples: KL 0 and KL 0.5 * mu^2 = 2 for mu = 2 -> mean 1.
  const auto r = KlDivergence(TD({2, 1}, {0.0, 2.0}), TD({2, 1}, {0.0, 0.0}));
  EXPECT_DOUBLE_EQ(r.value, 1.0);
  EXPECT_DOUBLE_EQ(r.grad_mu[1], 1.0);  // d/dmu (mu^2/2) / B
}

TEST(BinaryCrossEntropy, LabelFlipSymmetry) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 3.0);
  TD logits({16}), negated({16});
  std::vector<std::uint8_t> ones(16, 1), zeros(16, 0);
  for (std::size_t i = 0; i < 16; ++i) {
    logits[i] = n(rng);
    negated[i] = -logits[i];
  }
  EXPECT_NEAR(BinaryCrossEntropy(logits, ones).value, BinaryCrossEntropy(negated, zeros).value,
              1e-12);
  const std::vector<std::uint8_t> one = {1}, two = {1, 1};
  EXPECT_NEAR(BinaryCrossEntropy(TD({1}, {0.0}), one).value, std::numbers::ln2, 1e-15);
  // Large logits stay finite.
  EXPECT_TRUE(std::isfinite(BinaryCrossEntropy(TD({2}, {800.0, -800.0}), two).value));
}

TEST(BinaryCrossEntropy, RejectsBadLabels) {
  std::vector<std::uint8_t> labels = {0, 2};
  try {
    BinaryCrossEntropy(TD({2}), labels);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "LabelOutOfRange");
  }
  std::vector<std::uint8_t> short_labels = {0};
  EXPECT_THROW(BinaryCrossEntropy(TD({2}), short_labels), Error);
}

TEST(DecorrelationAdvLoss, EncoderObjectiveIsNegatedAdversary) {
  TD lp({4}, {0.3, -1.2, 2.0, 0.1}), lt({4}, {-0.4, 0.9, 0.0, 1.5});
  std::vector<std::uint8_t> yp = {1, 0, 1, 0}, yt = {0, 0, 1, 1};
  const auto r = DecorrelationAdvLoss(lp, yp, lt, yt);
  EXPECT_DOUBLE_EQ(r.encoder_objective, -r.adversary_objective);
  EXPECT_DOUBLE_EQ(r.adversary_objective, r.protected_from_target + r.target_from_protected);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(r.encoder_grad_p[i], -r.adversary_grad_p[i]);
    EXPECT_DOUBLE_EQ(r.encoder_grad_t[i], -r.adversary_grad_t[i]);
  }
}

TEST(TcLoss, DensityRatioSign) {
  // Logits favoring "real" give a positive log density ratio.
  TD logits({2, 2}, {2.0, 0.0, 1.0, 0.0});
  EXPECT_DOUBLE_EQ(TcLoss(logits).value, 1.5);
}

TEST(ReverseGradient, NegatesAndScales) {
  const TD g({3}, {1.0, -2.0, 0.5});
  const TD r = ReverseGradient(g, 10.0);
  EXPECT_DOUBLE_EQ(r[0], -10.0);
  EXPECT_DOUBLE_EQ(r[1], 20.0);
  EXPECT_DOUBLE_EQ(r[2], -5.0);
}

TEST(TotalRepresentationLoss, WeightsEachComponent) {
  LossComponents c;
  c.recon = 100;
  c.kl = 10;
  c.tc = 0.5;
  c.disc = 0.69;
  c.cls_t = 0.2;
  c.cls_p = 0.3;
  c.adv_t = -0.6;
  c.adv_p = -0.7;
  LossWeights w;
  w.kl_beta = 2;
  const auto r = TotalRepresentationLoss(c, w);
  EXPECT_DOUBLE_EQ(r.total, 100 + 2 * 10 + 50 * 0.5 + 5 * 0.5 + 10 * -1.3);
  LossComponents vae;
  vae.recon = 100;
  vae.kl = 10;
  EXPECT_DOUBLE_EQ(TotalRepresentationLoss(vae, LossWeights{}).total, 110);
}

TEST(TotalRepresentationLoss, NonFiniteComponentIsNamed) {
  LossComponents c;
  c.recon = 1;
  c.kl = std::nan("");
  try {
    TotalRepresentationLoss(c, LossWeights{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "NonFiniteComponent");
    EXPECT_NE(std::string(e.what()).find("kl"), std::string::npos);
  }
}

TEST(LossWeights, RejectsNegative) {
  LossWeights w;
  w.gamma = -1;
  EXPECT_THROW(w.Validate(), Error);
}

}  // namespace
}  // namespace fdvae::loss
