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

#ifndef FDVAE_TESTS_KL_ORACLE_HPP_
#define FDVAE_TESTS_KL_ORACLE_HPP_

#include <cmath>
#include <random>
#include <vector>

namespace fdvae::testing {

// Monte-Carlo KL(q || N(0, I)) for a diagonal Gaussian q = N(mu, exp(lv)).
inline double MonteCarloKl(const std::vector<double>& mu, const std::vector<double>& lv,
                           std::size_t samples, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  double sum = 0;
  for (std::size_t s = 0; s < samples; ++s) {
    double log_ratio = 0;
    for (std::size_t d = 0; d < mu.size(); ++d) {
      const double sigma = std::exp(0.5 * lv[d]);
      const double eps = normal(rng);
      const double z = mu[d] + sigma * eps;
      // log q(z) - log p(z); the 2*pi terms cancel.
      log_ratio += -0.5 * eps * eps - 0.5 * lv[d] + 0.5 * z * z;
    }
    sum += log_ratio;
  }
  return sum / double(samples);
}

}  // namespace fdvae::testing

#endif  // FDVAE_TESTS_KL_ORACLE_HPP_
