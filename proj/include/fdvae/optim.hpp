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

#ifndef FDVAE_OPTIM_HPP_
#define FDVAE_OPTIM_HPP_

#include <cmath>
#include <vector>

#include "fdvae/layers.hpp"

namespace fdvae::nn {

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adaptive moment estimation over a fixed parameter group.
template <typename T>
class Adam {
 public:
  Adam(std::vector<Parameter<T>*> params, AdamOptions options)
      : params_(std::move(params)), options_(options) {
    for (auto* p : params_) {
      first_.emplace_back(p->value.size(), 0.0);
      second_.emplace_back(p->value.size(), 0.0);
    }
  }

  void ZeroGrad() { nn::ZeroGrad(params_); }

  void Step() {
    ++step_;
    const double correction1 = 1.0 - std::pow(options_.beta1, double(step_));
    const double correction2 = 1.0 - std::pow(options_.beta2, double(step_));
    const double lr = options_.learning_rate;
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& value = params_[k]->value;
      const auto& grad = params_[k]->grad;
      auto& m = first_[k];
      auto& v = second_[k];
      for (std::size_t i = 0; i < value.size(); ++i) {
        const double g = grad[i];
        m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g;
        v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g * g;
        const double m_hat = m[i] / correction1;
        const double v_hat = v[i] / correction2;
        value[i] -= static_cast<T>(lr * m_hat / (std::sqrt(v_hat) + options_.epsilon));
      }
    }
  }

  const std::vector<Parameter<T>*>& params() const { return params_; }
  long steps() const { return step_; }

 private:
  std::vector<Parameter<T>*> params_;
  AdamOptions options_;
  std::vector<std::vector<double>> first_, second_;
  long step_ = 0;
};

}  // namespace fdvae::nn

#endif  // FDVAE_OPTIM_HPP_
