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

#ifndef FDVAE_DIGEST_HPP_
#define FDVAE_DIGEST_HPP_

#include <cstdint>
#include <cstdio>
#include <string>
#include <string_view>

namespace fdvae {

// 64-bit FNV-1a. Stable across platforms and runs, unlike std::hash.
class Fnv1a {
 public:
  void Update(const void* data, std::size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
      state_ ^= bytes[i];
      state_ *= 0x100000001b3ULL;
    }
  }
  void Update(std::string_view text) { Update(text.data(), text.size()); }

  std::uint64_t value() const { return state_; }

  std::string Hex() const {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(state_));
    return buf;
  }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

}  // namespace fdvae

#endif  // FDVAE_DIGEST_HPP_
