// Copyright 2026 The srctrace Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SRCTRACE_RNG_H_
#define SRCTRACE_RNG_H_

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace srctrace {

// One step of the splitmix64 sequence.
std::uint64_t splitmix64(std::uint64_t& state);

// Derives an independent stream seed for a named component from a root seed.
// Stable across platforms: FNV-1a of the name mixed through splitmix64.
std::uint64_t derive_seed(std::uint64_t root, std::string_view component);

// Random source with platform-independent output. The engine is
// std::mt19937_64 (fully specified by the standard); all distributions are
// implemented here because the standard library's are not.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer on [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n);
  double normal();
  double gamma(double shape);
  double beta(double a, double b);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace srctrace

#endif  // SRCTRACE_RNG_H_
