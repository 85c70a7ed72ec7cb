/* Copyright 2026 The pbe-fixer Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Portable random number generation. Every corpus and training batch is a
// pure function of the seeds below, so the exact algorithms are part of the
// file-format contract:
//
//   splitmix64(x):  x += 0x9E3779B97F4A7C15
//                   z = x
//                   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//                   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//                   return z ^ (z >> 31)
//
//   Stream (seed, domain, index): the 256-bit xoshiro256** state is filled by
//   four successive splitmix64 outputs starting from
//       x0 = seed ^ splitmix64(domain ^ splitmix64(index))
//   (each splitmix64 call above uses a fresh copy of its argument).
//
//   uniform(n):     rejection sampling, threshold = (2^64 - n) mod n; draw
//                   r until r >= threshold, return r mod n.
//   unit():         (next() >> 11) * 2^-53.

#ifndef PBE_RNG_HPP
#define PBE_RNG_HPP

#include <array>
#include <cstdint>
#include <span>

namespace pbe {

// Seed domains. Training batches and generated corpora never share a stream.
enum class SeedDomain : std::uint64_t {
  Corpus = 1,
  Train = 2,
  TrainEval = 3,
  Init = 4,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  using State = std::array<std::uint64_t, 4>;

  explicit Rng(std::uint64_t seed = 0);
  static Rng stream(std::uint64_t seed, SeedDomain domain, std::uint64_t index);
  static Rng from_state(const State& s);

  std::uint64_t next();
  // Uniform in [0, n); n > 0.
  std::uint64_t uniform(std::uint64_t n);
  int uniform_int(int lo, int hi);  // inclusive bounds
  double unit();
  bool bernoulli(double p) { return unit() < p; }
  // Index drawn proportionally to nonnegative weights (not all zero).
  std::size_t weighted(std::span<const double> weights);

  const State& state() const { return s_; }

 private:
  State s_{};
};

}  // namespace pbe

#endif  // PBE_RNG_HPP
