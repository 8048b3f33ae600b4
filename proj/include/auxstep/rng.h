// Copyright 2026 The auxstep Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef AUXSTEP_RNG_H_
#define AUXSTEP_RNG_H_

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace auxstep {

// std::mt19937_64 has a standardized output sequence, but the standard
// distributions do not. Everything that must be reproducible across
// toolchains goes through the helpers below instead.
using Engine = std::mt19937_64;

// Derives an independent 64-bit seed from a base seed and a tag.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

// Uniform double in [0, 1) with 53 random bits.
double uniform01(Engine& engine);
double uniform(Engine& engine, double lo, double hi);
// Uniform integer in [0, n). n must be positive.
std::uint64_t uniform_index(Engine& engine, std::uint64_t n);
// Standard normal via Box-Muller.
double normal(Engine& engine);

// Fisher-Yates permutation of [0, n).
std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed);

// FNV-1a over raw bytes; used for frozen-weight fingerprints.
std::uint64_t fnv1a(const void* data, std::size_t size,
                    std::uint64_t basis = 14695981039346656037ull);

}  // namespace auxstep

#endif  // AUXSTEP_RNG_H_
