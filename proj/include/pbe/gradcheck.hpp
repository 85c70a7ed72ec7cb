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

// Finite-difference checks of every graph op and of the full task loss, in
// double precision.

#ifndef PBE_GRADCHECK_HPP
#define PBE_GRADCHECK_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "pbe/autodiff.hpp"

namespace pbe {

inline constexpr double kGradCheckTolerance = 1e-4;

struct GradCheckCase {
  std::string name;
  ad::GradCheckReport report;
};

// One case per op, each reduced to a scalar through fixed random
// projections.
std::vector<GradCheckCase> op_gradchecks(std::uint64_t seed);

// task_loss of a small model (hidden <= 16) with the intermediate programs
// frozen at their unperturbed greedy decodes. max_per_param = 0 checks every
// scalar.
GradCheckCase task_loss_gradcheck(std::uint64_t seed, int hidden = 8, std::size_t max_per_param = 0);

}  // namespace pbe

#endif  // PBE_GRADCHECK_HPP
