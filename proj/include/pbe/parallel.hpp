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

// Task-level data parallelism. Every parallel loop in the library goes through
// for_each_index so that the serial path stays available as the reference
// implementation for tests and benchmarks. Loop bodies must only write to
// their own index.

#ifndef PBE_PARALLEL_HPP
#define PBE_PARALLEL_HPP

#include <cstddef>
#include <exception>
#include <mutex>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pbe {

struct Exec {
  bool parallel = false;
  int workers = 0;  // 0: OpenMP default

  static Exec serial() { return {}; }
  static Exec threads(int workers = 0) { return {true, workers}; }
};

inline int available_workers() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

template <class Fn>
void for_each_index(std::size_t n, Exec exec, Fn&& fn) {
  if (!exec.parallel) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr first_error;
  std::mutex error_mu;
  const long count = static_cast<long>(n);
#ifdef _OPENMP
  const int workers = exec.workers > 0 ? exec.workers : omp_get_max_threads();
#pragma omp parallel for schedule(dynamic, 1) num_threads(workers)
#endif
  for (long i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard<std::mutex> lock(error_mu);
      if (!first_error) first_error = std::current_exception();
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace pbe

#endif  // PBE_PARALLEL_HPP
