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

// Bounded fan-out over independent work items.

#ifndef AUXSTEP_PARALLEL_H_
#define AUXSTEP_PARALLEL_H_

#include <cstddef>
#include <functional>

namespace auxstep {

// Calls f(i) for every i in [0, n) on up to `jobs` threads (the caller's
// thread included). Items are claimed in index order; after the first
// exception no new items start, and that exception is rethrown once every
// running item has finished.
void parallel_for(std::size_t n, std::size_t jobs,
                  const std::function<void(std::size_t)>& f);

}  // namespace auxstep

#endif  // AUXSTEP_PARALLEL_H_
