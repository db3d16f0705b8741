// Copyright 2026 The Keymask Authors.
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

#pragma once

#include <cstddef>
#include <functional>

namespace keymask {

// Runs fn(0..n-1) on up to `threads` workers (0 = hardware concurrency).
// Every index runs exactly once; if any calls throw, the exception of the
// lowest failing index is rethrown after all workers finish.
void parallel_for(size_t n, const std::function<void(size_t)>& fn, int threads = 0);

}  // namespace keymask
