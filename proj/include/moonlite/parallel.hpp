// Copyright 2026 moonlite authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>

namespace moonlite {

// Runs fn(0..n-1) across up to `threads` workers (0 = hardware
// concurrency). Each index owns its output slot, so results are
// independent of scheduling and thread count; reductions over slots stay
// with the caller, in index order.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

int resolve_threads(int configured);

}  // namespace moonlite
