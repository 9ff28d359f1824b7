// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>

namespace taskvec {

/// Runs fn(0..count-1) on up to `threads` workers. Items are claimed dynamically, so
/// fn must write only to per-item state. Every item runs even if some throw; the
/// exception from the lowest failing index is then rethrown.
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn);

/// 0 means "use the hardware concurrency".
unsigned resolve_thread_count(unsigned requested);

}  // namespace taskvec
