#pragma once

#include <cstddef>
#include <functional>

namespace metadiff {

/// Worker cap used by the parallel loops in this library. Defaults to the
/// hardware concurrency; 0 restores the default.
void set_thread_count(std::size_t n);
std::size_t thread_count();

/// Runs body(i) for i in [0, n). Work items must be independent; results
/// are identical to a sequential loop as long as body writes only to
/// slot i.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace metadiff
