#pragma once

#include <cstddef>
#include <functional>

namespace l3s {

/// Caps the worker count used by parallel_chunks. 0 means "use L3S_THREADS
/// or 1". Results never depend on the worker count: work is split into fixed
/// chunks and callers reduce chunk partials in chunk order.
void set_thread_count(int threads);
int thread_count();

/// Splits [0, total) into ceil(total / chunk) fixed chunks and calls
/// body(chunk_index, begin, end) for each, possibly concurrently.
void parallel_chunks(std::size_t total, std::size_t chunk,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& body);

}  // namespace l3s
