#pragma once

#include <cstddef>
#include <functional>

namespace mfcpn {

/// Worker count used when a call passes threads = 0. Defaults to the
/// hardware concurrency; the CLI sets it from --threads.
std::size_t default_threads();
void set_default_threads(std::size_t n);

/// Runs body(i) for i in [0, n) on up to `threads` workers. Results must be
/// written to per-index slots; the first exception is rethrown after all
/// workers stop.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body, std::size_t threads = 0);

}  // namespace mfcpn
