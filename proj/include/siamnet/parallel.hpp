#pragma once

#include <cstddef>
#include <functional>
#include <optional>

namespace siamnet {

/// Splits [0, n) into `workers` contiguous chunks and runs `body(begin, end, worker)`
/// on each, one std::thread per chunk. Chunk boundaries depend only on `n` and
/// `workers`, so per-worker reductions merged in worker order are deterministic.
void parallel_for(std::size_t n, std::size_t workers,
                  const std::function<void(std::size_t, std::size_t, std::size_t)>& body);

/// Effective worker count: explicit request, else $SIAMNET_THREADS, else 1.
std::size_t resolve_threads(std::optional<std::size_t> requested);

}  // namespace siamnet
