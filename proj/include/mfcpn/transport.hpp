#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mfcpn {

/// Largest atom count accepted by the exact transport solver on either side.
inline constexpr std::size_t kMaxTransportAtoms = 64;

struct TransportPlan {
    double cost = 0.0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> flow;  // rows x cols, row-major
};

/// Exact discrete optimal transport between two probability vectors.
///
/// `cost` is a rows x cols row-major ground-cost matrix with nonnegative
/// entries. Solved as a min-cost flow by successive shortest paths with
/// Dijkstra on reduced costs; every augmentation saturates a supply, a
/// demand or a residual arc, so the plan is a vertex of the transport
/// polytope. Throws SizeError above kMaxTransportAtoms atoms per side.
TransportPlan solve_transport(std::span<const double> supply, std::span<const double> demand,
                              std::span<const double> cost);

}  // namespace mfcpn
