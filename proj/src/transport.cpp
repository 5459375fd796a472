#include "mfcpn/transport.hpp"

#include "mfcpn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace mfcpn {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kResidualEps = 1e-15;

// Dense residual network: node 0 is the super source, 1..m the supply atoms,
// m+1..m+n the demand atoms and m+n+1 the super sink.
class FlowNetwork {
public:
    explicit FlowNetwork(std::size_t nodes)
        : n_(nodes), cap_(nodes * nodes, 0.0), flow_(nodes * nodes, 0.0), cost_(nodes * nodes, 0.0) {}

    void add_arc(std::size_t u, std::size_t v, double capacity, double cost) {
        cap_[u * n_ + v] = capacity;
        cost_[u * n_ + v] = cost;
        cost_[v * n_ + u] = -cost;
    }

    double residual(std::size_t u, std::size_t v) const {
        return cap_[u * n_ + v] - flow_[u * n_ + v];
    }
    double cost(std::size_t u, std::size_t v) const { return cost_[u * n_ + v]; }
    double flow(std::size_t u, std::size_t v) const { return flow_[u * n_ + v]; }

    void push(std::size_t u, std::size_t v, double amount) {
        flow_[u * n_ + v] += amount;
        flow_[v * n_ + u] -= amount;
    }

    std::size_t size() const { return n_; }

private:
    std::size_t n_;
    std::vector<double> cap_;
    std::vector<double> flow_;
    std::vector<double> cost_;
};

}  // namespace

TransportPlan solve_transport(std::span<const double> supply, std::span<const double> demand,
                              std::span<const double> cost) {
    const std::size_t m = supply.size();
    const std::size_t n = demand.size();
    if (m == 0 || n == 0) {
        throw DimensionError("transport: empty marginal");
    }
    if (m > kMaxTransportAtoms || n > kMaxTransportAtoms) {
        throw SizeError("transport: " + std::to_string(std::max(m, n)) + " atoms exceeds the limit of " +
                        std::to_string(kMaxTransportAtoms));
    }
    if (cost.size() != m * n) {
        throw DimensionError("transport: cost matrix has wrong shape");
    }

    const std::size_t source = 0;
    const std::size_t sink = m + n + 1;
    FlowNetwork net(m + n + 2);
    for (std::size_t i = 0; i < m; ++i) {
        net.add_arc(source, 1 + i, supply[i], 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            net.add_arc(1 + i, 1 + m + j, kInf, cost[i * n + j]);
        }
    }
    for (std::size_t j = 0; j < n; ++j) {
        net.add_arc(1 + m + j, sink, demand[j], 0.0);
    }

    const double target = std::min(std::accumulate(supply.begin(), supply.end(), 0.0),
                                   std::accumulate(demand.begin(), demand.end(), 0.0));
    const std::size_t nodes = net.size();
    std::vector<double> potential(nodes, 0.0);
    std::vector<double> dist(nodes);
    std::vector<std::size_t> parent(nodes);
    std::vector<char> done(nodes);
    double shipped = 0.0;

    while (shipped < target - 1e-14) {
        std::fill(dist.begin(), dist.end(), kInf);
        std::fill(done.begin(), done.end(), 0);
        dist[source] = 0.0;
        for (;;) {
            std::size_t u = nodes;
            double best = kInf;
            for (std::size_t v = 0; v < nodes; ++v) {
                if (!done[v] && dist[v] < best) {
                    best = dist[v];
                    u = v;
                }
            }
            if (u == nodes) break;
            done[u] = 1;
            for (std::size_t v = 0; v < nodes; ++v) {
                if (done[v] || net.residual(u, v) <= kResidualEps) continue;
                const double reduced = std::max(0.0, net.cost(u, v) + potential[u] - potential[v]);
                if (dist[u] + reduced < dist[v]) {
                    dist[v] = dist[u] + reduced;
                    parent[v] = u;
                }
            }
        }
        if (dist[sink] == kInf) break;
        // Unreachable nodes advance by the largest finite distance so reduced
        // costs stay nonnegative once they become reachable again.
        double reach = 0.0;
        for (std::size_t v = 0; v < nodes; ++v) {
            if (dist[v] < kInf) reach = std::max(reach, dist[v]);
        }
        for (std::size_t v = 0; v < nodes; ++v) {
            potential[v] += dist[v] < kInf ? dist[v] : reach;
        }

        double bottleneck = target - shipped;
        for (std::size_t v = sink; v != source; v = parent[v]) {
            bottleneck = std::min(bottleneck, net.residual(parent[v], v));
        }
        for (std::size_t v = sink; v != source; v = parent[v]) {
            net.push(parent[v], v, bottleneck);
        }
        shipped += bottleneck;
    }

    TransportPlan plan;
    plan.rows = m;
    plan.cols = n;
    plan.flow.assign(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double f = std::max(0.0, net.flow(1 + i, 1 + m + j));
            plan.flow[i * n + j] = f;
            plan.cost += f * cost[i * n + j];
        }
    }
    return plan;
}

}  // namespace mfcpn
