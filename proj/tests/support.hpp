#pragma once

// Shared helpers for the unit tests and the acceptance runner: random test
// instances and independent oracles.

#include "mfcpn/measures.hpp"
#include "mfcpn/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <vector>

namespace mfcpn::testing {

inline std::vector<double> random_weights(Stream& s, std::size_t n) {
    std::vector<double> w(n);
    double tot = 0.0;
    for (auto& v : w) {
        v = 0.05 + s.uniform();
        tot += v;
    }
    for (auto& v : w) v /= tot;
    return w;
}

inline EmpiricalMeasure random_measure(Stream& s, std::size_t n, std::size_t dim = 1, double scale = 1.0) {
    std::vector<double> atoms(n * dim);
    for (auto& a : atoms) a = scale * s.normal();
    return EmpiricalMeasure(dim, std::move(atoms), random_weights(s, n));
}

/// Atoms on the lattice k / 100 inside [-1, 1].
inline EmpiricalMeasure random_lattice_measure(Stream& s, std::size_t n) {
    std::vector<double> atoms(n);
    for (auto& a : atoms) a = static_cast<double>(static_cast<int>(s.uniform() * 201.0) - 100) / 100.0;
    return EmpiricalMeasure(1, std::move(atoms), random_weights(s, n));
}

inline ControlMeasure random_control_measure(Stream& s, std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<double> atoms(n);
    for (auto& a : atoms) a = lo + (hi - lo) * s.uniform();
    return ControlMeasure(1, std::move(atoms), random_weights(s, n));
}

/// sup of the integral of f against a - b over piecewise-linear f on the
/// 0.01 lattice of [-1, 1] with |f| <= 1 and slope <= 1, by dynamic
/// programming over lattice values (multiples of 0.01). Atoms must lie on
/// the lattice. The difference-constraint LP has lattice-valued vertices, so
/// the search is exact.
inline double fm_lattice_oracle(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
    constexpr int K = 201;       // lattice points -1, -0.99, ..., 1
    constexpr int L = 201;       // value levels -1, ..., 1 in steps of 0.01
    std::vector<double> c(K, 0.0);
    const auto index = [](double x) { return static_cast<int>(std::lround(x * 100.0)) + 100; };
    for (std::size_t i = 0; i < a.size(); ++i) c.at(index(a.atom(i)[0])) += a.weight(i);
    for (std::size_t i = 0; i < b.size(); ++i) c.at(index(b.atom(i)[0])) -= b.weight(i);
    std::vector<double> best(L), next(L);
    for (int v = 0; v < L; ++v) best[v] = c[0] * (v - 100) / 100.0;
    for (int k = 1; k < K; ++k) {
        for (int v = 0; v < L; ++v) {
            double m = best[v];
            if (v > 0) m = std::max(m, best[v - 1]);
            if (v + 1 < L) m = std::max(m, best[v + 1]);
            next[v] = m + c[k] * (v - 100) / 100.0;
        }
        best.swap(next);
    }
    return *std::max_element(best.begin(), best.end());
}

}  // namespace mfcpn::testing
