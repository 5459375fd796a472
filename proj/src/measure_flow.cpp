#include "mfcpn/measure_flow.hpp"

#include "mfcpn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace mfcpn {

RelaxedKernel RelaxedKernel::dirac(std::span<const double> controls, std::size_t control_dim) {
    if (control_dim == 0 || controls.size() % control_dim != 0) {
        throw DimensionError("Dirac kernel: control array is not a multiple of the control dimension");
    }
    RelaxedKernel k;
    for (std::size_t i = 0; i < controls.size() / control_dim; ++i) {
        const auto* u = controls.data() + i * control_dim;
        k.images.push_back(ControlMeasure::dirac(std::vector<double>(u, u + control_dim)));
    }
    return k;
}

void RelaxedKernel::check_covers(const EmpiricalMeasure& mu) const {
    if (images.size() != mu.size()) {
        throw CoverageError("kernel has " + std::to_string(images.size()) + " images for a measure with " +
                            std::to_string(mu.size()) + " atoms");
    }
}

TestFunctionDictionary TestFunctionDictionary::builtin(std::size_t dim) {
    TestFunctionDictionary d(dim);
    const std::size_t n = dim;
    d.add({"const",
           [](Point) { return 1.0; },
           [](Point, OutVec g) { std::fill(g.begin(), g.end(), 0.0); },
           [](Point, OutVec h) { std::fill(h.begin(), h.end(), 0.0); }});
    for (std::size_t c = 0; c < n; ++c) {
        for (int k = 1; k <= 4; ++k) {
            d.add({"x" + std::to_string(c) + "^" + std::to_string(k),
                   [c, k](Point x) { return std::pow(x[c], k); },
                   [c, k](Point x, OutVec g) {
                       std::fill(g.begin(), g.end(), 0.0);
                       g[c] = k * std::pow(x[c], k - 1);
                   },
                   [c, k, n](Point x, OutVec h) {
                       std::fill(h.begin(), h.end(), 0.0);
                       h[c * n + c] = k >= 2 ? k * (k - 1) * std::pow(x[c], k - 2) : 0.0;
                   }});
        }
    }
    for (double a : {-1.0, 0.0, 1.0}) {
        auto val = [a](Point x) {
            double r2 = 0.0;
            for (double v : x) r2 += (v - a) * (v - a);
            return std::exp(-0.5 * r2);
        };
        d.add({"gauss(" + std::to_string(a) + ")", val,
               [a, val](Point x, OutVec g) {
                   const double e = val(x);
                   for (std::size_t c = 0; c < x.size(); ++c) g[c] = -(x[c] - a) * e;
               },
               [a, val, n](Point x, OutVec h) {
                   const double e = val(x);
                   for (std::size_t r = 0; r < n; ++r) {
                       for (std::size_t c = 0; c < n; ++c) {
                           h[r * n + c] = ((x[r] - a) * (x[c] - a) - (r == c ? 1.0 : 0.0)) * e;
                       }
                   }
               }});
    }
    for (std::size_t c = 0; c < n; ++c) {
        d.add({"clamp" + std::to_string(c),
               [c](Point x) { return x[c] / std::sqrt(1.0 + x[c] * x[c]); },
               [c](Point x, OutVec g) {
                   std::fill(g.begin(), g.end(), 0.0);
                   g[c] = std::pow(1.0 + x[c] * x[c], -1.5);
               },
               [c, n](Point x, OutVec h) {
                   std::fill(h.begin(), h.end(), 0.0);
                   h[c * n + c] = -3.0 * x[c] * std::pow(1.0 + x[c] * x[c], -2.5);
               }});
    }
    return d;
}

double TestFunctionDictionary::consistency_error(std::span<const double> points, double h) const {
    const std::size_t n = dim_;
    double worst = 0.0;
    std::vector<double> g(n), gp(n), gm(n), hess(n * n), xp(n), xm(n);
    for (const auto& f : entries_) {
        for (std::size_t p = 0; p + n <= points.size(); p += n) {
            const Point x(points.data() + p, n);
            f.gradient(x, g);
            f.hessian(x, hess);
            for (std::size_t c = 0; c < n; ++c) {
                std::copy(x.begin(), x.end(), xp.begin());
                std::copy(x.begin(), x.end(), xm.begin());
                xp[c] += h;
                xm[c] -= h;
                const double fd = (f.value(xp) - f.value(xm)) / (2.0 * h);
                worst = std::max(worst, std::abs(fd - g[c]));
                f.gradient(xp, gp);
                f.gradient(xm, gm);
                for (std::size_t r = 0; r < n; ++r) {
                    worst = std::max(worst, std::abs((gp[r] - gm[r]) / (2.0 * h) - hess[r * n + c]));
                }
            }
        }
    }
    return worst;
}

std::vector<double> joint_features(const EmpiricalMeasure& mu, const RelaxedKernel& kernel,
                                   const CoefficientSet& coeffs) {
    kernel.check_covers(mu);
    if (mu.dim() != coeffs.state_dim) throw DimensionError("measure dimension differs from the state dimension");
    std::vector<double> w(mu.weights().begin(), mu.weights().end());
    const auto xi = JointEmpiricalMeasure::relaxed(mu.dim(), {mu.atoms().begin(), mu.atoms().end()}, kernel.images,
                                                   std::move(w));
    return coeffs.summarize(project(xi));
}

AggregatedCoefficients aggregate_coeffs(const EmpiricalMeasure& mu, const RelaxedKernel& kernel,
                                        const CoefficientSet& coeffs) {
    coeffs.require_core();
    AggregatedCoefficients agg;
    agg.features = joint_features(mu, kernel, coeffs);
    const std::size_t n = coeffs.state_dim;
    const std::size_t d = coeffs.noise_dim;
    const std::size_t J = coeffs.jumps.size();
    agg.atoms = mu.size();
    agg.state_dim = n;
    agg.marks = J;
    agg.drift.assign(agg.atoms * n, 0.0);
    agg.diffusion_cov.assign(agg.atoms * n * n, 0.0);
    agg.jump.assign(agg.atoms * J * n, 0.0);
    std::vector<double> b(n), s(n * d), g(n);
    for (std::size_t i = 0; i < agg.atoms; ++i) {
        const auto x = mu.atom(i);
        const auto& q = kernel.images[i];
        for (std::size_t j = 0; j < q.size(); ++j) {
            const double w = q.weight(j);
            const auto u = q.atom(j);
            coeffs.drift(x, agg.features, u, b);
            for (std::size_t c = 0; c < n; ++c) agg.drift[i * n + c] += w * b[c];
            coeffs.diffusion(x, agg.features, u, s);
            for (std::size_t r = 0; r < n; ++r) {
                for (std::size_t c = 0; c < n; ++c) {
                    double acc = 0.0;
                    for (std::size_t e = 0; e < d; ++e) acc += s[r * d + e] * s[c * d + e];
                    agg.diffusion_cov[(i * n + r) * n + c] += w * acc;
                }
            }
            for (std::size_t z = 0; z < J; ++z) {
                coeffs.jump(x, agg.features, u, z, g);
                for (std::size_t c = 0; c < n; ++c) agg.jump[(i * J + z) * n + c] += w * g[c];
            }
        }
    }
    return agg;
}

EmpiricalMeasure shift_adjoint(const EmpiricalMeasure& mu, const RelaxedKernel& kernel, std::size_t mark,
                               const CoefficientSet& coeffs) {
    coeffs.require_core();
    if (mark >= coeffs.jumps.size()) throw DomainError("shift_adjoint: mark index out of range");
    const auto f = joint_features(mu, kernel, coeffs);
    const std::size_t n = mu.dim();
    std::vector<double> atoms;
    std::vector<double> weights;
    std::vector<double> g(n);
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const auto x = mu.atom(i);
        const auto& q = kernel.images[i];
        for (std::size_t j = 0; j < q.size(); ++j) {
            coeffs.jump(x, f, q.atom(j), mark, g);
            for (std::size_t c = 0; c < n; ++c) atoms.push_back(x[c] + g[c]);
            weights.push_back(mu.weight(i) * q.weight(j));
        }
    }
    return EmpiricalMeasure(n, std::move(atoms), std::move(weights));
}

std::vector<double> apply_I(const TestFunction& phi, const EmpiricalMeasure& mu, const RelaxedKernel& kernel,
                            std::size_t mark, const CoefficientSet& coeffs) {
    coeffs.require_core();
    if (mark >= coeffs.jumps.size()) throw DomainError("apply_I: mark index out of range");
    const auto f = joint_features(mu, kernel, coeffs);
    const std::size_t n = mu.dim();
    std::vector<double> out(mu.size(), 0.0);
    std::vector<double> g(n), y(n);
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const auto x = mu.atom(i);
        const auto& q = kernel.images[i];
        for (std::size_t j = 0; j < q.size(); ++j) {
            coeffs.jump(x, f, q.atom(j), mark, g);
            for (std::size_t c = 0; c < n; ++c) y[c] = x[c] + g[c];
            out[i] += q.weight(j) * phi.value(y);
        }
    }
    return out;
}

double SignedMeasure::total_mass() const { return std::accumulate(weights.begin(), weights.end(), 0.0); }

double SignedMeasure::pair(const TestFunction& phi) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i] * phi.value(Point(atoms.data() + i * dim, dim));
    }
    return acc;
}

SignedMeasure apply_A1(const EmpiricalMeasure& mu, const RelaxedKernel& kernel, std::size_t mark,
                       const CoefficientSet& coeffs) {
    const auto shifted = shift_adjoint(mu, kernel, mark, coeffs);
    SignedMeasure s;
    s.dim = mu.dim();
    s.atoms.assign(shifted.atoms().begin(), shifted.atoms().end());
    s.weights.assign(shifted.weights().begin(), shifted.weights().end());
    s.atoms.insert(s.atoms.end(), mu.atoms().begin(), mu.atoms().end());
    for (double w : mu.weights()) s.weights.push_back(-w);
    return s;
}

namespace {

// Integral over mu of (b_hat - sum lambda gamma_hat) . grad + 1/2 tr(a_hat hess)
// with grad and hess supplied per atom.
double drift_pairing(const EmpiricalMeasure& mu, const AggregatedCoefficients& agg, const CoefficientSet& coeffs,
                     const std::function<void(Point, OutVec)>& grad, const std::function<void(Point, OutVec)>& hess) {
    const std::size_t n = agg.state_dim;
    const std::size_t J = agg.marks;
    std::vector<double> g(n), h(n * n);
    double acc = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const auto x = mu.atom(i);
        grad(x, g);
        hess(x, h);
        double v = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
            double drift = agg.drift[i * n + c];
            for (std::size_t z = 0; z < J; ++z) drift -= coeffs.jumps.intensities[z] * agg.jump[(i * J + z) * n + c];
            v += drift * g[c];
        }
        double tr = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < n; ++c) tr += agg.diffusion_cov[(i * n + r) * n + c] * h[c * n + r];
        }
        acc += mu.weight(i) * (v + 0.5 * tr);
    }
    return acc;
}

double pair_measure(const TestFunction& phi, const EmpiricalMeasure& mu) {
    return mu.integrate([&](Point x) { return phi.value(x); });
}

}  // namespace

double pair_A0(const TestFunction& phi, const EmpiricalMeasure& mu, const RelaxedKernel& kernel,
               const CoefficientSet& coeffs) {
    const auto agg = aggregate_coeffs(mu, kernel, coeffs);
    return drift_pairing(mu, agg, coeffs, phi.gradient, phi.hessian);
}

std::vector<double> fp_step(const EmpiricalMeasure& mu, const RelaxedKernel& kernel, double dt,
                            std::span<const std::size_t> event_marks, const CoefficientSet& coeffs,
                            const TestFunctionDictionary& dictionary) {
    const auto agg = aggregate_coeffs(mu, kernel, coeffs);
    std::vector<SignedMeasure> a1;
    for (std::size_t z : event_marks) a1.push_back(apply_A1(mu, kernel, z, coeffs));
    std::vector<double> out;
    out.reserve(dictionary.size());
    for (const auto& phi : dictionary.entries()) {
        double v = pair_measure(phi, mu) + dt * drift_pairing(mu, agg, coeffs, phi.gradient, phi.hessian);
        for (const auto& s : a1) v += s.pair(phi);
        out.push_back(v);
    }
    return out;
}

MeasurePath measure_path_from_cloud(const ParticleCloud& cloud) {
    if (!cloud.recorded) throw ConfigurationError("measure path needs a recorded cloud");
    if (cloud.mode != NoiseMode::common) throw ConfigurationError("measure path needs a common-noise cloud");
    MeasurePath path;
    path.times = cloud.grid.times;
    const std::size_t N = cloud.n_particles;
    const std::size_t m = cloud.control_dim;
    for (std::size_t k = 0; k < cloud.grid.nodes(); ++k) path.measures.push_back(cloud.measure_at(k));
    for (std::size_t k = 0; k < cloud.grid.steps(); ++k) {
        path.kernels.push_back(RelaxedKernel::dirac(std::span<const double>(cloud.controls.data() + k * N * m, N * m), m));
    }
    for (const auto& j : cloud.jumps) {
        path.jumps.push_back({j.node, j.mark, EmpiricalMeasure::uniform(cloud.state_dim, j.pre_states),
                              RelaxedKernel::dirac(j.pre_controls, m)});
    }
    return path;
}

std::vector<double> ito_residual(const ValueFunctional& J, const MeasurePath& path, const CoefficientSet& coeffs) {
    if (!J.value || !J.time_derivative || !J.measure_derivative || !J.measure_hessian) {
        throw ConfigurationError("ito_residual: value functional lacks a derivative evaluator");
    }
    if (path.measures.size() != path.times.size() || path.kernels.size() + 1 != path.times.size()) {
        throw DimensionError("ito_residual: measure path is inconsistent");
    }
    std::vector<const FlowJump*> jump_at(path.times.size(), nullptr);
    for (const auto& j : path.jumps) jump_at.at(j.node) = &j;

    std::vector<double> res;
    res.reserve(path.kernels.size());
    for (std::size_t k = 0; k + 1 < path.times.size(); ++k) {
        const double t = path.times[k];
        const double h = path.times[k + 1] - t;
        const auto& mu = path.measures[k];
        const auto agg = aggregate_coeffs(mu, path.kernels[k], coeffs);
        const auto grad = [&](Point x, OutVec out) { J.measure_derivative(t, mu, x, out); };
        const auto hess = [&](Point x, OutVec out) { J.measure_hessian(t, mu, x, out); };
        double r = J.value(path.times[k + 1], path.measures[k + 1]) - J.value(t, mu);
        r -= h * (J.time_derivative(t, mu) + drift_pairing(mu, agg, coeffs, grad, hess));
        if (const auto* jp = jump_at[k + 1]) {
            const double te = path.times[k + 1];
            r -= J.value(te, shift_adjoint(jp->pre, jp->kernel, jp->mark, coeffs)) - J.value(te, jp->pre);
        }
        res.push_back(r);
    }
    return res;
}

}  // namespace mfcpn
