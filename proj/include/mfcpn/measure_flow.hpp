#pragma once

// Lifted dynamics on empirical measures: aggregated coefficients, the jump
// operator I and its adjoint (an atom expansion), A0 in weak form, one
// Fokker-Planck prediction step and the Ito-formula residual of a value
// functional along a measure path.

#include "mfcpn/coefficients.hpp"
#include "mfcpn/measures.hpp"
#include "mfcpn/simulate.hpp"

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace mfcpn {

/// x -> u_hat(x), stored per atom of the measure it accompanies.
struct RelaxedKernel {
    std::vector<ControlMeasure> images;

    /// Dirac kernel from row-major controls (one row of length m per atom).
    static RelaxedKernel dirac(std::span<const double> controls, std::size_t control_dim);
    std::size_t size() const noexcept { return images.size(); }
    /// Throws CoverageError unless there is one image per atom of mu.
    void check_covers(const EmpiricalMeasure& mu) const;
};

struct TestFunction {
    std::string name;
    std::function<double(Point)> value;
    std::function<void(Point, OutVec)> gradient;  // n
    std::function<void(Point, OutVec)> hessian;   // n x n
};

class TestFunctionDictionary {
public:
    /// Constant, monomials x_c^k for k = 1..4, Gaussians exp(-|x - a|^2 / 2)
    /// centred at a = -1, 0, 1 (all coordinates), and x_c / sqrt(1 + x_c^2).
    static TestFunctionDictionary builtin(std::size_t dim);

    void add(TestFunction f) { entries_.push_back(std::move(f)); }
    const std::vector<TestFunction>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    const TestFunction& operator[](std::size_t i) const { return entries_[i]; }

    /// Largest central-difference mismatch of gradients and Hessians at the
    /// given row-major points.
    double consistency_error(std::span<const double> points, double h = 1e-4) const;

private:
    explicit TestFunctionDictionary(std::size_t dim) : dim_(dim) {}
    std::size_t dim_;
    std::vector<TestFunction> entries_;
};

/// Atomwise aggregated coefficients under the joint law mu . u_hat.
struct AggregatedCoefficients {
    std::size_t atoms = 0;
    std::size_t state_dim = 1;
    std::size_t marks = 0;
    std::vector<double> features;
    std::vector<double> drift;          // atoms x n
    std::vector<double> diffusion_cov;  // atoms x n x n, integral of sigma sigma^T
    std::vector<double> jump;           // atoms x marks x n
};

/// Features of the joint law mu . u_hat (the projection of the relaxed joint).
std::vector<double> joint_features(const EmpiricalMeasure& mu, const RelaxedKernel& kernel,
                                   const CoefficientSet& coeffs);

AggregatedCoefficients aggregate_coeffs(const EmpiricalMeasure& mu, const RelaxedKernel& kernel,
                                        const CoefficientSet& coeffs);

/// I*mu: each atom x expands to x + gamma(x, mu . u_hat, u, z) over u_hat(x).
EmpiricalMeasure shift_adjoint(const EmpiricalMeasure& mu, const RelaxedKernel& kernel, std::size_t mark,
                               const CoefficientSet& coeffs);

/// I(phi)(x_i) at every atom of mu, straight from the definition.
std::vector<double> apply_I(const TestFunction& phi, const EmpiricalMeasure& mu, const RelaxedKernel& kernel,
                            std::size_t mark, const CoefficientSet& coeffs);

/// Finite signed measure; weights may be negative.
struct SignedMeasure {
    std::size_t dim = 1;
    std::vector<double> atoms;
    std::vector<double> weights;

    double total_mass() const;
    double pair(const TestFunction& phi) const;
};

/// I*mu - mu as a signed atom list.
SignedMeasure apply_A1(const EmpiricalMeasure& mu, const RelaxedKernel& kernel, std::size_t mark,
                       const CoefficientSet& coeffs);

/// integral of (b_hat - sum_j lambda_j gamma_hat_j) . grad phi + 1/2 tr(a_hat Hess phi) d mu
double pair_A0(const TestFunction& phi, const EmpiricalMeasure& mu, const RelaxedKernel& kernel,
               const CoefficientSet& coeffs);

/// Predicted <phi, mu_{t+dt}> for every dictionary entry:
/// <phi, mu> + pair_A0 dt + sum over event marks of <phi, A1 mu>.
std::vector<double> fp_step(const EmpiricalMeasure& mu, const RelaxedKernel& kernel, double dt,
                            std::span<const std::size_t> event_marks, const CoefficientSet& coeffs,
                            const TestFunctionDictionary& dictionary);

/// J(t, mu) with its time derivative, L-derivative d_mu J(t, mu)(x) (n) and
/// d_x d_mu J(t, mu)(x) (n x n).
struct ValueFunctional {
    std::function<double(double, const EmpiricalMeasure&)> value;
    std::function<double(double, const EmpiricalMeasure&)> time_derivative;
    std::function<void(double, const EmpiricalMeasure&, Point, OutVec)> measure_derivative;
    std::function<void(double, const EmpiricalMeasure&, Point, OutVec)> measure_hessian;
};

/// Pre-jump law and kernel at an event node.
struct FlowJump {
    std::size_t node = 0;
    std::size_t mark = 0;
    EmpiricalMeasure pre;
    RelaxedKernel kernel;
};

/// Measures at grid nodes (post-jump), kernels per step, and the jumps.
struct MeasurePath {
    std::vector<double> times;
    std::vector<EmpiricalMeasure> measures;
    std::vector<RelaxedKernel> kernels;
    std::vector<FlowJump> jumps;
};

/// Reads a recorded common-mode strict cloud as a measure path with Dirac kernels.
MeasurePath measure_path_from_cloud(const ParticleCloud& cloud);

/// Per step k: J(t_{k+1}, mu_{k+1}) - J(t_k, mu_k) minus the left-endpoint
/// drift term (d_t J plus the A0 pairing of d_mu J) times the step, minus
/// J(t, I*mu_-) - J(t, mu_-) for an event at node k+1. Throws
/// ConfigurationError when J lacks a derivative evaluator.
std::vector<double> ito_residual(const ValueFunctional& J, const MeasurePath& path, const CoefficientSet& coeffs);

}  // namespace mfcpn
