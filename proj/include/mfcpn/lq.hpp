#pragma once

// Scalar linear-quadratic model: backward Riccati system for (beta, eta),
// optimal feedback, value function, adjoint ansatz and the quadratic
// minimizer used to evaluate the HJB operator in closed form.

#include "mfcpn/coefficients.hpp"
#include "mfcpn/measures.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace mfcpn {

struct RiccatiSolution {
    LQParams params;
    NoiseMode mode = NoiseMode::common;
    double gamma_l2 = 0.0;
    std::vector<double> times;  // uniform, times.front() == 0, times.back() == T
    std::vector<double> beta;
    std::vector<double> eta;

    std::size_t n_steps() const noexcept { return times.size() - 1; }
    double step() const noexcept { return params.T / static_cast<double>(n_steps()); }

    /// Linear interpolation between nodes; t is clamped to [0, T].
    double beta_at(double t) const;
    double eta_at(double t) const;
    /// Time derivatives from central differences of the node values
    /// (one-sided at the ends), interpolated linearly.
    double beta_dot_at(double t) const;
    double eta_dot_at(double t) const;
};

/// Right-hand sides (d beta/dt, d eta/dt) of the system at one point.
struct RiccatiRhs {
    double beta_dot;
    double eta_dot;
};
RiccatiRhs riccati_rhs(const LQParams& p, NoiseMode mode, double beta, double eta);

/// Classical RK4 backward from beta_T = c, eta_T = -c. Throws DomainError for
/// n_steps < 16 and IllPosedError at the first node where 1 + G beta <= 0 or
/// (common mode) 1 + G (beta + eta) <= 0, G = sum gamma_j^2 lambda_j.
RiccatiSolution solve_riccati(const LQParams& p, NoiseMode mode, std::size_t n_steps);

/// Largest |(y_{k+1} - y_k)/h - rhs(midpoint average)| over both components.
double riccati_midpoint_residual(const RiccatiSolution& sol);

/// Gains of the optimal feedback u = -mean_gain * m - dev_gain * (x - m).
struct FeedbackGains {
    double mean_gain;
    double dev_gain;
};
FeedbackGains optimal_gains(const RiccatiSolution& sol, double t);
double optimal_control(const RiccatiSolution& sol, double t, double x, double cond_mean);

/// 1/2 (beta_t <x^2, mu> + eta_t <x, mu>^2)
double value_function(const RiccatiSolution& sol, double t, const EmpiricalMeasure& mu);

/// p = beta x + eta m, P = beta sigma x, K_j = gamma_j (beta a + eta E a) in
/// common mode and gamma_j beta a in idiosyncratic mode, with a the optimal
/// control at (t, x, m).
AdjointTriplet adjoint_ansatz(const RiccatiSolution& sol, double t, double x, double cond_mean);

/// Minimizer of a E[xi^2] + b E[xi X] + c E[xi]^2 + d E[xi] over xi = f(X).
struct QuadraticMinimizer {
    double a, b, c, d;
    double mean_x;
    double var_x;
    double min_value;

    /// Minimizing value attached to an atom x of X.
    double at(double x) const;
};
/// Throws DomainError unless a > 0 and a + c > 0.
QuadraticMinimizer quadratic_minimizer(double a, double b, double c, double d, const EmpiricalMeasure& X);
/// F(xi) for xi given atomwise on X's atoms.
double quadratic_functional(double a, double b, double c, double d, const EmpiricalMeasure& X,
                            std::span<const double> xi);

}  // namespace mfcpn
