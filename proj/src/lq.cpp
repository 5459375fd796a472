#include "mfcpn/lq.hpp"

#include "mfcpn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mfcpn {

namespace {

double interpolate(const RiccatiSolution& sol, const std::vector<double>& y, double t) {
    const double h = sol.step();
    const double s = std::clamp(t, 0.0, sol.params.T) / h;
    const std::size_t k = std::min(static_cast<std::size_t>(s), sol.n_steps() - 1);
    const double w = s - static_cast<double>(k);
    return (1.0 - w) * y[k] + w * y[k + 1];
}

double node_derivative(const std::vector<double>& y, std::size_t k, double h) {
    const std::size_t last = y.size() - 1;
    if (k == 0) return (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * h);
    if (k == last) return (3.0 * y[last] - 4.0 * y[last - 1] + y[last - 2]) / (2.0 * h);
    return (y[k + 1] - y[k - 1]) / (2.0 * h);
}

double derivative_at(const RiccatiSolution& sol, const std::vector<double>& y, double t) {
    const double h = sol.step();
    const double s = std::clamp(t, 0.0, sol.params.T) / h;
    const std::size_t k = std::min(static_cast<std::size_t>(s), sol.n_steps() - 1);
    const double w = s - static_cast<double>(k);
    return (1.0 - w) * node_derivative(y, k, h) + w * node_derivative(y, k + 1, h);
}

}  // namespace

double RiccatiSolution::beta_at(double t) const { return interpolate(*this, beta, t); }
double RiccatiSolution::eta_at(double t) const { return interpolate(*this, eta, t); }
double RiccatiSolution::beta_dot_at(double t) const { return derivative_at(*this, beta, t); }
double RiccatiSolution::eta_dot_at(double t) const { return derivative_at(*this, eta, t); }

RiccatiRhs riccati_rhs(const LQParams& p, NoiseMode mode, double beta, double eta) {
    const double g = p.jumps.gamma_l2();
    const double s = beta + eta;
    const double d1 = 1.0 + g * beta;
    const double d2 = mode == NoiseMode::common ? 1.0 + g * s : d1;
    const double quad = p.b3 * p.b3 * beta * beta / d1;
    const double bb = (p.b2 + p.b3) * (p.b2 + p.b3);
    return {-p.sigma * p.sigma * beta + quad, -quad - (2.0 * p.b1 - bb * s / d2) * s};
}

RiccatiSolution solve_riccati(const LQParams& p, NoiseMode mode, std::size_t n_steps) {
    p.validate();
    if (n_steps < 16) throw DomainError("solve_riccati: n_steps must be at least 16");
    RiccatiSolution sol;
    sol.params = p;
    sol.mode = mode;
    sol.gamma_l2 = p.jumps.gamma_l2();
    sol.times.resize(n_steps + 1);
    sol.beta.resize(n_steps + 1);
    sol.eta.resize(n_steps + 1);
    const double h = p.T / static_cast<double>(n_steps);
    for (std::size_t k = 0; k <= n_steps; ++k) sol.times[k] = p.T * static_cast<double>(k) / static_cast<double>(n_steps);

    const double g = sol.gamma_l2;
    auto check = [&](std::size_t k) {
        const double b = sol.beta[k];
        const double e = sol.eta[k];
        if (!std::isfinite(b) || !std::isfinite(e)) {
            throw IllPosedError("Riccati solution blew up", sol.times[k]);
        }
        if (1.0 + g * b <= 0.0) throw IllPosedError("1 + G beta lost positivity", sol.times[k]);
        if (mode == NoiseMode::common && 1.0 + g * (b + e) <= 0.0) {
            throw IllPosedError("1 + G (beta + eta) lost positivity", sol.times[k]);
        }
    };

    sol.beta[n_steps] = p.c;
    sol.eta[n_steps] = -p.c;
    check(n_steps);
    // Backward in time: y(t - h) from y(t) with step -h.
    for (std::size_t k = n_steps; k-- > 0;) {
        const double b = sol.beta[k + 1];
        const double e = sol.eta[k + 1];
        const auto k1 = riccati_rhs(p, mode, b, e);
        const auto k2 = riccati_rhs(p, mode, b - 0.5 * h * k1.beta_dot, e - 0.5 * h * k1.eta_dot);
        const auto k3 = riccati_rhs(p, mode, b - 0.5 * h * k2.beta_dot, e - 0.5 * h * k2.eta_dot);
        const auto k4 = riccati_rhs(p, mode, b - h * k3.beta_dot, e - h * k3.eta_dot);
        sol.beta[k] = b - h / 6.0 * (k1.beta_dot + 2.0 * k2.beta_dot + 2.0 * k3.beta_dot + k4.beta_dot);
        sol.eta[k] = e - h / 6.0 * (k1.eta_dot + 2.0 * k2.eta_dot + 2.0 * k3.eta_dot + k4.eta_dot);
        check(k);
    }
    return sol;
}

double riccati_midpoint_residual(const RiccatiSolution& sol) {
    const double h = sol.step();
    double worst = 0.0;
    for (std::size_t k = 0; k < sol.n_steps(); ++k) {
        const auto r = riccati_rhs(sol.params, sol.mode, 0.5 * (sol.beta[k] + sol.beta[k + 1]),
                                   0.5 * (sol.eta[k] + sol.eta[k + 1]));
        worst = std::max(worst, std::abs((sol.beta[k + 1] - sol.beta[k]) / h - r.beta_dot));
        worst = std::max(worst, std::abs((sol.eta[k + 1] - sol.eta[k]) / h - r.eta_dot));
    }
    return worst;
}

FeedbackGains optimal_gains(const RiccatiSolution& sol, double t) {
    const double b = sol.beta_at(t);
    const double s = b + sol.eta_at(t);
    const double g = sol.gamma_l2;
    const double d1 = 1.0 + g * b;
    const double d2 = sol.mode == NoiseMode::common ? 1.0 + g * s : d1;
    return {(sol.params.b2 + sol.params.b3) * s / d2, sol.params.b3 * b / d1};
}

double optimal_control(const RiccatiSolution& sol, double t, double x, double cond_mean) {
    const auto k = optimal_gains(sol, t);
    return -k.mean_gain * cond_mean - k.dev_gain * (x - cond_mean);
}

double value_function(const RiccatiSolution& sol, double t, const EmpiricalMeasure& mu) {
    if (mu.dim() != 1) throw DimensionError("value_function: the LQ model is scalar");
    const double m1 = mu.integrate([](auto x) { return x[0]; });
    const double m2 = mu.integrate([](auto x) { return x[0] * x[0]; });
    return 0.5 * (sol.beta_at(t) * m2 + sol.eta_at(t) * m1 * m1);
}

AdjointTriplet adjoint_ansatz(const RiccatiSolution& sol, double t, double x, double cond_mean) {
    const double b = sol.beta_at(t);
    const double e = sol.eta_at(t);
    const double a = optimal_control(sol, t, x, cond_mean);
    const double mean_a = -optimal_gains(sol, t).mean_gain * cond_mean;
    AdjointTriplet adj;
    adj.p = {b * x + e * cond_mean};
    adj.P = {b * sol.params.sigma * x};
    const auto& gamma = sol.params.jumps.gamma_values;
    for (double gj : gamma) {
        adj.K.push_back(sol.mode == NoiseMode::common ? gj * (b * a + e * mean_a) : gj * b * a);
    }
    return adj;
}

double QuadraticMinimizer::at(double x) const {
    return -(b * mean_x + d) / (2.0 * (a + c)) - b / (2.0 * a) * (x - mean_x);
}

QuadraticMinimizer quadratic_minimizer(double a, double b, double c, double d, const EmpiricalMeasure& X) {
    if (!(a > 0.0) || !(a + c > 0.0)) {
        throw DomainError("quadratic_minimizer needs a > 0 and a + c > 0 (a = " + std::to_string(a) +
                          ", c = " + std::to_string(c) + ")");
    }
    if (X.dim() != 1) throw DimensionError("quadratic_minimizer: X must be scalar");
    const double m = X.integrate([](auto x) { return x[0]; });
    const double var = X.integrate([m](auto x) { return (x[0] - m) * (x[0] - m); });
    const double lin = b * m + d;
    return {a, b, c, d, m, var, -b * b / (4.0 * a) * var - lin * lin / (4.0 * (a + c))};
}

double quadratic_functional(double a, double b, double c, double d, const EmpiricalMeasure& X,
                            std::span<const double> xi) {
    if (xi.size() != X.size()) throw DimensionError("quadratic_functional: one value per atom expected");
    double e2 = 0.0, ex = 0.0, e1 = 0.0;
    for (std::size_t i = 0; i < X.size(); ++i) {
        const double w = X.weight(i);
        e2 += w * xi[i] * xi[i];
        ex += w * xi[i] * X.atom(i)[0];
        e1 += w * xi[i];
    }
    return a * e2 + b * ex + c * e1 * e1 + d * e1;
}

}  // namespace mfcpn
