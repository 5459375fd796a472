#pragma once

// Model data (b, sigma, gamma, f, g) and the strict/relaxed Hamiltonians.
//
// Evaluators never see a whole measure. A coefficient set declares a
// summarizer that reduces the joint law to a short feature vector once per
// time step (for the LQ family: the means of state and control), and every
// pointwise evaluator takes those features. That keeps particle steps O(N).

#include "mfcpn/measures.hpp"

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace mfcpn {

/// Finite mark set with intensities; gamma_values is the LQ jump loading.
struct JumpSpec {
    std::vector<double> marks;
    std::vector<double> intensities;
    std::vector<double> gamma_values;

    std::size_t size() const noexcept { return marks.size(); }
    double total_intensity() const;
    /// sum_j gamma_j^2 lambda_j
    double gamma_l2() const;
    void validate() const;
};

/// Poisson marks shared by every particle (common) or drawn per particle.
enum class NoiseMode { common, idiosyncratic };

const char* to_string(NoiseMode mode);
/// Accepts "common" or "idiosyncratic"; throws DomainError otherwise.
NoiseMode parse_noise_mode(const std::string& s);

struct LQParams {
    double b1 = 0.0;
    double b2 = 0.0;
    double b3 = 0.0;
    double sigma = 0.0;
    double c = 1.0;
    double T = 1.0;
    JumpSpec jumps;

    void validate() const;
};

/// Parses the "model" and "jumps" sections of an experiment config.
LQParams lq_params_from_json(const nlohmann::json& cfg);
nlohmann::json to_json(const LQParams& p);

using Features = std::span<const double>;
using Point = std::span<const double>;
using OutVec = std::span<double>;

using Summarizer = std::function<std::vector<double>(const JointEmpiricalMeasure&)>;
using TerminalSummarizer = std::function<std::vector<double>(const EmpiricalMeasure&)>;
/// (x, features, u, out)
using VectorField = std::function<void(Point, Features, Point, OutVec)>;
/// (x, features, u, mark, out)
using JumpField = std::function<void(Point, Features, Point, std::size_t, OutVec)>;
using ScalarField = std::function<double(Point, Features, Point)>;
using TerminalField = std::function<double(Point, Features)>;
/// Linear-derivative kernel of a vector coefficient: (x, features, u, x', u', out).
using VectorKernel = std::function<void(Point, Features, Point, Point, Point, OutVec)>;
using JumpKernel = std::function<void(Point, Features, Point, Point, Point, std::size_t, OutVec)>;
using ScalarKernel = std::function<double(Point, Features, Point, Point, Point)>;

struct CoefficientSet {
    std::size_t state_dim = 1;
    std::size_t control_dim = 1;
    std::size_t noise_dim = 1;
    /// Marks and intensities; gamma_values may be empty for non-LQ sets.
    JumpSpec jumps;
    ControlBox control_box;

    Summarizer summarize;
    TerminalSummarizer summarize_terminal;

    VectorField drift;      // out: n
    VectorField diffusion;  // out: n x d row-major
    JumpField jump;         // out: n
    ScalarField running_cost;
    TerminalField terminal_cost;

    // Optional state derivatives (row-major Jacobians, d/dx of each entry).
    VectorField drift_dx;      // n x n
    VectorField diffusion_dx;  // (n x d) x n
    JumpField jump_dx;         // n x n
    VectorField running_cost_dx;  // n, written through an OutVec
    std::function<void(Point, Features, OutVec)> terminal_cost_dx;  // n

    // Optional linear-derivative kernels in the joint law.
    VectorKernel drift_delta;
    VectorKernel diffusion_delta;
    JumpKernel jump_delta;
    ScalarKernel running_cost_delta;

    /// Throws ConfigurationError naming the first missing core evaluator.
    void require_core() const;
    void require_delta() const;
};

/// Built-in LQ family with features [E x, E u] and terminal features [E x].
CoefficientSet make_lq_coefficients(const LQParams& p);

struct AdjointTriplet {
    std::vector<double> p;  // n
    std::vector<double> P;  // n x d
    std::vector<double> K;  // marks x n

    static AdjointTriplet zeros(std::size_t n, std::size_t d, std::size_t marks);
};

// Strict Hamiltonian b.p + tr(sigma P^T) + f + sum_j gamma(z_j).K_j lambda_j.
double hamiltonian_strict(Point x, Point u, const JointEmpiricalMeasure& rho, const AdjointTriplet& adj,
                          const CoefficientSet& coeffs);
double hamiltonian_strict(Point x, Point u, Features features, const AdjointTriplet& adj,
                          const CoefficientSet& coeffs);

// Strict delta-Hamiltonian at (x, u) with the law derivative taken at (x', u').
double delta_hamiltonian_strict(Point x, Point u, const JointEmpiricalMeasure& rho, Point xprime, Point uprime,
                                const AdjointTriplet& adj, const CoefficientSet& coeffs);
double delta_hamiltonian_strict(Point x, Point u, Features features, Point xprime, Point uprime,
                                const AdjointTriplet& adj, const CoefficientSet& coeffs);

// Relaxed versions: q-averages of the strict ones at project(xi).
double hamiltonian_relaxed(Point x, const ControlMeasure& q, const JointEmpiricalMeasure& xi,
                           const AdjointTriplet& adj, const CoefficientSet& coeffs);
double delta_hamiltonian_relaxed(Point x, const ControlMeasure& q, const JointEmpiricalMeasure& xi, Point xprime,
                                 const ControlMeasure& qprime, const AdjointTriplet& adj,
                                 const CoefficientSet& coeffs);

}  // namespace mfcpn
