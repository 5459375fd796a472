#pragma once

// Cross-checks of the LQ solution: SMP inequality, adjoint BSDE identities,
// HJB residual, optimality under perturbations, Fokker-Planck consistency,
// chattering convergence and the common/idiosyncratic comparison.

#include "mfcpn/coefficients.hpp"
#include "mfcpn/lq.hpp"
#include "mfcpn/measure_flow.hpp"
#include "mfcpn/simulate.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace mfcpn {

struct CheckReport {
    std::string name;
    bool passed = false;
    /// Set when the Monte Carlo budget cannot decide; passed is then false.
    bool inconclusive = false;
    double tolerance = 0.0;
    double max_residual = 0.0;
    double mean_residual = 0.0;
    double std_error = 0.0;
    std::size_t samples = 0;
    std::uint64_t seed = 0;
    std::string config_hash;
    nlohmann::json details = nlohmann::json::object();

    nlohmann::json to_json() const;
};

/// Per particle i: (1/N) sum_j F(x_i, x_j) over the states at `node`.
std::vector<double> copy_expectation(const ParticleCloud& cloud, std::size_t node,
                                     const std::function<double(Point, Point)>& F);

/// Feedback rule u = optimal_control(sol, t, x, cloud mean).
ControlRule lq_optimal_rule(const RiccatiSolution& sol);

/// Ansatz value functional 1/2 (beta E x^2 + eta (E x)^2) with its derivatives
/// (time derivatives from central differences of the Riccati grid).
ValueFunctional lq_value_functional(const RiccatiSolution& sol);

struct SmpOptions {
    double u_min = -3.0;
    double u_max = 3.0;
    std::size_t u_points = 601;
    std::size_t samples = 200;
    double tolerance = 1e-8;
    /// Added to p of the evaluated particle (perturbation experiments).
    double p_shift = 0.0;
    std::uint64_t seed = 0;
};

/// Grid minimization of u -> H(x, u, rho, p, P, K) + E'[dH(X', a', rho, x, u, p', P', K')]
/// at sampled (node, particle) pairs of a recorded strict cloud. Passes when
/// every grid argmin lies within one cell of the optimal control and no grid
/// value undercuts the value at the optimal control by more than the tolerance.
CheckReport check_smp(const ParticleCloud& cloud, const RiccatiSolution& sol, const SmpOptions& opt);

struct BsdeOptions {
    double tolerance = 1e-6;
    double terminal_tolerance = 1e-12;
    /// Mode whose K formula is compared with the observed jumps of p
    /// (defaults to the cloud's own mode).
    std::optional<NoiseMode> k_mode;
};

/// Terminal identity p_T = d_x g, interior drift identity with Riccati
/// derivatives from central differences, and the jump identity dp = K(z) at
/// every event of a recorded cloud simulated under the optimal control.
CheckReport check_bsde(const ParticleCloud& cloud, const RiccatiSolution& sol, const BsdeOptions& opt);

/// HJB residual d_t J + TJ at each (t, mu), with TJ evaluated at the closed-form
/// inner minimizer and the jump term computed on atoms through shift_adjoint.
/// tolerance <= 0 means 1e-6 + 10 x the Riccati midpoint residual.
struct HjbSample {
    double t;
    EmpiricalMeasure mu;
};
CheckReport check_hjb(const RiccatiSolution& sol, const std::vector<HjbSample>& samples, double tolerance = 0.0);

/// Random (t, mu) pairs with 1..max_atoms atoms drawn from a substream.
std::vector<HjbSample> random_hjb_samples(double T, std::size_t count, std::size_t max_atoms, std::uint64_t seed);

struct Perturbation {
    enum class Kind { offset, gain, time_shift };
    Kind kind = Kind::gain;
    double value = 1.0;

    std::string label() const;
    static Perturbation parse(const nlohmann::json& j);
};

/// Optimal feedback modified by a perturbation.
ControlRule perturbed_rule(const RiccatiSolution& sol, const Perturbation& p);

struct McConfig {
    std::size_t particles = 200;
    std::size_t scenarios = 16;
    double dt = 0.01;
    std::uint64_t seed = 0;
    NoiseMode mode = NoiseMode::common;
    InitialLaw init;
    std::size_t riccati_steps = 10000;
    std::size_t threads = 0;

    std::size_t n_steps(double T) const;
};

/// Paired costs of every perturbation against the optimal feedback under
/// common random numbers, and |cost(a*) - J(0, mu0)| against 3 sigma plus five
/// times the step-doubling bias estimate.
CheckReport check_optimality(const LQParams& params, const std::vector<Perturbation>& perturbations,
                             const McConfig& mc);

/// check_smp on a recorded cloud of scenario 0 simulated under the optimal control.
CheckReport check_smp_simulated(const LQParams& params, const McConfig& mc, const SmpOptions& opt);
/// check_bsde over mc.scenarios recorded clouds; the K formula follows mc.mode
/// unless `k_mode` is given.
CheckReport check_bsde_simulated(const LQParams& params, const McConfig& mc, const BsdeOptions& opt);

/// Per-scenario conditional costs of one rule.
std::vector<double> scenario_costs(const CoefficientSet& coeffs, const ControlRule& rule, double T,
                                   const McConfig& mc, std::size_t n_steps, std::size_t lattice_cells = 0);

/// Cumulative Fokker-Planck pairing residuals over the dictionary, at (dt, N)
/// and (dt/2, 4N); passes when the geometric mean over non-constant entries of
/// the per-function RMS ratios (fine / coarse) lies in 0.5 x (1 +/- 0.4).
CheckReport check_fp(const LQParams& params, const McConfig& mc, const TestFunctionDictionary& dictionary);

/// RMS over scenarios and dictionary entries of the final cumulative
/// (observed - predicted) pairing, for one (dt, N) level.
struct FpLevel {
    double rms = 0.0;
    std::vector<double> per_function;  // RMS per dictionary entry
    bool jumps_synchronous = true;
};
FpLevel fp_residuals(const LQParams& params, const McConfig& mc, const TestFunctionDictionary& dictionary);

/// Two-atom state-dependent relaxed rule: weight w(x) = 1/2 (1 + slope tanh(x - m))
/// on atom `a`, the rest on `b`, m the cloud mean.
struct TwoAtomRule {
    double a = -1.0;
    double b = 1.0;
    double slope = 0.5;

    RelaxedMap map() const;
};

struct ChatteringResult {
    std::vector<std::size_t> slabs;
    std::vector<double> gaps;         // mean paired cost(chattered) - cost(relaxed)
    std::vector<double> std_errors;   // paired standard errors
    double relaxed_cost = 0.0;
    double relaxed_std_error = 0.0;
};
/// The chattered rules read the slab phase at step midpoints.
ChatteringResult chattering_study(const CoefficientSet& coeffs, const TwoAtomRule& rule, double T,
                                  const std::vector<std::size_t>& slabs, const McConfig& mc, bool symmetric = false);
/// |gap| decreasing from the first to the last slab count and the last |gap|
/// below 5 paired standard errors.
CheckReport check_chattering(const CoefficientSet& coeffs, const TwoAtomRule& rule, double T,
                             const std::vector<std::size_t>& slabs, const McConfig& mc, bool symmetric = false);

struct NoiseComparison {
    double riccati_gap_gamma_zero = 0.0;  // max |common - idiosyncratic| with gamma = 0
    double common_mean_jump = 0.0;        // mean |jump of the cloud mean| at events
    double idio_mean_jump = 0.0;
    double idio_non_event_increment = 0.0;  // mean |increment of the mean| over regular steps
    std::size_t common_events = 0;
    std::size_t idio_events = 0;
};
NoiseComparison noise_statistics(const LQParams& params, const McConfig& mc);
/// gamma = 0 agreement to 1e-10 and common jump statistic above 5x the idiosyncratic one.
CheckReport compare_noise_modes(const LQParams& params, const McConfig& mc);

}  // namespace mfcpn
