#pragma once

// Conditional particle Monte Carlo for the controlled jump-diffusion.
//
// One scenario is one realization of the Poisson marks. In common mode all
// particles share it and the cloud's empirical law stands in for the
// conditional law given the marks; in idiosyncratic mode every particle owns
// its own marks and the cloud approximates the unconditional law.
//
// Grids are jump adapted: event times are nodes. Brownian paths live on a
// fixed lattice (lattice_cells cells on [0, T]) and are filled in at event
// times by Brownian-bridge draws keyed on (particle, cell, event), so runs
// with different step sizes or different controls see the same noise.

#include "mfcpn/coefficients.hpp"
#include "mfcpn/measures.hpp"
#include "mfcpn/rng.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <variant>
#include <vector>

namespace mfcpn {

inline constexpr std::size_t kAllParticles = std::numeric_limits<std::size_t>::max();

struct PoissonEvent {
    double time;
    std::size_t mark;
    std::size_t owner = kAllParticles;  // particle index in idiosyncratic mode
};

struct PoissonPath {
    std::vector<PoissonEvent> events;

    /// Throws DomainError unless times are strictly increasing in (0, T] and
    /// marks index into a set of `n_marks`.
    void validate(double T, std::size_t n_marks) const;
};

/// Exponential inter-arrivals at rate sum(lambda) and categorical marks.
PoissonPath sample_poisson_path(const JumpSpec& jumps, double T, Stream& stream);

struct TimeGrid {
    double T = 1.0;
    std::size_t lattice_cells = 1;
    std::vector<double> times;
    /// Lattice index of regular nodes, -1 at event nodes.
    std::vector<std::int64_t> lattice;
    /// Index into `events` at event nodes, -1 at regular nodes.
    std::vector<std::int64_t> event;
    std::vector<PoissonEvent> events;

    std::size_t nodes() const noexcept { return times.size(); }
    std::size_t steps() const noexcept { return times.size() - 1; }
    bool is_event(std::size_t k) const { return event[k] >= 0; }
    double max_spacing() const;
};

/// Regular nodes T k / n_steps merged with the event times. lattice_cells must
/// be a positive multiple of n_steps (0 means n_steps).
TimeGrid make_time_grid(double T, std::size_t n_steps, std::vector<PoissonEvent> events,
                        std::size_t lattice_cells = 0);

/// Cross-particle statistics handed to feedback rules.
struct CloudStats {
    std::vector<double> mean;
    std::vector<double> variance;
};

/// (t, x, stats, out u)
using FeedbackMap = std::function<void(double, Point, const CloudStats&, OutVec)>;
/// (t, x, stats) -> q
using RelaxedMap = std::function<ControlMeasure(double, Point, const CloudStats&)>;

/// u per particle on a uniform partition of [0, T]: row floor(t / dt).
struct OpenLoopTable {
    double dt = 1.0;
    std::size_t n_particles = 0;
    std::size_t control_dim = 1;
    std::vector<double> values;  // rows x n_particles x control_dim

    void evaluate(double t, std::size_t particle, OutVec u) const;
};

struct ControlRule {
    std::variant<OpenLoopTable, FeedbackMap, RelaxedMap> rule;

    static ControlRule open_loop(OpenLoopTable table) { return {std::move(table)}; }
    static ControlRule feedback(FeedbackMap f) { return {std::move(f)}; }
    static ControlRule relaxed(RelaxedMap q) { return {std::move(q)}; }
    bool is_relaxed() const { return std::holds_alternative<RelaxedMap>(rule); }
};

/// Law of X_0: independent normal coordinates (stddev 0 gives a Dirac), or
/// explicit per-particle states when `states` is nonempty.
struct InitialLaw {
    std::vector<double> mean{0.0};
    std::vector<double> stddev{0.0};
    std::vector<double> states;  // n_particles x n, optional

    std::size_t dim() const noexcept { return mean.size(); }
};

struct SimulationSpec {
    std::size_t n_particles = 100;
    std::size_t n_steps = 100;
    std::size_t lattice_cells = 0;  // 0 means n_steps
    NoiseMode mode = NoiseMode::common;
    std::uint64_t seed = 0;
    std::uint64_t scenario = 0;
    InitialLaw init;
    /// Keep every state and control; otherwise only final states, the mean
    /// path and per-step costs are kept.
    bool record = true;
};

/// Pre-jump snapshot at an event node.
struct JumpRecord {
    std::size_t node = 0;
    std::size_t mark = 0;
    std::size_t owner = kAllParticles;
    std::vector<double> pre_mean;       // n
    std::vector<double> post_mean;      // n
    /// Common mode: all N particles when recorded, else empty.
    /// Idiosyncratic mode: the owner only.
    std::vector<double> pre_states;
    std::vector<double> pre_controls;  // barycenters for relaxed rules
};

struct ParticleCloud {
    NoiseMode mode = NoiseMode::common;
    std::size_t n_particles = 0;
    std::size_t state_dim = 1;
    std::size_t control_dim = 1;
    std::uint64_t seed = 0;
    std::uint64_t scenario = 0;
    bool relaxed = false;
    TimeGrid grid;
    /// Common mode: the shared path. Idiosyncratic mode: empty; see paths.
    PoissonPath path;
    std::vector<PoissonPath> particle_paths;

    bool recorded = false;
    std::vector<double> states;    // nodes x N x n when recorded
    std::vector<double> controls;  // steps x N x m when recorded (barycenter for relaxed rules)
    std::vector<double> final_states;  // N x n
    std::vector<double> mean_path;     // nodes x n
    std::vector<JumpRecord> jumps;

    /// Cross-particle mean of f at each step (left endpoint), and mean of g at T.
    std::vector<double> running_cost_rate;
    double terminal_cost = 0.0;

    std::span<const double> state(std::size_t node, std::size_t particle) const {
        return {states.data() + (node * n_particles + particle) * state_dim, state_dim};
    }
    std::span<const double> control(std::size_t step, std::size_t particle) const {
        return {controls.data() + (step * n_particles + particle) * control_dim, control_dim};
    }
    /// Empirical state law at a node (requires recorded states).
    EmpiricalMeasure measure_at(std::size_t node) const;
    /// Left-endpoint running cost plus terminal cost, conditional on the path.
    double conditional_cost() const;
};

/// Samples the scenario's Poisson marks from the (seed, scenario) substreams.
/// Common mode: one path. Idiosyncratic mode: one path per particle, owners set.
std::vector<PoissonPath> sample_scenario_paths(const JumpSpec& jumps, double T, const SimulationSpec& spec);

/// Euler-Maruyama on the jump-adapted grid with left-endpoint measure
/// arguments and the compensator in the drift. Throws DivergenceError on a
/// non-finite state and ConfigurationError when the rule kind does not match.
ParticleCloud simulate_strict(const CoefficientSet& coeffs, const ControlRule& rule, double T,
                              const SimulationSpec& spec);
/// Same scheme with every coefficient q-averaged. With Dirac rules the result
/// is bit-identical to simulate_strict.
ParticleCloud simulate_relaxed(const CoefficientSet& coeffs, const ControlRule& rule, double T,
                               const SimulationSpec& spec);

struct CostEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t scenarios = 0;
};

/// Outer average over scenarios of the conditional costs. Strict recorded
/// clouds are re-evaluated with `coeffs`; others use the stored per-step rates.
CostEstimate estimate_cost(std::span<const ParticleCloud> clouds, const CoefficientSet& coeffs);
/// Mean and standard error of a list of per-scenario values.
CostEstimate summarize_costs(std::span<const double> per_scenario);

struct ChatteringOptions {
    /// The slab phase is read at t + phase_offset for a step starting at t;
    /// half the step length reads it at the step midpoint.
    double phase_offset = 0.0;
    /// Visit the atoms forward over the first half of the slab and backward
    /// over the second half (each for half its weight).
    bool symmetric = false;
};

/// Strict chattering rule: [0, T] is split into n_slabs slabs; within a slab
/// the atoms of q(t, x, stats) are visited in order for fractions of the slab
/// equal to their weights. q is evaluated at the left end of each step.
ControlRule chattering(const RelaxedMap& q, std::size_t n_slabs, double T, const ChatteringOptions& opt = {});

}  // namespace mfcpn
