#include "mfcpn/verify.hpp"

#include "mfcpn/errors.hpp"
#include "mfcpn/parallel.hpp"
#include "mfcpn/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numeric>

namespace mfcpn {

namespace {

double mean_of(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Mean and standard error of paired differences a - b.
CostEstimate paired(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> d(a.size());
    for (std::size_t s = 0; s < a.size(); ++s) d[s] = a[s] - b[s];
    return summarize_costs(d);
}

double initial_second_moment(const InitialLaw& init) {
    if (!init.states.empty()) {
        double acc = 0.0;
        for (double x : init.states) acc += x * x;
        return acc / static_cast<double>(init.states.size());
    }
    return init.mean[0] * init.mean[0] + init.stddev[0] * init.stddev[0];
}

double initial_mean(const InitialLaw& init) {
    if (!init.states.empty()) return mean_of(init.states);
    return init.mean[0];
}

void require_lq_cloud(const ParticleCloud& cloud, const char* who) {
    if (!cloud.recorded) throw ConfigurationError(std::string(who) + ": cloud was not recorded");
    if (cloud.relaxed) throw ConfigurationError(std::string(who) + ": cloud must come from a strict rule");
    if (cloud.state_dim != 1 || cloud.control_dim != 1) throw DimensionError(std::string(who) + ": LQ clouds are scalar");
}

}  // namespace

nlohmann::json CheckReport::to_json() const {
    return {{"name", name},
            {"passed", passed},
            {"inconclusive", inconclusive},
            {"tolerance", tolerance},
            {"max_residual", max_residual},
            {"mean_residual", mean_residual},
            {"std_error", std_error},
            {"samples", samples},
            {"seed", seed},
            {"config_hash", config_hash},
            {"details", details}};
}

std::vector<double> copy_expectation(const ParticleCloud& cloud, std::size_t node,
                                     const std::function<double(Point, Point)>& F) {
    if (cloud.n_particles < 2) throw DomainError("copy_expectation needs at least two particles");
    if (!cloud.recorded) throw ConfigurationError("copy_expectation needs recorded states");
    if (node >= cloud.grid.nodes()) throw DomainError("copy_expectation: node out of range");
    const std::size_t N = cloud.n_particles;
    std::vector<double> out(N, 0.0);
    for (std::size_t i = 0; i < N; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < N; ++j) acc += F(cloud.state(node, i), cloud.state(node, j));
        out[i] = acc / static_cast<double>(N);
    }
    return out;
}

ControlRule lq_optimal_rule(const RiccatiSolution& sol) {
    auto s = std::make_shared<const RiccatiSolution>(sol);
    return ControlRule::feedback([s](double t, Point x, const CloudStats& stats, OutVec u) {
        u[0] = optimal_control(*s, t, x[0], stats.mean[0]);
    });
}

ValueFunctional lq_value_functional(const RiccatiSolution& sol) {
    auto s = std::make_shared<const RiccatiSolution>(sol);
    ValueFunctional J;
    J.value = [s](double t, const EmpiricalMeasure& mu) { return value_function(*s, t, mu); };
    J.time_derivative = [s](double t, const EmpiricalMeasure& mu) {
        const double m = mu.mean()[0];
        const double x2 = mu.integrate([](Point x) { return x[0] * x[0]; });
        return 0.5 * (s->beta_dot_at(t) * x2 + s->eta_dot_at(t) * m * m);
    };
    J.measure_derivative = [s](double t, const EmpiricalMeasure& mu, Point x, OutVec out) {
        out[0] = s->beta_at(t) * x[0] + s->eta_at(t) * mu.mean()[0];
    };
    J.measure_hessian = [s](double t, const EmpiricalMeasure&, Point, OutVec out) { out[0] = s->beta_at(t); };
    return J;
}

// ---------------------------------------------------------------------------
// SMP

CheckReport check_smp(const ParticleCloud& cloud, const RiccatiSolution& sol, const SmpOptions& opt) {
    require_lq_cloud(cloud, "check_smp");
    if (opt.u_points < 2 || !(opt.u_max > opt.u_min)) throw ConfigurationError("check_smp: bad u grid");
    const auto coeffs = make_lq_coefficients(sol.params);
    const std::size_t N = cloud.n_particles;
    const std::size_t M = cloud.grid.steps();
    const double cell = (opt.u_max - opt.u_min) / static_cast<double>(opt.u_points - 1);

    Stream pick(opt.seed, cloud.scenario, 0, Purpose::sampling);
    std::size_t within = 0, out_of_range = 0;
    double max_offset = 0.0, sum_offset = 0.0, sum_signed = 0.0, max_undercut = -INFINITY;
    std::vector<double> ugrid(opt.u_points);
    for (std::size_t g = 0; g < opt.u_points; ++g) ugrid[g] = opt.u_min + cell * static_cast<double>(g);
    std::vector<double> values(opt.u_points);
    std::vector<AdjointTriplet> copies(N);

    for (std::size_t s = 0; s < opt.samples; ++s) {
        const auto k = std::min<std::size_t>(M - 1, static_cast<std::size_t>(pick.uniform() * static_cast<double>(M)));
        const auto i = std::min<std::size_t>(N - 1, static_cast<std::size_t>(pick.uniform() * static_cast<double>(N)));
        const double t = cloud.grid.times[k];
        const double m = cloud.mean_path[k];
        double ea = 0.0;
        for (std::size_t j = 0; j < N; ++j) ea += cloud.control(k, j)[0];
        ea /= static_cast<double>(N);
        const std::vector<double> f{m, ea};
        for (std::size_t j = 0; j < N; ++j) copies[j] = adjoint_ansatz(sol, t, cloud.state(k, j)[0], m);
        AdjointTriplet own = copies[i];
        own.p[0] += opt.p_shift;
        const auto xi = cloud.state(k, i);

        const auto objective = [&](double uval) {
            const double u[1] = {uval};
            double v = hamiltonian_strict(xi, u, f, own, coeffs);
            double acc = 0.0;
            for (std::size_t j = 0; j < N; ++j) {
                acc += delta_hamiltonian_strict(cloud.state(k, j), cloud.control(k, j), f, xi, u, copies[j], coeffs);
            }
            return v + acc / static_cast<double>(N);
        };

        const double astar = optimal_control(sol, t, xi[0], m);
        const double at_opt = objective(astar);
        std::size_t best = 0;
        for (std::size_t g = 0; g < opt.u_points; ++g) {
            values[g] = objective(ugrid[g]);
            if (values[g] < values[best]) best = g;
        }
        const double offset = ugrid[best] - astar;
        if (astar < opt.u_min || astar > opt.u_max) ++out_of_range;
        if (std::abs(offset) <= cell * (1.0 + 1e-9)) ++within;
        max_offset = std::max(max_offset, std::abs(offset));
        sum_offset += std::abs(offset);
        sum_signed += offset;
        max_undercut = std::max(max_undercut, at_opt - values[best]);
    }

    CheckReport r;
    r.name = "smp";
    r.tolerance = cell;
    r.samples = opt.samples;
    r.seed = opt.seed;
    r.max_residual = max_offset;
    r.mean_residual = opt.samples ? sum_offset / static_cast<double>(opt.samples) : 0.0;
    r.details = {{"grid_cell", cell},
                 {"within_one_cell", within},
                 {"out_of_range", out_of_range},
                 {"mean_signed_offset", opt.samples ? sum_signed / static_cast<double>(opt.samples) : 0.0},
                 {"max_undercut", max_undercut},
                 {"undercut_tolerance", opt.tolerance},
                 {"p_shift", opt.p_shift}};
    r.passed = within == opt.samples && out_of_range == 0 && max_undercut <= opt.tolerance;
    return r;
}

// ---------------------------------------------------------------------------
// BSDE

CheckReport check_bsde(const ParticleCloud& cloud, const RiccatiSolution& sol, const BsdeOptions& opt) {
    require_lq_cloud(cloud, "check_bsde");
    const auto& p = sol.params;
    const auto coeffs = make_lq_coefficients(p);
    const std::size_t N = cloud.n_particles;
    const std::size_t M = cloud.grid.steps();

    // (i) terminal identity
    double terminal_max = 0.0;
    {
        const double t = cloud.grid.times[M];
        const double m = cloud.mean_path[M];
        const double beta = sol.beta_at(t), eta = sol.eta_at(t);
        const std::vector<double> tf{m};
        double g[1];
        for (std::size_t i = 0; i < N; ++i) {
            const auto x = cloud.state(M, i);
            coeffs.terminal_cost_dx(x, tf, g);
            terminal_max = std::max(terminal_max, std::abs(beta * x[0] + eta * m - g[0]));
        }
    }

    // (ii) interior drift identity
    double drift_max = 0.0, drift_sum = 0.0;
    std::size_t drift_n = 0;
    for (std::size_t k = 0; k < M; ++k) {
        const double t = cloud.grid.times[k];
        const double m = cloud.mean_path[k];
        const double beta = sol.beta_at(t), eta = sol.eta_at(t);
        const double bdot = sol.beta_dot_at(t), edot = sol.eta_dot_at(t);
        const double S = beta + eta;
        double ea = 0.0;
        for (std::size_t j = 0; j < N; ++j) ea += cloud.control(k, j)[0];
        ea /= static_cast<double>(N);
        const double ep = S * m;
        for (std::size_t i = 0; i < N; ++i) {
            const double x = cloud.state(k, i)[0];
            const double a = cloud.control(k, i)[0];
            const double P = beta * p.sigma * x;
            const double lhs = -(p.sigma * P + p.b1 * ep);
            const double rhs = bdot * x + edot * m + S * (p.b1 * m + p.b2 * ea) + p.b3 * (beta * a + eta * ea);
            const double res = std::abs(lhs - rhs);
            drift_max = std::max(drift_max, res);
            drift_sum += res;
            ++drift_n;
        }
    }

    // (iii) jump identity dp = K(z) with K from the requested mode
    const NoiseMode k_mode = opt.k_mode.value_or(cloud.mode);
    double jump_max = 0.0;
    std::size_t jump_n = 0;
    for (const auto& jr : cloud.jumps) {
        const double t = cloud.grid.times[jr.node];
        const double beta = sol.beta_at(t), eta = sol.eta_at(t);
        const double gamma = p.jumps.gamma_values.at(jr.mark);
        const double m_pre = jr.pre_mean[0];
        double ea;
        if (cloud.mode == NoiseMode::common) {
            ea = mean_of(jr.pre_controls);
        } else {
            ea = -optimal_gains(sol, t).mean_gain * m_pre;
        }
        // In idiosyncratic mode the mean is the unconditional one and does not jump.
        const double dm = cloud.mode == NoiseMode::common ? jr.post_mean[0] - m_pre : 0.0;
        const bool all = jr.owner == kAllParticles;
        const std::size_t count = all ? N : 1;
        for (std::size_t q = 0; q < count; ++q) {
            const std::size_t i = all ? q : jr.owner;
            const double x_pre = jr.pre_states[q];
            const double a = jr.pre_controls[q];
            const double x_post = cloud.state(jr.node, i)[0];
            const double dp = beta * (x_post - x_pre) + eta * dm;
            const double K = k_mode == NoiseMode::common ? gamma * (beta * a + eta * ea) : gamma * beta * a;
            jump_max = std::max(jump_max, std::abs(dp - K));
            ++jump_n;
        }
    }

    CheckReport r;
    r.name = "bsde";
    r.tolerance = opt.tolerance;
    r.seed = cloud.seed;
    r.samples = drift_n;
    r.max_residual = drift_max;
    r.mean_residual = drift_n ? drift_sum / static_cast<double>(drift_n) : 0.0;
    r.details = {{"terminal_max", terminal_max},
                 {"terminal_tolerance", opt.terminal_tolerance},
                 {"drift_max", drift_max},
                 {"jump_max", jump_max},
                 {"jump_samples", jump_n},
                 {"k_mode", to_string(k_mode)},
                 {"cloud_mode", to_string(cloud.mode)}};
    r.passed = terminal_max <= opt.terminal_tolerance && drift_max <= opt.tolerance && jump_max <= opt.tolerance;
    return r;
}

namespace {

ParticleCloud optimal_cloud(const LQParams& params, const RiccatiSolution& sol, const McConfig& mc,
                            std::size_t scenario) {
    SimulationSpec spec;
    spec.n_particles = mc.particles;
    spec.n_steps = mc.n_steps(params.T);
    spec.mode = mc.mode;
    spec.seed = mc.seed;
    spec.scenario = scenario;
    spec.init = mc.init;
    return simulate_strict(make_lq_coefficients(params), lq_optimal_rule(sol), params.T, spec);
}

}  // namespace

CheckReport check_smp_simulated(const LQParams& params, const McConfig& mc, const SmpOptions& opt) {
    const auto sol = solve_riccati(params, mc.mode, mc.riccati_steps);
    auto r = check_smp(optimal_cloud(params, sol, mc, 0), sol, opt);
    r.seed = mc.seed;
    return r;
}

CheckReport check_bsde_simulated(const LQParams& params, const McConfig& mc, const BsdeOptions& opt) {
    const auto sol = solve_riccati(params, mc.mode, mc.riccati_steps);
    std::vector<CheckReport> parts(mc.scenarios);
    parallel_for(
        mc.scenarios, [&](std::size_t s) { parts[s] = check_bsde(optimal_cloud(params, sol, mc, s), sol, opt); },
        mc.threads);
    CheckReport r = parts.front();
    double terminal = 0.0, drift = 0.0, jump = 0.0, sum = 0.0;
    std::size_t n = 0, jumps = 0;
    bool ok = true;
    for (const auto& p : parts) {
        terminal = std::max(terminal, p.details["terminal_max"].get<double>());
        drift = std::max(drift, p.details["drift_max"].get<double>());
        jump = std::max(jump, p.details["jump_max"].get<double>());
        jumps += p.details["jump_samples"].get<std::size_t>();
        sum += p.mean_residual * static_cast<double>(p.samples);
        n += p.samples;
        ok = ok && p.passed;
    }
    r.seed = mc.seed;
    r.samples = n;
    r.max_residual = drift;
    r.mean_residual = n ? sum / static_cast<double>(n) : 0.0;
    r.details["terminal_max"] = terminal;
    r.details["drift_max"] = drift;
    r.details["jump_max"] = jump;
    r.details["jump_samples"] = jumps;
    r.details["paths"] = mc.scenarios;
    r.details["riccati_steps"] = sol.n_steps();
    r.passed = ok;
    return r;
}

// ---------------------------------------------------------------------------
// HJB

CheckReport check_hjb(const RiccatiSolution& sol, const std::vector<HjbSample>& samples, double tolerance) {
    if (sol.mode != NoiseMode::common) throw ConfigurationError("check_hjb applies to the common-noise model");
    const auto& p = sol.params;
    const auto coeffs = make_lq_coefficients(p);
    const double G = sol.gamma_l2;
    double g1 = 0.0;
    for (std::size_t z = 0; z < p.jumps.size(); ++z) g1 += p.jumps.gamma_values[z] * p.jumps.intensities[z];
    const double midpoint = riccati_midpoint_residual(sol);
    if (tolerance <= 0.0) tolerance = 1e-6 + 10.0 * midpoint;

    double max_res = 0.0, sum_res = 0.0, max_gap = 0.0, max_terminal = 0.0;
    for (const auto& smp : samples) {
        const auto& mu = smp.mu;
        if (mu.dim() != 1) throw DimensionError("check_hjb: scalar measures only");
        const double t = smp.t;
        const double beta = sol.beta_at(t), eta = sol.eta_at(t);
        const double S = beta + eta;
        const double m = mu.mean()[0];
        const double x2 = mu.integrate([](Point x) { return x[0] * x[0]; });

        const auto qm = quadratic_minimizer(0.5 * (1.0 + G * beta), p.b3 * beta, 0.5 * G * eta,
                                            (p.b2 * S + p.b3 * eta) * m, mu);
        std::vector<double> alpha(mu.size());
        double ea = 0.0;
        for (std::size_t i = 0; i < mu.size(); ++i) {
            const double x = mu.atom(i)[0];
            alpha[i] = qm.at(x);
            ea += mu.weight(i) * alpha[i];
            const double direct = optimal_control(sol, t, x, m);
            max_gap = std::max(max_gap, std::abs(alpha[i] - direct) / (1.0 + std::abs(direct)));
        }

        // T J at the minimizer, evaluated from its definition.
        double tj = 0.0;
        for (std::size_t i = 0; i < mu.size(); ++i) {
            const double x = mu.atom(i)[0];
            const double a = alpha[i];
            const double drift = p.b1 * m + p.b2 * ea + p.b3 * a - g1 * a;
            tj += mu.weight(i) * (0.5 * a * a + drift * (beta * x + eta * m) + 0.5 * p.sigma * p.sigma * x * x * beta);
        }
        const auto kernel = RelaxedKernel::dirac(alpha, 1);
        const double J0 = value_function(sol, t, mu);
        for (std::size_t z = 0; z < p.jumps.size(); ++z) {
            tj += p.jumps.intensities[z] * (value_function(sol, t, shift_adjoint(mu, kernel, z, coeffs)) - J0);
        }
        const double dtJ = 0.5 * (sol.beta_dot_at(t) * x2 + sol.eta_dot_at(t) * m * m);
        const double res = std::abs(dtJ + tj);
        max_res = std::max(max_res, res);
        sum_res += res;

        // Terminal line: J(T, mu) against the mean terminal cost.
        const double var = x2 - m * m;
        max_terminal = std::max(max_terminal, std::abs(value_function(sol, p.T, mu) - 0.5 * p.c * var));
    }

    CheckReport r;
    r.name = "hjb";
    r.tolerance = tolerance;
    r.samples = samples.size();
    r.max_residual = max_res;
    r.mean_residual = samples.empty() ? 0.0 : sum_res / static_cast<double>(samples.size());
    r.details = {{"riccati_midpoint_residual", midpoint},
                 {"minimizer_gap", max_gap},
                 {"terminal_gap", max_terminal},
                 {"riccati_steps", sol.n_steps()}};
    r.passed = max_res <= tolerance && max_gap <= 1e-10 && max_terminal <= 1e-10;
    return r;
}

std::vector<HjbSample> random_hjb_samples(double T, std::size_t count, std::size_t max_atoms, std::uint64_t seed) {
    if (max_atoms == 0) throw DomainError("random_hjb_samples: max_atoms must be positive");
    Stream s(seed, 0, 0, Purpose::sampling);
    std::vector<HjbSample> out;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        const double t = T * s.uniform();
        const auto n = 1 + std::min<std::size_t>(max_atoms - 1, static_cast<std::size_t>(s.uniform() * static_cast<double>(max_atoms)));
        const double centre = s.normal();
        const double spread = 0.2 + 1.3 * s.uniform();
        std::vector<double> atoms(n), w(n);
        for (std::size_t i = 0; i < n; ++i) {
            atoms[i] = centre + spread * s.normal();
            w[i] = 0.1 + s.uniform();
        }
        const double tot = std::accumulate(w.begin(), w.end(), 0.0);
        for (double& v : w) v /= tot;
        out.push_back({t, EmpiricalMeasure(1, std::move(atoms), std::move(w))});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Optimality by perturbation

std::string Perturbation::label() const {
    const char* k = kind == Kind::offset ? "offset" : kind == Kind::gain ? "gain" : "time_shift";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s:%g", k, value);
    return buf;
}

Perturbation Perturbation::parse(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("kind") || !j.contains("value")) {
        throw ConfigurationError("perturbation needs \"kind\" and \"value\"");
    }
    Perturbation p;
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "offset") {
        p.kind = Kind::offset;
    } else if (kind == "gain") {
        p.kind = Kind::gain;
    } else if (kind == "time_shift") {
        p.kind = Kind::time_shift;
    } else {
        throw ConfigurationError("unknown perturbation kind: " + kind);
    }
    p.value = j.at("value").get<double>();
    return p;
}

ControlRule perturbed_rule(const RiccatiSolution& sol, const Perturbation& pert) {
    auto s = std::make_shared<const RiccatiSolution>(sol);
    const double v = pert.value;
    switch (pert.kind) {
        case Perturbation::Kind::offset:
            return ControlRule::feedback([s, v](double t, Point x, const CloudStats& st, OutVec u) {
                u[0] = optimal_control(*s, t, x[0], st.mean[0]) + v;
            });
        case Perturbation::Kind::gain:
            return ControlRule::feedback([s, v](double t, Point x, const CloudStats& st, OutVec u) {
                u[0] = v * optimal_control(*s, t, x[0], st.mean[0]);
            });
        case Perturbation::Kind::time_shift:
            break;
    }
    return ControlRule::feedback([s, v](double t, Point x, const CloudStats& st, OutVec u) {
        u[0] = optimal_control(*s, t + v, x[0], st.mean[0]);
    });
}

std::size_t McConfig::n_steps(double T) const {
    if (!(dt > 0.0)) throw ConfigurationError("dt must be positive");
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(T / dt)));
}

std::vector<double> scenario_costs(const CoefficientSet& coeffs, const ControlRule& rule, double T,
                                   const McConfig& mc, std::size_t n_steps, std::size_t lattice_cells) {
    std::vector<double> costs(mc.scenarios);
    parallel_for(
        mc.scenarios,
        [&](std::size_t s) {
            SimulationSpec spec;
            spec.n_particles = mc.particles;
            spec.n_steps = n_steps;
            spec.lattice_cells = lattice_cells;
            spec.mode = mc.mode;
            spec.seed = mc.seed;
            spec.scenario = s;
            spec.init = mc.init;
            spec.record = false;
            const auto cloud = rule.is_relaxed() ? simulate_relaxed(coeffs, rule, T, spec)
                                                 : simulate_strict(coeffs, rule, T, spec);
            costs[s] = cloud.conditional_cost();
        },
        mc.threads);
    return costs;
}

CheckReport check_optimality(const LQParams& params, const std::vector<Perturbation>& perturbations,
                             const McConfig& mc) {
    const auto sol = solve_riccati(params, mc.mode, mc.riccati_steps);
    const auto coeffs = make_lq_coefficients(params);
    const std::size_t n = mc.n_steps(params.T);
    if (n % 2 != 0) throw ConfigurationError("check_optimality: T/dt must be an even step count");

    const auto base = scenario_costs(coeffs, lq_optimal_rule(sol), params.T, mc, n, n);
    const auto base_est = summarize_costs(base);

    CheckReport r;
    r.name = "optimality";
    r.seed = mc.seed;
    r.samples = mc.scenarios;
    r.inconclusive = mc.scenarios < 2;
    bool ok = true;
    bool variance_reduced = true;
    double worst = INFINITY;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& pert : perturbations) {
        const auto costs = scenario_costs(coeffs, perturbed_rule(sol, pert), params.T, mc, n, n);
        const auto d = paired(costs, base);
        const auto pe = summarize_costs(costs);
        const double unpaired = std::sqrt(pe.std_error * pe.std_error + base_est.std_error * base_est.std_error);
        const bool pass = d.mean >= -3.0 * d.std_error;
        ok = ok && pass;
        variance_reduced = variance_reduced && d.std_error <= unpaired;
        const double z = d.std_error > 0.0 ? d.mean / d.std_error : (d.mean == 0.0 ? 0.0 : INFINITY * d.mean);
        worst = std::min(worst, z);
        rows.push_back({{"perturbation", pert.label()},
                        {"cost", pe.mean},
                        {"gap", d.mean},
                        {"paired_std_error", d.std_error},
                        {"unpaired_std_error", unpaired},
                        {"z", z},
                        {"passed", pass}});
    }

    const auto coarse = scenario_costs(coeffs, lq_optimal_rule(sol), params.T, mc, n / 2, n);
    const double bias = std::abs(paired(base, coarse).mean);
    const double m0 = initial_mean(mc.init);
    const double J0 = 0.5 * (sol.beta.front() * initial_second_moment(mc.init) + sol.eta.front() * m0 * m0);
    const double err = std::abs(base_est.mean - J0);
    const double bound = 3.0 * base_est.std_error + 5.0 * bias;
    const bool value_ok = err <= bound;

    r.tolerance = bound;
    r.max_residual = err;
    r.mean_residual = err;
    r.std_error = base_est.std_error;
    r.details = {{"cost_optimal", base_est.mean},
                 {"value_closed_form", J0},
                 {"dt_bias_estimate", bias},
                 {"perturbations", rows},
                 {"worst_z", perturbations.empty() ? 0.0 : worst},
                 {"paired_variance_not_larger", variance_reduced},
                 {"steps", n},
                 {"particles", mc.particles}};
    r.passed = !r.inconclusive && ok && value_ok;
    return r;
}

// ---------------------------------------------------------------------------
// Fokker-Planck

FpLevel fp_residuals(const LQParams& params, const McConfig& mc, const TestFunctionDictionary& dictionary) {
    const auto sol = solve_riccati(params, NoiseMode::common, mc.riccati_steps);
    const auto coeffs = make_lq_coefficients(params);
    const auto rule = lq_optimal_rule(sol);
    const std::size_t n = mc.n_steps(params.T);
    const std::size_t F = dictionary.size();
    std::vector<std::vector<double>> cumulative(mc.scenarios, std::vector<double>(F, 0.0));
    std::vector<char> sync(mc.scenarios, 1);

    parallel_for(
        mc.scenarios,
        [&](std::size_t s) {
            SimulationSpec spec;
            spec.n_particles = mc.particles;
            spec.n_steps = n;
            spec.mode = NoiseMode::common;
            spec.seed = mc.seed;
            spec.scenario = s;
            spec.init = mc.init;
            const auto cloud = simulate_strict(coeffs, rule, params.T, spec);
            const auto path = measure_path_from_cloud(cloud);
            std::vector<const FlowJump*> jump_at(path.times.size(), nullptr);
            for (const auto& j : path.jumps) jump_at[j.node] = &j;
            auto& cum = cumulative[s];
            for (std::size_t k = 0; k + 1 < path.times.size(); ++k) {
                const double h = path.times[k + 1] - path.times[k];
                auto pred = fp_step(path.measures[k], path.kernels[k], h, {}, coeffs, dictionary);
                if (const auto* jp = jump_at[k + 1]) {
                    const auto a1 = apply_A1(jp->pre, jp->kernel, jp->mark, coeffs);
                    bool moved = false;
                    for (std::size_t i = 0; i < jp->pre.size(); ++i) {
                        if (jp->pre.atom(i)[0] != path.measures[k + 1].atom(i)[0]) moved = true;
                    }
                    double biggest = 0.0;
                    for (std::size_t f = 0; f < F; ++f) {
                        const double v = a1.pair(dictionary[f]);
                        pred[f] += v;
                        biggest = std::max(biggest, std::abs(v));
                    }
                    if (moved != (biggest > 0.0)) sync[s] = 0;
                }
                for (std::size_t f = 0; f < F; ++f) {
                    const double obs = path.measures[k + 1].integrate([&](Point x) { return dictionary[f].value(x); });
                    cum[f] += obs - pred[f];
                }
            }
        },
        mc.threads);

    FpLevel level;
    level.per_function.assign(F, 0.0);
    double total = 0.0;
    std::size_t used = 0;
    for (std::size_t f = 0; f < F; ++f) {
        double acc = 0.0;
        for (std::size_t s = 0; s < mc.scenarios; ++s) acc += cumulative[s][f] * cumulative[s][f];
        level.per_function[f] = std::sqrt(acc / static_cast<double>(mc.scenarios));
        if (dictionary[f].name == "const") continue;
        total += acc;
        used += mc.scenarios;
    }
    level.rms = used ? std::sqrt(total / static_cast<double>(used)) : 0.0;
    level.jumps_synchronous = std::all_of(sync.begin(), sync.end(), [](char c) { return c != 0; });
    return level;
}

CheckReport check_fp(const LQParams& params, const McConfig& mc, const TestFunctionDictionary& dictionary) {
    const auto coarse = fp_residuals(params, mc, dictionary);
    McConfig fine_cfg = mc;
    fine_cfg.dt = mc.dt / 2.0;
    fine_cfg.particles = mc.particles * 4;
    const auto fine = fp_residuals(params, fine_cfg, dictionary);
    const double pooled = coarse.rms > 0.0 ? fine.rms / coarse.rms : 0.0;
    // Geometric mean of per-function ratios; the pooled RMS is dominated by the
    // heaviest-tailed entry.
    double log_sum = 0.0;
    std::size_t used = 0;
    for (std::size_t f = 0; f < dictionary.size(); ++f) {
        if (dictionary[f].name == "const" || coarse.per_function[f] <= 0.0 || fine.per_function[f] <= 0.0) continue;
        log_sum += std::log(fine.per_function[f] / coarse.per_function[f]);
        ++used;
    }
    const double ratio = used ? std::exp(log_sum / static_cast<double>(used)) : 0.0;

    nlohmann::json per = nlohmann::json::array();
    for (std::size_t f = 0; f < dictionary.size(); ++f) {
        per.push_back({{"function", dictionary[f].name},
                       {"coarse", coarse.per_function[f]},
                       {"fine", fine.per_function[f]}});
    }
    CheckReport r;
    r.name = "fp";
    r.seed = mc.seed;
    r.samples = mc.scenarios;
    r.tolerance = 0.2;  // |ratio - 0.5|
    r.max_residual = coarse.rms;
    r.mean_residual = fine.rms;
    r.details = {{"coarse_rms", coarse.rms},
                 {"fine_rms", fine.rms},
                 {"ratio", ratio},
                 {"pooled_ratio", pooled},
                 {"jumps_synchronous", coarse.jumps_synchronous && fine.jumps_synchronous},
                 {"per_function", per}};
    r.passed = used > 0 && ratio >= 0.3 && ratio <= 0.7 && coarse.jumps_synchronous && fine.jumps_synchronous;
    return r;
}

// ---------------------------------------------------------------------------
// Chattering

RelaxedMap TwoAtomRule::map() const {
    const double a_ = a, b_ = b, s_ = slope;
    return [a_, b_, s_](double, Point x, const CloudStats& st) {
        const double w = 0.5 * (1.0 + s_ * std::tanh(x[0] - st.mean[0]));
        return ControlMeasure(1, {a_, b_}, {w, 1.0 - w});
    };
}

ChatteringResult chattering_study(const CoefficientSet& coeffs, const TwoAtomRule& rule, double T,
                                  const std::vector<std::size_t>& slabs, const McConfig& mc, bool symmetric) {
    const std::size_t n = mc.n_steps(T);
    const auto q = rule.map();
    const auto relaxed = scenario_costs(coeffs, ControlRule::relaxed(q), T, mc, n, n);
    const auto rel = summarize_costs(relaxed);
    ChatteringResult out;
    out.relaxed_cost = rel.mean;
    out.relaxed_std_error = rel.std_error;
    for (std::size_t ns : slabs) {
        ChatteringOptions opt;
        opt.phase_offset = 0.5 * T / static_cast<double>(n);
        opt.symmetric = symmetric;
        const auto costs = scenario_costs(coeffs, chattering(q, ns, T, opt), T, mc, n, n);
        const auto d = paired(costs, relaxed);
        out.slabs.push_back(ns);
        out.gaps.push_back(d.mean);
        out.std_errors.push_back(d.std_error);
    }
    return out;
}

CheckReport check_chattering(const CoefficientSet& coeffs, const TwoAtomRule& rule, double T,
                             const std::vector<std::size_t>& slabs, const McConfig& mc, bool symmetric) {
    if (slabs.size() < 2) throw ConfigurationError("check_chattering needs at least two slab counts");
    const auto res = chattering_study(coeffs, rule, T, slabs, mc, symmetric);
    nlohmann::json rows = nlohmann::json::array();
    bool monotone = true;
    for (std::size_t i = 0; i < res.slabs.size(); ++i) {
        rows.push_back({{"slabs", res.slabs[i]}, {"gap", res.gaps[i]}, {"paired_std_error", res.std_errors[i]}});
        if (i > 0 && std::abs(res.gaps[i]) > std::abs(res.gaps[i - 1])) monotone = false;
    }
    const double first = std::abs(res.gaps.front());
    const double last = std::abs(res.gaps.back());
    const double se = res.std_errors.back();
    CheckReport r;
    r.name = "chattering";
    r.seed = mc.seed;
    r.samples = mc.scenarios;
    r.tolerance = 5.0 * se;
    r.max_residual = last;
    r.mean_residual = last;
    r.std_error = se;
    r.details = {{"relaxed_cost", res.relaxed_cost},
                 {"relaxed_std_error", res.relaxed_std_error},
                 {"gaps", rows},
                 {"symmetric", symmetric},
                 {"monotone", monotone}};
    r.inconclusive = mc.scenarios < 2;
    r.passed = !r.inconclusive && last < first && last < 5.0 * se;
    return r;
}

// ---------------------------------------------------------------------------
// Noise modes

NoiseComparison noise_statistics(const LQParams& params, const McConfig& mc) {
    NoiseComparison out;
    {
        LQParams flat = params;
        std::fill(flat.jumps.gamma_values.begin(), flat.jumps.gamma_values.end(), 0.0);
        const auto c = solve_riccati(flat, NoiseMode::common, mc.riccati_steps);
        const auto d = solve_riccati(flat, NoiseMode::idiosyncratic, mc.riccati_steps);
        for (std::size_t k = 0; k < c.beta.size(); ++k) {
            out.riccati_gap_gamma_zero = std::max(
                {out.riccati_gap_gamma_zero, std::abs(c.beta[k] - d.beta[k]), std::abs(c.eta[k] - d.eta[k])});
        }
    }
    const auto coeffs = make_lq_coefficients(params);
    const std::size_t n = mc.n_steps(params.T);
    for (NoiseMode mode : {NoiseMode::common, NoiseMode::idiosyncratic}) {
        const auto sol = solve_riccati(params, mode, mc.riccati_steps);
        const auto rule = lq_optimal_rule(sol);
        std::vector<double> jump_sum(mc.scenarios, 0.0), reg_sum(mc.scenarios, 0.0);
        std::vector<std::size_t> jump_n(mc.scenarios, 0), reg_n(mc.scenarios, 0);
        parallel_for(
            mc.scenarios,
            [&](std::size_t s) {
                SimulationSpec spec;
                spec.n_particles = mc.particles;
                spec.n_steps = n;
                spec.mode = mode;
                spec.seed = mc.seed;
                spec.scenario = s;
                spec.init = mc.init;
                spec.record = false;
                const auto cloud = simulate_strict(coeffs, rule, params.T, spec);
                for (const auto& j : cloud.jumps) {
                    jump_sum[s] += std::abs(j.post_mean[0] - j.pre_mean[0]);
                    ++jump_n[s];
                }
                for (std::size_t k = 0; k + 1 < cloud.grid.nodes(); ++k) {
                    if (cloud.grid.is_event(k + 1)) continue;
                    reg_sum[s] += std::abs(cloud.mean_path[k + 1] - cloud.mean_path[k]);
                    ++reg_n[s];
                }
            },
            mc.threads);
        const double js = std::accumulate(jump_sum.begin(), jump_sum.end(), 0.0);
        const auto jn = std::accumulate(jump_n.begin(), jump_n.end(), std::size_t{0});
        const double jmean = jn ? js / static_cast<double>(jn) : 0.0;
        if (mode == NoiseMode::common) {
            out.common_mean_jump = jmean;
            out.common_events = jn;
        } else {
            out.idio_mean_jump = jmean;
            out.idio_events = jn;
            const double rs = std::accumulate(reg_sum.begin(), reg_sum.end(), 0.0);
            const auto rn = std::accumulate(reg_n.begin(), reg_n.end(), std::size_t{0});
            out.idio_non_event_increment = rn ? rs / static_cast<double>(rn) : 0.0;
        }
    }
    return out;
}

CheckReport compare_noise_modes(const LQParams& params, const McConfig& mc) {
    const auto st = noise_statistics(params, mc);
    CheckReport r;
    r.name = "noise";
    r.seed = mc.seed;
    r.samples = mc.scenarios;
    r.tolerance = 1e-10;
    r.max_residual = st.riccati_gap_gamma_zero;
    r.mean_residual = st.riccati_gap_gamma_zero;
    const double ratio = st.idio_mean_jump > 0.0 ? st.common_mean_jump / st.idio_mean_jump : INFINITY;
    r.details = {{"riccati_gap_gamma_zero", st.riccati_gap_gamma_zero},
                 {"common_mean_jump", st.common_mean_jump},
                 {"idiosyncratic_mean_jump", st.idio_mean_jump},
                 {"idiosyncratic_non_event_increment", st.idio_non_event_increment},
                 {"common_events", st.common_events},
                 {"idiosyncratic_events", st.idio_events},
                 {"jump_ratio", std::isfinite(ratio) ? ratio : 1e300}};
    r.inconclusive = st.common_events == 0 || st.idio_events == 0;
    r.passed = !r.inconclusive && st.riccati_gap_gamma_zero <= 1e-10 && st.common_mean_jump > 5.0 * st.idio_mean_jump;
    return r;
}

}  // namespace mfcpn
