#include "mfcpn/simulate.hpp"

#include "mfcpn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace mfcpn {

void PoissonPath::validate(double T, std::size_t n_marks) const {
    double prev = 0.0;
    for (const auto& e : events) {
        if (!(e.time > prev) || e.time > T) {
            throw DomainError("Poisson path: event times must increase strictly inside (0, T]");
        }
        if (e.mark >= n_marks) throw DomainError("Poisson path: mark index out of range");
        prev = e.time;
    }
}

PoissonPath sample_poisson_path(const JumpSpec& jumps, double T, Stream& stream) {
    PoissonPath path;
    const double rate = jumps.total_intensity();
    if (!(rate > 0.0)) return path;
    double t = stream.exponential(rate);
    while (t <= T) {
        double u = stream.uniform() * rate;
        std::size_t j = 0;
        while (j + 1 < jumps.size() && u > jumps.intensities[j]) {
            u -= jumps.intensities[j];
            ++j;
        }
        path.events.push_back({t, j});
        t += stream.exponential(rate);
    }
    return path;
}

double TimeGrid::max_spacing() const {
    double h = 0.0;
    for (std::size_t k = 0; k + 1 < times.size(); ++k) h = std::max(h, times[k + 1] - times[k]);
    return h;
}

TimeGrid make_time_grid(double T, std::size_t n_steps, std::vector<PoissonEvent> events,
                        std::size_t lattice_cells) {
    if (!(T > 0.0)) throw DomainError("time grid: T must be positive");
    if (n_steps == 0) throw DomainError("time grid: at least one step required");
    if (lattice_cells == 0) lattice_cells = n_steps;
    if (lattice_cells % n_steps != 0) {
        throw DomainError("time grid: lattice cells must be a multiple of the step count");
    }
    std::stable_sort(events.begin(), events.end(),
                     [](const PoissonEvent& a, const PoissonEvent& b) { return a.time < b.time; });
    const std::size_t stride = lattice_cells / n_steps;
    TimeGrid g;
    g.T = T;
    g.lattice_cells = lattice_cells;
    g.events = std::move(events);
    std::size_t e = 0;
    for (std::size_t k = 0; k <= n_steps; ++k) {
        const double t = T * static_cast<double>(k) / static_cast<double>(n_steps);
        while (e < g.events.size() && g.events[e].time < t) {
            g.times.push_back(g.events[e].time);
            g.lattice.push_back(-1);
            g.event.push_back(static_cast<std::int64_t>(e));
            ++e;
        }
        g.times.push_back(t);
        g.lattice.push_back(static_cast<std::int64_t>(k * stride));
        g.event.push_back(-1);
    }
    // An event exactly at T lands after the last regular node.
    while (e < g.events.size()) {
        if (g.events[e].time > T) throw DomainError("time grid: event after the horizon");
        g.times.push_back(g.events[e].time);
        g.lattice.push_back(-1);
        g.event.push_back(static_cast<std::int64_t>(e));
        ++e;
    }
    return g;
}

void OpenLoopTable::evaluate(double t, std::size_t particle, OutVec u) const {
    const std::size_t stride = n_particles * control_dim;
    if (stride == 0 || values.size() % stride != 0 || values.empty()) {
        throw DimensionError("open-loop table has an inconsistent shape");
    }
    if (particle >= n_particles) throw DimensionError("open-loop table has no column for this particle");
    const std::size_t rows = values.size() / stride;
    const std::size_t row = std::min(static_cast<std::size_t>(std::max(t, 0.0) / dt), rows - 1);
    const double* src = values.data() + row * stride + particle * control_dim;
    std::copy(src, src + control_dim, u.begin());
}

EmpiricalMeasure ParticleCloud::measure_at(std::size_t node) const {
    if (!recorded) throw ConfigurationError("cloud was simulated without recording states");
    const auto* begin = states.data() + node * n_particles * state_dim;
    return EmpiricalMeasure::uniform(state_dim, std::vector<double>(begin, begin + n_particles * state_dim));
}

double ParticleCloud::conditional_cost() const {
    double c = terminal_cost;
    for (std::size_t k = 0; k < running_cost_rate.size(); ++k) {
        c += (grid.times[k + 1] - grid.times[k]) * running_cost_rate[k];
    }
    return c;
}

std::vector<PoissonPath> sample_scenario_paths(const JumpSpec& jumps, double T, const SimulationSpec& spec) {
    std::vector<PoissonPath> paths;
    if (spec.mode == NoiseMode::common) {
        Stream s(spec.seed, spec.scenario, kAllParticles, Purpose::poisson);
        paths.push_back(sample_poisson_path(jumps, T, s));
        return paths;
    }
    paths.reserve(spec.n_particles);
    for (std::size_t i = 0; i < spec.n_particles; ++i) {
        Stream s(spec.seed, spec.scenario, i, Purpose::poisson);
        auto p = sample_poisson_path(jumps, T, s);
        for (auto& e : p.events) e.owner = i;
        paths.push_back(std::move(p));
    }
    return paths;
}

namespace {

// Brownian motion on the lattice with bridge fill-in at event times. Queries
// must come in nondecreasing time order.
class BrownianDriver {
public:
    BrownianDriver(std::uint64_t lattice_key, std::uint64_t bridge_key, const TimeGrid& grid)
        : lattice_key_(lattice_key), bridge_key_(bridge_key), grid_(&grid),
          h0_(grid.T / static_cast<double>(grid.lattice_cells)) {}

    double at_node(std::size_t k) {
        if (grid_->lattice[k] >= 0) {
            advance_to(static_cast<std::size_t>(grid_->lattice[k]));
            return w_lattice_;
        }
        const double s = grid_->times[k];
        auto cell = static_cast<std::size_t>(s / grid_->T * static_cast<double>(grid_->lattice_cells));
        cell = std::min(cell, grid_->lattice_cells - 1);
        advance_to(cell);
        const double right = lattice_time(cell + 1);
        const double w_right = w_lattice_ + std::sqrt(h0_) * normal_at(lattice_key_, cell);
        const double span = right - anchor_t_;
        double w = w_right;
        if (span > 0.0) {
            const double frac = (s - anchor_t_) / span;
            const double var = std::max(0.0, (s - anchor_t_) * (right - s) / span);
            const double z = normal_at(bridge_key_, hash_combine(cell, bridge_count_));
            w = anchor_w_ + frac * (w_right - anchor_w_) + std::sqrt(var) * z;
        }
        ++bridge_count_;
        anchor_t_ = s;
        anchor_w_ = w;
        return w;
    }

private:
    double lattice_time(std::size_t l) const {
        return grid_->T * static_cast<double>(l) / static_cast<double>(grid_->lattice_cells);
    }

    void advance_to(std::size_t l) {
        while (index_ < l) {
            w_lattice_ += std::sqrt(h0_) * normal_at(lattice_key_, index_);
            ++index_;
            anchor_t_ = lattice_time(index_);
            anchor_w_ = w_lattice_;
            bridge_count_ = 0;
        }
    }

    std::uint64_t lattice_key_;
    std::uint64_t bridge_key_;
    const TimeGrid* grid_;
    double h0_;
    std::size_t index_ = 0;
    double w_lattice_ = 0.0;
    double anchor_t_ = 0.0;
    double anchor_w_ = 0.0;
    std::uint64_t bridge_count_ = 0;
};

// Controls and law features frozen for one evaluation time.
struct Snapshot {
    std::vector<double> u;             // strict: N x m
    std::vector<ControlMeasure> q;     // relaxed: N
    std::vector<double> features;
};

class Engine {
public:
    Engine(const CoefficientSet& cs, const ControlRule& rule, double T, const SimulationSpec& spec, bool relaxed)
        : cs_(cs), rule_(rule), T_(T), spec_(spec), relaxed_(relaxed), n_(cs.state_dim), m_(cs.control_dim),
          d_(cs.noise_dim), N_(spec.n_particles) {
        cs_.require_core();
        if (relaxed_ != rule_.is_relaxed()) {
            throw ConfigurationError(relaxed_ ? "simulate_relaxed needs a relaxed control rule"
                                              : "simulate_strict needs a strict control rule");
        }
        if (N_ < 2) throw DomainError("a particle cloud needs at least two particles");
        if (!(T_ > 0.0)) throw DomainError("simulation horizon must be positive");
        weights_.assign(N_, 1.0 / static_cast<double>(N_));
        buf_.resize(std::max({n_, n_ * d_, m_}));
        acc_drift_.resize(n_);
        acc_diff_.resize(n_ * d_);
    }

    ParticleCloud run() {
        ParticleCloud cloud;
        cloud.mode = spec_.mode;
        cloud.n_particles = N_;
        cloud.state_dim = n_;
        cloud.control_dim = m_;
        cloud.seed = spec_.seed;
        cloud.scenario = spec_.scenario;
        cloud.relaxed = relaxed_;
        cloud.recorded = spec_.record;

        auto paths = sample_scenario_paths(cs_.jumps, T_, spec_);
        std::vector<PoissonEvent> all;
        for (const auto& p : paths) all.insert(all.end(), p.events.begin(), p.events.end());
        cloud.grid = make_time_grid(T_, spec_.n_steps, std::move(all), spec_.lattice_cells);
        if (spec_.mode == NoiseMode::common) {
            cloud.path = std::move(paths.front());
        } else {
            cloud.particle_paths = std::move(paths);
        }
        const TimeGrid& grid = cloud.grid;

        std::vector<double> x = initial_states();
        std::vector<BrownianDriver> drivers;
        drivers.reserve(N_ * d_);
        for (std::size_t i = 0; i < N_; ++i) {
            const auto lk = stream_key(spec_.seed, spec_.scenario, i, Purpose::brownian);
            const auto bk = stream_key(spec_.seed, spec_.scenario, i, Purpose::bridge);
            for (std::size_t r = 0; r < d_; ++r) {
                drivers.emplace_back(hash_combine(lk, r), hash_combine(bk, r), grid);
            }
        }
        std::vector<double> w_prev(N_ * d_, 0.0);
        std::vector<double> dw(d_);

        const std::size_t M = grid.steps();
        if (spec_.record) {
            cloud.states.reserve((M + 1) * N_ * n_);
            cloud.controls.reserve(M * N_ * m_);
        }
        cloud.running_cost_rate.reserve(M);
        cloud.mean_path.reserve((M + 1) * n_);

        Snapshot snap;
        for (std::size_t k = 0; k <= M; ++k) {
            const double t = grid.times[k];
            if (grid.is_event(k)) apply_event(cloud, k, t, x, snap);

            const auto stats = cloud_stats(x);
            cloud.mean_path.insert(cloud.mean_path.end(), stats.mean.begin(), stats.mean.end());
            if (spec_.record) cloud.states.insert(cloud.states.end(), x.begin(), x.end());
            if (k == M) break;

            evaluate(t, x, stats, snap);
            const double h = grid.times[k + 1] - t;
            double rate = 0.0;
            for (std::size_t i = 0; i < N_; ++i) rate += running_cost(i, x, snap);
            cloud.running_cost_rate.push_back(rate / static_cast<double>(N_));
            if (spec_.record) record_controls(cloud.controls, snap);

            for (std::size_t i = 0; i < N_; ++i) {
                for (std::size_t r = 0; r < d_; ++r) {
                    const double w = drivers[i * d_ + r].at_node(k + 1);
                    dw[r] = w - w_prev[i * d_ + r];
                    w_prev[i * d_ + r] = w;
                }
                advance(i, x, snap, h, dw);
                for (std::size_t c = 0; c < n_; ++c) {
                    if (!std::isfinite(x[i * n_ + c])) {
                        throw DivergenceError("particle state became non-finite", k + 1);
                    }
                }
            }
        }

        cloud.final_states = x;
        if (cs_.terminal_cost) {
            const auto mu = EmpiricalMeasure(n_, x, weights_);
            const auto f = cs_.summarize_terminal ? cs_.summarize_terminal(mu) : std::vector<double>{};
            double g = 0.0;
            for (std::size_t i = 0; i < N_; ++i) g += cs_.terminal_cost(state(x, i), f);
            cloud.terminal_cost = g / static_cast<double>(N_);
        }
        return cloud;
    }

private:
    std::span<const double> state(const std::vector<double>& x, std::size_t i) const { return {x.data() + i * n_, n_}; }

    std::vector<double> initial_states() const {
        const auto& init = spec_.init;
        if (!init.states.empty()) {
            if (init.states.size() != N_ * n_) throw DimensionError("initial states do not match the cloud shape");
            return init.states;
        }
        if (init.mean.size() != n_ || init.stddev.size() != n_) {
            throw DimensionError("initial law dimension does not match the state dimension");
        }
        std::vector<double> x(N_ * n_);
        for (std::size_t i = 0; i < N_; ++i) {
            const auto key = stream_key(spec_.seed, spec_.scenario, i, Purpose::initial);
            for (std::size_t c = 0; c < n_; ++c) x[i * n_ + c] = init.mean[c] + init.stddev[c] * normal_at(key, c);
        }
        return x;
    }

    CloudStats cloud_stats(const std::vector<double>& x) const {
        CloudStats s{std::vector<double>(n_, 0.0), std::vector<double>(n_, 0.0)};
        const double inv = 1.0 / static_cast<double>(N_);
        for (std::size_t i = 0; i < N_; ++i) {
            for (std::size_t c = 0; c < n_; ++c) s.mean[c] += x[i * n_ + c] * inv;
        }
        for (std::size_t i = 0; i < N_; ++i) {
            for (std::size_t c = 0; c < n_; ++c) {
                const double d = x[i * n_ + c] - s.mean[c];
                s.variance[c] += d * d * inv;
            }
        }
        return s;
    }

    void evaluate(double t, const std::vector<double>& x, const CloudStats& stats, Snapshot& snap) const {
        if (relaxed_) {
            const auto& qmap = std::get<RelaxedMap>(rule_.rule);
            snap.q.clear();
            snap.q.reserve(N_);
            for (std::size_t i = 0; i < N_; ++i) {
                snap.q.push_back(qmap(t, state(x, i), stats));
                if (snap.q.back().dim() != m_) throw DimensionError("relaxed rule returned the wrong control dimension");
            }
            const auto xi = JointEmpiricalMeasure::relaxed(n_, x, snap.q, weights_);
            snap.features = cs_.summarize(project(xi));
            return;
        }
        snap.u.resize(N_ * m_);
        if (const auto* table = std::get_if<OpenLoopTable>(&rule_.rule)) {
            for (std::size_t i = 0; i < N_; ++i) table->evaluate(t, i, OutVec(snap.u.data() + i * m_, m_));
        } else {
            const auto& f = std::get<FeedbackMap>(rule_.rule);
            for (std::size_t i = 0; i < N_; ++i) f(t, state(x, i), stats, OutVec(snap.u.data() + i * m_, m_));
        }
        const auto rho = JointEmpiricalMeasure::strict(n_, m_, x, snap.u, weights_);
        snap.features = cs_.summarize(rho);
    }

    // Calls f(weight, u) for every control atom of particle i.
    template <class F>
    void for_atoms(std::size_t i, const Snapshot& snap, F&& f) const {
        if (relaxed_) {
            const auto& q = snap.q[i];
            for (std::size_t j = 0; j < q.size(); ++j) f(q.weight(j), q.atom(j));
        } else {
            f(1.0, std::span<const double>(snap.u.data() + i * m_, m_));
        }
    }

    double running_cost(std::size_t i, const std::vector<double>& x, const Snapshot& snap) const {
        double acc = 0.0;
        for_atoms(i, snap, [&](double w, Point u) { acc += w * cs_.running_cost(state(x, i), snap.features, u); });
        return acc;
    }

    void advance(std::size_t i, std::vector<double>& x, const Snapshot& snap, double h, std::span<const double> dw) {
        std::fill(acc_drift_.begin(), acc_drift_.end(), 0.0);
        std::fill(acc_diff_.begin(), acc_diff_.end(), 0.0);
        const auto xi = state(x, i);
        const OutVec out(buf_.data(), n_);
        const OutVec out_diff(buf_.data(), n_ * d_);
        for_atoms(i, snap, [&](double w, Point u) {
            cs_.drift(xi, snap.features, u, out);
            for (std::size_t c = 0; c < n_; ++c) acc_drift_[c] += w * out[c];
            for (std::size_t j = 0; j < cs_.jumps.size(); ++j) {
                cs_.jump(xi, snap.features, u, j, out);
                for (std::size_t c = 0; c < n_; ++c) acc_drift_[c] -= w * cs_.jumps.intensities[j] * out[c];
            }
            cs_.diffusion(xi, snap.features, u, out_diff);
            for (std::size_t c = 0; c < n_ * d_; ++c) acc_diff_[c] += w * out_diff[c];
        });
        for (std::size_t c = 0; c < n_; ++c) {
            double v = x[i * n_ + c] + acc_drift_[c] * h;
            for (std::size_t r = 0; r < d_; ++r) v += acc_diff_[c * d_ + r] * dw[r];
            x[i * n_ + c] = v;
        }
    }

    void jump(std::size_t i, std::vector<double>& x, const Snapshot& snap, std::size_t mark) {
        std::fill(acc_drift_.begin(), acc_drift_.end(), 0.0);
        const auto xi = state(x, i);
        const OutVec out(buf_.data(), n_);
        for_atoms(i, snap, [&](double w, Point u) {
            cs_.jump(xi, snap.features, u, mark, out);
            for (std::size_t c = 0; c < n_; ++c) acc_drift_[c] += w * out[c];
        });
        for (std::size_t c = 0; c < n_; ++c) x[i * n_ + c] += acc_drift_[c];
    }

    void barycenter(std::size_t i, const Snapshot& snap, std::vector<double>& out) const {
        std::vector<double> b(m_, 0.0);
        for_atoms(i, snap, [&](double w, Point u) {
            for (std::size_t c = 0; c < m_; ++c) b[c] += w * u[c];
        });
        out.insert(out.end(), b.begin(), b.end());
    }

    void record_controls(std::vector<double>& out, const Snapshot& snap) const {
        if (!relaxed_) {
            out.insert(out.end(), snap.u.begin(), snap.u.end());
            return;
        }
        for (std::size_t i = 0; i < N_; ++i) barycenter(i, snap, out);
    }

    void apply_event(ParticleCloud& cloud, std::size_t k, double t, std::vector<double>& x, Snapshot& snap) {
        const auto& ev = cloud.grid.events[static_cast<std::size_t>(cloud.grid.event[k])];
        const auto stats = cloud_stats(x);
        evaluate(t, x, stats, snap);

        JumpRecord rec;
        rec.node = k;
        rec.mark = ev.mark;
        rec.owner = ev.owner;
        rec.pre_mean = stats.mean;
        if (ev.owner == kAllParticles) {
            if (spec_.record) {
                rec.pre_states = x;
                record_controls(rec.pre_controls, snap);
            }
            for (std::size_t i = 0; i < N_; ++i) jump(i, x, snap, ev.mark);
        } else {
            const auto xo = state(x, ev.owner);
            rec.pre_states.assign(xo.begin(), xo.end());
            barycenter(ev.owner, snap, rec.pre_controls);
            jump(ev.owner, x, snap, ev.mark);
        }
        rec.post_mean = cloud_stats(x).mean;
        for (std::size_t c = 0; c < n_; ++c) {
            if (!std::isfinite(rec.post_mean[c])) throw DivergenceError("jump produced a non-finite state", k);
        }
        cloud.jumps.push_back(std::move(rec));
    }

    const CoefficientSet& cs_;
    const ControlRule& rule_;
    double T_;
    const SimulationSpec& spec_;
    bool relaxed_;
    std::size_t n_, m_, d_, N_;
    std::vector<double> weights_;
    std::vector<double> buf_;
    std::vector<double> acc_drift_;
    std::vector<double> acc_diff_;
};

}  // namespace

ParticleCloud simulate_strict(const CoefficientSet& coeffs, const ControlRule& rule, double T,
                              const SimulationSpec& spec) {
    return Engine(coeffs, rule, T, spec, false).run();
}

ParticleCloud simulate_relaxed(const CoefficientSet& coeffs, const ControlRule& rule, double T,
                               const SimulationSpec& spec) {
    return Engine(coeffs, rule, T, spec, true).run();
}

CostEstimate summarize_costs(std::span<const double> v) {
    if (v.empty()) throw DomainError("cost estimate needs at least one scenario");
    CostEstimate est;
    est.scenarios = v.size();
    est.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double c : v) ss += (c - est.mean) * (c - est.mean);
        est.std_error = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
    }
    return est;
}

CostEstimate estimate_cost(std::span<const ParticleCloud> clouds, const CoefficientSet& coeffs) {
    if (clouds.empty()) throw DomainError("cost estimate needs at least one scenario");
    std::vector<double> per;
    per.reserve(clouds.size());
    for (const auto& cl : clouds) {
        if (cl.relaxed || !cl.recorded) {
            per.push_back(cl.conditional_cost());
            continue;
        }
        const std::size_t N = cl.n_particles;
        const std::vector<double> w(N, 1.0 / static_cast<double>(N));
        double c = 0.0;
        for (std::size_t k = 0; k < cl.grid.steps(); ++k) {
            const auto* xs = cl.states.data() + k * N * cl.state_dim;
            const auto* us = cl.controls.data() + k * N * cl.control_dim;
            const auto rho = JointEmpiricalMeasure::strict(cl.state_dim, cl.control_dim,
                                                           std::vector<double>(xs, xs + N * cl.state_dim),
                                                           std::vector<double>(us, us + N * cl.control_dim), w);
            const auto f = coeffs.summarize(rho);
            double rate = 0.0;
            for (std::size_t i = 0; i < N; ++i) rate += coeffs.running_cost(cl.state(k, i), f, cl.control(k, i));
            c += (cl.grid.times[k + 1] - cl.grid.times[k]) * rate / static_cast<double>(N);
        }
        if (coeffs.terminal_cost) {
            const auto mu = cl.measure_at(cl.grid.steps());
            const auto f = coeffs.summarize_terminal ? coeffs.summarize_terminal(mu) : std::vector<double>{};
            double g = 0.0;
            for (std::size_t i = 0; i < N; ++i) g += coeffs.terminal_cost(cl.state(cl.grid.steps(), i), f);
            c += g / static_cast<double>(N);
        }
        per.push_back(c);
    }
    return summarize_costs(per);
}

ControlRule chattering(const RelaxedMap& q, std::size_t n_slabs, double T, const ChatteringOptions& opt) {
    if (n_slabs == 0) throw DomainError("chattering needs at least one slab");
    if (opt.phase_offset < 0.0) throw DomainError("chattering: phase offset must be non-negative");
    const double slab = T / static_cast<double>(n_slabs);
    return ControlRule::feedback([q, slab, opt](double t, Point x, const CloudStats& stats, OutVec u) {
        const ControlMeasure qt = q(t, x, stats);
        const double total = std::accumulate(qt.weights().begin(), qt.weights().end(), 0.0);
        if (!(total > 0.0)) throw NormalizationError("chattering: relaxed control has zero total weight");
        double phase = std::fmod(t + opt.phase_offset, slab) / slab;
        // Guard against fmod returning a value a rounding error below slab.
        if (phase >= 1.0 - 1e-12) phase = 0.0;
        if (opt.symmetric) phase = phase < 0.5 ? 2.0 * phase : 2.0 * (1.0 - phase);
        std::size_t j = 0;
        double cum = qt.weight(0) / total;
        while (j + 1 < qt.size() && phase >= cum - 1e-12) {
            ++j;
            cum += qt.weight(j) / total;
        }
        const auto a = qt.atom(j);
        std::copy(a.begin(), a.end(), u.begin());
    });
}

}  // namespace mfcpn
