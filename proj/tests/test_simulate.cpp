#include <doctest.h>

#include "mfcpn/errors.hpp"
#include "mfcpn/measures.hpp"
#include "mfcpn/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <vector>

using namespace mfcpn;

namespace {

LQParams lq(double b1, double b2, double b3, double sigma, std::vector<double> lambda = {},
            std::vector<double> gamma = {}) {
    LQParams p;
    p.b1 = b1;
    p.b2 = b2;
    p.b3 = b3;
    p.sigma = sigma;
    for (std::size_t j = 0; j < lambda.size(); ++j) {
        p.jumps.marks.push_back(static_cast<double>(j));
        p.jumps.intensities.push_back(lambda[j]);
        p.jumps.gamma_values.push_back(gamma[j]);
    }
    return p;
}

ControlRule constant_rule(double u) {
    return ControlRule::feedback([u](double, Point, const CloudStats&, OutVec out) { out[0] = u; });
}

ControlRule linear_rule() {
    return ControlRule::feedback(
        [](double t, Point x, const CloudStats& s, OutVec out) { out[0] = -0.8 * (x[0] - s.mean[0]) - 0.3 * t; });
}

SimulationSpec spec(std::size_t n, std::size_t steps, std::uint64_t seed = 7, NoiseMode mode = NoiseMode::common) {
    SimulationSpec s;
    s.n_particles = n;
    s.n_steps = steps;
    s.seed = seed;
    s.mode = mode;
    s.init.mean = {1.0};
    s.init.stddev = {0.5};
    return s;
}

}  // namespace

TEST_CASE("sample_poisson_path: empty, single mark and event-count mean") {
    Stream s(1, 0, 0, Purpose::poisson);
    CHECK(sample_poisson_path(JumpSpec{}, 1.0, s).events.empty());

    const JumpSpec one{{0.0}, {3.0}, {1.0}};
    const JumpSpec two{{0.0, 1.0}, {1.0, 0.5}, {1.0, 1.0}};
    double total = 0.0;
    const int samples = 4000;
    for (int i = 0; i < samples; ++i) {
        Stream si(2, static_cast<std::uint64_t>(i), 0, Purpose::poisson);
        const auto p = sample_poisson_path(one, 1.0, si);
        for (const auto& e : p.events) CHECK(e.mark == 0);
        p.validate(1.0, 1);
        Stream sj(3, static_cast<std::uint64_t>(i), 0, Purpose::poisson);
        total += static_cast<double>(sample_poisson_path(two, 2.0, sj).events.size());
    }
    const double mean = total / samples;
    const double expected = 1.5 * 2.0;
    CHECK(std::abs(mean - expected) < 3.0 * std::sqrt(expected / samples));
}

TEST_CASE("make_time_grid: events become nodes") {
    const auto g = make_time_grid(1.0, 4, {{0.3, 0}, {0.6, 1}}, 8);
    CHECK(g.nodes() == 7);
    CHECK(g.is_event(2));
    CHECK(g.times[2] == 0.3);
    CHECK(g.lattice[1] == 2);
    CHECK(g.event[3] == -1);
    CHECK(g.lattice[3] == 4);
    CHECK(g.event[4] == 1);
    CHECK(g.max_spacing() == doctest::Approx(0.25));
    CHECK_THROWS_AS(make_time_grid(1.0, 4, {}, 6), DomainError);
    CHECK_THROWS_AS(make_time_grid(1.0, 4, {{1.5, 0}}), DomainError);
    PoissonPath bad{{{0.4, 0}, {0.2, 0}}};
    CHECK_THROWS_AS(bad.validate(1.0, 1), DomainError);
}

TEST_CASE("simulate_strict: frozen dynamics give constant trajectories") {
    const auto cs = make_lq_coefficients(lq(0.0, 0.0, 0.0, 0.0));
    const auto cloud = simulate_strict(cs, linear_rule(), 1.0, spec(20, 50));
    for (std::size_t i = 0; i < cloud.n_particles; ++i) {
        CHECK(cloud.final_states[i] == cloud.state(0, i)[0]);
    }
}

TEST_CASE("simulate_strict: compensated pure-jump dynamics") {
    const double gamma = 0.7, lambda = 2.0;
    const auto cs = make_lq_coefficients(lq(0.0, 0.0, 0.0, 0.0, {lambda}, {gamma}));
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto cloud = simulate_strict(cs, constant_rule(1.0), 1.0, spec(5, 40, seed));
        const auto& g = cloud.grid;
        std::size_t seen = 0;
        for (std::size_t k = 0; k < g.nodes(); ++k) {
            if (g.is_event(k)) ++seen;
            const double expected_shift = gamma * static_cast<double>(seen) - gamma * lambda * g.times[k];
            for (std::size_t i = 0; i < cloud.n_particles; ++i) {
                CHECK(cloud.state(k, i)[0] - cloud.state(0, i)[0] == doctest::Approx(expected_shift).epsilon(1e-12).scale(1.0));
            }
        }
        CHECK(seen == cloud.path.events.size());
    }
}

TEST_CASE("simulate_strict: cloud mean follows the linear mean ODE") {
    const double b1 = 0.6;
    const auto cs = make_lq_coefficients(lq(b1, 0.0, 0.0, 0.2));
    const auto cloud = simulate_strict(cs, constant_rule(0.0), 1.0, spec(4000, 200));
    for (std::size_t k = 0; k < cloud.grid.nodes(); k += 50) {
        const double exact = std::exp(b1 * cloud.grid.times[k]) * cloud.mean_path[0];
        CHECK(std::abs(cloud.mean_path[k] - exact) < 0.01 + 4.0 * 0.2 * 1.2 / std::sqrt(4000.0));
    }
}

TEST_CASE("simulate_relaxed: Dirac rules reproduce the strict cloud bit for bit") {
    const auto cs = make_lq_coefficients(lq(0.2, 0.5, 1.0, 0.4, {1.0, 0.5}, {0.5, -0.3}));
    const auto strict = simulate_strict(cs, linear_rule(), 1.0, spec(30, 64));
    const auto relaxed_rule = ControlRule::relaxed([](double t, Point x, const CloudStats& s) {
        return ControlMeasure::dirac({-0.8 * (x[0] - s.mean[0]) - 0.3 * t});
    });
    const auto relaxed = simulate_relaxed(cs, relaxed_rule, 1.0, spec(30, 64));
    REQUIRE(strict.states.size() == relaxed.states.size());
    CHECK(std::equal(strict.states.begin(), strict.states.end(), relaxed.states.begin()));
    CHECK(std::equal(strict.controls.begin(), strict.controls.end(), relaxed.controls.begin()));
    CHECK(strict.conditional_cost() == relaxed.conditional_cost());
    CHECK_THROWS_AS(simulate_strict(cs, relaxed_rule, 1.0, spec(30, 64)), ConfigurationError);
    CHECK_THROWS_AS(simulate_relaxed(cs, linear_rule(), 1.0, spec(30, 64)), ConfigurationError);
}

TEST_CASE("simulate_relaxed: symmetric two-point control has zero drift") {
    const auto cs = make_lq_coefficients(lq(0.0, 0.0, 1.0, 0.0));
    const auto rule = ControlRule::relaxed(
        [](double, Point, const CloudStats&) { return ControlMeasure(1, {-1.0, 1.0}, {0.5, 0.5}); });
    const auto cloud = simulate_relaxed(cs, rule, 1.0, spec(10, 32));
    for (std::size_t i = 0; i < cloud.n_particles; ++i) CHECK(cloud.final_states[i] == cloud.state(0, i)[0]);
}

TEST_CASE("simulate_relaxed: control-linear coefficients only see the barycenter") {
    const auto cs = make_lq_coefficients(lq(0.2, 0.5, 1.0, 0.4, {1.0}, {0.6}));
    const auto relaxed = simulate_relaxed(cs, ControlRule::relaxed([](double t, Point x, const CloudStats&) {
                                              const double u = 0.5 * x[0] - t;
                                              return ControlMeasure(1, {u - 0.3, u + 0.9}, {0.75, 0.25});
                                          }),
                                          1.0, spec(25, 50));
    const auto strict = simulate_strict(cs, ControlRule::feedback([](double t, Point x, const CloudStats&, OutVec out) {
                                            out[0] = 0.5 * x[0] - t;
                                        }),
                                        1.0, spec(25, 50));
    for (std::size_t i = 0; i < strict.states.size(); ++i) {
        CHECK(relaxed.states[i] == doctest::Approx(strict.states[i]).epsilon(1e-12).scale(1.0));
    }
}

TEST_CASE("simulate: reruns are deterministic and the mode controls jump sharing") {
    const auto cs = make_lq_coefficients(lq(0.2, 0.5, 1.0, 0.4, {2.0, 1.0}, {0.5, -0.3}));
    const auto a = simulate_strict(cs, linear_rule(), 1.0, spec(40, 50, 99));
    const auto b = simulate_strict(cs, linear_rule(), 1.0, spec(40, 50, 99));
    CHECK(a.states == b.states);
    CHECK(a.path.events.size() == b.path.events.size());
    for (const auto& j : a.jumps) CHECK(j.owner == kAllParticles);

    const auto idio = simulate_strict(cs, linear_rule(), 1.0, spec(40, 50, 99, NoiseMode::idiosyncratic));
    REQUIRE(idio.particle_paths.size() == 40);
    std::set<double> times;
    std::size_t count = 0;
    for (const auto& p : idio.particle_paths) {
        for (const auto& e : p.events) {
            times.insert(e.time);
            ++count;
        }
    }
    CHECK(count > 40);
    CHECK(times.size() == count);
    for (const auto& j : idio.jumps) CHECK(j.owner < 40);
}

TEST_CASE("simulate: second moment is stable under step halving") {
    const auto cs = make_lq_coefficients(lq(0.2, 0.5, 1.0, 0.4, {1.0}, {0.5}));
    const auto sup_m2 = [&](std::size_t steps) {
        auto sp = spec(200, steps);
        const auto cloud = simulate_strict(cs, linear_rule(), 1.0, sp);
        double best = 0.0;
        for (std::size_t k = 0; k < cloud.grid.nodes(); ++k) {
            double m2 = 0.0;
            for (std::size_t i = 0; i < cloud.n_particles; ++i) m2 += std::pow(cloud.state(k, i)[0], 2);
            best = std::max(best, m2 / static_cast<double>(cloud.n_particles));
        }
        return best;
    };
    const double coarse = sup_m2(50), fine = sup_m2(100);
    CHECK(std::isfinite(coarse));
    CHECK(fine / coarse > 0.5);
    CHECK(fine / coarse < 2.0);
}

TEST_CASE("simulate: divergence and shape errors") {
    const auto cs = make_lq_coefficients(lq(0.0, 0.0, 1.0, 0.0));
    CHECK_THROWS_AS(simulate_strict(cs, constant_rule(std::numeric_limits<double>::infinity()), 1.0, spec(4, 10)), DivergenceError);
    CHECK_THROWS_AS(simulate_strict(cs, constant_rule(0.0), 1.0, spec(1, 10)), DomainError);
}

TEST_CASE("estimate_cost: constant costs and frozen LQ dynamics") {
    auto cs = make_lq_coefficients(lq(0.0, 0.0, 0.0, 0.0));
    std::vector<ParticleCloud> clouds;
    for (std::uint64_t sc = 0; sc < 3; ++sc) {
        auto sp = spec(50, 20);
        sp.scenario = sc;
        clouds.push_back(simulate_strict(cs, constant_rule(0.0), 1.0, sp));
    }

    const double expected = [&] {
        double acc = 0.0;
        for (const auto& cl : clouds) {
            double m = 0.0, m2 = 0.0;
            for (std::size_t i = 0; i < cl.n_particles; ++i) {
                m += cl.state(0, i)[0];
                m2 += cl.state(0, i)[0] * cl.state(0, i)[0];
            }
            m /= cl.n_particles;
            m2 /= cl.n_particles;
            acc += 0.5 * (m2 - m * m);
        }
        return acc / static_cast<double>(clouds.size());
    }();
    CHECK(estimate_cost(clouds, cs).mean == doctest::Approx(expected).epsilon(1e-12));
    CHECK(estimate_cost(clouds, cs).scenarios == 3);

    auto unit_terminal = cs;
    unit_terminal.running_cost = [](Point, Features, Point) { return 0.0; };
    unit_terminal.terminal_cost = [](Point, Features) { return 1.0; };
    CHECK(estimate_cost(clouds, unit_terminal).mean == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(estimate_cost(clouds, unit_terminal).std_error == doctest::Approx(0.0).scale(1.0));

    auto unit_running = cs;
    unit_running.running_cost = [](Point, Features, Point) { return 1.0; };
    unit_running.terminal_cost = [](Point, Features) { return 0.0; };
    CHECK(estimate_cost(clouds, unit_running).mean == doctest::Approx(1.0).epsilon(1e-12));

    CHECK_THROWS_AS(estimate_cost(std::span<const ParticleCloud>{}, cs), DomainError);
    const std::vector<double> v{1.0, 3.0};
    const auto s = summarize_costs(v);
    CHECK(s.mean == 2.0);
    CHECK(s.std_error == doctest::Approx(1.0));
}

TEST_CASE("chattering: Dirac and two-atom schedules") {
    const CloudStats stats{{0.0}, {1.0}};
    const std::vector<double> x{0.0};
    double u = 0.0;
    const OutVec out(&u, 1);

    auto dirac = chattering([](double, Point, const CloudStats&) { return ControlMeasure::dirac({0.4}); }, 4, 1.0);
    auto& fd = std::get<FeedbackMap>(dirac.rule);
    for (double t : {0.0, 0.13, 0.5, 0.99}) {
        fd(t, x, stats, out);
        CHECK(u == 0.4);
    }

    const RelaxedMap two = [](double, Point, const CloudStats&) { return ControlMeasure(1, {-1.0, 2.0}, {0.5, 0.5}); };
    auto rule = chattering(two, 4, 1.0);
    auto& f = std::get<FeedbackMap>(rule.rule);
    for (std::size_t slab = 0; slab < 4; ++slab) {
        for (double phase : {0.05, 0.3, 0.49}) {
            f(0.25 * (slab + phase), x, stats, out);
            CHECK(u == -1.0);
        }
        for (double phase : {0.51, 0.7, 0.95}) {
            f(0.25 * (slab + phase), x, stats, out);
            CHECK(u == 2.0);
        }
    }

    auto sym = chattering(two, 4, 1.0, {0.0, true});
    auto& fs = std::get<FeedbackMap>(sym.rule);
    for (double phase : {0.1, 0.2, 0.8, 0.9}) {
        fs(0.25 * (1.0 + phase), x, stats, out);
        CHECK(u == -1.0);
    }
    for (double phase : {0.3, 0.45, 0.55, 0.7}) {
        fs(0.25 * (1.0 + phase), x, stats, out);
        CHECK(u == 2.0);
    }
    CHECK_THROWS_AS(chattering(two, 0, 1.0), DomainError);
}

TEST_CASE("chattering: occupation measures approach q as slabs refine") {
    // Integral over t of the FM distance between the running occupation
    // measure of the chattering control and q.
    const ControlMeasure q(1, {-1.0, 0.5}, {0.3, 0.7});
    const RelaxedMap qmap = [q](double, Point, const CloudStats&) { return q; };
    const CloudStats stats{{0.0}, {1.0}};
    const std::vector<double> x{0.0};
    const std::size_t fine = 4096;
    double prev = 1e300;
    for (std::size_t n : {2u, 4u, 8u, 16u, 32u}) {
        auto rule = chattering(qmap, n, 1.0, {0.5 / fine, false});
        auto& f = std::get<FeedbackMap>(rule.rule);
        double at_first = 0.0, integral = 0.0;
        for (std::size_t k = 0; k < fine; ++k) {
            double u = 0.0;
            f(static_cast<double>(k) / fine, x, stats, OutVec(&u, 1));
            if (u == -1.0) at_first += 1.0;
            const double share = at_first / static_cast<double>(k + 1);
            const EmpiricalMeasure occ(1, {-1.0, 0.5}, {share, 1.0 - share});
            integral += fm_distance(occ, q) / fine;
        }
        CHECK(integral < prev);
        prev = integral;
    }
}

TEST_CASE("open-loop tables") {
    OpenLoopTable table{0.5, 2, 1, {1.0, 2.0, 3.0, 4.0}};
    double u = 0.0;
    table.evaluate(0.7, 1, OutVec(&u, 1));
    CHECK(u == 4.0);
    table.evaluate(0.1, 0, OutVec(&u, 1));
    CHECK(u == 1.0);
    CHECK_THROWS_AS(table.evaluate(0.1, 5, OutVec(&u, 1)), DimensionError);

    const auto cs = make_lq_coefficients(lq(0.0, 0.0, 1.0, 0.0));
    auto sp = spec(2, 4);
    sp.init.stddev = {0.0};
    const auto cloud = simulate_strict(cs, ControlRule::open_loop(table), 1.0, sp);
    CHECK(cloud.final_states[0] == doctest::Approx(1.0 + 0.5 * 1.0 + 0.5 * 3.0));
    CHECK(cloud.final_states[1] == doctest::Approx(1.0 + 0.5 * 2.0 + 0.5 * 4.0));
}
