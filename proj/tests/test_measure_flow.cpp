#include <doctest.h>

#include "mfcpn/errors.hpp"
#include "mfcpn/measure_flow.hpp"
#include "support.hpp"

#include <cmath>
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

RelaxedKernel constant_kernel(std::size_t atoms, double u) {
    RelaxedKernel k;
    for (std::size_t i = 0; i < atoms; ++i) k.images.push_back(ControlMeasure::dirac({u}));
    return k;
}

RelaxedKernel two_point_kernel(Stream& s, std::size_t atoms) {
    RelaxedKernel k;
    for (std::size_t i = 0; i < atoms; ++i) k.images.push_back(testing::random_control_measure(s, 2, -2.0, 2.0));
    return k;
}

const TestFunction& entry(const TestFunctionDictionary& d, const std::string& name) {
    for (const auto& e : d.entries()) {
        if (e.name == name) return e;
    }
    FAIL("missing dictionary entry " << name);
    return d[0];
}

}  // namespace

TEST_CASE("dictionary: derivatives match finite differences") {
    const auto d = TestFunctionDictionary::builtin(1);
    CHECK(d.size() == 9);
    const std::vector<double> pts{-1.7, -0.4, 0.0, 0.3, 1.2, 2.5};
    CHECK(d.consistency_error(pts) < 1e-5);
    const auto d2 = TestFunctionDictionary::builtin(2);
    const std::vector<double> pts2{-0.5, 0.7, 1.1, -1.3, 0.2, 0.0};
    CHECK(d2.consistency_error(pts2) < 1e-5);
}

TEST_CASE("aggregate_coeffs: Dirac, two-point and LQ forms") {
    const auto cs = make_lq_coefficients(lq(0.2, 0.5, 1.0, 0.4, {1.0}, {0.5}));
    const EmpiricalMeasure mu(1, {-1.0, 0.5, 2.0}, {0.2, 0.5, 0.3});
    RelaxedKernel k;
    k.images = {ControlMeasure::dirac({0.4}), ControlMeasure(1, {-1.0, 1.0}, {0.25, 0.75}), ControlMeasure::dirac({-0.2})};
    const auto agg = aggregate_coeffs(mu, k, cs);
    const double mean_x = 0.2 * -1.0 + 0.5 * 0.5 + 0.3 * 2.0;
    const double mean_u = 0.2 * 0.4 + 0.5 * 0.5 + 0.3 * -0.2;
    CHECK(agg.features[0] == doctest::Approx(mean_x).epsilon(1e-14));
    CHECK(agg.features[1] == doctest::Approx(mean_u).epsilon(1e-14));
    const double base = 0.2 * mean_x + 0.5 * mean_u;
    CHECK(agg.drift[0] == doctest::Approx(base + 0.4).epsilon(1e-14));
    CHECK(agg.drift[1] == doctest::Approx(base + 0.25 * -1.0 + 0.75 * 1.0).epsilon(1e-14));
    CHECK(agg.diffusion_cov[2] == doctest::Approx(0.16 * 4.0).epsilon(1e-14));
    CHECK(agg.jump[1] == doctest::Approx(0.5 * 0.5).epsilon(1e-14));

    RelaxedKernel short_kernel = constant_kernel(2, 0.0);
    CHECK_THROWS_AS(aggregate_coeffs(mu, short_kernel, cs), CoverageError);
}

TEST_CASE("shift_adjoint: identity and unit shift") {
    const EmpiricalMeasure mu(1, {0.0, 1.0}, {0.5, 0.5});
    const auto flat = make_lq_coefficients(lq(0.0, 0.0, 0.0, 0.0, {1.0}, {0.0}));
    const auto same = shift_adjoint(mu, constant_kernel(2, 0.7), 0, flat);
    CHECK(same.atom(0)[0] == 0.0);
    CHECK(same.atom(1)[0] == 1.0);

    const auto unit = make_lq_coefficients(lq(0.0, 0.0, 0.0, 0.0, {1.0}, {1.0}));
    const auto shifted = shift_adjoint(mu, constant_kernel(2, 1.0), 0, unit);
    CHECK(shifted.atom(0)[0] == 1.0);
    CHECK(shifted.atom(1)[0] == 2.0);
    CHECK(shifted.weight(1) == 0.5);
    CHECK_THROWS_AS(shift_adjoint(mu, constant_kernel(2, 1.0), 3, unit), DomainError);
}

TEST_CASE("shift_adjoint and apply_I are dual") {
    const auto cs = make_lq_coefficients(lq(0.2, 0.5, 1.0, 0.4, {1.0, 0.5}, {0.5, -0.3}));
    const auto d = TestFunctionDictionary::builtin(1);
    Stream s(51, 0, 0, Purpose::sampling);
    for (int trial = 0; trial < 10; ++trial) {
        const auto mu = testing::random_measure(s, 5);
        const auto k = two_point_kernel(s, 5);
        for (std::size_t mark = 0; mark < 2; ++mark) {
            const auto pushed = shift_adjoint(mu, k, mark, cs);
            for (std::size_t f = 1; f <= 5; ++f) {
                const auto Iphi = apply_I(d[f], mu, k, mark, cs);
                double lhs = 0.0;
                for (std::size_t i = 0; i < mu.size(); ++i) lhs += mu.weight(i) * Iphi[i];
                const double rhs = pushed.integrate([&](Point x) { return d[f].value(x); });
                CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(rhs)));
            }
        }
    }
}

TEST_CASE("apply_A1: zero, unit shift and total mass") {
    const auto d = TestFunctionDictionary::builtin(1);
    const auto dirac = EmpiricalMeasure::dirac({0.0});
    const auto flat = make_lq_coefficients(lq(0.0, 0.0, 0.0, 0.0, {1.0}, {0.0}));
    const auto zero = apply_A1(dirac, constant_kernel(1, 0.3), 0, flat);
    for (const auto& phi : d.entries()) CHECK(zero.pair(phi) == 0.0);

    const auto unit = make_lq_coefficients(lq(0.0, 0.0, 0.0, 0.0, {1.0}, {1.0}));
    const auto a1 = apply_A1(dirac, constant_kernel(1, 1.0), 0, unit);
    CHECK(a1.pair(entry(d, "x0^1")) == doctest::Approx(1.0));
    CHECK(a1.pair(entry(d, "x0^2")) == doctest::Approx(1.0));
    CHECK(a1.total_mass() == 0.0);

    const auto cs = make_lq_coefficients(lq(0.2, 0.5, 1.0, 0.4, {1.0, 0.5}, {0.5, -0.3}));
    Stream s(52, 0, 0, Purpose::sampling);
    for (int trial = 0; trial < 20; ++trial) {
        const auto mu = testing::random_measure(s, 6);
        CHECK(std::abs(apply_A1(mu, two_point_kernel(s, 6), trial % 2, cs).total_mass()) <= 1e-12);
    }
}

TEST_CASE("pair_A0: constant, first and second moment identities") {
    const auto d = TestFunctionDictionary::builtin(1);
    const EmpiricalMeasure mu(1, {-1.0, 0.5, 2.0}, {0.2, 0.5, 0.3});
    Stream s(53, 0, 0, Purpose::sampling);
    const auto k = two_point_kernel(s, 3);

    const auto cs = make_lq_coefficients(lq(0.2, 0.5, 1.0, 0.4, {1.0}, {0.5}));
    CHECK(pair_A0(entry(d, "const"), mu, k, cs) == 0.0);

    const auto nojump = make_lq_coefficients(lq(0.2, 0.5, 1.0, 0.9));
    const auto agg = aggregate_coeffs(mu, k, nojump);
    double mean_b = 0.0;
    for (std::size_t i = 0; i < 3; ++i) mean_b += mu.weight(i) * agg.drift[i];
    CHECK(pair_A0(entry(d, "x0^1"), mu, k, nojump) == doctest::Approx(mean_b).epsilon(1e-14));

    const auto pure_noise = make_lq_coefficients(lq(0.0, 0.0, 0.0, 0.9));
    const double expected = 0.81 * (0.2 * 1.0 + 0.5 * 0.25 + 0.3 * 4.0);
    CHECK(pair_A0(entry(d, "x0^2"), mu, k, pure_noise) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("fp_step: frozen pairings and a unit jump") {
    const auto d = TestFunctionDictionary::builtin(1);
    const EmpiricalMeasure mu(1, {-1.0, 0.5, 2.0}, {0.2, 0.5, 0.3});
    const auto zero = make_lq_coefficients(lq(0.0, 0.0, 0.0, 0.0));
    const auto pred = fp_step(mu, constant_kernel(3, 0.0), 0.1, {}, zero, d);
    for (std::size_t f = 0; f < d.size(); ++f) {
        CHECK(pred[f] == doctest::Approx(mu.integrate([&](Point x) { return d[f].value(x); })).epsilon(1e-14));
    }

    const auto unit = make_lq_coefficients(lq(0.0, 0.0, 0.0, 0.0, {1.0}, {1.0}));
    const std::vector<std::size_t> marks{0};
    const auto jumped = fp_step(mu, constant_kernel(3, 1.0), 0.0, marks, unit, d);
    const double mean = 0.2 * -1.0 + 0.5 * 0.5 + 0.3 * 2.0;
    CHECK(jumped[1] == doctest::Approx(mean + 1.0).epsilon(1e-14));
}

TEST_CASE("ito_residual: constant and mean functionals") {
    const auto unit = make_lq_coefficients(lq(0.0, 0.0, 0.0, 0.0, {3.0}, {1.0}));
    SimulationSpec sp;
    sp.n_particles = 20;
    sp.n_steps = 50;
    sp.seed = 4;
    sp.init.mean = {0.5};
    sp.init.stddev = {1.0};
    const auto rule = ControlRule::feedback([](double, Point, const CloudStats&, OutVec u) { u[0] = 1.0; });
    const auto cloud = simulate_strict(unit, rule, 1.0, sp);
    REQUIRE_FALSE(cloud.path.events.empty());
    const auto path = measure_path_from_cloud(cloud);
    CHECK(path.jumps.size() == cloud.path.events.size());

    ValueFunctional constant{
        [](double, const EmpiricalMeasure&) { return 2.5; },
        [](double, const EmpiricalMeasure&) { return 0.0; },
        [](double, const EmpiricalMeasure&, Point, OutVec g) { g[0] = 0.0; },
        [](double, const EmpiricalMeasure&, Point, OutVec h) { h[0] = 0.0; },
    };
    for (double r : ito_residual(constant, path, unit)) CHECK(r == 0.0);

    ValueFunctional mean{
        [](double, const EmpiricalMeasure& m) { return m.mean()[0]; },
        [](double, const EmpiricalMeasure&) { return 0.0; },
        [](double, const EmpiricalMeasure&, Point, OutVec g) { g[0] = 1.0; },
        [](double, const EmpiricalMeasure&, Point, OutVec h) { h[0] = 0.0; },
    };
    for (double r : ito_residual(mean, path, unit)) CHECK(std::abs(r) < 1e-12);

    ValueFunctional partial = mean;
    partial.measure_hessian = nullptr;
    CHECK_THROWS_AS(ito_residual(partial, path, unit), ConfigurationError);
}
