#include <doctest.h>

#include "mfcpn/errors.hpp"
#include "mfcpn/measures.hpp"
#include "support.hpp"

#include <cmath>

using namespace mfcpn;
using mfcpn::testing::fm_lattice_oracle;
using mfcpn::testing::random_control_measure;
using mfcpn::testing::random_lattice_measure;
using mfcpn::testing::random_measure;
using mfcpn::testing::random_weights;

namespace {

JointEmpiricalMeasure random_relaxed(Stream& s, std::size_t n) {
    std::vector<double> states(n);
    std::vector<ControlMeasure> qs;
    for (auto& x : states) x = s.normal();
    for (std::size_t i = 0; i < n; ++i) qs.push_back(random_control_measure(s, 1 + static_cast<std::size_t>(s.uniform() * 3)));
    return JointEmpiricalMeasure::relaxed(1, std::move(states), std::move(qs), random_weights(s, n));
}

JointEmpiricalMeasure random_dirac_relaxed(Stream& s, std::size_t n) {
    std::vector<double> states(n);
    std::vector<ControlMeasure> qs;
    for (auto& x : states) x = s.normal();
    for (std::size_t i = 0; i < n; ++i) qs.push_back(ControlMeasure::dirac({s.uniform() * 2.0 - 1.0}));
    return JointEmpiricalMeasure::relaxed(1, std::move(states), std::move(qs), random_weights(s, n));
}

}  // namespace

TEST_CASE("empirical measure: normalization rules") {
    CHECK_NOTHROW(EmpiricalMeasure(1, {0.0, 1.0}, {0.5, 0.5 + 5e-10}));
    const EmpiricalMeasure m(1, {0.0, 1.0}, {0.5, 0.5 + 5e-10});
    CHECK(std::abs(m.weight(0) + m.weight(1) - 1.0) < 1e-12);
    CHECK_THROWS_AS(EmpiricalMeasure(1, {0.0, 1.0}, {0.5, 0.6}), NormalizationError);
    CHECK_THROWS_AS(EmpiricalMeasure(1, {0.0, 1.0}, {1.5, -0.5}), NormalizationError);
    CHECK_THROWS_AS(EmpiricalMeasure(1, {}, {}), DimensionError);
    CHECK_THROWS_AS(EmpiricalMeasure(2, {0.0, 1.0, 2.0}, {1.0}), DimensionError);
}

TEST_CASE("fm_distance: Dirac examples") {
    const auto d0 = EmpiricalMeasure::dirac({0.0});
    CHECK(fm_distance(d0, d0) == doctest::Approx(0.0));
    CHECK(fm_distance(d0, EmpiricalMeasure::dirac({3.0})) == doctest::Approx(2.0));
    CHECK(fm_distance(d0, EmpiricalMeasure::dirac({0.5})) == doctest::Approx(0.5));
    CHECK_THROWS_AS(fm_distance(d0, EmpiricalMeasure::dirac({0.0, 1.0})), DimensionError);
}

TEST_CASE("fm_distance: agrees with the lattice dual oracle") {
    Stream s(21, 0, 0, Purpose::sampling);
    for (int trial = 0; trial < 10; ++trial) {
        const auto a = random_lattice_measure(s, 1 + static_cast<std::size_t>(s.uniform() * 4));
        const auto b = random_lattice_measure(s, 1 + static_cast<std::size_t>(s.uniform() * 4));
        CHECK(fm_distance(a, b) == doctest::Approx(fm_lattice_oracle(a, b)).epsilon(1e-9));
    }
}

TEST_CASE("fm_distance and kr_distance: metric properties") {
    Stream s(22, 0, 0, Purpose::sampling);
    for (int trial = 0; trial < 30; ++trial) {
        const auto a = random_measure(s, 5, 1, 2.0);
        const auto b = random_measure(s, 5, 1, 2.0);
        const auto c = random_measure(s, 5, 1, 2.0);
        const double ab = fm_distance(a, b), ba = fm_distance(b, a);
        CHECK(ab >= 0.0);
        CHECK(ab <= 2.0 + 1e-12);
        CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
        CHECK(ab <= fm_distance(a, c) + fm_distance(c, b) + 1e-9);

        const auto x = random_relaxed(s, 5), y = random_relaxed(s, 5), z = random_relaxed(s, 5);
        const double xy = kr_distance(x, y);
        CHECK(xy >= 0.0);
        CHECK(xy == doctest::Approx(kr_distance(y, x)).epsilon(1e-12));
        CHECK(xy <= kr_distance(x, z) + kr_distance(z, y) + 1e-9);
        CHECK(kr_distance(x, x) == doctest::Approx(0.0));
    }
}

TEST_CASE("kr_distance: single-atom examples and kind check") {
    const auto lift = [](double x, double u) {
        return JointEmpiricalMeasure::relaxed(1, {x}, {ControlMeasure::dirac({u})}, {1.0});
    };
    CHECK(kr_distance(lift(0.0, 0.2), lift(1.0, 0.2)) == doctest::Approx(1.0));
    CHECK(kr_distance(lift(0.0, 0.2), lift(0.0, 0.5)) == doctest::Approx(0.3));
    const auto strict = JointEmpiricalMeasure::strict(1, 1, {0.0}, {0.0}, {1.0});
    CHECK_THROWS_AS(kr_distance(strict, lift(0.0, 0.0)), KindError);
}

TEST_CASE("project: expansion examples and affinity") {
    const auto one = JointEmpiricalMeasure::relaxed(1, {2.0}, {ControlMeasure::dirac({0.3})}, {1.0});
    const auto p1 = project(one);
    REQUIRE(p1.size() == 1);
    CHECK(p1.state(0)[0] == 2.0);
    CHECK(p1.control(0)[0] == 0.3);
    CHECK(p1.weight(0) == doctest::Approx(1.0));

    const auto two = JointEmpiricalMeasure::relaxed(1, {0.0}, {ControlMeasure(1, {-1.0, 1.0}, {0.5, 0.5})}, {1.0});
    const auto p2 = project(two);
    REQUIRE(p2.size() == 2);
    CHECK(p2.weight(0) == doctest::Approx(0.5));
    CHECK(p2.control(1)[0] == 1.0);

    Stream s(23, 0, 0, Purpose::sampling);
    const auto a = random_relaxed(s, 2), b = random_relaxed(s, 2);
    const double lambda = 0.3;
    const auto lhs = project(mixture(lambda, a, b));
    const auto ra = project(a), rb = project(b);
    REQUIRE(lhs.size() == ra.size() + rb.size());
    for (std::size_t i = 0; i < ra.size(); ++i) CHECK(lhs.weight(i) == doctest::Approx(lambda * ra.weight(i)).epsilon(1e-14));
    for (std::size_t i = 0; i < rb.size(); ++i) {
        CHECK(lhs.weight(ra.size() + i) == doctest::Approx((1 - lambda) * rb.weight(i)).epsilon(1e-14));
    }
    CHECK_THROWS_AS(project(ra), KindError);
}

TEST_CASE("extend: total mass, Dirac lifts and linearity") {
    Stream s(24, 0, 0, Purpose::sampling);
    const StrictFunctional mass = [](const JointEmpiricalMeasure& r) {
        double t = 0.0;
        for (double w : r.weights()) t += w;
        return t;
    };
    CHECK(extend(mass, random_relaxed(s, 4)) == doctest::Approx(1.0).epsilon(1e-14));

    const StrictFunctional m2 = [](const JointEmpiricalMeasure& r) {
        const double v = second_moment(r).value;
        return v * v;
    };
    const auto rho = JointEmpiricalMeasure::strict(1, 1, {1.0, -2.0, 0.5}, {0.1, 0.7, -0.4}, {0.2, 0.3, 0.5});
    const double direct = 0.2 * (1.0 + 0.01) + 0.3 * (4.0 + 0.49) + 0.5 * (0.25 + 0.16);
    CHECK(m2(rho) == doctest::Approx(direct).epsilon(1e-14));
    CHECK(extend(m2, dirac_lift(rho)) == doctest::Approx(direct).epsilon(1e-14));

    // Linear functional: extension of a mixture is the average over expanded atoms.
    const StrictFunctional lin = [](const JointEmpiricalMeasure& r) {
        double t = 0.0;
        for (std::size_t i = 0; i < r.size(); ++i) t += r.weight(i) * (r.state(i)[0] + 2.0 * r.control(i)[0]);
        return t;
    };
    const auto xi = JointEmpiricalMeasure::relaxed(1, {1.0, 3.0},
                                                   {ControlMeasure(1, {0.0, 1.0}, {0.5, 0.5}), ControlMeasure::dirac({-1.0})},
                                                   {0.25, 0.75});
    const double expected = 0.25 * (0.5 * (1.0 + 0.0) + 0.5 * (1.0 + 2.0)) + 0.75 * (3.0 - 2.0);
    CHECK(extend(lin, xi) == doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("second_moment: examples") {
    CHECK(second_moment(JointEmpiricalMeasure::strict(1, 1, {0.0}, {0.0}, {1.0})).value == 0.0);
    CHECK(second_moment(JointEmpiricalMeasure::strict(1, 1, {3.0}, {4.0}, {1.0})).value == doctest::Approx(5.0));
    CHECK(second_moment(JointEmpiricalMeasure::strict(1, 1, {1.0, 0.0}, {0.0, 1.0}, {0.5, 0.5})).value ==
          doctest::Approx(1.0));
}

TEST_CASE("extend: Lipschitz transfer for the clipped second moment") {
    // phi(x, u) = min(x^2 + u^2, C) has slope <= 2 sqrt(C) and sup C, so the
    // extension is Lipschitz in d_KR with L = max(2 sqrt(C), C).
    const double C = 1.5;
    const double L = std::max(2.0 * std::sqrt(C), C);
    const StrictFunctional h = [C](const JointEmpiricalMeasure& r) {
        double t = 0.0;
        for (std::size_t i = 0; i < r.size(); ++i) {
            const double x = r.state(i)[0], u = r.control(i)[0];
            t += r.weight(i) * std::min(x * x + u * u, C);
        }
        return t;
    };
    Stream s(25, 0, 0, Purpose::sampling);
    for (int trial = 0; trial < 30; ++trial) {
        const auto a = random_relaxed(s, 4), b = random_relaxed(s, 4);
        CHECK(std::abs(extend(h, a) - extend(h, b)) <= L * kr_distance(a, b) + 1e-12);
    }
}

TEST_CASE("kr_distance dominates the transport distance of the projections for Dirac controls") {
    Stream s(26, 0, 0, Purpose::sampling);
    for (int trial = 0; trial < 30; ++trial) {
        const auto a = random_dirac_relaxed(s, 4), b = random_dirac_relaxed(s, 4);
        CHECK(fm_distance(project(a), project(b)) <= kr_distance(a, b) + 1e-12);
    }
}

TEST_CASE("transport size limit propagates") {
    std::vector<double> atoms(65);
    for (std::size_t i = 0; i < atoms.size(); ++i) atoms[i] = static_cast<double>(i);
    const auto big = EmpiricalMeasure::uniform(1, atoms);
    CHECK_THROWS_AS(fm_distance(big, EmpiricalMeasure::dirac({0.0})), SizeError);
}

TEST_CASE("measure JSON round trip") {
    const EmpiricalMeasure m(2, {0.0, 1.0, 2.0, 3.0}, {0.25, 0.75});
    const auto back = measure_from_json(to_json(m));
    CHECK(back.dim() == 2);
    CHECK(back.atom(1)[1] == 3.0);
    CHECK(back.weight(1) == 0.75);
    nlohmann::json bad = {{"atoms", {{0.0}, {1.0}}}, {"weights", {0.5, 0.6}}};
    CHECK_THROWS_AS(measure_from_json(bad), NormalizationError);
    nlohmann::json scalar = {{"atoms", {0.0, 1.0}}, {"weights", {0.5, 0.5}}};
    CHECK(measure_from_json(scalar).size() == 2);
}

TEST_CASE("control box and control measures") {
    const ControlBox box{{-1.0}, {1.0}};
    CHECK(box.contains(std::vector<double>{0.5}));
    CHECK_FALSE(box.contains(std::vector<double>{1.5}));
    CHECK(box.grid(5).size() == 5);
    CHECK_THROWS_AS(ControlMeasure(1, {0.0, 2.0}, {0.5, 0.5}).check_within(box), DomainError);
    CHECK_NOTHROW(ControlMeasure(1, {0.0, 1.0}, {0.5, 0.5}).check_within(box));
}
