#include <doctest.h>

#include "mfcpn/coefficients.hpp"
#include "mfcpn/errors.hpp"
#include "support.hpp"

#include <vector>

using namespace mfcpn;

namespace {

LQParams lq(double b1, double b2, double b3, double sigma = 0.0) {
    LQParams p;
    p.b1 = b1;
    p.b2 = b2;
    p.b3 = b3;
    p.sigma = sigma;
    return p;
}

LQParams with_mark(LQParams p, double lambda, double gamma) {
    p.jumps.marks.push_back(1.0);
    p.jumps.intensities.push_back(lambda);
    p.jumps.gamma_values.push_back(gamma);
    return p;
}

JointEmpiricalMeasure centred_joint() {
    return JointEmpiricalMeasure::strict(1, 1, {-1.0, 1.0}, {-0.5, 0.5}, {0.5, 0.5});
}

double pt(const std::vector<double>& v) { return v[0]; }

}  // namespace

TEST_CASE("hamiltonian_strict: hand-evaluated examples") {
    const auto cs = make_lq_coefficients(lq(0.0, 0.0, 1.0));
    auto adj = AdjointTriplet::zeros(1, 1, 0);
    adj.p[0] = 1.0;
    const std::vector<double> x{1.0}, u{2.0};
    CHECK(hamiltonian_strict(x, u, centred_joint(), adj, cs) == doctest::Approx(4.0));

    const std::vector<double> zero{0.0};
    CHECK(hamiltonian_strict(zero, zero, centred_joint(), AdjointTriplet::zeros(1, 1, 0), cs) == 0.0);

    const auto jump_cs = make_lq_coefficients(with_mark(lq(0.0, 0.0, 0.0), 2.0, 1.0));
    auto kadj = AdjointTriplet::zeros(1, 1, 1);
    kadj.K[0] = 1.0;
    const std::vector<double> one{1.0};
    CHECK(hamiltonian_strict(zero, one, centred_joint(), kadj, jump_cs) == doctest::Approx(2.5));
}

TEST_CASE("hamiltonian_strict: features and measure overloads agree") {
    const auto cs = make_lq_coefficients(with_mark(lq(0.3, -0.7, 1.2, 0.4), 1.5, 0.6));
    const auto rho = JointEmpiricalMeasure::strict(1, 1, {0.2, 1.4, -0.3}, {0.1, -0.2, 0.9}, {0.2, 0.5, 0.3});
    const auto f = cs.summarize(rho);
    AdjointTriplet adj{{0.8}, {-0.3}, {1.1}};
    const std::vector<double> x{0.7}, u{-0.4};
    const double direct = (0.3 * f[0] - 0.7 * f[1] + 1.2 * -0.4) * 0.8 + 0.4 * 0.7 * -0.3 + 0.5 * 0.16 +
                          1.5 * 0.6 * -0.4 * 1.1;
    CHECK(hamiltonian_strict(x, u, rho, adj, cs) == doctest::Approx(direct).epsilon(1e-14));
    CHECK(hamiltonian_strict(x, u, f, adj, cs) == doctest::Approx(direct).epsilon(1e-14));
}

TEST_CASE("hamiltonian_strict: quadratic in u with unit curvature") {
    const auto cs = make_lq_coefficients(with_mark(lq(0.2, 0.5, 1.0, 0.4), 1.0, 0.5));
    AdjointTriplet adj{{0.4}, {0.2}, {-0.7}};
    const std::vector<double> x{0.3};
    const auto rho = centred_joint();
    const double h = 0.1;
    for (double u0 : {-2.0, 0.0, 1.3}) {
        const std::vector<double> lo{u0 - h}, mid{u0}, hi{u0 + h};
        const double second = (hamiltonian_strict(x, hi, rho, adj, cs) - 2.0 * hamiltonian_strict(x, mid, rho, adj, cs) +
                               hamiltonian_strict(x, lo, rho, adj, cs)) /
                              (h * h);
        CHECK(second == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("hamiltonian_strict: errors") {
    const auto rho = centred_joint();
    const std::vector<double> x{0.0};
    CoefficientSet empty;
    CHECK_THROWS_AS(hamiltonian_strict(x, x, rho, AdjointTriplet::zeros(1, 1, 0), empty), ConfigurationError);
    const auto cs = make_lq_coefficients(lq(1.0, 0.0, 0.0));
    CHECK_THROWS_AS(hamiltonian_strict(x, x, dirac_lift(rho), AdjointTriplet::zeros(1, 1, 0), cs), KindError);
    CHECK_THROWS_AS(hamiltonian_strict(x, x, rho, AdjointTriplet::zeros(1, 1, 2), cs), DimensionError);
}

TEST_CASE("delta_hamiltonian_strict: LQ plug-in examples") {
    const auto rho = centred_joint();
    AdjointTriplet adj{{1.0}, {0.0}, {}};
    const std::vector<double> x{0.5}, u{0.25};
    {
        const auto cs = make_lq_coefficients(lq(2.0, 0.0, 1.0));
        const std::vector<double> xp{3.0}, up{7.0};
        CHECK(delta_hamiltonian_strict(x, u, rho, xp, up, adj, cs) == doctest::Approx(6.0));
        CHECK(delta_hamiltonian_strict(x, u, rho, xp, up, AdjointTriplet::zeros(1, 1, 0), cs) == 0.0);
    }
    {
        const auto cs = make_lq_coefficients(lq(1.0, 1.0, 1.0));
        const std::vector<double> xp{1.0}, up{1.0};
        adj.p[0] = 2.0;
        CHECK(delta_hamiltonian_strict(x, u, rho, xp, up, adj, cs) == doctest::Approx(4.0));
    }
    CoefficientSet no_kernels = make_lq_coefficients(lq(1.0, 1.0, 1.0));
    no_kernels.drift_delta = nullptr;
    CHECK_THROWS_AS(delta_hamiltonian_strict(x, u, rho, x, u, adj, no_kernels), ConfigurationError);
}

TEST_CASE("relaxed Hamiltonians: Dirac consistency and linearity in q") {
    const auto cs = make_lq_coefficients(with_mark(lq(0.2, 0.5, 1.0, 0.4), 1.0, 0.5));
    Stream s(31, 0, 0, Purpose::sampling);
    std::vector<ControlMeasure> qs;
    for (int i = 0; i < 3; ++i) qs.push_back(testing::random_control_measure(s, 2));
    const auto xi = JointEmpiricalMeasure::relaxed(1, {0.1, -0.6, 1.2}, qs, {0.3, 0.3, 0.4});
    const auto rho = project(xi);
    AdjointTriplet adj{{0.4}, {0.2}, {-0.7}};
    const std::vector<double> x{0.3};
    const std::vector<double> u1{-0.8}, u2{0.6};

    const double h1 = hamiltonian_strict(x, u1, rho, adj, cs);
    const double h2 = hamiltonian_strict(x, u2, rho, adj, cs);
    CHECK(hamiltonian_relaxed(x, ControlMeasure::dirac({u1[0]}), xi, adj, cs) == doctest::Approx(h1).epsilon(1e-14));
    const ControlMeasure mix(1, {u1[0], u2[0]}, {0.5, 0.5});
    CHECK(hamiltonian_relaxed(x, mix, xi, adj, cs) == doctest::Approx(0.5 * (h1 + h2)).epsilon(1e-14));

    CHECK(hamiltonian_relaxed(x, mix, xi, AdjointTriplet::zeros(1, 1, 1),
                              make_lq_coefficients(with_mark(lq(0.2, 0.5, 1.0, 0.4), 1.0, 0.5))) ==
          doctest::Approx(0.25 * (pt(u1) * pt(u1) + pt(u2) * pt(u2))));

    const std::vector<double> xp{0.9};
    const ControlMeasure qp(1, {-0.2, 0.4}, {0.25, 0.75});
    double expected = 0.0;
    for (std::size_t j = 0; j < mix.size(); ++j) {
        for (std::size_t k = 0; k < qp.size(); ++k) {
            expected += mix.weight(j) * qp.weight(k) *
                        delta_hamiltonian_strict(x, mix.atom(j), rho, xp, qp.atom(k), adj, cs);
        }
    }
    CHECK(delta_hamiltonian_relaxed(x, mix, xi, xp, qp, adj, cs) == doctest::Approx(expected).epsilon(1e-14));
    CHECK(delta_hamiltonian_relaxed(x, ControlMeasure::dirac({u1[0]}), xi, xp, ControlMeasure::dirac({0.4}), adj, cs) ==
          doctest::Approx(delta_hamiltonian_strict(x, u1, rho, xp, std::vector<double>{0.4}, adj, cs)).epsilon(1e-14));
    CHECK_THROWS_AS(hamiltonian_relaxed(x, mix, rho, adj, cs), KindError);
}

TEST_CASE("LQ parameters: JSON round trip and validation") {
    const auto p = with_mark(lq(0.2, 0.5, 1.0, 0.4), 1.5, -0.3);
    const auto back = lq_params_from_json(to_json(p));
    CHECK(back.b2 == 0.5);
    CHECK(back.jumps.intensities[0] == 1.5);
    CHECK(back.jumps.gamma_values[0] == -0.3);
    CHECK(back.jumps.gamma_l2() == doctest::Approx(0.09 * 1.5));

    auto bad = p;
    bad.jumps.intensities[0] = 0.0;
    CHECK_THROWS_AS(bad.validate(), DomainError);
    bad = p;
    bad.T = 0.0;
    CHECK_THROWS_AS(bad.validate(), DomainError);
    CHECK(parse_noise_mode("idiosyncratic") == NoiseMode::idiosyncratic);
    CHECK_THROWS_AS(parse_noise_mode("shared"), DomainError);
}
