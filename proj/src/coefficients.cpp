#include "mfcpn/coefficients.hpp"

#include "mfcpn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace mfcpn {

double JumpSpec::total_intensity() const { return std::accumulate(intensities.begin(), intensities.end(), 0.0); }

double JumpSpec::gamma_l2() const {
    double s = 0.0;
    for (std::size_t j = 0; j < gamma_values.size(); ++j) s += gamma_values[j] * gamma_values[j] * intensities[j];
    return s;
}

void JumpSpec::validate() const {
    if (intensities.size() != marks.size()) throw DimensionError("jumps: marks and intensities differ in length");
    if (!gamma_values.empty() && gamma_values.size() != marks.size()) {
        throw DimensionError("jumps: marks and gamma values differ in length");
    }
    for (double l : intensities) {
        if (!(l > 0.0) || !std::isfinite(l)) throw DomainError("jumps: intensities must be positive and finite");
    }
}

const char* to_string(NoiseMode mode) { return mode == NoiseMode::common ? "common" : "idiosyncratic"; }

NoiseMode parse_noise_mode(const std::string& s) {
    if (s == "common") return NoiseMode::common;
    if (s == "idiosyncratic") return NoiseMode::idiosyncratic;
    throw DomainError("unknown noise mode \"" + s + "\" (expected common or idiosyncratic)");
}

void LQParams::validate() const {
    if (!(T > 0.0)) throw DomainError("model: horizon T must be positive");
    if (!(c >= 0.0)) throw DomainError("model: terminal weight c must be nonnegative");
    jumps.validate();
    if (jumps.gamma_values.size() != jumps.size()) throw DimensionError("jumps: every mark needs a gamma value");
}

LQParams lq_params_from_json(const nlohmann::json& cfg) {
    LQParams p;
    const auto& m = cfg.at("model");
    p.b1 = m.value("b1", 0.0);
    p.b2 = m.value("b2", 0.0);
    p.b3 = m.value("b3", 0.0);
    p.sigma = m.value("sigma", 0.0);
    p.c = m.value("c", 1.0);
    p.T = m.value("T", 1.0);
    if (cfg.contains("jumps")) {
        for (const auto& mark : cfg.at("jumps").at("marks")) {
            p.jumps.marks.push_back(mark.value("z", 0.0));
            p.jumps.intensities.push_back(mark.at("lambda").get<double>());
            p.jumps.gamma_values.push_back(mark.at("gamma").get<double>());
        }
    }
    p.validate();
    return p;
}

nlohmann::json to_json(const LQParams& p) {
    nlohmann::json marks = nlohmann::json::array();
    for (std::size_t j = 0; j < p.jumps.size(); ++j) {
        marks.push_back({{"z", p.jumps.marks[j]},
                         {"lambda", p.jumps.intensities[j]},
                         {"gamma", p.jumps.gamma_values[j]}});
    }
    return {{"model", {{"b1", p.b1}, {"b2", p.b2}, {"b3", p.b3}, {"sigma", p.sigma}, {"c", p.c}, {"T", p.T}}},
            {"jumps", {{"marks", marks}}}};
}

void CoefficientSet::require_core() const {
    if (!summarize) throw ConfigurationError("coefficient set has no summarizer");
    if (!drift) throw ConfigurationError("coefficient set has no drift evaluator");
    if (!diffusion) throw ConfigurationError("coefficient set has no diffusion evaluator");
    if (jumps.size() > 0 && !jump) throw ConfigurationError("coefficient set has marks but no jump evaluator");
    if (!running_cost) throw ConfigurationError("coefficient set has no running cost");
}

void CoefficientSet::require_delta() const {
    if (!drift_delta || !diffusion_delta || !running_cost_delta || (jumps.size() > 0 && !jump_delta)) {
        throw ConfigurationError("coefficient set lacks linear-derivative kernels");
    }
}

CoefficientSet make_lq_coefficients(const LQParams& p) {
    p.validate();
    CoefficientSet cs;
    cs.jumps = p.jumps;
    const double inf = std::numeric_limits<double>::infinity();
    cs.control_box = {{-inf}, {inf}};

    cs.summarize = [](const JointEmpiricalMeasure& rho) {
        double mx = 0.0;
        double mu = 0.0;
        for (std::size_t i = 0; i < rho.size(); ++i) {
            mx += rho.weight(i) * rho.state(i)[0];
            mu += rho.weight(i) * rho.control(i)[0];
        }
        return std::vector<double>{mx, mu};
    };
    cs.summarize_terminal = [](const EmpiricalMeasure& mu) { return mu.mean(); };

    const double b1 = p.b1, b2 = p.b2, b3 = p.b3, sigma = p.sigma, c = p.c;
    const std::vector<double> gamma = p.jumps.gamma_values;

    cs.drift = [=](Point, Features f, Point u, OutVec out) { out[0] = b1 * f[0] + b2 * f[1] + b3 * u[0]; };
    cs.diffusion = [=](Point x, Features, Point, OutVec out) { out[0] = sigma * x[0]; };
    cs.jump = [=](Point, Features, Point u, std::size_t j, OutVec out) { out[0] = gamma[j] * u[0]; };
    cs.running_cost = [](Point, Features, Point u) { return 0.5 * u[0] * u[0]; };
    cs.terminal_cost = [=](Point x, Features f) {
        const double d = x[0] - f[0];
        return 0.5 * c * d * d;
    };

    cs.drift_dx = [](Point, Features, Point, OutVec out) { out[0] = 0.0; };
    cs.diffusion_dx = [=](Point, Features, Point, OutVec out) { out[0] = sigma; };
    cs.jump_dx = [](Point, Features, Point, std::size_t, OutVec out) { out[0] = 0.0; };
    cs.running_cost_dx = [](Point, Features, Point, OutVec out) { out[0] = 0.0; };
    cs.terminal_cost_dx = [=](Point x, Features f, OutVec out) { out[0] = c * (x[0] - f[0]); };

    cs.drift_delta = [=](Point, Features, Point, Point xp, Point up, OutVec out) {
        out[0] = b1 * xp[0] + b2 * up[0];
    };
    cs.diffusion_delta = [](Point, Features, Point, Point, Point, OutVec out) { out[0] = 0.0; };
    cs.jump_delta = [](Point, Features, Point, Point, Point, std::size_t, OutVec out) { out[0] = 0.0; };
    cs.running_cost_delta = [](Point, Features, Point, Point, Point) { return 0.0; };
    return cs;
}

AdjointTriplet AdjointTriplet::zeros(std::size_t n, std::size_t d, std::size_t marks) {
    return {std::vector<double>(n, 0.0), std::vector<double>(n * d, 0.0), std::vector<double>(marks * n, 0.0)};
}

namespace {

void check_adjoint(const AdjointTriplet& adj, const CoefficientSet& cs) {
    const std::size_t n = cs.state_dim;
    if (adj.p.size() != n || adj.P.size() != n * cs.noise_dim || adj.K.size() != n * cs.jumps.size()) {
        throw DimensionError("adjoint triplet does not match the coefficient dimensions");
    }
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

}  // namespace

double hamiltonian_strict(Point x, Point u, Features features, const AdjointTriplet& adj,
                          const CoefficientSet& cs) {
    cs.require_core();
    check_adjoint(adj, cs);
    const std::size_t n = cs.state_dim;
    std::vector<double> buf(n * std::max<std::size_t>(cs.noise_dim, 1));
    OutVec b(buf.data(), n);
    cs.drift(x, features, u, b);
    double h = dot(b, adj.p);
    OutVec s(buf.data(), n * cs.noise_dim);
    cs.diffusion(x, features, u, s);
    h += dot(s, adj.P);
    h += cs.running_cost(x, features, u);
    for (std::size_t j = 0; j < cs.jumps.size(); ++j) {
        OutVec g(buf.data(), n);
        cs.jump(x, features, u, j, g);
        h += cs.jumps.intensities[j] * dot(g, std::span<const double>(adj.K.data() + j * n, n));
    }
    return h;
}

double hamiltonian_strict(Point x, Point u, const JointEmpiricalMeasure& rho, const AdjointTriplet& adj,
                          const CoefficientSet& cs) {
    if (rho.kind() != JointKind::strict) throw KindError("hamiltonian_strict: expected a strict joint measure");
    cs.require_core();
    const auto f = cs.summarize(rho);
    return hamiltonian_strict(x, u, f, adj, cs);
}

double delta_hamiltonian_strict(Point x, Point u, Features features, Point xprime, Point uprime,
                                const AdjointTriplet& adj, const CoefficientSet& cs) {
    cs.require_delta();
    check_adjoint(adj, cs);
    const std::size_t n = cs.state_dim;
    std::vector<double> buf(n * std::max<std::size_t>(cs.noise_dim, 1));
    OutVec b(buf.data(), n);
    cs.drift_delta(x, features, u, xprime, uprime, b);
    double h = dot(b, adj.p);
    OutVec s(buf.data(), n * cs.noise_dim);
    cs.diffusion_delta(x, features, u, xprime, uprime, s);
    h += dot(s, adj.P);
    h += cs.running_cost_delta(x, features, u, xprime, uprime);
    for (std::size_t j = 0; j < cs.jumps.size(); ++j) {
        OutVec g(buf.data(), n);
        cs.jump_delta(x, features, u, xprime, uprime, j, g);
        h += cs.jumps.intensities[j] * dot(g, std::span<const double>(adj.K.data() + j * n, n));
    }
    return h;
}

double delta_hamiltonian_strict(Point x, Point u, const JointEmpiricalMeasure& rho, Point xprime, Point uprime,
                                const AdjointTriplet& adj, const CoefficientSet& cs) {
    if (rho.kind() != JointKind::strict) {
        throw KindError("delta_hamiltonian_strict: expected a strict joint measure");
    }
    cs.require_core();
    const auto f = cs.summarize(rho);
    return delta_hamiltonian_strict(x, u, f, xprime, uprime, adj, cs);
}

double hamiltonian_relaxed(Point x, const ControlMeasure& q, const JointEmpiricalMeasure& xi,
                           const AdjointTriplet& adj, const CoefficientSet& cs) {
    if (xi.kind() != JointKind::relaxed) throw KindError("hamiltonian_relaxed: expected a relaxed joint measure");
    cs.require_core();
    const auto f = cs.summarize(project(xi));
    double h = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) h += q.weight(j) * hamiltonian_strict(x, q.atom(j), f, adj, cs);
    return h;
}

double delta_hamiltonian_relaxed(Point x, const ControlMeasure& q, const JointEmpiricalMeasure& xi, Point xprime,
                                 const ControlMeasure& qprime, const AdjointTriplet& adj,
                                 const CoefficientSet& cs) {
    if (xi.kind() != JointKind::relaxed) {
        throw KindError("delta_hamiltonian_relaxed: expected a relaxed joint measure");
    }
    cs.require_core();
    const auto f = cs.summarize(project(xi));
    double h = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) {
        for (std::size_t k = 0; k < qprime.size(); ++k) {
            h += q.weight(j) * qprime.weight(k) *
                 delta_hamiltonian_strict(x, q.atom(j), f, xprime, qprime.atom(k), adj, cs);
        }
    }
    return h;
}

}  // namespace mfcpn
