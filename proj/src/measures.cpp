#include "mfcpn/measures.hpp"

#include "mfcpn/errors.hpp"
#include "mfcpn/transport.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace mfcpn {

namespace {

constexpr double kLoadTolerance = 1e-9;
constexpr double kExactTolerance = 1e-12;

std::vector<double> checked_weights(std::vector<double> weights) {
    if (weights.empty()) {
        throw DimensionError("measure needs at least one atom");
    }
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) {
            throw NormalizationError("measure weights must be finite and nonnegative");
        }
    }
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    if (std::abs(total - 1.0) > kLoadTolerance) {
        throw NormalizationError("measure weights sum to " + std::to_string(total) + ", expected 1");
    }
    if (std::abs(total - 1.0) > kExactTolerance) {
        for (double& w : weights) w /= total;
    }
    return weights;
}

double euclidean(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        s += d * d;
    }
    return std::sqrt(s);
}

void require_kind(const JointEmpiricalMeasure& m, JointKind kind, const char* op) {
    if (m.kind() != kind) {
        throw KindError(std::string(op) + ": expected a " + (kind == JointKind::strict ? "strict" : "relaxed") +
                        " joint measure");
    }
}

}  // namespace

EmpiricalMeasure::EmpiricalMeasure(std::size_t dim, std::vector<double> atoms, std::vector<double> weights)
    : dim_(dim), atoms_(std::move(atoms)), weights_(checked_weights(std::move(weights))) {
    if (dim_ == 0) throw DimensionError("measure dimension must be positive");
    if (atoms_.size() != weights_.size() * dim_) {
        throw DimensionError("measure atoms/weights length mismatch");
    }
}

EmpiricalMeasure EmpiricalMeasure::uniform(std::size_t dim, std::vector<double> atoms) {
    if (dim == 0 || atoms.empty() || atoms.size() % dim != 0) {
        throw DimensionError("uniform measure: atom array is not a multiple of the dimension");
    }
    const std::size_t n = atoms.size() / dim;
    return EmpiricalMeasure(dim, std::move(atoms), std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

EmpiricalMeasure EmpiricalMeasure::dirac(std::vector<double> point) {
    const std::size_t dim = point.size();
    return EmpiricalMeasure(dim, std::move(point), {1.0});
}

std::vector<double> EmpiricalMeasure::mean() const {
    std::vector<double> m(dim_, 0.0);
    for (std::size_t i = 0; i < size(); ++i) {
        for (std::size_t k = 0; k < dim_; ++k) m[k] += weights_[i] * atoms_[i * dim_ + k];
    }
    return m;
}

bool ControlBox::contains(std::span<const double> u) const {
    if (u.size() != dim()) return false;
    for (std::size_t k = 0; k < dim(); ++k) {
        if (u[k] < lower[k] || u[k] > upper[k]) return false;
    }
    return true;
}

std::vector<double> ControlBox::grid(std::size_t points_per_axis) const {
    if (points_per_axis < 2) throw DomainError("control grid needs at least two points per axis");
    const std::size_t m = dim();
    std::size_t total = 1;
    for (std::size_t k = 0; k < m; ++k) total *= points_per_axis;
    std::vector<double> out(total * m);
    for (std::size_t idx = 0; idx < total; ++idx) {
        std::size_t rem = idx;
        for (std::size_t k = m; k-- > 0;) {
            const std::size_t j = rem % points_per_axis;
            rem /= points_per_axis;
            const double frac = static_cast<double>(j) / static_cast<double>(points_per_axis - 1);
            out[idx * m + k] = lower[k] + frac * (upper[k] - lower[k]);
        }
    }
    return out;
}

void ControlMeasure::check_within(const ControlBox& box) const {
    for (std::size_t i = 0; i < size(); ++i) {
        if (!box.contains(atom(i))) {
            throw DomainError("control support point " + std::to_string(i) + " lies outside U");
        }
    }
}

JointEmpiricalMeasure JointEmpiricalMeasure::strict(std::size_t state_dim, std::size_t control_dim,
                                                    std::vector<double> states, std::vector<double> controls,
                                                    std::vector<double> weights) {
    JointEmpiricalMeasure m;
    m.kind_ = JointKind::strict;
    m.state_dim_ = state_dim;
    m.control_dim_ = control_dim;
    m.weights_ = checked_weights(std::move(weights));
    m.states_ = std::move(states);
    m.controls_ = std::move(controls);
    if (state_dim == 0 || control_dim == 0 || m.states_.size() != m.size() * state_dim ||
        m.controls_.size() != m.size() * control_dim) {
        throw DimensionError("strict joint measure: inconsistent atom arrays");
    }
    return m;
}

JointEmpiricalMeasure JointEmpiricalMeasure::relaxed(std::size_t state_dim, std::vector<double> states,
                                                     std::vector<ControlMeasure> controls,
                                                     std::vector<double> weights) {
    JointEmpiricalMeasure m;
    m.kind_ = JointKind::relaxed;
    m.state_dim_ = state_dim;
    m.weights_ = checked_weights(std::move(weights));
    m.states_ = std::move(states);
    m.relaxed_controls_ = std::move(controls);
    if (state_dim == 0 || m.states_.size() != m.size() * state_dim || m.relaxed_controls_.size() != m.size()) {
        throw DimensionError("relaxed joint measure: inconsistent atom arrays");
    }
    m.control_dim_ = m.relaxed_controls_.front().dim();
    for (const auto& q : m.relaxed_controls_) {
        if (q.dim() != m.control_dim_) throw DimensionError("relaxed joint measure: mixed control dimensions");
    }
    return m;
}

EmpiricalMeasure JointEmpiricalMeasure::state_marginal() const {
    return EmpiricalMeasure(state_dim_, states_, weights_);
}

double fm_distance(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
    if (a.dim() != b.dim()) {
        throw DimensionError("fm_distance: dimension mismatch (" + std::to_string(a.dim()) + " vs " +
                             std::to_string(b.dim()) + ")");
    }
    std::vector<double> cost(a.size() * b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < b.size(); ++j) {
            cost[i * b.size() + j] = std::min(euclidean(a.atom(i), b.atom(j)), 2.0);
        }
    }
    return solve_transport(a.weights(), b.weights(), cost).cost;
}

double fm_distance(const JointEmpiricalMeasure& a, const JointEmpiricalMeasure& b) {
    require_kind(a, JointKind::strict, "fm_distance");
    require_kind(b, JointKind::strict, "fm_distance");
    if (a.state_dim() != b.state_dim() || a.control_dim() != b.control_dim()) {
        throw DimensionError("fm_distance: joint dimension mismatch");
    }
    std::vector<double> cost(a.size() * b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < b.size(); ++j) {
            const double d = euclidean(a.state(i), b.state(j)) + euclidean(a.control(i), b.control(j));
            cost[i * b.size() + j] = std::min(d, 2.0);
        }
    }
    return solve_transport(a.weights(), b.weights(), cost).cost;
}

double kr_distance(const JointEmpiricalMeasure& a, const JointEmpiricalMeasure& b) {
    require_kind(a, JointKind::relaxed, "kr_distance");
    require_kind(b, JointKind::relaxed, "kr_distance");
    if (a.state_dim() != b.state_dim() || a.control_dim() != b.control_dim()) {
        throw DimensionError("kr_distance: joint dimension mismatch");
    }
    if (a.size() > kMaxTransportAtoms || b.size() > kMaxTransportAtoms) {
        throw SizeError("kr_distance: joint measure exceeds the exact-solver atom limit");
    }
    std::vector<double> cost(a.size() * b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < b.size(); ++j) {
            cost[i * b.size() + j] =
                euclidean(a.state(i), b.state(j)) + fm_distance(a.control_measure(i), b.control_measure(j));
        }
    }
    return solve_transport(a.weights(), b.weights(), cost).cost;
}

JointEmpiricalMeasure project(const JointEmpiricalMeasure& xi) {
    require_kind(xi, JointKind::relaxed, "project");
    const std::size_t n = xi.state_dim();
    const std::size_t m = xi.control_dim();
    std::vector<double> states;
    std::vector<double> controls;
    std::vector<double> weights;
    for (std::size_t i = 0; i < xi.size(); ++i) {
        const auto& q = xi.control_measure(i);
        const auto x = xi.state(i);
        for (std::size_t j = 0; j < q.size(); ++j) {
            states.insert(states.end(), x.begin(), x.end());
            const auto u = q.atom(j);
            controls.insert(controls.end(), u.begin(), u.end());
            weights.push_back(xi.weight(i) * q.weight(j));
        }
    }
    return JointEmpiricalMeasure::strict(n, m, std::move(states), std::move(controls), std::move(weights));
}

JointEmpiricalMeasure dirac_lift(const JointEmpiricalMeasure& rho) {
    require_kind(rho, JointKind::strict, "dirac_lift");
    std::vector<ControlMeasure> controls;
    controls.reserve(rho.size());
    for (std::size_t i = 0; i < rho.size(); ++i) {
        const auto u = rho.control(i);
        controls.push_back(ControlMeasure::dirac({u.begin(), u.end()}));
    }
    return JointEmpiricalMeasure::relaxed(rho.state_dim(), {rho.states().begin(), rho.states().end()},
                                          std::move(controls), {rho.weights().begin(), rho.weights().end()});
}

JointEmpiricalMeasure mixture(double lambda, const JointEmpiricalMeasure& a, const JointEmpiricalMeasure& b) {
    if (lambda < 0.0 || lambda > 1.0) throw DomainError("mixture weight must lie in [0, 1]");
    if (a.kind() != b.kind()) throw KindError("mixture: strict and relaxed joints cannot be mixed");
    if (a.state_dim() != b.state_dim() || a.control_dim() != b.control_dim()) {
        throw DimensionError("mixture: dimension mismatch");
    }
    std::vector<double> states(a.states().begin(), a.states().end());
    states.insert(states.end(), b.states().begin(), b.states().end());
    std::vector<double> weights;
    for (double w : a.weights()) weights.push_back(lambda * w);
    for (double w : b.weights()) weights.push_back((1.0 - lambda) * w);
    if (a.kind() == JointKind::strict) {
        std::vector<double> controls(a.controls().begin(), a.controls().end());
        controls.insert(controls.end(), b.controls().begin(), b.controls().end());
        return JointEmpiricalMeasure::strict(a.state_dim(), a.control_dim(), std::move(states), std::move(controls),
                                             std::move(weights));
    }
    std::vector<ControlMeasure> controls;
    for (std::size_t i = 0; i < a.size(); ++i) controls.push_back(a.control_measure(i));
    for (std::size_t i = 0; i < b.size(); ++i) controls.push_back(b.control_measure(i));
    return JointEmpiricalMeasure::relaxed(a.state_dim(), std::move(states), std::move(controls), std::move(weights));
}

EmpiricalMeasure mixture(double lambda, const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
    if (lambda < 0.0 || lambda > 1.0) throw DomainError("mixture weight must lie in [0, 1]");
    if (a.dim() != b.dim()) throw DimensionError("mixture: dimension mismatch");
    std::vector<double> atoms(a.atoms().begin(), a.atoms().end());
    atoms.insert(atoms.end(), b.atoms().begin(), b.atoms().end());
    std::vector<double> weights;
    for (double w : a.weights()) weights.push_back(lambda * w);
    for (double w : b.weights()) weights.push_back((1.0 - lambda) * w);
    return EmpiricalMeasure(a.dim(), std::move(atoms), std::move(weights));
}

double extend(const StrictFunctional& h, const JointEmpiricalMeasure& xi) { return h(project(xi)); }

SecondMoment second_moment(const JointEmpiricalMeasure& rho) {
    if (rho.kind() == JointKind::relaxed) return second_moment(project(rho));
    double acc = 0.0;
    for (std::size_t i = 0; i < rho.size(); ++i) {
        double s = 0.0;
        for (double x : rho.state(i)) s += x * x;
        for (double u : rho.control(i)) s += u * u;
        acc += rho.weight(i) * s;
    }
    return {std::sqrt(acc)};
}

nlohmann::json to_json(const EmpiricalMeasure& m) {
    nlohmann::json atoms = nlohmann::json::array();
    for (std::size_t i = 0; i < m.size(); ++i) {
        const auto a = m.atom(i);
        atoms.push_back(std::vector<double>(a.begin(), a.end()));
    }
    return {{"atoms", atoms}, {"weights", std::vector<double>(m.weights().begin(), m.weights().end())}};
}

EmpiricalMeasure measure_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("atoms") || !j.contains("weights")) {
        throw DimensionError("measure JSON needs \"atoms\" and \"weights\"");
    }
    const auto& rows = j.at("atoms");
    const auto weights = j.at("weights").get<std::vector<double>>();
    if (!rows.is_array() || rows.size() != weights.size() || rows.empty()) {
        throw DimensionError("measure JSON: atoms and weights differ in length");
    }
    std::size_t dim = 0;
    std::vector<double> atoms;
    for (const auto& row : rows) {
        const auto point = row.is_array() ? row.get<std::vector<double>>() : std::vector<double>{row.get<double>()};
        if (dim == 0) dim = point.size();
        if (point.size() != dim || dim == 0) throw DimensionError("measure JSON: ragged atom rows");
        atoms.insert(atoms.end(), point.begin(), point.end());
    }
    return EmpiricalMeasure(dim, std::move(atoms), weights);
}

}  // namespace mfcpn
