#pragma once

// Finite-atom probability measures on R^n, on a control set U and on the
// joint spaces R^n x U (strict) and R^n x P(U) (relaxed), with the two
// transport metrics, the affine projection and the extension transformation.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <json.hpp>

namespace mfcpn {

/// Weighted atoms in R^dim. Immutable; weights sum to one within 1e-12.
class EmpiricalMeasure {
public:
    /// `atoms` is row-major (size() x dim). Weights are renormalized when
    /// their sum is within 1e-9 of one; anything further off throws.
    EmpiricalMeasure(std::size_t dim, std::vector<double> atoms, std::vector<double> weights);

    static EmpiricalMeasure uniform(std::size_t dim, std::vector<double> atoms);
    static EmpiricalMeasure dirac(std::vector<double> point);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t size() const noexcept { return weights_.size(); }
    std::span<const double> atom(std::size_t i) const { return {atoms_.data() + i * dim_, dim_}; }
    double weight(std::size_t i) const { return weights_[i]; }
    std::span<const double> atoms() const noexcept { return atoms_; }
    std::span<const double> weights() const noexcept { return weights_; }

    std::vector<double> mean() const;

    /// Integral of a scalar function of the atom.
    template <class F>
    double integrate(F&& f) const {
        double acc = 0.0;
        for (std::size_t i = 0; i < size(); ++i) acc += weights_[i] * f(atom(i));
        return acc;
    }

private:
    std::size_t dim_;
    std::vector<double> atoms_;
    std::vector<double> weights_;
};

/// Axis-aligned compact control box U, with a finite grid for relaxed supports.
struct ControlBox {
    std::vector<double> lower;
    std::vector<double> upper;

    std::size_t dim() const noexcept { return lower.size(); }
    bool contains(std::span<const double> u) const;
    /// Tensor grid with `points_per_axis` nodes per coordinate (row-major output).
    std::vector<double> grid(std::size_t points_per_axis) const;
};

/// A probability measure on the control set (a relaxed control value).
class ControlMeasure : public EmpiricalMeasure {
public:
    using EmpiricalMeasure::EmpiricalMeasure;
    ControlMeasure(EmpiricalMeasure m) : EmpiricalMeasure(std::move(m)) {}  // NOLINT

    static ControlMeasure dirac(std::vector<double> u) { return ControlMeasure(EmpiricalMeasure::dirac(std::move(u))); }
    /// Throws DomainError when a support point lies outside `box`.
    void check_within(const ControlBox& box) const;
};

enum class JointKind { strict, relaxed };

/// Weighted atoms on R^n x U (strict kind) or R^n x P(U) (relaxed kind).
class JointEmpiricalMeasure {
public:
    static JointEmpiricalMeasure strict(std::size_t state_dim, std::size_t control_dim,
                                        std::vector<double> states, std::vector<double> controls,
                                        std::vector<double> weights);
    static JointEmpiricalMeasure relaxed(std::size_t state_dim, std::vector<double> states,
                                         std::vector<ControlMeasure> controls, std::vector<double> weights);

    JointKind kind() const noexcept { return kind_; }
    std::size_t size() const noexcept { return weights_.size(); }
    std::size_t state_dim() const noexcept { return state_dim_; }
    std::size_t control_dim() const noexcept { return control_dim_; }

    std::span<const double> state(std::size_t i) const { return {states_.data() + i * state_dim_, state_dim_}; }
    /// Strict kind only.
    std::span<const double> control(std::size_t i) const {
        return {controls_.data() + i * control_dim_, control_dim_};
    }
    /// Relaxed kind only.
    const ControlMeasure& control_measure(std::size_t i) const { return relaxed_controls_[i]; }
    double weight(std::size_t i) const { return weights_[i]; }
    std::span<const double> weights() const noexcept { return weights_; }
    std::span<const double> states() const noexcept { return states_; }
    std::span<const double> controls() const noexcept { return controls_; }

    EmpiricalMeasure state_marginal() const;

private:
    JointEmpiricalMeasure() = default;

    JointKind kind_ = JointKind::strict;
    std::size_t state_dim_ = 0;
    std::size_t control_dim_ = 0;
    std::vector<double> states_;
    std::vector<double> controls_;
    std::vector<ControlMeasure> relaxed_controls_;
    std::vector<double> weights_;
};

struct SecondMoment {
    double value = 0.0;
};

/// Fortet-Mourier distance: sup of the integral of f against a - b over
/// 1-Lipschitz f bounded by one, evaluated as transport with cost min(|x-y|, 2).
double fm_distance(const EmpiricalMeasure& a, const EmpiricalMeasure& b);
/// Same on strict joints, with ground norm |x - x'| + |u - u'|.
double fm_distance(const JointEmpiricalMeasure& a, const JointEmpiricalMeasure& b);

/// Kantorovich-Rubinstein (W1) distance between relaxed joints with ground
/// distance |x - x'| + fm_distance(q, q').
double kr_distance(const JointEmpiricalMeasure& a, const JointEmpiricalMeasure& b);

/// Affine projection of a relaxed joint onto R^n x U.
JointEmpiricalMeasure project(const JointEmpiricalMeasure& xi);

/// Embeds a strict joint as the relaxed joint of its Dirac controls.
JointEmpiricalMeasure dirac_lift(const JointEmpiricalMeasure& rho);

/// Convex combination lambda * a + (1 - lambda) * b (atoms concatenated).
JointEmpiricalMeasure mixture(double lambda, const JointEmpiricalMeasure& a, const JointEmpiricalMeasure& b);
EmpiricalMeasure mixture(double lambda, const EmpiricalMeasure& a, const EmpiricalMeasure& b);

using StrictFunctional = std::function<double(const JointEmpiricalMeasure&)>;

/// Extension transformation: h evaluated at project(xi).
double extend(const StrictFunctional& h, const JointEmpiricalMeasure& xi);

/// sqrt of the integral of |x|^2 + |u|^2; relaxed input is projected first.
SecondMoment second_moment(const JointEmpiricalMeasure& rho);

// JSON: {"atoms": [[...], ...], "weights": [...]}. Loading fails when the
// weights are more than 1e-9 away from summing to one.
nlohmann::json to_json(const EmpiricalMeasure& m);
EmpiricalMeasure measure_from_json(const nlohmann::json& j);

}  // namespace mfcpn
