#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace ropdf {

using State = std::span<const double>;
using StateFn = std::function<double(State)>;
using ScalarFn = std::function<double(double)>;
using DriftFn = std::function<void(State, std::span<double>)>;
using ParamMap = std::map<std::string, double>;

// Scalar marginals for the initial state. Gaussian is parameterized by
// variance, not standard deviation.
struct Gaussian {
    double mean = 0.0;
    double variance = 1.0;
};
struct Gamma {
    double shape = 1.0;
    double scale = 1.0;
};
struct Uniform {
    double lo = 0.0;
    double hi = 1.0;
};
/// Point mass. A positive mollification width turns it into a narrow Gaussian
/// when a density has to be evaluated on a grid.
struct Deterministic {
    double value = 0.0;
    double mollification = 0.0;
};
using ScalarDistribution = std::variant<Gaussian, Gamma, Uniform, Deterministic>;

double mean_of(const ScalarDistribution& d);
std::string describe(const ScalarDistribution& d);

/// Sum-to-one projection applied after component sampling: `solve_for` is set
/// to one minus the other members. Members and every capped group must stay in
/// [0, 1] and each capped group must sum to at most one; violating draws are
/// rejected and redrawn from the same per-sample stream.
struct SimplexConstraint {
    std::vector<std::size_t> members;
    std::size_t solve_for = 0;
    std::vector<std::vector<std::size_t>> capped_sums;
};

struct InitialDistribution {
    std::vector<ScalarDistribution> per_component;
    std::optional<SimplexConstraint> constraint;
    /// Optional dense correlation matrix (row-major, dim x dim) among Gaussian
    /// components; non-Gaussian rows/columns must be identity.
    std::optional<std::vector<double>> correlation;

    bool independent() const noexcept { return !constraint && !correlation; }
};

/// One separable piece f(x_qoi) * g(x) of the QoI drift component.
struct ClosureTerm {
    std::string label;
    ScalarFn coefficient;
    StateFn inner;
    /// Components read by `inner` (used for storage projection and quadrature).
    std::vector<std::size_t> support;
};

/// dx_qoi/dt = closed(x_qoi) + sum_l terms[l].coefficient(x_qoi) * terms[l].inner(x).
struct ReducedForm {
    std::size_t qoi = 0;
    std::string closed_label;
    ScalarFn closed;
    std::vector<ClosureTerm> terms;
};

/// Evolution law of the flux h = p E[g | x_qoi] for a single-term ReducedForm
/// (closed part c, coefficient f, inner g):
///
///   dh/dt = -d/dx ( c h + f p E[g^2 | x] ) + p ( s0(x) + sum_l a_l(x) E[s_l | x] )
///
/// where s0 + sum a_l s_l = G . grad g.
struct FluxEquation {
    ClosureTerm second_moment;  // coefficient f, inner g^2
    std::string source_closed_label;
    ScalarFn source_closed;
    std::vector<ClosureTerm> source_terms;
};

struct ModelSpec {
    std::string name;
    std::size_t dim = 0;
    ParamMap params;
    DriftFn drift;
    InitialDistribution initial;
    std::size_t qoi_index = 0;
    std::vector<std::string> component_names;
    /// Separable decomposition of the drift component at a QoI index.
    std::function<ReducedForm(std::size_t)> decompose;
    /// Hand-derived flux equation; empty when the model does not supply one.
    std::function<FluxEquation(std::size_t)> flux_equation;
    /// Notes recorded in run manifests (e.g. placeholder parameter values).
    std::vector<std::string> notes;

    std::vector<ClosureTerm> closure_terms() const;
};

std::vector<std::string> builtin_model_names();

/// Built-in systems with their default parameters; `overrides` may only name
/// declared parameters.
ModelSpec builtin_model(std::string_view name, const ParamMap& overrides = {});

/// G(state), validated for length and finiteness.
std::vector<double> drift(const ModelSpec& model, State state);

/// Counter-based draw: sample i depends only on (seed, i), so any partition of
/// [first, first + count) reproduces the same vectors.
std::vector<std::vector<double>> sample_initial(const ModelSpec& model, std::size_t count, std::uint64_t seed,
                                                std::size_t first = 0);

ReducedForm reduced_terms(const ModelSpec& model, std::size_t qoi_index);

/// Stable 64-bit hex digest of the model's serialized definition.
std::string model_hash(const ModelSpec& model);

/// Index of a component by name; throws when absent.
std::size_t component_index(const ModelSpec& model, std::string_view name);

namespace detail {
std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index) noexcept;
}  // namespace detail

}  // namespace ropdf
