#include "ropdf/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "ropdf/error.hpp"
#include "ropdf/model_config.hpp"

namespace ropdf {

namespace detail {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index) noexcept {
    return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

}  // namespace detail

double mean_of(const ScalarDistribution& d) {
    return std::visit(
        [](const auto& v) -> double {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, Gaussian>) return v.mean;
            else if constexpr (std::is_same_v<T, Gamma>) return v.shape * v.scale;
            else if constexpr (std::is_same_v<T, Uniform>) return 0.5 * (v.lo + v.hi);
            else return v.value;
        },
        d);
}

std::string describe(const ScalarDistribution& d) {
    std::ostringstream os;
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, Gaussian>) os << "gaussian(" << v.mean << ", " << v.variance << ")";
            else if constexpr (std::is_same_v<T, Gamma>) os << "gamma(" << v.shape << ", " << v.scale << ")";
            else if constexpr (std::is_same_v<T, Uniform>) os << "uniform(" << v.lo << ", " << v.hi << ")";
            else os << "deterministic(" << v.value << ")";
        },
        d);
    return os.str();
}

std::vector<ClosureTerm> ModelSpec::closure_terms() const {
    if (!decompose) return {};
    return decompose(qoi_index).terms;
}

namespace {

constexpr double kPi = 3.14159265358979323846;

ParamMap apply_overrides(ParamMap defaults, const ParamMap& overrides, std::string_view model) {
    for (const auto& [key, value] : overrides) {
        auto it = defaults.find(key);
        if (it == defaults.end()) {
            throw InvalidArgument("model '" + std::string(model) + "' has no parameter '" + key + "'");
        }
        if (!std::isfinite(value)) throw InvalidArgument("parameter '" + key + "' must be finite");
        it->second = value;
    }
    return defaults;
}

ClosureTerm make_term(std::string label, ScalarFn coefficient, StateFn inner, std::vector<std::size_t> support) {
    return ClosureTerm{std::move(label), std::move(coefficient), std::move(inner), std::move(support)};
}

std::vector<std::string> indexed_names(std::size_t n) {
    std::vector<std::string> names(n);
    for (std::size_t i = 0; i < n; ++i) names[i] = "x" + std::to_string(i + 1);
    return names;
}

[[noreturn]] void not_separable(const ModelSpec& m, std::size_t qoi) {
    throw InvalidArgument("model '" + m.name + "' declares no separable form for component " + std::to_string(qoi));
}

// ---------------------------------------------------------------- Kraichnan-Orszag

ModelSpec kraichnan_orszag(const ParamMap& overrides) {
    ModelSpec m;
    m.name = "kraichnan_orszag";
    m.dim = 3;
    m.params = apply_overrides({{"init_mean", 1.0}, {"init_variance", 1.0}}, overrides, m.name);
    m.component_names = indexed_names(3);
    m.drift = [](State x, std::span<double> dx) {
        dx[0] = x[0] * x[2];
        dx[1] = -x[1] * x[2];
        dx[2] = -x[0] * x[0] + x[1] * x[1];
    };
    const Gaussian g0{m.params.at("init_mean"), m.params.at("init_variance")};
    if (!(g0.variance > 0.0)) throw InvalidArgument("init_variance must be positive");
    m.initial.per_component = {g0, g0, g0};
    m.qoi_index = 0;
    m.decompose = [m_name = m.name](std::size_t qoi) -> ReducedForm {
        ReducedForm r;
        r.qoi = qoi;
        r.closed_label = "0";
        r.closed = [](double) { return 0.0; };
        switch (qoi) {
            case 0:
                r.terms.push_back(make_term("x1 * E[x3 | x1]", [](double x) { return x; },
                                            [](State s) { return s[2]; }, {2}));
                break;
            case 1:
                r.terms.push_back(make_term("-x2 * E[x3 | x2]", [](double x) { return -x; },
                                            [](State s) { return s[2]; }, {2}));
                break;
            case 2:
                r.terms.push_back(make_term("E[x2^2 - x1^2 | x3]", [](double) { return 1.0; },
                                            [](State s) { return s[1] * s[1] - s[0] * s[0]; }, {0, 1}));
                break;
            default:
                throw InvalidArgument(m_name + ": component index out of range");
        }
        return r;
    };
    m.flux_equation = [](std::size_t qoi) -> FluxEquation {
        FluxEquation f;
        switch (qoi) {
            case 0:
                // G . grad(x3) = x2^2 - x1^2
                f.second_moment = make_term("x1 * E[x3^2 | x1]", [](double x) { return x; },
                                            [](State s) { return s[2] * s[2]; }, {2});
                f.source_closed_label = "-x1^2";
                f.source_closed = [](double x) { return -x * x; };
                f.source_terms.push_back(make_term("E[x2^2 | x1]", [](double) { return 1.0; },
                                                   [](State s) { return s[1] * s[1]; }, {1}));
                break;
            case 1:
                f.second_moment = make_term("-x2 * E[x3^2 | x2]", [](double x) { return -x; },
                                            [](State s) { return s[2] * s[2]; }, {2});
                f.source_closed_label = "x2^2";
                f.source_closed = [](double x) { return x * x; };
                f.source_terms.push_back(make_term("-E[x1^2 | x2]", [](double) { return -1.0; },
                                                   [](State s) { return s[0] * s[0]; }, {0}));
                break;
            case 2:
                // g = x2^2 - x1^2, G . grad g = -2 x3 (x1^2 + x2^2)
                f.second_moment = make_term("E[(x2^2 - x1^2)^2 | x3]", [](double) { return 1.0; },
                                            [](State s) {
                                                const double g = s[1] * s[1] - s[0] * s[0];
                                                return g * g;
                                            },
                                            {0, 1});
                f.source_closed_label = "0";
                f.source_closed = [](double) { return 0.0; };
                f.source_terms.push_back(make_term("-2 x3 E[x1^2 + x2^2 | x3]", [](double x) { return -2.0 * x; },
                                                   [](State s) { return s[0] * s[0] + s[1] * s[1]; }, {0, 1}));
                break;
            default:
                throw InvalidArgument("kraichnan_orszag: component index out of range");
        }
        return f;
    };
    return m;
}

// ---------------------------------------------------------------- ring (dx_i/dt = F - sin(x_{i+1}) x_i - A x_i)

ModelSpec ring(const ParamMap& overrides) {
    ModelSpec m;
    m.name = "ring";
    m.params = apply_overrides(
        {{"F", 10.0}, {"A", 0.2}, {"N", 1000.0}, {"init_mean", 0.0}, {"init_variance", 1.0}}, overrides, m.name);
    const double n_real = m.params.at("N");
    if (!(n_real >= 2.0) || n_real != std::floor(n_real)) throw InvalidArgument("ring: N must be an integer >= 2");
    const auto n = static_cast<std::size_t>(n_real);
    const double F = m.params.at("F");
    const double A = m.params.at("A");
    m.dim = n;
    m.component_names = indexed_names(n);
    m.drift = [F, A, n](State x, std::span<double> dx) {
        for (std::size_t i = 0; i + 1 < n; ++i) dx[i] = F - std::sin(x[i + 1]) * x[i] - A * x[i];
        dx[n - 1] = F - std::sin(x[0]) * x[n - 1] - A * x[n - 1];
    };
    const Gaussian g0{m.params.at("init_mean"), m.params.at("init_variance")};
    if (!(g0.variance > 0.0)) throw InvalidArgument("init_variance must be positive");
    m.initial.per_component.assign(n, g0);
    m.qoi_index = 0;
    m.decompose = [F, A, n](std::size_t qoi) -> ReducedForm {
        if (qoi >= n) throw InvalidArgument("ring: component index out of range");
        const std::size_t next = (qoi + 1) % n;
        ReducedForm r;
        r.qoi = qoi;
        r.closed_label = "F - A x";
        r.closed = [F, A](double x) { return F - A * x; };
        r.terms.push_back(make_term("-x * E[sin(x_next) | x]", [](double x) { return -x; },
                                    [next](State s) { return std::sin(s[next]); }, {next}));
        return r;
    };
    m.flux_equation = [F, A, n](std::size_t qoi) -> FluxEquation {
        if (qoi >= n) throw InvalidArgument("ring: component index out of range");
        const std::size_t next = (qoi + 1) % n;
        const std::size_t next2 = (qoi + 2) % n;
        FluxEquation f;
        f.second_moment = make_term("-x * E[sin^2(x_next) | x]", [](double x) { return -x; },
                                    [next](State s) {
                                        const double v = std::sin(s[next]);
                                        return v * v;
                                    },
                                    {next});
        f.source_closed_label = "0";
        f.source_closed = [](double) { return 0.0; };
        // G . grad sin(x_next) = cos(x_next) (F - sin(x_next2) x_next - A x_next)
        f.source_terms.push_back(make_term("E[cos(x_next) G_next | x]", [](double) { return 1.0; },
                                           [F, A, next, next2](State s) {
                                               return std::cos(s[next]) *
                                                      (F - std::sin(s[next2]) * s[next] - A * s[next]);
                                           },
                                           {next, next2}));
        return f;
    };
    return m;
}

// ---------------------------------------------------------------- malaria

namespace mal {
enum : std::size_t { S = 0, Is, Ia, Js, Ja, Ts, T, Ta, R, Ms, Mr, Count };
}

// Placeholder epidemiological constants (per day); only the 6-day clearance
// time r = 1/6 is fixed by the source model description.
ParamMap malaria_defaults() {
    return {
        {"mu_h", 1.0 / (55.0 * 365.0)},
        {"beta_h", 0.35},
        {"beta_m", 0.25},
        {"mu_m", 1.0 / 14.0},
        {"k", 0.8},
        {"q", 0.3},
        {"c", 0.1},
        {"sigma", 0.1},
        {"xi", 0.5},
        {"nu", 0.05},
        {"lambda", 0.4},
        {"p", 0.9},
        {"a", 0.2},
        {"tau", 0.5},
        {"r", 1.0 / 6.0},
        {"b", 0.5},
        {"w", 0.1},
        {"init_I_s", 0.04},
        {"init_I_a", 0.06},
        {"init_J_s", 0.02},
        {"init_J_a", 0.03},
        {"init_T_s", 0.01},
        {"init_T", 0.02},
        {"init_R_mean", 0.2},
        {"init_R_variance", 0.04 * 0.04},
        {"init_T_a_mean", 0.03},
        {"init_T_a_variance", 0.01 * 0.01},
        {"init_M_shape", 0.5},
        {"init_M_scale", 0.25},
    };
}

struct MalariaParams {
    double mu_h, beta_h, beta_m, mu_m, k, q, c, sigma, xi, nu, lambda, p, a, tau, r, b, w;
};

void malaria_rhs(const MalariaParams& P, State x, std::span<double> dx) {
    using namespace mal;
    const double s = x[S], is = x[Is], ia = x[Ia], js = x[Js], ja = x[Ja];
    const double ts = x[Ts], t = x[T], ta = x[Ta], rr = x[R], ms = x[Ms], mr = x[Mr];
    const double resistant_exposure = s + P.tau * ts + P.tau * t + P.tau * ta;
    const double treated_loss = P.r + P.tau * P.k * P.beta_h * mr + P.mu_h;
    dx[S] = P.mu_h * (1.0 - s) - P.beta_h * s * (ms + P.k * mr) - P.q * P.c * s + P.sigma * (1.0 - P.xi) * (ia + ja) +
            P.r * ta * (1.0 - P.b) + P.r * t + P.w * rr;
    dx[Is] = P.lambda * P.beta_h * ms * s + P.nu * ia - is * (P.p * P.a + P.sigma + P.mu_h);
    dx[Ia] = P.beta_h * ms * s * (1.0 - P.lambda) - ia * (P.q * P.c + P.nu + P.sigma + P.mu_h);
    dx[Js] = P.lambda * P.k * P.beta_h * mr * resistant_exposure + P.nu * ja - js * (P.sigma + P.mu_h);
    dx[Ja] = P.k * P.beta_h * mr * (1.0 - P.lambda) * resistant_exposure - ja * (P.sigma + P.nu + P.mu_h);
    dx[Ts] = P.p * P.a * is - ts * treated_loss;
    dx[T] = P.q * P.c * s - t * treated_loss;
    dx[Ta] = P.q * P.c * ia - ta * treated_loss;
    dx[R] = P.r * ts + P.b * P.r * ta + P.xi * P.sigma * (ia + ja) + P.sigma * is + P.sigma * js - rr * (P.w + P.mu_h);
    dx[Ms] = P.beta_m * (1.0 - ms - mr) * (ia + is) - P.mu_m * ms;
    dx[Mr] = P.k * P.beta_m * (1.0 - ms - mr) * (ja + js) - P.mu_m * mr;
}

ModelSpec malaria(const ParamMap& overrides) {
    using namespace mal;
    ModelSpec m;
    m.name = "malaria";
    m.dim = Count;
    m.params = apply_overrides(malaria_defaults(), overrides, m.name);
    m.component_names = {"S", "I_s", "I_a", "J_s", "J_a", "T_s", "T", "T_a", "R", "M_s", "M_r"};
    const auto& pm = m.params;
    const MalariaParams P{pm.at("mu_h"), pm.at("beta_h"), pm.at("beta_m"), pm.at("mu_m"), pm.at("k"),
                          pm.at("q"),    pm.at("c"),      pm.at("sigma"),  pm.at("xi"),   pm.at("nu"),
                          pm.at("lambda"), pm.at("p"),    pm.at("a"),      pm.at("tau"),  pm.at("r"),
                          pm.at("b"),    pm.at("w")};
    m.drift = [P](State x, std::span<double> dx) { malaria_rhs(P, x, dx); };

    const double det_sum = pm.at("init_I_s") + pm.at("init_I_a") + pm.at("init_J_s") + pm.at("init_J_a") +
                           pm.at("init_T_s") + pm.at("init_T");
    if (det_sum + pm.at("init_R_mean") + pm.at("init_T_a_mean") >= 1.0) {
        throw InvalidArgument("malaria: initial human classes leave no room for S (sum must stay below 1)");
    }
    if (!(pm.at("init_M_shape") > 0.0 && pm.at("init_M_scale") > 0.0)) {
        throw InvalidArgument("malaria: mosquito Gamma parameters must be positive");
    }
    if (2.0 * pm.at("init_M_shape") * pm.at("init_M_scale") >= 1.0) {
        throw InvalidArgument("malaria: initial mosquito means violate M_r + M_s <= 1");
    }
    if (!(pm.at("init_R_variance") > 0.0 && pm.at("init_T_a_variance") > 0.0)) {
        throw InvalidArgument("malaria: initial variances must be positive");
    }

    auto& ic = m.initial.per_component;
    ic.resize(Count);
    ic[S] = Deterministic{1.0 - det_sum - pm.at("init_R_mean") - pm.at("init_T_a_mean")};
    ic[Is] = Deterministic{pm.at("init_I_s")};
    ic[Ia] = Deterministic{pm.at("init_I_a")};
    ic[Js] = Deterministic{pm.at("init_J_s")};
    ic[Ja] = Deterministic{pm.at("init_J_a")};
    ic[Ts] = Deterministic{pm.at("init_T_s")};
    ic[T] = Deterministic{pm.at("init_T")};
    ic[Ta] = Gaussian{pm.at("init_T_a_mean"), pm.at("init_T_a_variance")};
    ic[R] = Gaussian{pm.at("init_R_mean"), pm.at("init_R_variance")};
    ic[Ms] = Gamma{pm.at("init_M_shape"), pm.at("init_M_scale")};
    ic[Mr] = Gamma{pm.at("init_M_shape"), pm.at("init_M_scale")};
    m.initial.constraint = SimplexConstraint{{S, Is, Ia, Js, Ja, Ts, T, Ta, R}, S, {{Ms, Mr}}};
    m.qoi_index = R;
    m.notes.push_back("malaria rate constants other than r = 1/6 are placeholders");

    // Linear immunity inflow g = r (T_s + b T_a) + sigma (xi I_a + xi J_a + I_s + J_s).
    std::vector<std::pair<std::size_t, double>> g_coef = {
        {Ts, P.r}, {Ta, P.r * P.b}, {Ia, P.sigma * P.xi}, {Ja, P.sigma * P.xi}, {Is, P.sigma}, {Js, P.sigma}};
    auto inflow = [g_coef](State s) {
        double g = 0.0;
        for (const auto& [idx, c] : g_coef) g += c * s[idx];
        return g;
    };
    const double loss = P.w + P.mu_h;

    m.decompose = [inflow, loss](std::size_t qoi) -> ReducedForm {
        if (qoi != R) throw InvalidArgument("model 'malaria' declares no separable form for component " +
                                            std::to_string(qoi));
        ReducedForm r;
        r.qoi = qoi;
        r.closed_label = "-(w + mu_h) R";
        r.closed = [loss](double x) { return -loss * x; };
        r.terms.push_back(make_term("E[r(T_s + b T_a) + sigma(xi I_a + xi J_a + I_s + J_s) | R]",
                                    [](double) { return 1.0; }, inflow, {Ts, Ta, Ia, Ja, Is, Js}));
        return r;
    };
    m.flux_equation = [inflow, g_coef, P](std::size_t qoi) -> FluxEquation {
        if (qoi != R) throw InvalidArgument("model 'malaria' supplies no flux equation for component " +
                                            std::to_string(qoi));
        FluxEquation f;
        f.second_moment = make_term("E[g^2 | R]", [](double) { return 1.0; },
                                    [inflow](State s) {
                                        const double g = inflow(s);
                                        return g * g;
                                    },
                                    {Ts, Ta, Ia, Ja, Is, Js});
        f.source_closed_label = "0";
        f.source_closed = [](double) { return 0.0; };
        // g is linear, so G . grad g = sum_j coef_j G_j(x).
        f.source_terms.push_back(make_term("E[G . grad g | R]", [](double) { return 1.0; },
                                           [g_coef, P](State s) {
                                               double rate[Count];
                                               malaria_rhs(P, s, std::span<double>(rate, Count));
                                               double acc = 0.0;
                                               for (const auto& [idx, c] : g_coef) acc += c * rate[idx];
                                               return acc;
                                           },
                                           {S, Is, Ia, Js, Ja, Ts, T, Ta, Ms, Mr}));
        return f;
    };
    return m;
}

// ---------------------------------------------------------------- analytic test models

ModelSpec gaussian_static(const ParamMap& overrides) {
    ModelSpec m;
    m.name = "gaussian_static";
    m.dim = 2;
    m.params = apply_overrides({{"rho", 0.75}, {"mu1", 0.0}, {"mu2", 2.0}, {"sigma1", 1.0}, {"sigma2", 2.0}},
                               overrides, m.name);
    const double rho = m.params.at("rho");
    if (!(rho > -1.0 && rho < 1.0)) throw InvalidArgument("gaussian_static: rho must lie in (-1, 1)");
    if (!(m.params.at("sigma1") > 0.0 && m.params.at("sigma2") > 0.0)) {
        throw InvalidArgument("gaussian_static: sigma1 and sigma2 must be positive");
    }
    m.component_names = indexed_names(2);
    m.drift = [](State, std::span<double> dx) { dx[0] = dx[1] = 0.0; };
    const double s1 = m.params.at("sigma1"), s2 = m.params.at("sigma2");
    m.initial.per_component = {Gaussian{m.params.at("mu1"), s1 * s1}, Gaussian{m.params.at("mu2"), s2 * s2}};
    m.initial.correlation = std::vector<double>{1.0, rho, rho, 1.0};
    m.qoi_index = 0;
    m.decompose = [](std::size_t qoi) -> ReducedForm {
        if (qoi > 1) throw InvalidArgument("gaussian_static: component index out of range");
        ReducedForm r;
        r.qoi = qoi;
        r.closed_label = "0";
        r.closed = [](double) { return 0.0; };
        return r;
    };
    return m;
}

ModelSpec linear_oscillator(const ParamMap& overrides) {
    ModelSpec m;
    m.name = "linear_oscillator";
    m.dim = 2;
    m.params = apply_overrides({{"omega", 1.0},
                                {"init_mean1", 1.0},
                                {"init_mean2", 0.5},
                                {"init_variance1", 0.25},
                                {"init_variance2", 1.0}},
                               overrides, m.name);
    const double w = m.params.at("omega");
    m.component_names = indexed_names(2);
    m.drift = [w](State x, std::span<double> dx) {
        dx[0] = w * x[1];
        dx[1] = -w * x[0];
    };
    m.initial.per_component = {Gaussian{m.params.at("init_mean1"), m.params.at("init_variance1")},
                               Gaussian{m.params.at("init_mean2"), m.params.at("init_variance2")}};
    m.qoi_index = 0;
    m.decompose = [w](std::size_t qoi) -> ReducedForm {
        if (qoi > 1) throw InvalidArgument("linear_oscillator: component index out of range");
        ReducedForm r;
        r.qoi = qoi;
        r.closed_label = "0";
        r.closed = [](double) { return 0.0; };
        const std::size_t other = 1 - qoi;
        const double sign = qoi == 0 ? w : -w;
        r.terms.push_back(make_term(qoi == 0 ? "omega E[x2 | x1]" : "-omega E[x1 | x2]",
                                    [sign](double) { return sign; },
                                    [other](State s) { return s[other]; }, {other}));
        return r;
    };
    m.flux_equation = [w](std::size_t qoi) -> FluxEquation {
        if (qoi > 1) throw InvalidArgument("linear_oscillator: component index out of range");
        const std::size_t other = 1 - qoi;
        const double sign = qoi == 0 ? w : -w;
        FluxEquation f;
        f.second_moment = make_term("E[x_other^2 | x]", [sign](double) { return sign; },
                                    [other](State s) { return s[other] * s[other]; }, {other});
        // G . grad x_other = -sign * x_qoi
        f.source_closed_label = "-sign * omega x";
        f.source_closed = [sign](double x) { return -sign * x; };
        return f;
    };
    return m;
}

ModelSpec advection_test(const ParamMap& overrides) {
    ModelSpec m;
    m.name = "advection_test";
    m.dim = 1;
    m.params = apply_overrides({{"velocity", 1.0}, {"relaxation", 0.0}, {"init_mean", 0.0}, {"init_variance", 1.0}},
                               overrides, m.name);
    const double c = m.params.at("velocity");
    const double kappa = m.params.at("relaxation");
    m.component_names = {"x1"};
    m.drift = [c, kappa](State x, std::span<double> dx) { dx[0] = c - kappa * x[0]; };
    m.initial.per_component = {Gaussian{m.params.at("init_mean"), m.params.at("init_variance")}};
    m.qoi_index = 0;
    m.decompose = [c, kappa](std::size_t qoi) -> ReducedForm {
        if (qoi != 0) throw InvalidArgument("advection_test: component index out of range");
        ReducedForm r;
        r.qoi = 0;
        r.closed_label = "velocity - relaxation x";
        r.closed = [c, kappa](double x) { return c - kappa * x; };
        return r;
    };
    return m;
}

// ---------------------------------------------------------------- sampling helpers

double draw(const ScalarDistribution& d, std::mt19937_64& eng) {
    return std::visit(
        [&](const auto& v) -> double {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, Gaussian>) {
                std::normal_distribution<double> dist(v.mean, std::sqrt(v.variance));
                return dist(eng);
            } else if constexpr (std::is_same_v<T, Gamma>) {
                std::gamma_distribution<double> dist(v.shape, v.scale);
                return dist(eng);
            } else if constexpr (std::is_same_v<T, Uniform>) {
                std::uniform_real_distribution<double> dist(v.lo, v.hi);
                return dist(eng);
            } else {
                return v.value;
            }
        },
        d);
}

// Lower Cholesky factor of a small dense correlation matrix.
std::vector<double> cholesky(const std::vector<double>& a, std::size_t n) {
    std::vector<double> l(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = a[i * n + j];
            for (std::size_t k = 0; k < j; ++k) s -= l[i * n + k] * l[j * n + k];
            if (i == j) {
                if (!(s > 0.0)) throw InvalidArgument("correlation matrix is not positive definite");
                l[i * n + i] = std::sqrt(s);
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    return l;
}

bool satisfies(const SimplexConstraint& c, const std::vector<double>& x) {
    for (std::size_t i : c.members) {
        if (!(x[i] >= 0.0 && x[i] <= 1.0)) return false;
    }
    for (const auto& group : c.capped_sums) {
        double s = 0.0;
        for (std::size_t i : group) {
            if (!(x[i] >= 0.0 && x[i] <= 1.0)) return false;
            s += x[i];
        }
        if (s > 1.0) return false;
    }
    return true;
}

void validate_initial(const ModelSpec& m) {
    const auto& ic = m.initial;
    if (ic.per_component.size() != m.dim) {
        throw InvalidArgument("initial distribution must list one entry per component");
    }
    if (ic.correlation) {
        if (ic.correlation->size() != m.dim * m.dim) throw InvalidArgument("correlation matrix has the wrong size");
        for (std::size_t i = 0; i < m.dim; ++i) {
            for (std::size_t j = 0; j < m.dim; ++j) {
                const double cij = (*ic.correlation)[i * m.dim + j];
                if (i != j && cij != 0.0 && (!std::holds_alternative<Gaussian>(ic.per_component[i]) ||
                                             !std::holds_alternative<Gaussian>(ic.per_component[j]))) {
                    throw InvalidArgument("correlations are only supported between Gaussian components");
                }
            }
        }
    }
    if (ic.constraint) {
        const auto& c = *ic.constraint;
        if (std::find(c.members.begin(), c.members.end(), c.solve_for) == c.members.end()) {
            throw InvalidArgument("constraint solve_for must be one of its members");
        }
        for (std::size_t i : c.members) {
            if (i >= m.dim) throw InvalidArgument("constraint member out of range");
        }
        for (const auto& group : c.capped_sums) {
            double det = 0.0;
            bool all_det = true;
            for (std::size_t i : group) {
                if (i >= m.dim) throw InvalidArgument("capped group member out of range");
                if (const auto* d = std::get_if<Deterministic>(&ic.per_component[i])) det += d->value;
                else all_det = false;
            }
            if (all_det && det > 1.0) throw InvalidArgument("deterministic initial values violate a capped sum <= 1");
        }
    }
}

}  // namespace

std::vector<std::string> builtin_model_names() {
    return {"kraichnan_orszag", "ring", "malaria", "gaussian_static", "linear_oscillator", "advection_test"};
}

ModelSpec builtin_model(std::string_view name, const ParamMap& overrides) {
    ModelSpec m;
    if (name == "kraichnan_orszag") m = kraichnan_orszag(overrides);
    else if (name == "ring") m = ring(overrides);
    else if (name == "malaria") m = malaria(overrides);
    else if (name == "gaussian_static") m = gaussian_static(overrides);
    else if (name == "linear_oscillator") m = linear_oscillator(overrides);
    else if (name == "advection_test") m = advection_test(overrides);
    else throw InvalidArgument("unknown model '" + std::string(name) + "'");
    validate_initial(m);
    return m;
}

std::vector<double> drift(const ModelSpec& model, State state) {
    if (state.size() != model.dim) {
        throw InvalidArgument("state has length " + std::to_string(state.size()) + ", model '" + model.name +
                              "' expects " + std::to_string(model.dim));
    }
    for (double v : state) {
        if (!std::isfinite(v)) throw InvalidArgument("state contains non-finite entries");
    }
    std::vector<double> out(model.dim);
    model.drift(state, out);
    return out;
}

std::vector<std::vector<double>> sample_initial(const ModelSpec& model, std::size_t count, std::uint64_t seed,
                                                std::size_t first) {
    if (count == 0) throw InvalidArgument("sample count must be at least 1");
    validate_initial(model);
    const auto& ic = model.initial;
    const std::size_t n = model.dim;

    std::vector<double> chol;
    if (ic.correlation) chol = cholesky(*ic.correlation, n);

    constexpr int kMaxAttempts = 10000;
    std::vector<std::vector<double>> out(count, std::vector<double>(n));
    std::vector<double> z(n);
    for (std::size_t s = 0; s < count; ++s) {
        std::mt19937_64 eng(detail::stream_seed(seed, first + s));
        auto& x = out[s];
        int attempt = 0;
        for (;; ++attempt) {
            if (attempt == kMaxAttempts) {
                throw NumericalError("initial sampling could not satisfy the declared constraint for sample " +
                                     std::to_string(first + s));
            }
            if (ic.correlation) {
                std::normal_distribution<double> unit(0.0, 1.0);
                for (std::size_t i = 0; i < n; ++i) {
                    z[i] = std::holds_alternative<Gaussian>(ic.per_component[i]) ? unit(eng) : 0.0;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    if (const auto* g = std::get_if<Gaussian>(&ic.per_component[i])) {
                        double acc = 0.0;
                        for (std::size_t k = 0; k <= i; ++k) acc += chol[i * n + k] * z[k];
                        x[i] = g->mean + std::sqrt(g->variance) * acc;
                    } else {
                        x[i] = draw(ic.per_component[i], eng);
                    }
                }
            } else {
                for (std::size_t i = 0; i < n; ++i) x[i] = draw(ic.per_component[i], eng);
            }
            if (!ic.constraint) break;
            const auto& c = *ic.constraint;
            double rest = 0.0;
            for (std::size_t i : c.members) {
                if (i != c.solve_for) rest += x[i];
            }
            x[c.solve_for] = 1.0 - rest;
            if (satisfies(c, x)) break;
        }
    }
    return out;
}

ReducedForm reduced_terms(const ModelSpec& model, std::size_t qoi_index) {
    if (qoi_index >= model.dim) throw InvalidArgument("qoi index out of range");
    if (!model.decompose) not_separable(model, qoi_index);
    return model.decompose(qoi_index);
}

std::string model_hash(const ModelSpec& model) {
    const std::string text = model_to_json(model);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::size_t component_index(const ModelSpec& model, std::string_view name) {
    for (std::size_t i = 0; i < model.component_names.size(); ++i) {
        if (model.component_names[i] == name) return i;
    }
    throw InvalidArgument("model '" + model.name + "' has no component '" + std::string(name) + "'");
}

}  // namespace ropdf
