#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

#include "ropdf/error.hpp"
#include "ropdf/pdf_solver.hpp"

namespace ropdf {

namespace {

double time_tolerance(double t) { return 1e-9 * std::max(1.0, std::abs(t)); }

bool varies(const ScalarFn& f, std::span<const double> x) {
    if (x.empty()) return false;
    const double c0 = f(x.front());
    return std::any_of(x.begin(), x.end(), [&](double v) { return f(v) != c0; });
}

// Spline fit of coefficient * inner with the smoothing parameter selected on
// the inner values, divided back by the coefficient. Nodes where the
// coefficient nearly vanishes are filled by linear interpolation.
ConditionalEstimate flux_form_estimate(const ScatterSlice& sl, const UniformGrid& grid, const EstimatorOptions& options,
                                       const ScalarFn& coefficient) {
    SplineOptions so = options.spline;
    if (!so.lambda) so.lambda = fit_smoothing_spline(sl.x, sl.y, so).lambda;
    ScatterSlice weighted = sl;
    for (std::size_t j = 0; j < weighted.y.size(); ++j) weighted.y[j] *= coefficient(weighted.x[j]);
    ConditionalEstimate est = ce_smoothing_spline(weighted, grid, so);
    est.selection = options.spline.lambda ? "fixed, flux form" : "gcv, flux form";

    std::vector<double> c(grid.n, 0.0);
    double cmax = 0.0;
    for (std::size_t i = 0; i < grid.n; ++i) {
        if (!est.active[i]) continue;
        c[i] = coefficient(grid.node(i));
        cmax = std::max(cmax, std::abs(c[i]));
    }
    const double tol = 1e-3 * cmax;
    std::vector<std::size_t> good;
    for (std::size_t i = 0; i < grid.n; ++i) {
        if (est.active[i] && std::abs(c[i]) > tol) good.push_back(i);
    }
    if (good.empty()) return estimate_conditional(sl, grid, options);
    for (std::size_t i : good) est.values[i] /= c[i];
    for (std::size_t i = 0; i < grid.n; ++i) {
        if (!est.active[i] || std::abs(c[i]) > tol) continue;
        const auto hi = std::upper_bound(good.begin(), good.end(), i);
        if (hi == good.begin()) {
            est.values[i] = est.values[*hi];
        } else if (hi == good.end()) {
            est.values[i] = est.values[*(hi - 1)];
        } else {
            const std::size_t a = *(hi - 1), b = *hi;
            const double s = double(i - a) / double(b - a);
            est.values[i] = (1.0 - s) * est.values[a] + s * est.values[b];
        }
    }
    return est;
}

}  // namespace

void ClosureField::evaluate(double t, std::span<double> out) const {
    if (times.empty()) throw InvalidArgument("closure field '" + term.label + "' has no snapshots");
    if (out.size() != grid.n) throw InvalidArgument("closure field: output size differs from grid");
    if (t < times.front() - time_tolerance(times.front()) || t > times.back() + time_tolerance(times.back())) {
        throw InvalidArgument("closure field '" + term.label + "' evaluated at t = " + std::to_string(t) +
                              " outside [" + std::to_string(times.front()) + ", " + std::to_string(times.back()) + "]");
    }
    if (times.size() == 1 || t <= times.front()) {
        std::copy(estimates.front().values.begin(), estimates.front().values.end(), out.begin());
        return;
    }
    if (t >= times.back()) {
        std::copy(estimates.back().values.begin(), estimates.back().values.end(), out.begin());
        return;
    }
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    const std::size_t j = static_cast<std::size_t>(it - times.begin());
    const double s = (t - times[j - 1]) / (times[j] - times[j - 1]);
    const auto& a = estimates[j - 1].values;
    const auto& b = estimates[j].values;
    for (std::size_t i = 0; i < grid.n; ++i) out[i] = (1.0 - s) * a[i] + s * b[i];
}

std::vector<double> ClosureField::evaluate(double t) const {
    std::vector<double> out(grid.n);
    evaluate(t, out);
    return out;
}

double ClosureField::max_abs() const {
    double m = 0.0;
    for (const auto& e : estimates) {
        for (double v : e.values) m = std::max(m, std::abs(v));
    }
    return m;
}

ClosureField build_closure_field(const TrajectoryEnsemble& ensemble, std::size_t qoi_index, const ClosureTerm& term,
                                 const UniformGrid& grid, const std::vector<double>& snapshot_times,
                                 const EstimatorOptions& options, std::size_t threads) {
    if (snapshot_times.empty()) throw InvalidArgument("build_closure_field: no snapshot times");
    for (std::size_t i = 1; i < snapshot_times.size(); ++i) {
        if (!(snapshot_times[i] > snapshot_times[i - 1])) {
            throw InvalidArgument("build_closure_field: snapshot times must be strictly increasing");
        }
    }
    std::vector<std::size_t> t_index(snapshot_times.size());
    for (std::size_t s = 0; s < snapshot_times.size(); ++s) {
        try {
            t_index[s] = ensemble.time_index(snapshot_times[s]);
        } catch (const InvalidArgument&) {
            throw InvalidArgument("build_closure_field: snapshot t = " + std::to_string(snapshot_times[s]) +
                                  " is not on the stored time grid");
        }
    }
    ClosureField field;
    field.term = term;
    field.grid = grid;
    field.times = snapshot_times;
    field.estimates.resize(snapshot_times.size());

    std::exception_ptr failure;
    std::size_t failed_at = snapshot_times.size();
    std::mutex mtx;
    auto fit_one = [&](std::size_t s) {
        try {
            const ScatterSlice sl = slice(ensemble, t_index[s], qoi_index, term.inner);
            const bool flux = options.flux_form && options.kind == EstimatorKind::smoothing_spline &&
                              term.coefficient && varies(term.coefficient, sl.x);
            field.estimates[s] = flux ? flux_form_estimate(sl, grid, options, term.coefficient)
                                      : estimate_conditional(sl, grid, options);
            if (options.active_eps > 0.0) field.estimates[s].restrict_to(active_mask(kde_pdf(sl.x, grid), options.active_eps));
        } catch (const std::exception& e) {
            std::lock_guard lock(mtx);
            if (s < failed_at) {
                failed_at = s;
                failure = std::make_exception_ptr(NumericalError(
                    "estimating '" + term.label + "' at t = " + std::to_string(snapshot_times[s]) + ": " + e.what()));
            }
        }
    };
    const std::size_t requested = threads == 0 ? std::thread::hardware_concurrency() : threads;
    const std::size_t n_threads = std::max<std::size_t>(1, std::min(requested, snapshot_times.size()));
    if (n_threads == 1) {
        for (std::size_t s = 0; s < snapshot_times.size(); ++s) fit_one(s);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < n_threads; ++w) {
            pool.emplace_back([&, w] {
                for (std::size_t s = w; s < snapshot_times.size(); s += n_threads) fit_one(s);
            });
        }
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
    return field;
}

UniformGrid fit_domain(const TrajectoryEnsemble& ensemble, std::size_t qoi_index, std::size_t n, double margin) {
    if (!(margin >= 0.0)) throw InvalidArgument("fit_domain: margin must be non-negative");
    const std::size_t k = ensemble.stored_index(qoi_index);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t m = 0; m < ensemble.n_samples(); ++m) {
        for (std::size_t t = 0; t < ensemble.n_times(); ++t) {
            const double v = ensemble.at(m, t, k);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    double range = hi - lo;
    if (!(range > 0.0)) range = std::max(1.0, std::abs(lo));
    return UniformGrid(lo - margin * range, hi + margin * range, n);
}

GridFunction1D initial_marginal(const ModelSpec& model, std::size_t qoi_index, const UniformGrid& grid,
                                std::span<const double> fallback_samples) {
    if (qoi_index >= model.dim) throw InvalidArgument("initial_marginal: qoi index out of range");
    if (model.initial.constraint && !fallback_samples.empty()) return kde_pdf(fallback_samples, grid);
    constexpr double kPi = 3.14159265358979323846;
    GridFunction1D p(grid, FieldKind::pdf);
    const auto& d = model.initial.per_component.at(qoi_index);
    auto gaussian = [&](double mean, double var) {
        for (std::size_t i = 0; i < grid.n; ++i) {
            const double z = grid.node(i) - mean;
            p.values[i] = std::exp(-0.5 * z * z / var) / std::sqrt(2.0 * kPi * var);
        }
    };
    if (const auto* g = std::get_if<Gaussian>(&d)) {
        gaussian(g->mean, g->variance);
    } else if (const auto* gm = std::get_if<Gamma>(&d)) {
        const double lg = std::lgamma(gm->shape) + gm->shape * std::log(gm->scale);
        for (std::size_t i = 0; i < grid.n; ++i) {
            const double x = grid.node(i);
            p.values[i] = x > 0.0 ? std::exp((gm->shape - 1.0) * std::log(x) - x / gm->scale - lg) : 0.0;
        }
    } else if (const auto* u = std::get_if<Uniform>(&d)) {
        for (std::size_t i = 0; i < grid.n; ++i) {
            const double x = grid.node(i);
            p.values[i] = (x >= u->lo && x <= u->hi) ? 1.0 / (u->hi - u->lo) : 0.0;
        }
    } else {
        const auto& pm = std::get<Deterministic>(d);
        if (!(pm.mollification > 0.0)) {
            if (!fallback_samples.empty()) return kde_pdf(fallback_samples, grid);
            throw InvalidArgument("initial_marginal: point-mass initial state needs a mollification width");
        }
        gaussian(pm.value, pm.mollification * pm.mollification);
    }
    normalize_pdf(p);
    return p;
}

}  // namespace ropdf
