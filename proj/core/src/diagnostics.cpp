#include "ropdf/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

#include "ropdf/error.hpp"

namespace ropdf {

HEstimate h_from_data(const TrajectoryEnsemble& ensemble, std::size_t t_index, std::size_t qoi_index,
                      const StateFn& g, const UniformGrid& grid, const HDataOptions& options) {
    HEstimate out;
    try {
        const auto x = component_samples(ensemble, t_index, qoi_index);
        out.p = kde_pdf(x, grid, options.bandwidth);
        const ScatterSlice s = slice(ensemble, t_index, qoi_index, g);
        const ConditionalEstimate ce = estimate_conditional(s, grid, options.estimator);
        out.mask = active_mask(out.p, options.eps);
        for (std::size_t i = 0; i < grid.n; ++i) out.mask[i] = out.mask[i] && ce.active[i];
        out.h = GridFunction1D(grid, FieldKind::flux_h);
        for (std::size_t i = 0; i < grid.n; ++i) {
            if (out.mask[i]) out.h.values[i] = out.p.values[i] * ce.values[i];
        }
    } catch (const Error& e) {
        throw NumericalError("h_from_data at t = " + std::to_string(ensemble.times().at(t_index)) + ": " + e.what());
    }
    return out;
}

double info_content_error(const GridFunction1D& h_data, const GridFunction1D& h_pde, const Mask& mask) {
    if (!h_data.grid.same_as(h_pde.grid)) throw InvalidArgument("info_content_error: grid mismatch");
    if (mask.size() != h_data.size()) throw InvalidArgument("info_content_error: mask size differs from grid");
    double num = 0.0, den = 0.0;
    bool any = false;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        any = true;
        const double d = h_data.values[i] - h_pde.values[i];
        num += d * d;
        den += h_data.values[i] * h_data.values[i];
    }
    if (!any) throw InvalidArgument("info_content_error: empty mask");
    if (!(den > 0.0)) throw InvalidArgument("info_content_error: data flux vanishes on the mask");
    return std::sqrt(num / den);
}

Norm norm_from_string(std::string_view name) {
    if (name == "L1") return Norm::L1;
    if (name == "L2") return Norm::L2;
    if (name == "Linf") return Norm::Linf;
    throw InvalidArgument("unknown norm '" + std::string(name) + "'");
}

double pdf_error(const GridFunction1D& a, const GridFunction1D& b, Norm metric) {
    if (!a.grid.same_as(b.grid) || a.size() != b.size()) throw InvalidArgument("pdf_error: grid mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = std::abs(a.values[i] - b.values[i]);
        switch (metric) {
            case Norm::L1: acc += d; break;
            case Norm::L2: acc += d * d; break;
            case Norm::Linf: acc = std::max(acc, d); break;
        }
    }
    const double dx = a.grid.dx();
    switch (metric) {
        case Norm::L1: return acc * dx;
        case Norm::L2: return std::sqrt(acc * dx);
        case Norm::Linf: return acc;
    }
    return acc;
}

std::vector<std::size_t> flux_system_components(const ModelSpec& model, std::size_t qoi_index) {
    std::vector<std::size_t> comps{qoi_index};
    auto add = [&](const ClosureTerm& t) {
        for (std::size_t c : t.support) {
            if (std::find(comps.begin(), comps.end(), c) == comps.end()) comps.push_back(c);
        }
    };
    for (const auto& t : reduced_terms(model, qoi_index).terms) add(t);
    if (model.flux_equation) {
        const FluxEquation f = model.flux_equation(qoi_index);
        add(f.second_moment);
        for (const auto& t : f.source_terms) add(t);
    }
    std::sort(comps.begin(), comps.end());
    return comps;
}

PhClosures build_ph_closures(const ModelSpec& model, std::size_t qoi_index, const TrajectoryEnsemble& ensemble,
                             const UniformGrid& grid, const std::vector<double>& snapshot_times,
                             const EstimatorOptions& estimator, std::size_t threads) {
    if (!model.flux_equation) throw InvalidArgument("model '" + model.name + "' supplies no flux equation");
    const FluxEquation f = model.flux_equation(qoi_index);
    EstimatorOptions plain = estimator;
    plain.flux_form = false;
    PhClosures c;
    c.second_moment = build_closure_field(ensemble, qoi_index, f.second_moment, grid, snapshot_times, plain, threads);
    for (const auto& t : f.source_terms) {
        c.source.push_back(build_closure_field(ensemble, qoi_index, t, grid, snapshot_times, plain, threads));
    }
    return c;
}

GridFunction1D initial_flux(const GridFunction1D& p0, const ClosureField& ce) {
    if (!p0.grid.same_as(ce.grid)) throw InvalidArgument("initial_flux: grid mismatch");
    GridFunction1D h(p0.grid, FieldKind::flux_h);
    const auto& e = ce.estimates.front().values;
    for (std::size_t i = 0; i < h.size(); ++i) h.values[i] = p0.values[i] * e[i];
    return h;
}

namespace {

double regression_slope(const std::vector<StudyRow>& rows) {
    std::vector<double> lx, ly;
    for (const auto& r : rows) {
        if (r.status == "ok" && r.error > 0.0 && std::isfinite(r.error)) {
            lx.push_back(std::log(static_cast<double>(r.samples)));
            ly.push_back(std::log(r.error));
        }
    }
    if (lx.size() < 2) return std::nan("");
    const double n = static_cast<double>(lx.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxy += (lx[i] - mx) * (ly[i] - my);
        sxx += (lx[i] - mx) * (lx[i] - mx);
    }
    return sxx > 0.0 ? sxy / sxx : std::nan("");
}

}  // namespace

StudyResult sample_size_study(const ModelSpec& model, std::size_t qoi_index, const StudyConfig& config) {
    if (config.sizes.empty()) throw InvalidArgument("sample_size_study: no sizes");
    for (std::size_t i = 1; i < config.sizes.size(); ++i) {
        if (config.sizes[i] < config.sizes[i - 1]) throw InvalidArgument("sample_size_study: sizes must be increasing");
    }
    if (config.sizes.front() < 4) throw InvalidArgument("sample_size_study: sizes must be at least 4");
    if (config.benchmark_factor < 1) throw InvalidArgument("sample_size_study: benchmark_factor must be positive");
    const ReducedForm form = reduced_terms(model, qoi_index);
    if (form.terms.size() != 1) throw InvalidArgument("sample_size_study: the flux system needs one closure term");

    IntegrationOptions integ = config.integration;
    if (integ.components.empty()) integ.components = flux_system_components(model, qoi_index);
    const std::size_t max_m = config.sizes.back();
    const std::size_t bench_m = config.benchmark_factor * max_m;

    const TrajectoryEnsemble master = simulate(model, max_m, config.seed, integ, 0);
    const TrajectoryEnsemble bench = simulate(model, bench_m, config.seed, integ, max_m);

    StudyResult result;
    result.benchmark_samples = bench_m;
    result.grid = fit_domain(bench, qoi_index, config.grid_n, config.margin);
    const UniformGrid& grid = result.grid;

    const std::size_t t_eval_index = master.time_index(config.t_eval);
    std::vector<double> snaps = config.snapshot_times;
    if (snaps.empty()) snaps.assign(master.times().begin(), master.times().begin() + static_cast<std::ptrdiff_t>(t_eval_index) + 1);
    if (std::abs(snaps.front()) > 0.0 || std::abs(snaps.back() - config.t_eval) > 1e-9 * std::max(1.0, config.t_eval)) {
        throw InvalidArgument("sample_size_study: snapshot times must run from 0 to t_eval");
    }

    HDataOptions hopt;
    hopt.estimator = config.estimator;
    hopt.eps = config.eps;
    const HEstimate reference = h_from_data(bench, t_eval_index, qoi_index, form.terms[0].inner, grid, hopt);
    const GridFunction1D p0 = initial_marginal(model, qoi_index, grid, component_samples(bench, 0, qoi_index));

    for (std::size_t m : config.sizes) {
        StudyRow row{m, config.t_eval, std::nan(""), "ok"};
        try {
            const TrajectoryEnsemble sub = master.head(m);
            const ClosureField ce =
                build_closure_field(sub, qoi_index, form.terms[0], grid, {0.0}, config.estimator);
            const PhClosures closures = build_ph_closures(model, qoi_index, sub, grid, snaps, config.estimator);
            const GridFunction1D h0 = initial_flux(p0, ce);
            const auto sol = solve_ph_system(model, qoi_index, closures, p0, h0, {0.0, config.t_eval}, config.solver);
            row.error = info_content_error(reference.h, sol.back().h, reference.mask);
        } catch (const std::exception& e) {
            row.status = std::string("failed: ") + e.what();
        }
        result.rows.push_back(std::move(row));
    }
    result.slope = regression_slope(result.rows);
    for (std::size_t i = 1; i < result.rows.size(); ++i) {
        if (result.rows[i].error > result.rows[i - 1].error) ++result.inversions;
    }
    return result;
}

}  // namespace ropdf
