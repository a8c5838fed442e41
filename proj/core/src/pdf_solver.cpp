#include "ropdf/pdf_solver.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ropdf/csv.hpp"
#include "ropdf/error.hpp"
#include "ropdf/log.hpp"
#include "ropdf/spectral.hpp"

namespace ropdf {

double courant_number(std::span<const double> velocity, double dt, double dx) {
    double vmax = 0.0;
    for (double v : velocity) vmax = std::max(vmax, std::abs(v));
    return vmax * dt / dx;
}

void check_cfl(std::span<const double> velocity, double dt, double dx, double limit) {
    const double c = courant_number(velocity, dt, dx);
    if (c > limit) {
        throw CflError("CFL violation: Courant number " + std::to_string(c) + " exceeds " + std::to_string(limit) +
                           "; reduce dt_pde",
                       c);
    }
}

namespace {

using Fields = std::vector<std::vector<double>>;

void require_same_grid(const UniformGrid& a, const UniformGrid& b, const std::string& what) {
    if (!a.same_as(b)) throw InvalidArgument(what + " is not on the solver grid");
}

void require_coverage(const ClosureField& f, double t0, double t1) {
    const double tol = 1e-9 * std::max(1.0, std::abs(t1));
    if (f.times.empty() || f.t_first() > t0 + tol || f.t_last() < t1 - tol) {
        throw InvalidArgument("closure field '" + f.term.label + "' does not cover the solve span");
    }
}

void validate_output_times(const std::vector<double>& times) {
    if (times.empty()) throw InvalidArgument("solver: no output times");
    for (std::size_t i = 1; i < times.size(); ++i) {
        if (!(times[i] > times[i - 1])) throw InvalidArgument("solver: output times must be strictly increasing");
    }
}

std::vector<double> sample_on(const UniformGrid& g, const ScalarFn& f) {
    std::vector<double> out(g.n);
    for (std::size_t i = 0; i < g.n; ++i) out[i] = f(g.node(i));
    return out;
}

// Fixed-step RK4 between output times with the step shrunk to land on each
// output time exactly; the filter is applied after every step.
template <class Rhs, class Emit>
std::size_t march(Fields& u, const std::vector<double>& out_times, double dt, SpectralOperator& op, bool filter,
                  Rhs&& rhs, Emit&& emit) {
    const std::size_t nf = u.size(), n = u.front().size();
    Fields k1(nf, std::vector<double>(n)), k2 = k1, k3 = k1, k4 = k1, tmp = k1;
    std::size_t steps = 0;
    double t = out_times.front();
    emit(t, u);
    for (std::size_t o = 1; o < out_times.size(); ++o) {
        const double span = out_times[o] - t;
        const auto n_sub = static_cast<std::size_t>(std::max(1.0, std::ceil(span / dt - 1e-9)));
        const double h = span / static_cast<double>(n_sub);
        for (std::size_t s = 0; s < n_sub; ++s) {
            const double ts = t + static_cast<double>(s) * h;
            rhs(ts, u, k1);
            for (std::size_t f = 0; f < nf; ++f)
                for (std::size_t i = 0; i < n; ++i) tmp[f][i] = u[f][i] + 0.5 * h * k1[f][i];
            rhs(ts + 0.5 * h, tmp, k2);
            for (std::size_t f = 0; f < nf; ++f)
                for (std::size_t i = 0; i < n; ++i) tmp[f][i] = u[f][i] + 0.5 * h * k2[f][i];
            rhs(ts + 0.5 * h, tmp, k3);
            for (std::size_t f = 0; f < nf; ++f)
                for (std::size_t i = 0; i < n; ++i) tmp[f][i] = u[f][i] + h * k3[f][i];
            rhs(s + 1 == n_sub ? out_times[o] : ts + h, tmp, k4);
            for (std::size_t f = 0; f < nf; ++f) {
                for (std::size_t i = 0; i < n; ++i) {
                    u[f][i] += h / 6.0 * (k1[f][i] + 2.0 * k2[f][i] + 2.0 * k3[f][i] + k4[f][i]);
                }
                if (filter) op.filter(u[f]);
            }
            ++steps;
        }
        t = out_times[o];
        for (const auto& field : u) {
            for (double v : field) {
                if (!std::isfinite(v)) {
                    throw NumericalError("solver blow-up: non-finite modes before t = " + std::to_string(t));
                }
            }
        }
        emit(t, u);
    }
    return steps;
}

double choose_dt(const SolverOptions& o, double max_speed, double dx, double span) {
    if (!(o.cfl_limit > 0.0)) throw InvalidArgument("solver: cfl_limit must be positive");
    if (!(o.edge_taper >= 0.0 && o.edge_taper < 0.5)) throw InvalidArgument("solver: edge_taper must lie in [0, 0.5)");
    if (o.dt > 0.0) {
        const double c = max_speed * o.dt / dx;
        if (c > o.cfl_limit) {
            throw CflError("CFL violation: Courant number " + format_double(c) + " exceeds " +
                               format_double(o.cfl_limit) + "; reduce dt_pde",
                           c);
        }
        return o.dt;
    }
    if (o.dt < 0.0) throw InvalidArgument("solver: dt must be non-negative");
    if (!(o.safety > 0.0 && o.safety <= 1.0)) throw InvalidArgument("solver: safety must lie in (0, 1]");
    if (max_speed <= 0.0) return span;
    return o.safety * o.cfl_limit * dx / max_speed;
}

GridFunction1D emit_pdf(const UniformGrid& g, const std::vector<double>& p, bool normalize) {
    GridFunction1D out(g, p, FieldKind::pdf);
    if (normalize) normalize_pdf(out);
    return out;
}

bool boundary_heavy(const std::vector<double>& p, double tol) {
    const double peak = *std::max_element(p.begin(), p.end());
    return peak > 0.0 && std::max(std::abs(p.front()), std::abs(p.back())) > tol * peak;
}

}  // namespace

ClosureField extend_closure(const ClosureField& f) {
    ClosureField out = f;
    for (auto& e : out.estimates) {
        const auto first = std::find(e.active.begin(), e.active.end(), true);
        if (first == e.active.end()) continue;
        const auto lo = static_cast<std::size_t>(first - e.active.begin());
        std::size_t hi = lo;
        for (std::size_t i = lo; i < e.active.size(); ++i) {
            if (e.active[i]) hi = i;
        }
        for (std::size_t i = 0; i < lo; ++i) e.values[i] = e.values[lo];
        for (std::size_t i = hi + 1; i < e.values.size(); ++i) e.values[i] = e.values[hi];
    }
    return out;
}

std::vector<ClosureField> solver_closures(const std::vector<ClosureField>& fields, const SolverOptions& options) {
    if (!options.extend_closures) return fields;
    std::vector<ClosureField> out;
    for (const auto& f : fields) out.push_back(extend_closure(f));
    return out;
}

std::vector<double> edge_window(const UniformGrid& g, double frac) {
    std::vector<double> w(g.n, 1.0);
    if (!(frac > 0.0)) return w;
    const double layer = frac * (g.hi - g.lo);
    for (std::size_t i = 0; i < g.n; ++i) {
        const double u = std::min(g.node(i) - g.lo, g.hi - g.node(i)) / layer;
        if (u < 1.0) w[i] = 0.5 - 0.5 * std::cos(std::numbers::pi * std::max(u, 0.0));
    }
    return w;
}

std::vector<PdfSnapshot> solve_reduced_pdf(const ModelSpec& model, std::size_t qoi_index,
                                           const std::vector<ClosureField>& input_fields, const GridFunction1D& p0,
                                           const std::vector<double>& output_times, const SolverOptions& options,
                                           SolveReport* report) {
    validate_output_times(output_times);
    const std::vector<ClosureField> fields = solver_closures(input_fields, options);
    const ReducedForm form = reduced_terms(model, qoi_index);
    if (fields.size() != form.terms.size()) {
        throw InvalidArgument("solve_reduced_pdf: expected " + std::to_string(form.terms.size()) +
                              " closure fields, got " + std::to_string(fields.size()));
    }
    const UniformGrid& g = p0.grid;
    if (p0.size() != g.n) throw InvalidArgument("solve_reduced_pdf: p0 size differs from its grid");
    for (const auto& f : fields) {
        require_same_grid(f.grid, g, "closure field '" + f.term.label + "'");
        require_coverage(f, output_times.front(), output_times.back());
    }
    const std::vector<double> closed = sample_on(g, form.closed);
    std::vector<std::vector<double>> coeff;
    for (const auto& term : form.terms) coeff.push_back(sample_on(g, term.coefficient));

    const std::vector<double> window = edge_window(g, options.edge_taper);
    std::vector<double> velocity(g.n), ce(g.n);
    auto velocity_at = [&](double t) {
        velocity = closed;
        for (std::size_t l = 0; l < fields.size(); ++l) {
            fields[l].evaluate(t, ce);
            for (std::size_t i = 0; i < g.n; ++i) velocity[i] += coeff[l][i] * ce[i];
        }
        for (std::size_t i = 0; i < g.n; ++i) velocity[i] *= window[i];
    };
    double max_speed = 0.0;
    {
        std::vector<double> probe = {output_times.front(), output_times.back()};
        for (const auto& f : fields) {
            for (double t : f.times) {
                if (t >= output_times.front() && t <= output_times.back()) probe.push_back(t);
            }
        }
        for (double t : probe) {
            velocity_at(t);
            for (double v : velocity) max_speed = std::max(max_speed, std::abs(v));
        }
    }
    const double dt = choose_dt(options, max_speed, g.dx(), output_times.back() - output_times.front());

    SpectralOperator op(g);
    std::vector<std::vector<double>> u{p0.values};
    std::vector<PdfSnapshot> out;
    bool warned = false;
    auto rhs = [&](double t, const Fields& s, Fields& ds) {
        velocity_at(t);
        op.flux_divergence(velocity, s[0], ds[0]);
    };
    auto emit = [&](double t, const Fields& s) {
        PdfSnapshot snap;
        snap.t = t;
        snap.raw_mass = integrate(s[0], g.dx());
        snap.p = emit_pdf(g, s[0], options.normalize_output);
        if (!warned && boundary_heavy(s[0], options.boundary_tolerance)) {
            warned = true;
            log_warning("pdf near the domain boundary exceeds " + format_double(options.boundary_tolerance) +
                        " of its maximum at t = " + format_double(t) + "; widen the domain");
        }
        out.push_back(std::move(snap));
    };
    const std::size_t steps = march(u, output_times, dt, op, options.filter, rhs, emit);
    if (report) *report = {dt, max_speed, max_speed * dt / g.dx(), steps, warned};
    return out;
}

std::vector<PhSnapshot> solve_ph_system(const ModelSpec& model, std::size_t qoi_index, const PhClosures& input,
                                        const GridFunction1D& p0, const GridFunction1D& h0,
                                        const std::vector<double>& output_times, const SolverOptions& options,
                                        SolveReport* report) {
    validate_output_times(output_times);
    PhClosures closures{options.extend_closures ? extend_closure(input.second_moment) : input.second_moment,
                        solver_closures(input.source, options)};
    const ReducedForm form = reduced_terms(model, qoi_index);
    if (form.terms.size() != 1) {
        throw InvalidArgument("solve_ph_system: the flux system needs exactly one closure term");
    }
    if (!model.flux_equation) {
        throw InvalidArgument("solve_ph_system: model '" + model.name + "' supplies no flux equation");
    }
    const FluxEquation feq = model.flux_equation(qoi_index);
    if (closures.source.size() != feq.source_terms.size()) {
        throw InvalidArgument("solve_ph_system: expected " + std::to_string(feq.source_terms.size()) +
                              " source closures, got " + std::to_string(closures.source.size()));
    }
    const UniformGrid& g = p0.grid;
    require_same_grid(h0.grid, g, "h0");
    if (p0.size() != g.n || h0.size() != g.n) throw InvalidArgument("solve_ph_system: field size differs from grid");
    require_same_grid(closures.second_moment.grid, g, "second-moment closure");
    require_coverage(closures.second_moment, output_times.front(), output_times.back());
    for (const auto& f : closures.source) {
        require_same_grid(f.grid, g, "source closure '" + f.term.label + "'");
        require_coverage(f, output_times.front(), output_times.back());
    }

    std::vector<double> c = sample_on(g, form.closed);
    std::vector<double> fco = sample_on(g, form.terms[0].coefficient);
    std::vector<double> s0 = sample_on(g, feq.source_closed);
    std::vector<std::vector<double>> a;
    for (const auto& term : feq.source_terms) a.push_back(sample_on(g, term.coefficient));
    const std::vector<double> window = edge_window(g, options.edge_taper);
    for (std::size_t i = 0; i < g.n; ++i) {
        c[i] *= window[i];
        fco[i] *= window[i];
        s0[i] *= window[i];
        for (auto& v : a) v[i] *= window[i];
    }

    std::vector<double> e2(g.n), src(g.n), ce(g.n), flux_coef(g.n);
    auto closures_at = [&](double t) {
        closures.second_moment.evaluate(t, e2);
        for (std::size_t i = 0; i < g.n; ++i) flux_coef[i] = fco[i] * e2[i];
        src = s0;
        for (std::size_t l = 0; l < closures.source.size(); ++l) {
            closures.source[l].evaluate(t, ce);
            for (std::size_t i = 0; i < g.n; ++i) src[i] += a[l][i] * ce[i];
        }
    };
    double max_speed = 0.0;
    {
        std::vector<double> probe = {output_times.front(), output_times.back()};
        for (double t : closures.second_moment.times) {
            if (t >= output_times.front() && t <= output_times.back()) probe.push_back(t);
        }
        for (double t : probe) {
            closures_at(t);
            for (std::size_t i = 0; i < g.n; ++i) {
                max_speed = std::max(max_speed, std::abs(c[i]) + std::abs(fco[i]) * std::sqrt(std::max(e2[i], 0.0)));
            }
        }
    }
    const double dt = choose_dt(options, max_speed, g.dx(), output_times.back() - output_times.front());

    SpectralOperator op(g);
    Fields u{p0.values, h0.values};
    std::vector<PhSnapshot> out;
    bool warned = false;
    auto rhs = [&](double t, const Fields& s, Fields& ds) {
        closures_at(t);
        const auto& p = s[0];
        const auto& h = s[1];
        op.flux_divergence(c, p, ds[0]);
        op.flux_divergence(fco, h, ds[0], true);
        op.flux_divergence(c, h, ds[1]);
        op.flux_divergence(flux_coef, p, ds[1], true);
        for (std::size_t i = 0; i < g.n; ++i) ds[1][i] += p[i] * src[i];
    };
    auto emit = [&](double t, const Fields& s) {
        PhSnapshot snap;
        snap.t = t;
        snap.raw_mass = integrate(s[0], g.dx());
        snap.h = GridFunction1D(g, s[1], FieldKind::flux_h);
        if (options.normalize_output) {
            snap.p = emit_pdf(g, s[0], true);
            const double clipped_mass = [&] {
                double m = 0.0;
                for (double v : s[0]) m += std::max(v, 0.0);
                return m * g.dx();
            }();
            for (double& v : snap.h.values) v /= clipped_mass;
        } else {
            snap.p = GridFunction1D(g, s[0], FieldKind::pdf);
        }
        if (!warned && boundary_heavy(s[0], options.boundary_tolerance)) {
            warned = true;
            log_warning("pdf near the domain boundary exceeds " + format_double(options.boundary_tolerance) +
                        " of its maximum at t = " + format_double(t) + "; widen the domain");
        }
        out.push_back(std::move(snap));
    };
    const std::size_t steps = march(u, output_times, dt, op, options.filter, rhs, emit);
    if (report) *report = {dt, max_speed, max_speed * dt / g.dx(), steps, warned};
    return out;
}

}  // namespace ropdf
