#include "ropdf/mz.hpp"

#include <algorithm>
#include <cmath>

#include "ropdf/error.hpp"
#include "ropdf/log.hpp"
#include "ropdf/quadrature.hpp"
#include "ropdf/spectral.hpp"

namespace ropdf {

namespace {

// E[inner(x) | x_qoi = x] for independent components by tensor quadrature over
// the support (minus the QoI itself).
std::vector<double> quadrature_expectation(const ModelSpec& model, std::size_t qoi, const ClosureTerm& term,
                                           const UniformGrid& grid, std::size_t points) {
    std::vector<std::size_t> dims;
    for (std::size_t c : term.support) {
        if (c != qoi && std::find(dims.begin(), dims.end(), c) == dims.end()) dims.push_back(c);
    }
    std::size_t q = points;
    while (q > 2 && std::pow(double(q), double(dims.size())) > 2e5) --q;
    std::vector<QuadratureRule> rules;
    for (std::size_t c : dims) rules.push_back(gauss_rule(model.initial.per_component[c], q));

    std::vector<double> state(model.dim);
    for (std::size_t c = 0; c < model.dim; ++c) state[c] = mean_of(model.initial.per_component[c]);
    auto expectation = [&] {
        std::vector<std::size_t> idx(dims.size(), 0);
        double acc = 0.0;
        for (;;) {
            double w = 1.0;
            for (std::size_t d = 0; d < dims.size(); ++d) {
                state[dims[d]] = rules[d].nodes[idx[d]];
                w *= rules[d].weights[idx[d]];
            }
            acc += w * term.inner(state);
            std::size_t d = 0;
            for (; d < dims.size(); ++d) {
                if (++idx[d] < rules[d].nodes.size()) break;
                idx[d] = 0;
            }
            if (d == dims.size()) break;
        }
        return acc;
    };
    const bool reads_qoi = std::find(term.support.begin(), term.support.end(), qoi) != term.support.end();
    std::vector<double> out(grid.n);
    if (!reads_qoi) {
        std::fill(out.begin(), out.end(), expectation());
        return out;
    }
    for (std::size_t i = 0; i < grid.n; ++i) {
        state[qoi] = grid.node(i);
        out[i] = expectation();
    }
    return out;
}

}  // namespace

StreamingCoefficient streaming_coefficient(const ModelSpec& model, std::size_t qoi_index, const UniformGrid& grid,
                                           const TrajectoryEnsemble* initial_ensemble,
                                           const EstimatorOptions& estimator, std::size_t quadrature_points) {
    const ReducedForm form = reduced_terms(model, qoi_index);
    StreamingCoefficient sc;
    sc.field = GridFunction1D(grid, FieldKind::generic);
    for (std::size_t i = 0; i < grid.n; ++i) sc.field.values[i] = form.closed(grid.node(i));
    const bool independent = model.initial.independent();
    if (!independent && !initial_ensemble) {
        throw InvalidArgument("streaming_coefficient: dependent initial components need an initial ensemble");
    }
    sc.method = independent ? "quadrature" : "initial_ensemble";
    if (!independent) {
        log_warning("initial components of '" + model.name +
                    "' are dependent; the initial conditional expectation is estimated from the sampled ensemble");
    }
    for (const auto& term : form.terms) {
        std::vector<double> e0;
        if (independent) {
            e0 = quadrature_expectation(model, qoi_index, term, grid, quadrature_points);
        } else {
            const ScatterSlice s = slice(*initial_ensemble, 0, qoi_index, term.inner);
            e0 = estimate_conditional(s, grid, estimator).values;
        }
        for (std::size_t i = 0; i < grid.n; ++i) sc.field.values[i] += term.coefficient(grid.node(i)) * e0[i];
        sc.term_expectations.push_back(std::move(e0));
    }
    return sc;
}

namespace {

// Nodes active in both snapshots that bracket t (one snapshot when t hits it).
Mask bracket_mask(const ClosureField& f, double t) {
    const auto it = std::lower_bound(f.times.begin(), f.times.end(), t);
    const std::size_t hi = std::min<std::size_t>(static_cast<std::size_t>(it - f.times.begin()), f.times.size() - 1);
    const bool hit = std::abs(f.times[hi] - t) <= 1e-12 * std::max(1.0, std::abs(t));
    const std::size_t lo = hit || hi == 0 ? hi : hi - 1;
    Mask m(f.grid.n);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = f.estimates[lo].active[i] && f.estimates[hi].active[i];
    return m;
}

}  // namespace

std::vector<MzSnapshot> mz_memory(const ModelSpec& model, std::size_t qoi_index,
                                  const std::vector<PdfSnapshot>& p_series, const std::vector<ClosureField>& fields,
                                  const StreamingCoefficient& streaming) {
    const ReducedForm form = reduced_terms(model, qoi_index);
    if (fields.size() != form.terms.size() || streaming.term_expectations.size() != form.terms.size()) {
        throw InvalidArgument("mz_memory: closure fields do not match the model's closure terms");
    }
    if (p_series.empty()) return {};
    const UniformGrid& g = p_series.front().p.grid;
    if (!streaming.field.grid.same_as(g)) throw InvalidArgument("mz_memory: grid mismatch with the streaming coefficient");
    for (const auto& f : fields) {
        if (!f.grid.same_as(g)) throw InvalidArgument("mz_memory: grid mismatch with closure '" + f.term.label + "'");
    }
    for (const auto& s : p_series) {
        if (!s.p.grid.same_as(g)) throw InvalidArgument("mz_memory: PDF series changes grid");
        for (const auto& f : fields) {
            const double tol = 1e-9 * std::max(1.0, std::abs(s.t));
            if (s.t < f.t_first() - tol || s.t > f.t_last() + tol) {
                throw InvalidArgument("mz_memory: time-span mismatch at t = " + std::to_string(s.t));
            }
        }
    }
    std::vector<std::vector<double>> coeff;
    for (const auto& term : form.terms) {
        std::vector<double> c(g.n);
        for (std::size_t i = 0; i < g.n; ++i) c[i] = term.coefficient(g.node(i));
        coeff.push_back(std::move(c));
    }
    SpectralOperator op(g);
    std::vector<MzSnapshot> out;
    std::vector<double> ce(g.n), pm(g.n);
    for (const auto& s : p_series) {
        MzSnapshot snap;
        snap.t = s.t;
        snap.m = GridFunction1D(g, FieldKind::memory);
        const bool at_start =
            fields.empty() || std::abs(s.t - fields.front().t_first()) <= 1e-12 * std::max(1.0, std::abs(s.t));
        if (!at_start) {
            for (std::size_t l = 0; l < fields.size(); ++l) {
                fields[l].evaluate(s.t, ce);
                const Mask known = bracket_mask(fields[l], s.t);
                for (std::size_t i = 0; i < g.n; ++i) {
                    if (known[i]) snap.m.values[i] += coeff[l][i] * (ce[i] - streaming.term_expectations[l][i]);
                }
            }
        }
        snap.memory = GridFunction1D(g, FieldKind::memory);
        if (!at_start) op.flux_divergence(snap.m.values, s.p.values, snap.memory.values);
        for (double v : snap.memory.values) {
            if (!std::isfinite(v)) throw NumericalError("mz_memory: non-finite memory at t = " + std::to_string(s.t));
        }
        out.push_back(std::move(snap));
    }
    return out;
}

IdentityCheck mz_identity_check(const std::vector<PdfSnapshot>& p_series, const std::vector<MzSnapshot>& memory,
                                const StreamingCoefficient& streaming) {
    const std::size_t n_t = p_series.size();
    if (n_t < 5 || memory.empty()) throw InvalidArgument("mz_identity_check: needs at least five PDF snapshots");
    const UniformGrid& g = p_series.front().p.grid;
    for (const auto& s : p_series) {
        if (!s.p.grid.same_as(g)) throw InvalidArgument("mz_identity_check: PDF series changes grid");
    }
    auto close = [](double a, double b, double scale) { return std::abs(a - b) <= 1e-9 * std::max(scale, 1e-300); };
    SpectralOperator op(g);
    IdentityCheck out;
    std::vector<double> streaming_term(g.n);
    for (const auto& mem : memory) {
        const auto it = std::find_if(p_series.begin(), p_series.end(), [&](const PdfSnapshot& s) {
            return close(s.t, mem.t, std::max(1.0, std::abs(mem.t)));
        });
        if (it == p_series.end()) continue;
        const auto j = static_cast<std::size_t>(it - p_series.begin());
        if (j < 2 || j + 2 >= n_t) continue;
        const double step = p_series[j + 1].t - p_series[j].t;
        if (!close(p_series[j].t - p_series[j - 1].t, step, step) || !close(p_series[j + 2].t - p_series[j + 1].t, step, step) ||
            !close(p_series[j - 1].t - p_series[j - 2].t, step, step)) {
            continue;
        }
        const auto& pm2 = p_series[j - 2].p.values;
        const auto& pm1 = p_series[j - 1].p.values;
        const auto& p0 = p_series[j].p.values;
        const auto& pp1 = p_series[j + 1].p.values;
        const auto& pp2 = p_series[j + 2].p.values;
        op.flux_divergence(streaming.field.values, p0, streaming_term);
        double residual = 0.0, pttt = 0.0;
        for (std::size_t i = 0; i < g.n; ++i) {
            const double dpdt = (pp1[i] - pm1[i]) / (2.0 * step);
            residual = std::max(residual, std::abs(mem.memory.values[i] + streaming_term[i] - dpdt));
            const double third = (pp2[i] - 2.0 * pp1[i] + 2.0 * pm1[i] - pm2[i]) / (2.0 * step * step * step);
            pttt = std::max(pttt, std::abs(third));
        }
        out.times.push_back(mem.t);
        out.residual.push_back(residual);
        out.truncation.push_back(step * step / 6.0 * pttt);
        const double ratio = residual / std::max(out.truncation.back(), 1e-300);
        out.worst_ratio = std::max(out.worst_ratio, ratio);
    }
    if (out.times.empty()) throw InvalidArgument("mz_identity_check: no memory snapshot has a uniform five-point stencil");
    return out;
}

IdentityCheck mz_identity_check_at_snapshots(const ModelSpec& model, std::size_t qoi_index,
                                             const std::vector<ClosureField>& fields, const GridFunction1D& p0,
                                             const StreamingCoefficient& streaming, const SolverOptions& options,
                                             double stencil_fraction) {
    if (fields.empty()) throw InvalidArgument("mz_identity_check: no closure fields");
    if (!(stencil_fraction > 0.0 && stencil_fraction < 0.25)) {
        throw InvalidArgument("mz_identity_check: stencil_fraction must lie in (0, 0.25)");
    }
    const std::vector<double>& snaps = fields.front().times;
    if (snaps.size() < 3) throw InvalidArgument("mz_identity_check: needs at least three closure snapshots");
    std::vector<double> centers, times = {snaps.front()};
    for (std::size_t j = 1; j + 1 < snaps.size(); ++j) {
        const double h = stencil_fraction * std::min(snaps[j] - snaps[j - 1], snaps[j + 1] - snaps[j]);
        centers.push_back(snaps[j]);
        for (int k = -2; k <= 2; ++k) times.push_back(snaps[j] + k * h);
    }
    times.push_back(snaps.back());
    SolverOptions raw = options;
    raw.filter = false;
    raw.normalize_output = false;
    const auto p_series = solve_reduced_pdf(model, qoi_index, fields, p0, times, raw);
    std::vector<PdfSnapshot> at_centers;
    for (const auto& s : p_series) {
        if (std::find(centers.begin(), centers.end(), s.t) != centers.end()) at_centers.push_back(s);
    }
    std::vector<ClosureField> used = solver_closures(fields, options);
    if (options.extend_closures) {
        for (auto& f : used) {
            for (auto& e : f.estimates) e.active.assign(e.active.size(), true);
        }
    }
    auto memory = mz_memory(model, qoi_index, at_centers, used, streaming);
    const UniformGrid& g = p0.grid;
    const std::vector<double> window = edge_window(g, options.edge_taper);
    StreamingCoefficient tapered = streaming;
    for (std::size_t i = 0; i < g.n; ++i) tapered.field.values[i] *= window[i];
    SpectralOperator op(g);
    for (std::size_t j = 0; j < memory.size(); ++j) {
        for (std::size_t i = 0; i < g.n; ++i) memory[j].m.values[i] *= window[i];
        op.flux_divergence(memory[j].m.values, at_centers[j].p.values, memory[j].memory.values);
    }
    return mz_identity_check(p_series, memory, tapered);
}

}  // namespace ropdf
