// Acceptance gate: one line per criterion, exit status 1 when any fails.
// Pass criterion numbers as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ropdf/diagnostics.hpp"
#include "ropdf/error.hpp"
#include "ropdf/mz.hpp"

using namespace ropdf;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v) {
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double variance_of(const std::vector<double>& v) {
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size());
}

// ---------------------------------------------------------------- 1

const UniformGrid kGaussGrid(-4.0, 4.0, 160);

ScatterSlice gaussian_draws(std::size_t m, std::uint64_t seed) {
    const auto draws = sample_initial(builtin_model("gaussian_static"), m, seed);
    ScatterSlice s;
    for (const auto& d : draws) {
        s.x.push_back(d[0]);
        s.y.push_back(d[1]);
    }
    return s;
}

double rms_vs_truth(const std::vector<double>& est) {
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < kGaussGrid.n; ++i) {
        const double x = kGaussGrid.node(i);
        if (std::abs(x) > 2.0 + 1e-9) continue;
        const double d = est[i] - (2.0 + 1.5 * x);
        acc += d * d;
        ++n;
    }
    return std::sqrt(acc / static_cast<double>(n));
}

// Brute-force window average with the half-width of the default bin rule.
std::vector<double> window_average(const ScatterSlice& s) {
    const auto [lo, hi] = std::minmax_element(s.x.begin(), s.x.end());
    const double bins = std::max(10.0, std::floor(std::sqrt(static_cast<double>(s.x.size()))));
    const double w = (*hi - *lo) / (2.0 * bins);
    std::vector<double> out(kGaussGrid.n, 0.0);
    for (std::size_t i = 0; i < kGaussGrid.n; ++i) {
        double sum = 0.0;
        std::size_t c = 0;
        for (std::size_t j = 0; j < s.x.size(); ++j) {
            if (std::abs(s.x[j] - kGaussGrid.node(i)) <= w) {
                sum += s.y[j];
                ++c;
            }
        }
        if (c > 0) out[i] = sum / static_cast<double>(c);
    }
    return out;
}

Outcome criterion_estimators() {
    std::vector<double> oracle;
    for (std::uint64_t seed = 100; seed < 120; ++seed) oracle.push_back(rms_vs_truth(window_average(gaussian_draws(1000, seed))));
    const double bound = mean_of(oracle) + 3.0 * stddev_of(oracle);
    EstimatorOptions ma, sp;
    ma.kind = EstimatorKind::moving_average;
    sp.kind = EstimatorKind::smoothing_spline;
    const auto big = gaussian_draws(1000, 0);
    const auto small = gaussian_draws(10, 0);
    const double ma_big = rms_vs_truth(estimate_conditional(big, kGaussGrid, ma).values);
    const double sp_big = rms_vs_truth(estimate_conditional(big, kGaussGrid, sp).values);
    const double sp_small = rms_vs_truth(estimate_conditional(small, kGaussGrid, sp).values);
    std::ostringstream d;
    d << "bound " << fmt("%.3f", bound) << " (oracle " << fmt("%.3f", mean_of(oracle)) << " +- "
      << fmt("%.3f", stddev_of(oracle)) << "); M=1000 moving average " << fmt("%.3f", ma_big) << ", spline "
      << fmt("%.3f", sp_big) << "; M=10 spline " << fmt("%.3f", sp_small);
    return {ma_big < bound && sp_big < bound && sp_small > bound, d.str()};
}

// ---------------------------------------------------------------- 2

Outcome criterion_conservation() {
    IntegrationOptions io;
    io.t_final = 10.0;
    io.dt = 1e-3;
    io.store_stride = 100;
    const auto e = simulate(builtin_model("kraichnan_orszag"), 100, 0, io);
    double worst_product = 0.0, worst_energy = 0.0;
    for (std::size_t s = 0; s < e.n_samples(); ++s) {
        const double p0 = e.at(s, 0, 0) * e.at(s, 0, 1);
        const double e0 = e.at(s, 0, 0) * e.at(s, 0, 0) + e.at(s, 0, 1) * e.at(s, 0, 1) + e.at(s, 0, 2) * e.at(s, 0, 2);
        for (std::size_t t = 1; t < e.n_times(); ++t) {
            const double p = e.at(s, t, 0) * e.at(s, t, 1);
            const double en = e.at(s, t, 0) * e.at(s, t, 0) + e.at(s, t, 1) * e.at(s, t, 1) + e.at(s, t, 2) * e.at(s, t, 2);
            worst_product = std::max(worst_product, std::abs(p - p0) / std::abs(p0));
            worst_energy = std::max(worst_energy, std::abs(en - e0) / e0);
        }
    }
    return {worst_product <= 1e-6 && worst_energy <= 1e-6,
            "max relative drift x1*x2 " + fmt("%.2e", worst_product) + ", energy " + fmt("%.2e", worst_energy)};
}

// ---------------------------------------------------------------- 3

double gauss(double x, double mean, double var) {
    return std::exp(-0.5 * (x - mean) * (x - mean) / var) / std::sqrt(2.0 * std::acos(-1.0) * var);
}

Outcome criterion_solver() {
    double worst_mass = 0.0;
    auto track = [&](const std::vector<PdfSnapshot>& out) {
        for (const auto& s : out) worst_mass = std::max(worst_mass, std::abs(s.raw_mass - 1.0));
    };

    const UniformGrid ga(-10.0, 10.0, 256);
    GridFunction1D pa(ga, FieldKind::pdf);
    for (std::size_t i = 0; i < ga.n; ++i) pa.values[i] = gauss(ga.node(i), 0.0, 1.0);
    SolverOptions oa;
    oa.edge_taper = 0.0;
    oa.dt = 2e-3;
    const double transit = ga.length() / 2.0;
    const auto adv = solve_reduced_pdf(builtin_model("advection_test", {{"velocity", 2.0}}), 0, {}, pa,
                                       {0.0, 0.25 * transit, 0.5 * transit, transit}, oa);
    track(adv);
    double adv_err = 0.0;
    for (const auto& s : adv) {
        for (std::size_t i = 0; i < ga.n; ++i) {
            double x0 = ga.node(i) - 2.0 * s.t;
            x0 -= ga.length() * std::floor((x0 - ga.lo) / ga.length());
            double exact = 0.0;
            for (int k = -2; k <= 2; ++k) exact += gauss(x0 + k * ga.length(), 0.0, 1.0);
            adv_err = std::max(adv_err, std::abs(s.p.values[i] - exact));
        }
    }

    const UniformGrid go(-12.0, 12.0, 512);
    GridFunction1D po(go, FieldKind::pdf);
    for (std::size_t i = 0; i < go.n; ++i) po.values[i] = gauss(go.node(i), 0.0, 1.0);
    const auto ou = solve_reduced_pdf(builtin_model("advection_test", {{"velocity", 0.0}, {"relaxation", 1.0}}), 0, {},
                                      po, {0.0, 0.5, 1.0});
    track(ou);
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < go.n; ++i) {
        m1 += go.node(i) * ou.back().p.values[i] * go.dx();
        m2 += go.node(i) * go.node(i) * ou.back().p.values[i] * go.dx();
    }
    const double ou_err = std::abs(m2 - m1 * m1 - std::exp(-2.0));

    const auto ko = builtin_model("kraichnan_orszag");
    IntegrationOptions io;
    io.t_final = 1.0;
    io.store_stride = 50;
    const auto e = simulate(ko, 1000, 3, io);
    const auto g = fit_domain(e, 0, 256);
    const std::vector<ClosureField> fields = {build_closure_field(e, 0, reduced_terms(ko, 0).terms[0], g, e.times(), {})};
    track(solve_reduced_pdf(ko, 0, fields, initial_marginal(ko, 0, g), e.times()));

    return {adv_err <= 1e-8 && ou_err <= 1e-6 && worst_mass <= 1e-6,
            "translation error " + fmt("%.2e", adv_err) + ", variance error at t=1 " + fmt("%.2e", ou_err) +
                ", worst |mass - 1| " + fmt("%.2e", worst_mass)};
}

// ---------------------------------------------------------------- shared KO data (4, 7)

struct KoData {
    ModelSpec model = builtin_model("kraichnan_orszag");
    TrajectoryEnsemble closure, benchmark;
    UniformGrid grid;
    std::vector<ClosureField> fields;
    GridFunction1D p0;
};

const KoData& ko_data() {
    static std::optional<KoData> d;
    if (!d) {
        d.emplace();
        IntegrationOptions io;
        io.t_final = 3.0;
        io.dt = 1e-3;
        io.store_stride = 50;
        d->closure = simulate(d->model, 5000, 0, io, 0);
        d->benchmark = simulate(d->model, 30000, 0, io, 5000);
        d->grid = fit_domain(d->benchmark, 0, 256);
        d->fields = {build_closure_field(d->closure, 0, reduced_terms(d->model, 0).terms[0], d->grid,
                                         d->closure.times(), {})};
        d->p0 = initial_marginal(d->model, 0, d->grid);
    }
    return *d;
}

// ---------------------------------------------------------------- 4

Outcome criterion_ko_reproduction() {
    const KoData& d = ko_data();
    const auto times = d.closure.times();
    const auto sol = solve_reduced_pdf(d.model, 0, d.fields, d.p0, times);
    double worst = 0.0, worst_t = 0.0;
    for (const auto& s : sol) {
        const auto ref = kde_pdf(component_samples(d.benchmark, d.benchmark.time_index(s.t), 0), d.grid);
        const double e = pdf_error(s.p, ref, Norm::L1);
        if (e > worst) {
            worst = e;
            worst_t = s.t;
        }
    }

    std::vector<double> snaps;
    for (double t : times) {
        if (t <= 1.0 + 1e-12) snaps.push_back(t);
    }
    const auto term = reduced_terms(d.model, 0).terms[0];
    const PhClosures closures = build_ph_closures(d.model, 0, d.closure, d.grid, snaps, {});
    const ClosureField first = build_closure_field(d.closure, 0, term, d.grid, {0.0}, {});
    const auto ph = solve_ph_system(d.model, 0, closures, d.p0, initial_flux(d.p0, first), snaps);
    const HEstimate ref = h_from_data(d.benchmark, d.benchmark.time_index(1.0), 0, term.inner, d.grid);
    const double h_err = info_content_error(ref.h, ph.back().h, ref.mask);

    return {worst <= 0.08 && h_err <= 0.15, "worst L1 " + fmt("%.4f", worst) + " at t=" + fmt("%.2f", worst_t) +
                                                " (bound 0.08); h relative L2 at t=1 " + fmt("%.4f", h_err) +
                                                " (bound 0.15)"};
}

// ---------------------------------------------------------------- 5

std::string study_line(const std::string& name, const StudyResult& r) {
    std::ostringstream s;
    s << name << " [";
    for (std::size_t i = 0; i < r.rows.size(); ++i) s << (i ? " " : "") << fmt("%.3f", r.rows[i].error);
    s << "] slope " << fmt("%.3f", r.slope) << " inversions " << r.inversions;
    return s.str();
}

bool study_ok(const StudyResult& r) {
    const bool rows_ok = std::all_of(r.rows.begin(), r.rows.end(), [](const StudyRow& row) { return row.status == "ok"; });
    return rows_ok && r.inversions <= 1 && r.slope <= -0.25 && r.slope >= -0.75;
}

Outcome criterion_information_decay() {
    struct Case {
        std::string model;
        double t, dt;
        std::size_t stride;
    };
    const std::vector<Case> cases = {{"kraichnan_orszag", 1.0, 1e-3, 50}, {"ring", 3.0, 1e-2, 10}, {"malaria", 30.0, 5e-2, 10}};
    bool pass = true;
    std::string detail;
    for (const auto& c : cases) {
        const auto m = builtin_model(c.model);
        StudyConfig sc;
        sc.sizes = {10, 100, 1000, 5000};
        sc.t_eval = c.t;
        sc.integration.t_final = c.t;
        sc.integration.dt = c.dt;
        sc.integration.store_stride = c.stride;
        const auto r = sample_size_study(m, m.qoi_index, sc);
        pass = pass && study_ok(r);
        detail += (detail.empty() ? "" : "; ") + study_line(c.model == "kraichnan_orszag" ? "KO" : c.model, r);
    }
    return {pass, detail};
}

// ---------------------------------------------------------------- 6

Outcome criterion_cumulants() {
    IntegrationOptions io;
    io.t_final = 2.0;
    io.dt = 1e-3;
    io.store_stride = 100;
    io.components = {0, 2};
    const auto e = simulate(builtin_model("kraichnan_orszag"), 50000, 0, io);
    const auto c = cumulants(e, 0, 2, 7, e.time_index(2.0));
    std::vector<double> odd;
    for (std::size_t k : {1u, 3u, 5u, 7u}) odd.push_back(c[k - 1].rescaled);
    const bool monotone = std::is_sorted(odd.rbegin(), odd.rend());
    const bool decade = odd.back() < 0.1 * odd.front();
    std::ostringstream d;
    d << "|c_k|/k! for k=1,3,5,7:";
    for (double v : odd) d << " " << fmt("%.3e", v);
    d << "; ratio k=7/k=1 " << fmt("%.3f", odd.back() / odd.front());
    return {!(monotone && decade), d.str()};
}

// ---------------------------------------------------------------- 7

ModelSpec decoupled_model() {
    ModelSpec m;
    m.name = "decoupled";
    m.dim = 2;
    m.component_names = {"x1", "x2"};
    m.drift = [](State x, std::span<double> dx) {
        dx[0] = -x[0];
        dx[1] = x[0];
    };
    m.initial.per_component = {Gaussian{0.5, 1.0}, Gaussian{0.0, 1.0}};
    m.decompose = [](std::size_t) {
        ReducedForm r;
        r.closed_label = "0";
        r.closed = [](double) { return 0.0; };
        r.terms.push_back(ClosureTerm{"-E[x1 | x1]", [](double) { return -1.0; }, [](State s) { return s[0]; }, {0}});
        return r;
    };
    return m;
}

Outcome criterion_mz() {
    const KoData& d = ko_data();
    const auto clock = std::chrono::steady_clock::now();
    const auto sc = streaming_coefficient(d.model, 0, d.grid);
    std::vector<PdfSnapshot> series;
    for (double t : d.closure.times()) {
        const auto p = kde_pdf(component_samples(d.benchmark, d.benchmark.time_index(t), 0), d.grid);
        series.push_back({t, p, p.integral()});
    }
    const auto mem = mz_memory(d.model, 0, series, d.fields, sc);
    bool start_zero = true, finite = true;
    for (double v : mem.front().memory.values) start_zero = start_zero && v == 0.0;
    for (const auto& s : mem) {
        for (double v : s.memory.values) finite = finite && std::isfinite(v);
    }

    // Sign of x1 (E[x3 | x1] - 1) from bin averages of the benchmark samples.
    std::size_t checked = 0, agree = 0;
    const double half = 2.0 * d.grid.dx();
    for (std::size_t j = 10; j < mem.size(); j += 10) {
        const std::size_t k = d.benchmark.time_index(mem[j].t);
        const auto x1 = component_samples(d.benchmark, k, 0);
        const auto x3 = component_samples(d.benchmark, k, 2);
        for (std::size_t i = 0; i < d.grid.n; ++i) {
            const double x = d.grid.node(i);
            std::vector<double> ys;
            for (std::size_t s = 0; s < x1.size(); ++s) {
                if (std::abs(x1[s] - x) <= half) ys.push_back(x3[s]);
            }
            if (ys.size() < 100 || !d.fields[0].estimates.back().active[i]) continue;
            const double m_oracle = x * (mean_of(ys) - 1.0);
            const double se = std::abs(x) * stddev_of(ys) / std::sqrt(static_cast<double>(ys.size()));
            if (std::abs(m_oracle) < 4.0 * se || std::abs(m_oracle) < 0.05) continue;
            ++checked;
            if ((m_oracle > 0.0) == (mem[j].m.values[i] > 0.0)) ++agree;
        }
    }

    const auto dm = decoupled_model();
    IntegrationOptions io;
    io.t_final = 1.0;
    io.dt = 1e-2;
    io.store_stride = 10;
    const auto de = simulate(dm, 2000, 3, io);
    const auto dg = fit_domain(de, 0, 128);
    const std::vector<ClosureField> dfields = {build_closure_field(de, 0, reduced_terms(dm, 0).terms[0], dg, de.times(), {})};
    const auto dsc = streaming_coefficient(dm, 0, dg);
    double decoupled = 0.0;
    for (const auto& s : mz_memory(dm, 0, solve_reduced_pdf(dm, 0, dfields, initial_marginal(dm, 0, dg), de.times()),
                                   dfields, dsc)) {
        for (double v : s.memory.values) decoupled = std::max(decoupled, std::abs(v));
    }

    const auto check = mz_identity_check_at_snapshots(d.model, 0, d.fields, d.p0, sc);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock).count();

    std::ostringstream s;
    s << "memory at t=0 " << (start_zero ? "identically 0" : "nonzero") << "; decoupled max |memory| "
      << fmt("%.1e", decoupled) << "; finite " << (finite ? "yes" : "no") << "; sign agreement " << agree << "/"
      << checked << "; identity residual/truncation " << fmt("%.2f", check.worst_ratio) << " over "
      << check.times.size() << " snapshots; post-processing " << fmt("%.1f", seconds) << "s";
    return {start_zero && finite && decoupled <= 1e-10 && checked > 0 && agree == checked && check.worst_ratio <= 5.0 &&
                seconds < 60.0,
            s.str()};
}

// ---------------------------------------------------------------- 8

Outcome criterion_malaria() {
    const auto m = builtin_model("malaria");
    const std::size_t q = m.qoi_index;
    IntegrationOptions io;
    io.t_final = 30.0;
    io.dt = 0.05;
    io.store_stride = 10;
    const auto closure = simulate(m, 5000, 0, io, 0);
    const auto bench = simulate(m, 30000, 0, io, 5000);
    double drift = 0.0;
    for (const auto* e : {&closure, &bench}) {
        for (std::size_t s = 0; s < e->n_samples(); ++s) {
            for (std::size_t t = 0; t < e->n_times(); ++t) {
                double total = 0.0;
                for (std::size_t k = 0; k <= 8; ++k) total += e->at(s, t, k);
                drift = std::max(drift, std::abs(total - 1.0));
            }
        }
    }
    const auto g = fit_domain(bench, q, 256);
    const std::vector<ClosureField> fields = {
        build_closure_field(closure, q, reduced_terms(m, q).terms[0], g, closure.times(), {})};
    const auto p0 = initial_marginal(m, q, g, component_samples(closure, 0, q));
    const auto sol = solve_reduced_pdf(m, q, fields, p0, {0.0, 7.0, 14.0, 30.0});
    double worst = 0.0;
    std::string errs;
    for (std::size_t i = 1; i < sol.size(); ++i) {
        const auto ref = kde_pdf(component_samples(bench, bench.time_index(sol[i].t), q), g);
        const double e = pdf_error(sol[i].p, ref, Norm::L1);
        worst = std::max(worst, e);
        errs += (errs.empty() ? "" : " ") + fmt("%.3f", e);
    }
    std::vector<double> var;
    for (double t = 20.0; t <= 30.0 + 1e-9; t += 1.0) var.push_back(variance_of(component_samples(bench, bench.time_index(t), q)));
    bool decreasing = true;
    for (std::size_t i = 1; i < var.size(); ++i) decreasing = decreasing && var[i] < var[i - 1];
    return {drift <= 1e-8 && worst <= 0.1 && decreasing,
            "human total drift " + fmt("%.1e", drift) + "; L1 at t=7,14,30: " + errs + "; var(R) t=20 " +
                fmt("%.3e", var.front()) + " -> t=30 " + fmt("%.3e", var.back()) +
                (decreasing ? " (decreasing)" : " (not monotone)")};
}

}  // namespace

int main(int argc, char** argv) {
    struct Criterion {
        int id;
        const char* name;
        double budget_s;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> all = {
        {1, "conditional-expectation benchmark", 10.0, criterion_estimators},
        {2, "integrator conservation", 5.0, criterion_conservation},
        {3, "solver exactness", 10.0, criterion_solver},
        {4, "Kraichnan-Orszag reproduction", 300.0, criterion_ko_reproduction},
        {5, "information-content decay", 1200.0, criterion_information_decay},
        {6, "cumulant trend", 120.0, criterion_cumulants},
        {7, "Mori-Zwanzig identities", 300.0, criterion_mz},
        {8, "malaria pipeline", 300.0, criterion_malaria},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    bool all_pass = true;
    for (const auto& c : all) {
        if (!selected.empty() && !selected.count(c.id)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = seconds < c.budget_s;
        const bool pass = o.pass && in_time;
        all_pass = all_pass && pass;
        std::printf("criterion %d %s: %s  %s; %.1fs (budget %.0fs)\n", c.id, c.name, pass ? "PASS" : "FAIL",
                    o.detail.c_str(), seconds, c.budget_s);
        std::fflush(stdout);
    }
    return all_pass ? 0 : 1;
}
