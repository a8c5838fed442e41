#include "ropdf/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ropdf/csv.hpp"
#include "ropdf/diagnostics.hpp"
#include "ropdf/error.hpp"
#include "ropdf/log.hpp"
#include "ropdf/model_config.hpp"
#include "ropdf/mz.hpp"

#ifndef ROPDF_VERSION
#define ROPDF_VERSION "0.0.0"
#endif

namespace ropdf {

using nlohmann::json;

std::string_view version() { return ROPDF_VERSION; }

const std::vector<std::string>& pipeline_task_names() {
    static const std::vector<std::string> names = {"simulate", "benchmark-kde", "estimate",  "solve-pdf", "solve-ph",
                                                   "info-content", "mz",        "study",     "cumulants"};
    return names;
}

namespace {

std::vector<std::string> task_dependencies(const std::string& task, bool mz_from_kde) {
    if (task == "estimate" || task == "solve-ph") return {"simulate"};
    if (task == "solve-pdf") return {"estimate"};
    if (task == "info-content") return {"solve-ph", "benchmark-kde"};
    if (task == "mz") return {"estimate", mz_from_kde ? "benchmark-kde" : "solve-pdf"};
    return {};
}

// ------------------------------------------------------------------ schema

std::string join_path(const std::string& base, const std::string& key) { return base.empty() ? key : base + "." + key; }

class Section {
public:
    Section(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
        if (!doc_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    void allow(std::initializer_list<const char*> keys) const {
        const std::set<std::string> ok(keys.begin(), keys.end());
        for (const auto& [k, v] : doc_.items()) {
            if (!ok.count(k)) throw ConfigError(join_path(path_, k), "unknown field");
        }
    }

    bool has(const std::string& key) const { return doc_.contains(key) && !doc_.at(key).is_null(); }

    // Resolved documents spell defaults as words ("auto", "stored", ...).
    bool is_word(const std::string& key, const char* word) const {
        return has(key) && doc_.at(key).is_string() && doc_.at(key).get<std::string>() == word;
    }

    double number(const std::string& key, double fallback) const {
        if (!has(key)) return fallback;
        const json& v = doc_.at(key);
        if (!v.is_number()) throw ConfigError(join_path(path_, key), "expected a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) throw ConfigError(join_path(path_, key), "must be finite");
        return d;
    }

    double positive(const std::string& key, double fallback) const {
        const double d = number(key, fallback);
        if (!(d > 0.0)) throw ConfigError(join_path(path_, key), "must be positive");
        return d;
    }

    std::uint64_t count(const std::string& key, std::uint64_t fallback, std::uint64_t min = 0) const {
        if (!has(key)) return fallback;
        const json& v = doc_.at(key);
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
            throw ConfigError(join_path(path_, key), "expected a non-negative integer");
        }
        const auto n = v.get<std::uint64_t>();
        if (n < min) throw ConfigError(join_path(path_, key), "must be at least " + std::to_string(min));
        return n;
    }

    bool flag(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        if (!doc_.at(key).is_boolean()) throw ConfigError(join_path(path_, key), "expected true or false");
        return doc_.at(key).get<bool>();
    }

    std::string choice(const std::string& key, const std::string& fallback, std::initializer_list<const char*> options) const {
        if (!has(key)) return fallback;
        if (!doc_.at(key).is_string()) throw ConfigError(join_path(path_, key), "expected a string");
        const auto s = doc_.at(key).get<std::string>();
        for (const char* o : options) {
            if (s == o) return s;
        }
        std::string list;
        for (const char* o : options) list += std::string(list.empty() ? "" : ", ") + o;
        throw ConfigError(join_path(path_, key), "expected one of {" + list + "}, got '" + s + "'");
    }

    std::optional<std::vector<double>> times(const std::string& key) const {
        if (!has(key)) return std::nullopt;
        const json& v = doc_.at(key);
        if (!v.is_array() || v.empty()) throw ConfigError(join_path(path_, key), "expected a non-empty array of times");
        std::vector<double> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number()) throw ConfigError(join_path(path_, key) + "[" + std::to_string(i) + "]", "expected a number");
            out.push_back(v[i].get<double>());
            if (!std::isfinite(out.back()) || out.back() < 0.0) {
                throw ConfigError(join_path(path_, key) + "[" + std::to_string(i) + "]", "must be finite and non-negative");
            }
            if (i > 0 && !(out[i] > out[i - 1])) {
                throw ConfigError(join_path(path_, key) + "[" + std::to_string(i) + "]", "times must increase strictly");
            }
        }
        return out;
    }

    Section child(const std::string& key) const {
        static const json empty = json::object();
        return has(key) ? Section(doc_.at(key), join_path(path_, key)) : Section(empty, join_path(path_, key));
    }

    const json& raw() const { return doc_; }
    const std::string& path() const { return path_; }

private:
    const json& doc_;
    std::string path_;
};

struct Config {
    json model;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    bool strict = false;
    std::vector<std::string> tasks;
    std::size_t samples = 1000;
    std::size_t benchmark_samples = 6000;
    bool persist_benchmark = false;
    IntegrationOptions integration;
    std::optional<std::vector<double>> output_times;
    std::optional<std::vector<double>> snapshot_times;
    std::size_t grid_n = 256;
    double margin = 0.25;
    EstimatorOptions estimator;
    SolverOptions solver;
    std::optional<double> kde_bandwidth;
    double info_eps = 1e-3;
    std::vector<std::size_t> study_sizes = {10, 100, 1000, 5000};
    double study_t = 1.0;
    std::size_t study_factor = 6;
    std::size_t cumulant_samples = 50000;
    json cumulant_other;
    std::size_t cumulant_order = 7;
    double cumulant_t = 0.0;
    std::size_t mz_points = 24;
    std::string mz_source = "kde";
};

Config parse(const json& doc, const PipelineOptions& cli) {
    Config c;
    const Section root(doc, "");
    root.allow({"model", "seed", "threads", "strict", "tasks", "samples", "benchmark_samples", "persist_benchmark",
                "time", "output_times", "snapshot_times", "grid", "estimator", "solver", "kde", "info_content", "study",
                "cumulants", "mz"});
    if (!root.has("model")) throw ConfigError("model", "required");
    {
        const Section m = root.child("model");
        m.allow({"name", "params", "qoi"});
        if (!m.has("name") || !m.raw().at("name").is_string()) throw ConfigError("model.name", "expected a model name");
        c.model = m.raw();
        try {
            (void)model_from_json(c.model.dump());
        } catch (const InvalidArgument& e) {
            throw ConfigError("model", e.what());
        }
    }
    c.seed = root.count("seed", 0);
    c.threads = root.count("threads", 1);
    c.strict = root.flag("strict", false);
    if (root.has("tasks")) {
        const json& t = doc.at("tasks");
        if (!t.is_array()) throw ConfigError("tasks", "expected an array of task names");
        const auto& names = pipeline_task_names();
        for (std::size_t i = 0; i < t.size(); ++i) {
            const std::string p = "tasks[" + std::to_string(i) + "]";
            if (!t[i].is_string()) throw ConfigError(p, "expected a task name");
            const auto s = t[i].get<std::string>();
            if (std::find(names.begin(), names.end(), s) == names.end()) throw ConfigError(p, "unknown task '" + s + "'");
            if (std::find(c.tasks.begin(), c.tasks.end(), s) == c.tasks.end()) c.tasks.push_back(s);
        }
    } else {
        c.tasks = {"simulate", "estimate", "solve-pdf"};
    }
    c.samples = root.count("samples", 1000, 1);
    c.benchmark_samples = root.count("benchmark_samples", 6 * c.samples, 1);
    c.persist_benchmark = root.flag("persist_benchmark", false);
    {
        const Section t = root.child("time");
        t.allow({"t_final", "dt", "store_stride"});
        c.integration.t_final = t.positive("t_final", 1.0);
        c.integration.dt = t.positive("dt", 1e-3);
        c.integration.store_stride = t.count("store_stride", 10, 1);
    }
    if (!root.is_word("output_times", "stored")) c.output_times = root.times("output_times");
    if (!root.is_word("snapshot_times", "stored")) c.snapshot_times = root.times("snapshot_times");
    {
        const Section g = root.child("grid");
        g.allow({"n", "margin"});
        c.grid_n = g.count("n", 256, 4);
        if (c.grid_n % 2 != 0) throw ConfigError("grid.n", "must be even");
        c.margin = g.number("margin", 0.25);
        if (c.margin < 0.0) throw ConfigError("grid.margin", "must be non-negative");
    }
    {
        const Section e = root.child("estimator");
        e.allow({"kind", "lambda", "criterion", "gcv_points", "gcv_lo", "gcv_hi", "gcv_gamma", "bins", "min_per_bin",
                 "active_eps", "flux_form"});
        const auto kind = e.choice("kind", "smoothing_spline", {"smoothing_spline", "moving_average"});
        c.estimator.kind = kind == "moving_average" ? EstimatorKind::moving_average : EstimatorKind::smoothing_spline;
        if (e.has("lambda") && !e.is_word("lambda", "auto")) {
            c.estimator.spline.lambda = e.number("lambda", 0.0);
            if (*c.estimator.spline.lambda < 0.0) throw ConfigError("estimator.lambda", "must be non-negative");
        }
        c.estimator.spline.criterion =
            e.choice("criterion", "gcv", {"gcv", "gml"}) == "gml" ? SmoothingCriterion::gml : SmoothingCriterion::gcv;
        c.estimator.spline.gcv_points = e.count("gcv_points", c.estimator.spline.gcv_points, 2);
        c.estimator.spline.gcv_lo = e.positive("gcv_lo", c.estimator.spline.gcv_lo);
        c.estimator.spline.gcv_hi = e.positive("gcv_hi", c.estimator.spline.gcv_hi);
        if (!(c.estimator.spline.gcv_hi > c.estimator.spline.gcv_lo)) throw ConfigError("estimator.gcv_hi", "must exceed gcv_lo");
        c.estimator.spline.gcv_gamma = e.positive("gcv_gamma", c.estimator.spline.gcv_gamma);
        c.estimator.moving_average.bins = e.count("bins", c.estimator.moving_average.bins);
        c.estimator.moving_average.min_per_bin = e.count("min_per_bin", c.estimator.moving_average.min_per_bin, 1);
        c.estimator.active_eps = e.number("active_eps", c.estimator.active_eps);
        if (c.estimator.active_eps < 0.0 || c.estimator.active_eps >= 1.0) {
            throw ConfigError("estimator.active_eps", "must lie in [0, 1)");
        }
        c.estimator.flux_form = e.flag("flux_form", c.estimator.flux_form);
    }
    {
        const Section s = root.child("solver");
        s.allow({"dt", "cfl_limit", "safety", "filter", "normalize_output", "boundary_tolerance", "extend_closures",
                 "edge_taper"});
        c.solver.dt = s.number("dt", c.solver.dt);
        if (c.solver.dt < 0.0) throw ConfigError("solver.dt", "must be non-negative (0 selects automatically)");
        c.solver.cfl_limit = s.positive("cfl_limit", c.solver.cfl_limit);
        c.solver.safety = s.positive("safety", c.solver.safety);
        if (c.solver.safety > 1.0) throw ConfigError("solver.safety", "must not exceed 1");
        c.solver.filter = s.flag("filter", c.solver.filter);
        c.solver.normalize_output = s.flag("normalize_output", c.solver.normalize_output);
        c.solver.boundary_tolerance = s.positive("boundary_tolerance", c.solver.boundary_tolerance);
        c.solver.extend_closures = s.flag("extend_closures", c.solver.extend_closures);
        c.solver.edge_taper = s.number("edge_taper", c.solver.edge_taper);
        if (c.solver.edge_taper < 0.0 || c.solver.edge_taper >= 0.5) throw ConfigError("solver.edge_taper", "must lie in [0, 0.5)");
    }
    {
        const Section k = root.child("kde");
        k.allow({"bandwidth"});
        if (k.has("bandwidth") && !k.is_word("bandwidth", "silverman")) c.kde_bandwidth = k.positive("bandwidth", 1.0);
    }
    {
        const Section i = root.child("info_content");
        i.allow({"eps"});
        c.info_eps = i.number("eps", c.info_eps);
        if (c.info_eps < 0.0 || c.info_eps >= 1.0) throw ConfigError("info_content.eps", "must lie in [0, 1)");
    }
    {
        const Section s = root.child("study");
        s.allow({"sizes", "t_eval", "benchmark_factor"});
        if (s.has("sizes")) {
            const json& v = s.raw().at("sizes");
            if (!v.is_array() || v.empty()) throw ConfigError("study.sizes", "expected a non-empty array");
            c.study_sizes.clear();
            for (std::size_t i = 0; i < v.size(); ++i) {
                const std::string p = "study.sizes[" + std::to_string(i) + "]";
                if (!v[i].is_number_unsigned() || v[i].get<std::uint64_t>() < 2) throw ConfigError(p, "expected an integer >= 2");
                c.study_sizes.push_back(v[i].get<std::size_t>());
                if (i > 0 && c.study_sizes[i] <= c.study_sizes[i - 1]) throw ConfigError(p, "sizes must increase strictly");
            }
        }
        c.study_t = s.positive("t_eval", std::min(1.0, c.integration.t_final));
        c.study_factor = s.count("benchmark_factor", 6, 1);
    }
    {
        const Section s = root.child("cumulants");
        s.allow({"samples", "other", "max_order", "t"});
        c.cumulant_samples = s.count("samples", 50000, 2);
        c.cumulant_order = s.count("max_order", 7, 1);
        c.cumulant_t = s.number("t", c.integration.t_final);
        if (c.cumulant_t < 0.0) throw ConfigError("cumulants.t", "must be non-negative");
        c.cumulant_other = s.has("other") ? s.raw().at("other") : json();
    }
    {
        const Section m = root.child("mz");
        m.allow({"quadrature_points", "p_source"});
        c.mz_points = m.count("quadrature_points", c.mz_points, 1);
        c.mz_source = m.choice("p_source", c.mz_source, {"kde", "solver"});
    }

    if (cli.seed) c.seed = *cli.seed;
    if (cli.threads) c.threads = *cli.threads;
    if (cli.strict) c.strict = *cli.strict;
    if (!cli.tasks.empty()) {
        const auto& names = pipeline_task_names();
        c.tasks.clear();
        for (const auto& s : cli.tasks) {
            if (std::find(names.begin(), names.end(), s) == names.end()) throw ConfigError("tasks", "unknown task '" + s + "'");
            if (std::find(c.tasks.begin(), c.tasks.end(), s) == c.tasks.end()) c.tasks.push_back(s);
        }
    }
    c.integration.threads = c.threads;
    return c;
}

json config_json(const Config& c) {
    json j;
    j["model"] = c.model;
    j["seed"] = c.seed;
    j["threads"] = c.threads;
    j["strict"] = c.strict;
    j["tasks"] = c.tasks;
    j["samples"] = c.samples;
    j["benchmark_samples"] = c.benchmark_samples;
    j["persist_benchmark"] = c.persist_benchmark;
    j["time"] = {{"t_final", c.integration.t_final}, {"dt", c.integration.dt}, {"store_stride", c.integration.store_stride}};
    j["output_times"] = c.output_times ? json(*c.output_times) : json("stored");
    j["snapshot_times"] = c.snapshot_times ? json(*c.snapshot_times) : json("stored");
    j["grid"] = {{"n", c.grid_n}, {"margin", c.margin}};
    json e = {{"kind", c.estimator.kind == EstimatorKind::moving_average ? "moving_average" : "smoothing_spline"},
              {"criterion", c.estimator.spline.criterion == SmoothingCriterion::gml ? "gml" : "gcv"},
              {"gcv_points", c.estimator.spline.gcv_points},
              {"gcv_lo", c.estimator.spline.gcv_lo},
              {"gcv_hi", c.estimator.spline.gcv_hi},
              {"gcv_gamma", c.estimator.spline.gcv_gamma},
              {"bins", c.estimator.moving_average.bins},
              {"min_per_bin", c.estimator.moving_average.min_per_bin},
              {"active_eps", c.estimator.active_eps},
              {"flux_form", c.estimator.flux_form}};
    e["lambda"] = c.estimator.spline.lambda ? json(*c.estimator.spline.lambda) : json("auto");
    j["estimator"] = e;
    j["solver"] = {{"dt", c.solver.dt},
                   {"cfl_limit", c.solver.cfl_limit},
                   {"safety", c.solver.safety},
                   {"filter", c.solver.filter},
                   {"normalize_output", c.solver.normalize_output},
                   {"boundary_tolerance", c.solver.boundary_tolerance},
                   {"extend_closures", c.solver.extend_closures},
                   {"edge_taper", c.solver.edge_taper}};
    j["kde"] = {{"bandwidth", c.kde_bandwidth ? json(*c.kde_bandwidth) : json("silverman")}};
    j["info_content"] = {{"eps", c.info_eps}};
    j["study"] = {{"sizes", c.study_sizes}, {"t_eval", c.study_t}, {"benchmark_factor", c.study_factor}};
    j["cumulants"] = {{"samples", c.cumulant_samples}, {"max_order", c.cumulant_order}, {"t", c.cumulant_t},
                      {"other", c.cumulant_other}};
    j["mz"] = {{"quadrature_points", c.mz_points}, {"p_source", c.mz_source}};
    return j;
}

std::string hex64(std::uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return s;
}

std::string fnv1a(std::string_view text) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return hex64(h);
}

json parse_document(std::string_view text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("<document>", std::string("malformed JSON: ") + e.what());
    }
}

std::vector<std::string> resolve_tasks(const std::vector<std::string>& requested, bool strict, bool mz_from_kde) {
    std::set<std::string> wanted(requested.begin(), requested.end());
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& t : std::vector<std::string>(wanted.begin(), wanted.end())) {
            for (const auto& d : task_dependencies(t, mz_from_kde)) {
                if (wanted.count(d)) continue;
                if (strict) throw ConfigError("tasks", "task '" + t + "' requires '" + d + "' (strict run)");
                log_info("adding task '" + d + "' required by '" + t + "'");
                wanted.insert(d);
                changed = true;
            }
        }
    }
    std::vector<std::string> ordered;
    for (const auto& n : pipeline_task_names()) {
        if (wanted.count(n)) ordered.push_back(n);
    }
    return ordered;
}

std::string sanitize(const std::string& label) {
    std::string out;
    for (char ch : label) {
        if (std::isalnum(static_cast<unsigned char>(ch))) {
            out += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        } else if (!out.empty() && out.back() != '_') {
            out += '_';
        }
    }
    while (!out.empty() && out.back() == '_') out.pop_back();
    return out.empty() ? "term" : out;
}

// ------------------------------------------------------------------ run state

struct Run {
    Config cfg;
    ModelSpec model;
    std::size_t qoi = 0;
    std::filesystem::path dir;
    std::string hash;
    json resolved = json::object();
    std::vector<std::string> artifacts;

    std::optional<TrajectoryEnsemble> closure_ensemble;
    std::optional<TrajectoryEnsemble> benchmark;
    std::optional<UniformGrid> grid;
    std::vector<ClosureField> fields;
    std::vector<PdfSnapshot> pdf;
    std::vector<PdfSnapshot> kde;
    std::vector<PhSnapshot> ph;

    std::filesystem::path file(const std::string& name) {
        artifacts.push_back(name);
        return dir / name;
    }

    std::vector<std::size_t> stored_components(const std::vector<std::string>& tasks) const {
        if (model.dim <= 16) return {};
        std::set<std::size_t> comps{qoi};
        for (const auto& t : reduced_terms(model, qoi).terms) comps.insert(t.support.begin(), t.support.end());
        const bool flux = std::any_of(tasks.begin(), tasks.end(), [](const std::string& t) {
            return t == "solve-ph" || t == "info-content";
        });
        if (flux && model.flux_equation) {
            for (std::size_t k : flux_system_components(model, qoi)) comps.insert(k);
        }
        return {comps.begin(), comps.end()};
    }

    // The grid spans the benchmark ensemble when one exists (it covers the
    // widest range), otherwise the closure ensemble.
    const UniformGrid& domain() {
        if (!grid) {
            const TrajectoryEnsemble* src = benchmark ? &*benchmark : closure_ensemble ? &*closure_ensemble : nullptr;
            if (!src) throw InvalidArgument("no ensemble available to fit the domain");
            grid = fit_domain(*src, qoi, cfg.grid_n, cfg.margin);
            resolved["grid"] = {{"lo", grid->lo}, {"hi", grid->hi}, {"n", grid->n}, {"dx", grid->dx()},
                                {"fitted_to", benchmark ? "benchmark" : "closure"}};
        }
        return *grid;
    }

    std::vector<double> stored_times_up_to(double t_max) const {
        std::vector<double> out;
        for (double t : closure_ensemble->times()) {
            if (t <= t_max + 1e-12 * std::max(1.0, t_max)) out.push_back(t);
        }
        return out;
    }

    std::vector<double> output_times() const {
        return cfg.output_times ? *cfg.output_times : closure_ensemble->times();
    }

    std::vector<double> snapshot_times() const {
        return cfg.snapshot_times ? *cfg.snapshot_times : closure_ensemble->times();
    }

    GridFunction1D p0() {
        const UniformGrid& g = domain();
        return initial_marginal(model, qoi, g, component_samples(*closure_ensemble, 0, qoi));
    }
};

void write_field_csv(Run& r, const std::string& name, const std::vector<std::string>& header,
                     const std::function<void(CsvWriter&)>& rows) {
    CsvWriter w(r.file(name), header, r.hash);
    rows(w);
}

// ------------------------------------------------------------------ tasks

void task_simulate(Run& r, const std::vector<std::string>& tasks) {
    IntegrationOptions io = r.cfg.integration;
    io.components = r.stored_components(tasks);
    r.closure_ensemble = simulate(r.model, r.cfg.samples, r.cfg.seed, io, 0);
    persist(*r.closure_ensemble, r.file("closure.traj"), r.hash);
    r.artifacts.push_back("closure.traj.json");
    r.resolved["closure_ensemble"] = {{"samples", r.cfg.samples},
                                      {"first_sample", 0},
                                      {"stored_components", r.closure_ensemble->components()},
                                      {"n_times", r.closure_ensemble->n_times()}};
}

void task_benchmark(Run& r, const std::vector<std::string>& tasks) {
    IntegrationOptions io = r.cfg.integration;
    io.components = r.stored_components(tasks);
    r.benchmark = simulate(r.model, r.cfg.benchmark_samples, r.cfg.seed, io, r.cfg.samples);
    if (r.cfg.persist_benchmark) {
        persist(*r.benchmark, r.file("benchmark.traj"), r.hash);
        r.artifacts.push_back("benchmark.traj.json");
    }
    r.resolved["benchmark_ensemble"] = {{"samples", r.cfg.benchmark_samples}, {"first_sample", r.cfg.samples}};
    const UniformGrid& g = r.domain();
    std::vector<double> times = r.cfg.output_times ? *r.cfg.output_times : r.benchmark->times();
    json bw = json::array();
    write_field_csv(r, "pdf_benchmark.csv", {"t", "x", "p"}, [&](CsvWriter& w) {
        for (double t : times) {
            const auto x = component_samples(*r.benchmark, r.benchmark->time_index(t), r.qoi);
            const double h = r.cfg.kde_bandwidth ? *r.cfg.kde_bandwidth : silverman_bandwidth(x);
            bw.push_back({{"t", t}, {"bandwidth", h}});
            const GridFunction1D p = kde_pdf(x, g, h);
            r.kde.push_back({t, p, p.integral()});
            for (std::size_t i = 0; i < g.n; ++i) w.write_row(std::vector<double>{t, g.node(i), p.values[i]});
        }
    });
    r.resolved["kde_bandwidths"] = bw;
}

void task_estimate(Run& r) {
    const UniformGrid& g = r.domain();
    const ReducedForm form = reduced_terms(r.model, r.qoi);
    const std::vector<double> snaps = r.snapshot_times();
    r.fields.clear();
    json summary = json::array();
    for (std::size_t l = 0; l < form.terms.size(); ++l) {
        const ClosureTerm& term = form.terms[l];
        r.fields.push_back(build_closure_field(*r.closure_ensemble, r.qoi, term, g, snaps, r.cfg.estimator, r.cfg.threads));
        const ClosureField& f = r.fields.back();
        const std::string stem = "ce_" + std::to_string(l) + "_" + sanitize(term.label);
        write_field_csv(r, stem + ".csv", {"t", "x", "value", "active"}, [&](CsvWriter& w) {
            for (std::size_t s = 0; s < f.times.size(); ++s) {
                const auto& e = f.estimates[s];
                for (std::size_t i = 0; i < g.n; ++i) {
                    w.write_row(std::vector<double>{f.times[s], g.node(i), e.values[i], e.active[i] ? 1.0 : 0.0});
                }
            }
        });
        std::vector<std::string> keys;
        for (const auto& [k, v] : f.estimates.front().hyperparams) keys.push_back(k);
        std::vector<std::string> header = {"t", "method", "selection", "n_samples"};
        header.insert(header.end(), keys.begin(), keys.end());
        write_field_csv(r, stem + "_fit.csv", header, [&](CsvWriter& w) {
            for (std::size_t s = 0; s < f.times.size(); ++s) {
                const auto& e = f.estimates[s];
                std::vector<std::string> row = {format_double(f.times[s]),
                                                e.method == EstimatorKind::moving_average ? "moving_average" : "smoothing_spline",
                                                e.selection, std::to_string(e.n_samples)};
                for (const auto& k : keys) {
                    const auto it = e.hyperparams.find(k);
                    row.push_back(it == e.hyperparams.end() ? "" : format_double(it->second));
                }
                w.write_row(row);
            }
        });
        summary.push_back({{"term", term.label}, {"snapshots", f.times.size()}, {"selection", f.estimates.front().selection}});
    }
    r.resolved["closures"] = summary;
}

json report_json(const SolveReport& rep) {
    return {{"dt", rep.dt}, {"max_speed", rep.max_speed}, {"courant", rep.courant}, {"steps", rep.steps},
            {"boundary_warning", rep.boundary_warning}};
}

void task_solve_pdf(Run& r) {
    const UniformGrid& g = r.domain();
    SolveReport rep;
    r.pdf = solve_reduced_pdf(r.model, r.qoi, r.fields, r.p0(), r.output_times(), r.cfg.solver, &rep);
    r.resolved["solve_pdf"] = report_json(rep);
    write_field_csv(r, "pdf_solution.csv", {"t", "x", "p"}, [&](CsvWriter& w) {
        for (const auto& s : r.pdf) {
            for (std::size_t i = 0; i < g.n; ++i) w.write_row(std::vector<double>{s.t, g.node(i), s.p.values[i]});
        }
    });
    write_field_csv(r, "pdf_mass.csv", {"t", "raw_mass"}, [&](CsvWriter& w) {
        for (const auto& s : r.pdf) w.write_row(std::vector<double>{s.t, s.raw_mass});
    });
    if (r.benchmark) {
        write_field_csv(r, "pdf_error.csv", {"t", "L1", "L2", "Linf"}, [&](CsvWriter& w) {
            for (const auto& s : r.pdf) {
                std::size_t k = 0;
                try {
                    k = r.benchmark->time_index(s.t);
                } catch (const InvalidArgument&) {
                    continue;
                }
                const auto x = component_samples(*r.benchmark, k, r.qoi);
                const GridFunction1D ref = kde_pdf(x, g, r.cfg.kde_bandwidth);
                w.write_row(std::vector<double>{s.t, pdf_error(s.p, ref, Norm::L1), pdf_error(s.p, ref, Norm::L2),
                                                pdf_error(s.p, ref, Norm::Linf)});
            }
        });
    }
}

void task_solve_ph(Run& r) {
    const UniformGrid& g = r.domain();
    const ReducedForm form = reduced_terms(r.model, r.qoi);
    if (form.terms.size() != 1) throw InvalidArgument("the flux system needs exactly one closure term");
    const std::vector<double> outs = r.output_times();
    std::vector<double> snaps;
    for (double t : r.snapshot_times()) {
        if (t <= outs.back() + 1e-12 * std::max(1.0, outs.back())) snaps.push_back(t);
    }
    const PhClosures closures = build_ph_closures(r.model, r.qoi, *r.closure_ensemble, g, snaps, r.cfg.estimator, r.cfg.threads);
    const ClosureField first = build_closure_field(*r.closure_ensemble, r.qoi, form.terms[0], g, {snaps.front()},
                                                   r.cfg.estimator, r.cfg.threads);
    const GridFunction1D p0 = r.p0();
    SolveReport rep;
    r.ph = solve_ph_system(r.model, r.qoi, closures, p0, initial_flux(p0, first), outs, r.cfg.solver, &rep);
    r.resolved["solve_ph"] = report_json(rep);
    write_field_csv(r, "ph_solution.csv", {"t", "x", "p", "h"}, [&](CsvWriter& w) {
        for (const auto& s : r.ph) {
            for (std::size_t i = 0; i < g.n; ++i) {
                w.write_row(std::vector<double>{s.t, g.node(i), s.p.values[i], s.h.values[i]});
            }
        }
    });
}

void task_info_content(Run& r) {
    const UniformGrid& g = r.domain();
    const ReducedForm form = reduced_terms(r.model, r.qoi);
    HDataOptions opt;
    opt.estimator = r.cfg.estimator;
    opt.eps = r.cfg.info_eps;
    opt.bandwidth = r.cfg.kde_bandwidth;
    std::vector<std::pair<double, double>> errors;
    write_field_csv(r, "ph_h_data.csv", {"t", "x", "h", "active"}, [&](CsvWriter& w) {
        for (const auto& s : r.ph) {
            std::size_t k = 0;
            try {
                k = r.benchmark->time_index(s.t);
            } catch (const InvalidArgument&) {
                continue;
            }
            const HEstimate ref = h_from_data(*r.benchmark, k, r.qoi, form.terms[0].inner, g, opt);
            for (std::size_t i = 0; i < g.n; ++i) {
                w.write_row(std::vector<double>{s.t, g.node(i), ref.h.values[i], ref.mask[i] ? 1.0 : 0.0});
            }
            errors.emplace_back(s.t, s.t > 0.0 ? info_content_error(ref.h, s.h, ref.mask) : std::nan(""));
        }
    });
    write_field_csv(r, "ph_info_content.csv", {"t", "error"}, [&](CsvWriter& w) {
        for (const auto& [t, e] : errors) w.write_row(std::vector<double>{t, e});
    });
    r.resolved["info_content"] = {{"norm", "relative L2 on the active mask"}, {"eps", r.cfg.info_eps}};
}

void task_mz(Run& r) {
    const UniformGrid& g = r.domain();
    const StreamingCoefficient sc =
        streaming_coefficient(r.model, r.qoi, g, &*r.closure_ensemble, r.cfg.estimator, r.cfg.mz_points);
    std::vector<PdfSnapshot> series;
    for (const auto& s : r.cfg.mz_source == "kde" ? r.kde : r.pdf) {
        const double tol = 1e-9 * std::max(1.0, std::abs(s.t));
        if (s.t >= r.fields.front().t_first() - tol && s.t <= r.fields.front().t_last() + tol) series.push_back(s);
    }
    const auto mem = mz_memory(r.model, r.qoi, series, r.fields, sc);
    r.resolved["mz"] = {{"streaming_method", sc.method}, {"quadrature_points", r.cfg.mz_points},
                        {"p_source", r.cfg.mz_source == "kde" ? "kde benchmark" : "solver"}};
    write_field_csv(r, "mz_memory.csv", {"t", "x", "m", "memory"}, [&](CsvWriter& w) {
        for (const auto& s : mem) {
            for (std::size_t i = 0; i < g.n; ++i) {
                w.write_row(std::vector<double>{s.t, g.node(i), s.m.values[i], s.memory.values[i]});
            }
        }
    });
    write_field_csv(r, "mz_streaming.csv", {"x", "streaming"}, [&](CsvWriter& w) {
        for (std::size_t i = 0; i < g.n; ++i) w.write_row(std::vector<double>{g.node(i), sc.field.values[i]});
    });
    try {
        const IdentityCheck chk = mz_identity_check_at_snapshots(r.model, r.qoi, r.fields, r.p0(), sc, r.cfg.solver);
        write_field_csv(r, "mz_identity.csv", {"t", "residual", "truncation"}, [&](CsvWriter& w) {
            for (std::size_t i = 0; i < chk.times.size(); ++i) {
                w.write_row(std::vector<double>{chk.times[i], chk.residual[i], chk.truncation[i]});
            }
        });
        r.resolved["mz"]["identity_worst_ratio"] = chk.worst_ratio;
    } catch (const InvalidArgument& e) {
        log_warning(std::string("mz identity check skipped: ") + e.what());
    }
}

void task_study(Run& r) {
    StudyConfig sc;
    sc.sizes = r.cfg.study_sizes;
    sc.t_eval = r.cfg.study_t;
    sc.seed = r.cfg.seed;
    sc.benchmark_factor = r.cfg.study_factor;
    sc.integration = r.cfg.integration;
    sc.integration.t_final = r.cfg.study_t;
    sc.grid_n = r.cfg.grid_n;
    sc.margin = r.cfg.margin;
    sc.estimator = r.cfg.estimator;
    sc.solver = r.cfg.solver;
    sc.eps = r.cfg.info_eps;
    const StudyResult res = sample_size_study(r.model, r.qoi, sc);
    const std::string stem = "study_" + sanitize(r.model.name);
    write_field_csv(r, stem + ".csv", {"M", "t", "error", "status"}, [&](CsvWriter& w) {
        for (const auto& row : res.rows) {
            w.write_row(std::vector<std::string>{std::to_string(row.samples), format_double(row.t),
                                                 format_double(row.error), row.status});
        }
    });
    json summary = {{"manifest", r.hash},
                    {"model", r.model.name},
                    {"t_eval", sc.t_eval},
                    {"seed", sc.seed},
                    {"benchmark_samples", res.benchmark_samples},
                    {"slope", std::isfinite(res.slope) ? json(res.slope) : json(nullptr)},
                    {"inversions", res.inversions},
                    {"norm", "relative L2 on the active mask"},
                    {"grid", {{"lo", res.grid.lo}, {"hi", res.grid.hi}, {"n", res.grid.n}}}};
    std::ofstream out(r.file(stem + "_summary.json"));
    out << summary.dump(2) << '\n';
    if (!out) throw IoError("failed writing " + stem + "_summary.json");
    r.resolved["study"] = {{"slope", summary["slope"]}, {"inversions", res.inversions}};
}

void task_cumulants(Run& r) {
    std::size_t other = 0;
    if (r.cfg.cumulant_other.is_null()) {
        const auto terms = reduced_terms(r.model, r.qoi).terms;
        if (terms.empty() || terms[0].support.empty()) throw InvalidArgument("cumulants: set cumulants.other");
        other = *std::find_if(terms[0].support.begin(), terms[0].support.end(), [&](std::size_t k) { return k != r.qoi; });
    } else if (r.cfg.cumulant_other.is_string()) {
        other = component_index(r.model, r.cfg.cumulant_other.get<std::string>());
    } else if (r.cfg.cumulant_other.is_number_unsigned()) {
        other = r.cfg.cumulant_other.get<std::size_t>();
        if (other >= r.model.dim) throw ConfigError("cumulants.other", "component index out of range");
    } else {
        throw ConfigError("cumulants.other", "expected a component name or index");
    }
    IntegrationOptions io = r.cfg.integration;
    io.t_final = std::max(r.cfg.cumulant_t, io.dt);
    io.components = {std::min(r.qoi, other), std::max(r.qoi, other)};
    if (r.qoi == other) io.components = {r.qoi};
    const TrajectoryEnsemble e = simulate(r.model, r.cfg.cumulant_samples, r.cfg.seed, io, 0);
    const auto c = cumulants(e, r.qoi, other, r.cfg.cumulant_order, e.time_index(r.cfg.cumulant_t));
    write_field_csv(r, "cumulants.csv", {"k", "c_k", "rescaled"}, [&](CsvWriter& w) {
        for (const auto& entry : c) w.write_row(std::vector<double>{double(entry.k), entry.value, entry.rescaled});
    });
    r.resolved["cumulants"] = {{"other_component", other}, {"t", r.cfg.cumulant_t}};
}

}  // namespace

std::string resolve_config(std::string_view config_json_text, const PipelineOptions& options) {
    Config c = parse(parse_document(config_json_text), options);
    c.tasks = resolve_tasks(c.tasks, c.strict, c.mz_source == "kde");
    return config_json(c).dump(2);
}

PipelineResult run_pipeline(std::string_view config_text, const PipelineOptions& options) {
    Run r;
    r.cfg = parse(parse_document(config_text), options);
    const std::vector<std::string> tasks = resolve_tasks(r.cfg.tasks, r.cfg.strict, r.cfg.mz_source == "kde");
    r.cfg.tasks = tasks;
    r.model = model_from_json(r.cfg.model.dump());
    r.qoi = r.model.qoi_index;
    r.dir = options.out_dir;

    const json resolved_cfg = config_json(r.cfg);
    const json model_doc = json::parse(model_to_json(r.model));
    json hashed_cfg = resolved_cfg;
    hashed_cfg.erase("threads");
    r.hash = fnv1a(std::string(version()) + "\n" + hashed_cfg.dump() + "\n" + model_doc.dump());

    std::error_code ec;
    std::filesystem::create_directories(r.dir, ec);
    if (ec) throw IoError("cannot create output directory " + r.dir.string() + ": " + ec.message());

    const std::map<std::string, std::function<void()>> actions = {
        {"simulate", [&] { task_simulate(r, tasks); }},
        {"benchmark-kde", [&] { task_benchmark(r, tasks); }},
        {"estimate", [&] { task_estimate(r); }},
        {"solve-pdf", [&] { task_solve_pdf(r); }},
        {"solve-ph", [&] { task_solve_ph(r); }},
        {"info-content", [&] { task_info_content(r); }},
        {"mz", [&] { task_mz(r); }},
        {"study", [&] { task_study(r); }},
        {"cumulants", [&] { task_cumulants(r); }},
    };

    PipelineResult result;
    result.manifest_hash = r.hash;
    std::set<std::string> failed;
    json task_log = json::array();
    for (const auto& t : tasks) {
        const std::size_t first_artifact = r.artifacts.size();
        std::string status = "ok";
        const auto deps = task_dependencies(t, r.cfg.mz_source == "kde");
        const auto bad = std::find_if(deps.begin(), deps.end(), [&](const std::string& d) { return failed.count(d) > 0; });
        if (bad != deps.end()) {
            status = "skipped: dependency '" + *bad + "' failed";
        } else {
            try {
                actions.at(t)();
            } catch (const std::exception& e) {
                status = std::string("failed: ") + e.what();
            }
        }
        if (status == "ok") {
            result.completed.push_back(t);
        } else {
            failed.insert(t);
            result.failures.push_back({t, status});
        }
        task_log.push_back({{"task", t},
                            {"status", status},
                            {"artifacts", std::vector<std::string>(r.artifacts.begin() + std::ptrdiff_t(first_artifact),
                                                                   r.artifacts.end())}});
    }

    json manifest;
    manifest["hash"] = r.hash;
    manifest["version"] = std::string(version());
    manifest["config"] = resolved_cfg;
    manifest["model"] = model_doc;
    manifest["notes"] = r.model.notes;
    manifest["resolved"] = r.resolved;
    manifest["tasks"] = task_log;
    std::ofstream out(r.dir / "manifest.json", std::ios::trunc);
    out << manifest.dump(2) << '\n';
    if (!out) throw IoError("failed writing " + (r.dir / "manifest.json").string());
    r.artifacts.push_back("manifest.json");
    result.artifacts = r.artifacts;
    return result;
}

PipelineResult run_pipeline_file(const std::filesystem::path& config_path, const PipelineOptions& options) {
    std::ifstream in(config_path);
    if (!in) throw IoError("cannot open configuration " + config_path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return run_pipeline(ss.str(), options);
}

}  // namespace ropdf
