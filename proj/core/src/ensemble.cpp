#include "ropdf/ensemble.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <exception>
#include <fstream>
#include <json.hpp>
#include <mutex>
#include <thread>

#include "ropdf/csv.hpp"
#include "ropdf/error.hpp"

namespace ropdf {

using nlohmann::json;

TrajectoryEnsemble::TrajectoryEnsemble(std::size_t dim, std::vector<std::size_t> components,
                                       std::vector<double> times, std::size_t n_samples, Provenance provenance)
    : dim_(dim),
      components_(std::move(components)),
      times_(std::move(times)),
      n_samples_(n_samples),
      data_(n_samples_ * times_.size() * components_.size(), 0.0),
      provenance_(std::move(provenance)) {
    for (std::size_t c : components_) {
        if (c >= dim_) throw InvalidArgument("stored component index out of range");
    }
    for (std::size_t i = 1; i < times_.size(); ++i) {
        if (!(times_[i] > times_[i - 1])) throw InvalidArgument("time grid must be strictly increasing");
    }
}

bool TrajectoryEnsemble::stores(std::size_t component) const noexcept {
    return std::find(components_.begin(), components_.end(), component) != components_.end();
}

std::size_t TrajectoryEnsemble::stored_index(std::size_t component) const {
    auto it = std::find(components_.begin(), components_.end(), component);
    if (it == components_.end()) {
        throw InvalidArgument("component " + std::to_string(component) + " is not stored in this ensemble");
    }
    return static_cast<std::size_t>(it - components_.begin());
}

std::vector<double> TrajectoryEnsemble::state(std::size_t sample, std::size_t t_index) const {
    if (sample >= n_samples_ || t_index >= times_.size()) throw InvalidArgument("state index out of range");
    std::vector<double> s(dim_, std::nan(""));
    const double* r = row(sample, t_index);
    for (std::size_t k = 0; k < components_.size(); ++k) s[components_[k]] = r[k];
    return s;
}

std::size_t TrajectoryEnsemble::time_index(double t) const {
    if (times_.empty()) throw InvalidArgument("ensemble has no stored times");
    auto it = std::lower_bound(times_.begin(), times_.end(), t);
    std::size_t best = times_.size();
    double best_err = 0.0;
    for (auto cand : {it, it == times_.begin() ? it : it - 1}) {
        if (cand == times_.end()) continue;
        const double err = std::abs(*cand - t);
        if (best == times_.size() || err < best_err) {
            best = static_cast<std::size_t>(cand - times_.begin());
            best_err = err;
        }
    }
    const double scale = std::max({1.0, std::abs(t), std::abs(times_.back())});
    if (best == times_.size() || best_err > 1e-9 * scale) {
        throw InvalidArgument("time " + std::to_string(t) + " is not on the stored time grid");
    }
    return best;
}

TrajectoryEnsemble TrajectoryEnsemble::head(std::size_t count) const {
    if (count == 0 || count > n_samples_) throw InvalidArgument("head: count must lie in [1, n_samples]");
    TrajectoryEnsemble out(dim_, components_, times_, count, provenance_);
    std::copy_n(data_.begin(), out.data_.size(), out.data_.begin());
    return out;
}

void TrajectoryEnsemble::append(const TrajectoryEnsemble& other) {
    if (other.dim_ != dim_ || other.components_ != components_ || other.times_ != times_) {
        throw InvalidArgument("append: ensembles differ in dimension, storage or time grid");
    }
    data_.insert(data_.end(), other.data_.begin(), other.data_.end());
    n_samples_ += other.n_samples_;
}

namespace {

struct StepPlan {
    std::size_t n_steps;
    std::vector<double> times;
};

StepPlan plan_steps(const IntegrationOptions& o) {
    if (!(o.dt > 0.0) || !std::isfinite(o.dt)) throw InvalidArgument("dt must be positive");
    if (!(o.t_final > 0.0) || !std::isfinite(o.t_final)) throw InvalidArgument("t_final must be positive");
    if (o.store_stride < 1) throw InvalidArgument("store_stride must be at least 1");
    const double steps_real = o.t_final / o.dt;
    const auto n_steps = static_cast<std::size_t>(std::llround(steps_real));
    if (n_steps == 0 || std::abs(steps_real - static_cast<double>(n_steps)) > 1e-9 * steps_real) {
        throw InvalidArgument("t_final must be an integer multiple of dt");
    }
    if (n_steps % o.store_stride != 0) {
        throw InvalidArgument("the number of steps must be a multiple of store_stride so t_final is stored");
    }
    StepPlan plan{n_steps, {}};
    const std::size_t n_store = n_steps / o.store_stride + 1;
    plan.times.resize(n_store);
    for (std::size_t j = 0; j < n_store; ++j) {
        plan.times[j] = static_cast<double>(j * o.store_stride) * o.dt;
    }
    plan.times.back() = o.t_final;
    return plan;
}

void integrate_one(const ModelSpec& model, std::span<const double> x0, const StepPlan& plan,
                   const IntegrationOptions& o, std::size_t sample_id, TrajectoryEnsemble& ens, std::size_t slot) {
    const std::size_t n = model.dim;
    std::vector<double> x(x0.begin(), x0.end()), k1(n), k2(n), k3(n), k4(n), tmp(n);
    const auto& comps = ens.components();
    auto store = [&](std::size_t j) {
        double* r = ens.row(slot, j);
        for (std::size_t k = 0; k < comps.size(); ++k) r[k] = x[comps[k]];
    };
    store(0);
    const double dt = o.dt;
    std::size_t stored = 1;
    for (std::size_t step = 1; step <= plan.n_steps; ++step) {
        model.drift(x, k1);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * dt * k1[i];
        model.drift(tmp, k2);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * dt * k2[i];
        model.drift(tmp, k3);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + dt * k3[i];
        model.drift(tmp, k4);
        bool finite = true;
        for (std::size_t i = 0; i < n; ++i) {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            finite = finite && std::isfinite(x[i]);
        }
        if (!finite) {
            throw NumericalError("non-finite state in sample " + std::to_string(sample_id) + " at t = " +
                                 std::to_string(static_cast<double>(step) * dt));
        }
        if (step % o.store_stride == 0) store(stored++);
    }
}

std::size_t resolve_threads(std::size_t requested, std::size_t work) {
    std::size_t t = requested == 0 ? std::max(1u, std::thread::hardware_concurrency()) : requested;
    return std::max<std::size_t>(1, std::min(t, work));
}

}  // namespace

TrajectoryEnsemble integrate_ensemble(const ModelSpec& model, const std::vector<std::vector<double>>& initials,
                                      const IntegrationOptions& options, std::uint64_t seed,
                                      std::size_t first_sample) {
    if (initials.empty()) throw InvalidArgument("integrate_ensemble: no initial states");
    for (const auto& x0 : initials) {
        if (x0.size() != model.dim) throw InvalidArgument("initial state has the wrong dimension");
    }
    const StepPlan plan = plan_steps(options);
    std::vector<std::size_t> comps = options.components;
    if (comps.empty()) {
        comps.resize(model.dim);
        for (std::size_t i = 0; i < model.dim; ++i) comps[i] = i;
    }
    Provenance prov{model.name, model_hash(model), seed, first_sample, "rk4", options.dt, options.store_stride};
    TrajectoryEnsemble ens(model.dim, std::move(comps), plan.times, initials.size(), prov);

    const std::size_t n_threads = resolve_threads(options.threads, initials.size());
    std::exception_ptr failure;
    std::size_t failed_sample = initials.size();
    std::mutex failure_mutex;
    auto worker = [&](std::size_t begin, std::size_t end) {
        for (std::size_t m = begin; m < end; ++m) {
            try {
                integrate_one(model, initials[m], plan, options, first_sample + m, ens, m);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                // Report the lowest failing sample so the error is independent of threading.
                if (m < failed_sample) {
                    failed_sample = m;
                    failure = std::current_exception();
                }
                return;
            }
        }
    };
    if (n_threads == 1) {
        worker(0, initials.size());
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (initials.size() + n_threads - 1) / n_threads;
        for (std::size_t t = 0; t < n_threads; ++t) {
            const std::size_t b = t * chunk, e = std::min(initials.size(), b + chunk);
            if (b < e) pool.emplace_back(worker, b, e);
        }
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
    return ens;
}

TrajectoryEnsemble simulate(const ModelSpec& model, std::size_t count, std::uint64_t seed,
                            const IntegrationOptions& options, std::size_t first_sample) {
    return integrate_ensemble(model, sample_initial(model, count, seed, first_sample), options, seed, first_sample);
}

ScatterSlice slice(const TrajectoryEnsemble& ensemble, std::size_t t_index, std::size_t qoi_index,
                   const StateFn& g) {
    if (t_index >= ensemble.n_times()) throw InvalidArgument("slice: time index out of range");
    if (qoi_index >= ensemble.dim()) throw InvalidArgument("slice: qoi index out of range");
    const std::size_t q = ensemble.stored_index(qoi_index);
    ScatterSlice s;
    s.t = ensemble.times()[t_index];
    s.x.resize(ensemble.n_samples());
    s.y.resize(ensemble.n_samples());
    std::vector<double> full(ensemble.dim(), std::nan(""));
    const auto& comps = ensemble.components();
    for (std::size_t m = 0; m < ensemble.n_samples(); ++m) {
        const double* r = ensemble.row(m, t_index);
        for (std::size_t k = 0; k < comps.size(); ++k) full[comps[k]] = r[k];
        s.x[m] = r[q];
        s.y[m] = g(full);
        if (!std::isfinite(s.y[m])) {
            throw InvalidArgument("slice: g is not finite on sample " + std::to_string(m) +
                                  " (does it read an unstored component?)");
        }
    }
    return s;
}

std::vector<double> component_samples(const TrajectoryEnsemble& ensemble, std::size_t t_index,
                                      std::size_t component) {
    if (t_index >= ensemble.n_times()) throw InvalidArgument("time index out of range");
    const std::size_t k = ensemble.stored_index(component);
    std::vector<double> out(ensemble.n_samples());
    for (std::size_t m = 0; m < out.size(); ++m) out[m] = ensemble.at(m, t_index, k);
    return out;
}

namespace {

std::filesystem::path sidecar(const std::filesystem::path& path) {
    auto p = path;
    p += ".json";
    return p;
}

std::uint64_t to_le(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        v = ((v & 0x00000000000000ffULL) << 56) | ((v & 0x000000000000ff00ULL) << 40) |
            ((v & 0x0000000000ff0000ULL) << 24) | ((v & 0x00000000ff000000ULL) << 8) |
            ((v & 0x000000ff00000000ULL) >> 8) | ((v & 0x0000ff0000000000ULL) >> 24) |
            ((v & 0x00ff000000000000ULL) >> 40) | ((v & 0xff00000000000000ULL) >> 56);
    }
    return v;
}

}  // namespace

void persist(const TrajectoryEnsemble& ensemble, const std::filesystem::path& path, const std::string& manifest_hash) {
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + path.string() + " for writing");
        const auto& d = ensemble.data();
        if constexpr (std::endian::native == std::endian::little) {
            out.write(reinterpret_cast<const char*>(d.data()), static_cast<std::streamsize>(d.size() * sizeof(double)));
        } else {
            for (double v : d) {
                const std::uint64_t bits = to_le(std::bit_cast<std::uint64_t>(v));
                out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
            }
        }
        if (!out) throw IoError("failed writing " + path.string());
    }
    const auto& p = ensemble.provenance();
    json j;
    j["format"] = "float64-le";
    j["layout"] = "sample,time,component";
    j["n_samples"] = ensemble.n_samples();
    j["n_times"] = ensemble.n_times();
    j["dim"] = ensemble.dim();
    j["components"] = ensemble.components();
    j["projected"] = ensemble.n_stored() != ensemble.dim();
    j["times"] = ensemble.times();
    if (!manifest_hash.empty()) j["manifest"] = manifest_hash;
    j["provenance"] = {{"model", p.model_name}, {"model_hash", p.model_hash}, {"seed", p.seed},
                       {"first_sample", p.first_sample}, {"integrator", p.integrator}, {"dt", p.dt},
                       {"store_stride", p.store_stride}};
    std::ofstream meta(sidecar(path), std::ios::trunc);
    if (!meta) throw IoError("cannot open " + sidecar(path).string() + " for writing");
    meta << j.dump(2) << '\n';
    if (!meta) throw IoError("failed writing " + sidecar(path).string());
}

TrajectoryEnsemble load(const std::filesystem::path& path) {
    std::ifstream meta(sidecar(path));
    if (!meta) throw IoError("cannot open manifest " + sidecar(path).string());
    json j;
    try {
        meta >> j;
    } catch (const json::exception& e) {
        throw IoError("malformed manifest " + sidecar(path).string() + ": " + e.what());
    }
    std::size_t n_samples = 0, n_times = 0, dim = 0;
    bool projected = false;
    std::vector<std::size_t> comps;
    std::vector<double> times;
    Provenance prov;
    try {
        n_samples = j.at("n_samples").get<std::size_t>();
        n_times = j.at("n_times").get<std::size_t>();
        dim = j.at("dim").get<std::size_t>();
        comps = j.at("components").get<std::vector<std::size_t>>();
        projected = j.value("projected", comps.size() != dim);
        times = j.at("times").get<std::vector<double>>();
        const auto& pj = j.at("provenance");
        prov.model_name = pj.at("model").get<std::string>();
        prov.model_hash = pj.at("model_hash").get<std::string>();
        prov.seed = pj.at("seed").get<std::uint64_t>();
        prov.first_sample = pj.at("first_sample").get<std::size_t>();
        prov.integrator = pj.at("integrator").get<std::string>();
        prov.dt = pj.at("dt").get<double>();
        prov.store_stride = pj.at("store_stride").get<std::size_t>();
    } catch (const json::exception& e) {
        throw IoError("manifest " + sidecar(path).string() + " is missing fields: " + e.what());
    }
    if (times.size() != n_times) throw IoError("manifest time grid length disagrees with n_times");
    for (std::size_t c : comps) {
        if (c >= dim) throw IoError("manifest lists a component outside dim");
    }
    if (!projected && comps.size() != dim) {
        throw IoError("shape mismatch: manifest dim " + std::to_string(dim) + " but " + std::to_string(comps.size()) +
                      " stored components in an unprojected ensemble");
    }
    TrajectoryEnsemble ens;
    try {
        ens = TrajectoryEnsemble(dim, comps, times, n_samples, prov);
    } catch (const InvalidArgument& e) {
        throw IoError(std::string("manifest is inconsistent: ") + e.what());
    }
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot open " + path.string());
    const auto bytes = static_cast<std::size_t>(in.tellg());
    const std::size_t expected = ens.data().size() * sizeof(double);
    if (bytes != expected) {
        throw IoError("shape mismatch: " + path.string() + " holds " + std::to_string(bytes) +
                      " bytes, manifest implies " + std::to_string(expected));
    }
    in.seekg(0);
    auto& d = ens.data();
    in.read(reinterpret_cast<char*>(d.data()), static_cast<std::streamsize>(expected));
    if (!in) throw IoError("truncated read from " + path.string());
    if constexpr (std::endian::native != std::endian::little) {
        for (double& v : d) v = std::bit_cast<double>(to_le(std::bit_cast<std::uint64_t>(v)));
    }
    return ens;
}

void export_slice_csv(const TrajectoryEnsemble& ensemble, const ModelSpec& model, std::size_t t_index,
                      const std::filesystem::path& path, const std::string& manifest_hash) {
    if (t_index >= ensemble.n_times()) throw InvalidArgument("export: time index out of range");
    std::vector<std::string> header{"t", "sample_id"};
    for (std::size_t c : ensemble.components()) {
        header.push_back(c < model.component_names.size() ? model.component_names[c] : "x" + std::to_string(c + 1));
    }
    CsvWriter w(path, header, manifest_hash);
    std::vector<double> row(header.size());
    for (std::size_t m = 0; m < ensemble.n_samples(); ++m) {
        row[0] = ensemble.times()[t_index];
        row[1] = static_cast<double>(ensemble.provenance().first_sample + m);
        const double* r = ensemble.row(m, t_index);
        std::copy_n(r, ensemble.n_stored(), row.begin() + 2);
        w.write_row(row);
    }
}

}  // namespace ropdf
