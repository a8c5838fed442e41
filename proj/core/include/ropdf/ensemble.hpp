#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ropdf/models.hpp"

namespace ropdf {

struct IntegrationOptions {
    double t_final = 1.0;
    double dt = 1e-3;
    std::size_t store_stride = 1;
    /// State components kept in storage; empty keeps all of them.
    std::vector<std::size_t> components;
    /// Worker threads; 0 uses the hardware concurrency. Output does not depend on it.
    std::size_t threads = 1;
};

struct Provenance {
    std::string model_name;
    std::string model_hash;
    std::uint64_t seed = 0;
    std::size_t first_sample = 0;
    std::string integrator = "rk4";
    double dt = 0.0;
    std::size_t store_stride = 1;
};

/// M sample paths on a shared time grid, stored sample-major as [m][t][k]
/// where k runs over the stored components.
class TrajectoryEnsemble {
public:
    TrajectoryEnsemble() = default;
    TrajectoryEnsemble(std::size_t dim, std::vector<std::size_t> components, std::vector<double> times,
                       std::size_t n_samples, Provenance provenance);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t n_samples() const noexcept { return n_samples_; }
    std::size_t n_times() const noexcept { return times_.size(); }
    std::size_t n_stored() const noexcept { return components_.size(); }
    const std::vector<std::size_t>& components() const noexcept { return components_; }
    const std::vector<double>& times() const noexcept { return times_; }
    const Provenance& provenance() const noexcept { return provenance_; }
    const std::vector<double>& data() const noexcept { return data_; }
    std::vector<double>& data() noexcept { return data_; }

    /// Position of full-state component `component` in storage; throws if not stored.
    std::size_t stored_index(std::size_t component) const;
    bool stores(std::size_t component) const noexcept;

    double at(std::size_t sample, std::size_t t_index, std::size_t stored) const noexcept {
        return data_[(sample * times_.size() + t_index) * components_.size() + stored];
    }
    double* row(std::size_t sample, std::size_t t_index) noexcept {
        return data_.data() + (sample * times_.size() + t_index) * components_.size();
    }
    const double* row(std::size_t sample, std::size_t t_index) const noexcept {
        return data_.data() + (sample * times_.size() + t_index) * components_.size();
    }

    /// Full-length state with unstored components set to NaN.
    std::vector<double> state(std::size_t sample, std::size_t t_index) const;

    /// Index of the stored time closest to t; throws when t is not on the grid.
    std::size_t time_index(double t) const;

    /// The first `count` samples.
    TrajectoryEnsemble head(std::size_t count) const;

    /// Samples of `other` appended after these; grids and storage must agree.
    void append(const TrajectoryEnsemble& other);

private:
    std::size_t dim_ = 0;
    std::vector<std::size_t> components_;
    std::vector<double> times_;
    std::size_t n_samples_ = 0;
    std::vector<double> data_;
    Provenance provenance_;
};

struct ScatterSlice {
    double t = 0.0;
    std::vector<double> x;
    std::vector<double> y;
};

/// Fixed-step classical RK4 from each initial state; stores every
/// `store_stride` steps including t = 0 and t_final.
TrajectoryEnsemble integrate_ensemble(const ModelSpec& model, const std::vector<std::vector<double>>& initials,
                                      const IntegrationOptions& options, std::uint64_t seed = 0,
                                      std::size_t first_sample = 0);

/// Samples `count` initial states with `seed` and integrates them.
TrajectoryEnsemble simulate(const ModelSpec& model, std::size_t count, std::uint64_t seed,
                            const IntegrationOptions& options, std::size_t first_sample = 0);

/// x_m = state_m[qoi], y_m = g(state_m) at a stored time index.
ScatterSlice slice(const TrajectoryEnsemble& ensemble, std::size_t t_index, std::size_t qoi_index, const StateFn& g);

/// QoI samples at a stored time index.
std::vector<double> component_samples(const TrajectoryEnsemble& ensemble, std::size_t t_index,
                                      std::size_t component);

/// Writes `<path>` (raw little-endian float64 block) and `<path>.json`; the
/// sidecar records `manifest_hash` when one is given.
void persist(const TrajectoryEnsemble& ensemble, const std::filesystem::path& path,
             const std::string& manifest_hash = {});
TrajectoryEnsemble load(const std::filesystem::path& path);

/// CSV with columns `t, sample_id, <component names>` for one stored time.
void export_slice_csv(const TrajectoryEnsemble& ensemble, const ModelSpec& model, std::size_t t_index,
                      const std::filesystem::path& path, const std::string& manifest_hash = {});

}  // namespace ropdf
