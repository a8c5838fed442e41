#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ropdf/ensemble.hpp"
#include "ropdf/estimators.hpp"
#include "ropdf/grid.hpp"
#include "ropdf/models.hpp"
#include "ropdf/pdf_solver.hpp"

namespace ropdf {

struct HDataOptions {
    EstimatorOptions estimator;
    double eps = 1e-3;
    std::optional<double> bandwidth;
};

struct HEstimate {
    GridFunction1D h;
    GridFunction1D p;
    Mask mask;
};

/// h = KDE(QoI) * E[g | QoI] on the grid, zero off the active mask (the KDE
/// threshold mask intersected with the estimator's support).
HEstimate h_from_data(const TrajectoryEnsemble& ensemble, std::size_t t_index, std::size_t qoi_index,
                      const StateFn& g, const UniformGrid& grid, const HDataOptions& options = {});

/// ||h_data - h_pde||_2 / ||h_data||_2 over the masked nodes.
double info_content_error(const GridFunction1D& h_data, const GridFunction1D& h_pde, const Mask& mask);

enum class Norm { L1, L2, Linf };

Norm norm_from_string(std::string_view name);

/// Norm of the difference by periodic trapezoidal quadrature.
double pdf_error(const GridFunction1D& a, const GridFunction1D& b, Norm metric);

struct StudyConfig {
    std::vector<std::size_t> sizes;
    double t_eval = 1.0;
    std::uint64_t seed = 0;
    /// Benchmark sample count as a multiple of the largest study size.
    std::size_t benchmark_factor = 6;
    IntegrationOptions integration;
    std::size_t grid_n = 256;
    double margin = 0.25;
    EstimatorOptions estimator;
    SolverOptions solver;
    double eps = 1e-3;
    /// Closure snapshot times; empty uses every stored time up to t_eval.
    std::vector<double> snapshot_times;
};

struct StudyRow {
    std::size_t samples = 0;
    double t = 0.0;
    double error = 0.0;
    std::string status;
};

struct StudyResult {
    std::vector<StudyRow> rows;
    /// Least-squares slope of log(error) against log(M) over successful rows.
    double slope = 0.0;
    std::size_t inversions = 0;
    UniformGrid grid;
    std::size_t benchmark_samples = 0;
};

/// Information-content error against sample count. Subsets are the leading
/// samples of one master ensemble; the benchmark h uses independent samples
/// (indices after the master block) of benchmark_factor times the largest size.
StudyResult sample_size_study(const ModelSpec& model, std::size_t qoi_index, const StudyConfig& config);

/// Components the flux system reads for a QoI (QoI plus every closure support).
std::vector<std::size_t> flux_system_components(const ModelSpec& model, std::size_t qoi_index);

/// Builds the second-moment and source closures of the flux system. These are
/// always plain fits of the inner functions (`flux_form` is ignored).
PhClosures build_ph_closures(const ModelSpec& model, std::size_t qoi_index, const TrajectoryEnsemble& ensemble,
                             const UniformGrid& grid, const std::vector<double>& snapshot_times,
                             const EstimatorOptions& estimator, std::size_t threads = 1);

/// h0 = p0 * E[g | x] at the first snapshot of `ce0`.
GridFunction1D initial_flux(const GridFunction1D& p0, const ClosureField& ce);

}  // namespace ropdf
