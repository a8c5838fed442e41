#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "ropdf/ensemble.hpp"
#include "ropdf/estimators.hpp"
#include "ropdf/grid.hpp"
#include "ropdf/models.hpp"
#include "ropdf/pdf_solver.hpp"

namespace ropdf {

/// E[G_qoi(x(0)) | x_qoi(0)] on a grid together with the per-term initial
/// conditional expectations E[g_l(x(0)) | x_qoi(0)].
struct StreamingCoefficient {
    GridFunction1D field;
    std::vector<std::vector<double>> term_expectations;
    /// "quadrature" for independent initial states, "initial_ensemble" otherwise.
    std::string method;
};

/// Tensor Gauss quadrature over the initial marginals when the components are
/// independent. Dependent initial states need `initial_ensemble` (its first
/// stored time is used with the given estimator) and log a warning.
StreamingCoefficient streaming_coefficient(const ModelSpec& model, std::size_t qoi_index, const UniformGrid& grid,
                                           const TrajectoryEnsemble* initial_ensemble = nullptr,
                                           const EstimatorOptions& estimator = {},
                                           std::size_t quadrature_points = 24);

struct MzSnapshot {
    double t = 0.0;
    /// E[G | x](t) - E[G | x](0); zero where the closure estimates are inactive.
    GridFunction1D m;
    /// -d/dx (p m)
    GridFunction1D memory;
};

/// Memory term per PDF snapshot. At the start time of the closure fields the
/// initial conditional expectation is the streaming coefficient itself, so
/// the memory vanishes identically there.
std::vector<MzSnapshot> mz_memory(const ModelSpec& model, std::size_t qoi_index,
                                  const std::vector<PdfSnapshot>& p_series, const std::vector<ClosureField>& fields,
                                  const StreamingCoefficient& streaming);

struct IdentityCheck {
    std::vector<double> times;
    /// max |memory + streaming term - dp/dt| with dp/dt by centered differences.
    std::vector<double> residual;
    /// (dt^2 / 6) max |p_ttt| estimated from five-point differences.
    std::vector<double> truncation;
    double worst_ratio = 0.0;
};

/// Checks memory - d/dx(p E[G | x](0)) against the centered time difference of
/// the PDF series. Each memory snapshot is checked where `p_series` holds it
/// together with two uniformly spaced neighbours on each side; others are
/// skipped. Throws when no snapshot qualifies.
IdentityCheck mz_identity_check(const std::vector<PdfSnapshot>& p_series, const std::vector<MzSnapshot>& memory,
                                const StreamingCoefficient& streaming);

/// Solves the reduced equation once more with a five-point stencil of spacing
/// `stencil_fraction` times the local snapshot spacing around every interior
/// closure snapshot and checks the identity at those snapshots. The closures
/// are prepared as the solver prepares them (extension, edge taper); the
/// check solve runs without the spectral filter and without output
/// normalization, so it measures the unregularized semi-discrete equation.
IdentityCheck mz_identity_check_at_snapshots(const ModelSpec& model, std::size_t qoi_index,
                                             const std::vector<ClosureField>& fields, const GridFunction1D& p0,
                                             const StreamingCoefficient& streaming, const SolverOptions& options = {},
                                             double stencil_fraction = 0.1);

}  // namespace ropdf
