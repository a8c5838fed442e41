#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ropdf/ensemble.hpp"
#include "ropdf/estimators.hpp"
#include "ropdf/grid.hpp"
#include "ropdf/models.hpp"

namespace ropdf {

/// Time series of conditional-expectation estimates of one closure term on a
/// shared grid, interpolated linearly in time.
struct ClosureField {
    ClosureTerm term;
    UniformGrid grid;
    std::vector<double> times;
    std::vector<ConditionalEstimate> estimates;

    double t_first() const { return times.front(); }
    double t_last() const { return times.back(); }

    /// Throws InvalidArgument outside [t_first, t_last].
    void evaluate(double t, std::span<double> out) const;
    std::vector<double> evaluate(double t) const;
    /// Largest |value| over all snapshots.
    double max_abs() const;
};

/// Fits one conditional estimate of `term.inner` given the QoI per snapshot.
/// `threads` fits snapshots concurrently; the result does not depend on it.
ClosureField build_closure_field(const TrajectoryEnsemble& ensemble, std::size_t qoi_index, const ClosureTerm& term,
                                 const UniformGrid& grid, const std::vector<double>& snapshot_times,
                                 const EstimatorOptions& options, std::size_t threads = 1);

/// Domain covering every stored QoI value plus `margin` of the range on each side.
UniformGrid fit_domain(const TrajectoryEnsemble& ensemble, std::size_t qoi_index, std::size_t n, double margin = 0.25);

/// Closed-form density of the QoI's initial marginal (Gaussian, Gamma,
/// uniform, mollified point mass), or a KDE of `fallback_samples` when the
/// initial law carries a constraint. Renormalized on the grid.
GridFunction1D initial_marginal(const ModelSpec& model, std::size_t qoi_index, const UniformGrid& grid,
                                std::span<const double> fallback_samples = {});

struct SolverOptions {
    /// Time step; 0 selects safety * cfl_limit * dx / max speed.
    double dt = 0.0;
    double cfl_limit = 0.5;
    double safety = 0.5;
    bool filter = true;
    /// Clip and renormalize p at emission. Internal state is never clipped.
    bool normalize_output = true;
    /// Boundary density (relative to max) above which a warning is logged.
    double boundary_tolerance = 1e-10;
    /// Inside the solver, closure values at inactive nodes are replaced by the
    /// nearest active value so the transport operator stays hyperbolic.
    bool extend_closures = true;
    /// Transport coefficients are multiplied by a raised-cosine window that
    /// vanishes at both domain ends; the layer covers this fraction of the
    /// domain width on each side. 0 disables the window.
    double edge_taper = 0.15;
};

struct PdfSnapshot {
    double t = 0.0;
    GridFunction1D p;
    /// Integral of the unclipped internal state.
    double raw_mass = 0.0;
};

struct PhSnapshot {
    double t = 0.0;
    GridFunction1D p;
    GridFunction1D h;
    double raw_mass = 0.0;
};

struct SolveReport {
    double dt = 0.0;
    double max_speed = 0.0;
    double courant = 0.0;
    std::size_t steps = 0;
    bool boundary_warning = false;
};

/// Copy of a closure field with inactive nodes held at the nearest active value.
ClosureField extend_closure(const ClosureField& field);

/// The closure fields exactly as the solvers use them under `options`.
std::vector<ClosureField> solver_closures(const std::vector<ClosureField>& fields, const SolverOptions& options);

/// Raised-cosine window vanishing at both domain ends over `frac` of the
/// width; all ones when `frac` is 0. Solvers multiply transport coefficients
/// by `edge_window(grid, options.edge_taper)`.
std::vector<double> edge_window(const UniformGrid& grid, double frac);

/// dp/dt = -d/dx [(closed(x) + sum_l coeff_l(x) CE_l(x, t)) p], one field per
/// closure term of reduced_terms(model, qoi) in the same order.
std::vector<PdfSnapshot> solve_reduced_pdf(const ModelSpec& model, std::size_t qoi_index,
                                           const std::vector<ClosureField>& fields, const GridFunction1D& p0,
                                           const std::vector<double>& output_times, const SolverOptions& options = {},
                                           SolveReport* report = nullptr);

/// Closures of the flux equation: E[g^2 | x] and the source expectations.
struct PhClosures {
    ClosureField second_moment;
    std::vector<ClosureField> source;
};

/// Coupled linear system for p and h = p E[g | x]:
///   dp/dt = -d/dx (c p + f h)
///   dh/dt = -d/dx (c h + f E[g^2|x] p) + p (s0 + sum_l a_l E[s_l|x])
std::vector<PhSnapshot> solve_ph_system(const ModelSpec& model, std::size_t qoi_index, const PhClosures& closures,
                                        const GridFunction1D& p0, const GridFunction1D& h0,
                                        const std::vector<double>& output_times, const SolverOptions& options = {},
                                        SolveReport* report = nullptr);

/// Courant number |v|max dt / dx for a velocity field on a grid.
double courant_number(std::span<const double> velocity, double dt, double dx);

/// Throws CflError when the Courant number exceeds `limit`.
void check_cfl(std::span<const double> velocity, double dt, double dx, double limit);

}  // namespace ropdf
