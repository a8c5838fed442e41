#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ropdf/ensemble.hpp"
#include "ropdf/grid.hpp"

namespace ropdf {

using Mask = std::vector<bool>;

enum class EstimatorKind { moving_average, smoothing_spline };

std::string_view to_string(EstimatorKind kind) noexcept;
EstimatorKind estimator_from_string(std::string_view name);

/// Conditional-expectation curve on a grid. Inactive nodes hold exactly 0.
struct ConditionalEstimate {
    UniformGrid grid;
    std::vector<double> values;
    Mask active;
    EstimatorKind method = EstimatorKind::smoothing_spline;
    std::map<std::string, double> hyperparams;
    std::string selection;
    std::size_t n_samples = 0;

    /// Zeroes every node outside `mask` and narrows `active` accordingly.
    void restrict_to(const Mask& mask);
};

struct MovingAverageOptions {
    /// 0 selects max(10, floor(sqrt(M))).
    std::size_t bins = 0;
    std::size_t min_per_bin = 5;
};

/// Smoothing-parameter selection: generalized cross-validation or
/// generalized maximum likelihood.
enum class SmoothingCriterion { gcv, gml };

struct SplineOptions {
    /// Fixed smoothing parameter; empty selects by `criterion`.
    std::optional<double> lambda;
    SmoothingCriterion criterion = SmoothingCriterion::gcv;
    std::size_t gcv_points = 25;
    double gcv_lo = 1e-6;
    double gcv_hi = 1e6;
    /// Inflation of the trace in the GCV denominator; 1 is classical GCV.
    double gcv_gamma = 1.4;
};

struct EstimatorOptions {
    EstimatorKind kind = EstimatorKind::smoothing_spline;
    MovingAverageOptions moving_average;
    SplineOptions spline;
    /// Closure fields keep only nodes where the KDE of the conditioning
    /// samples exceeds this fraction of its maximum; 0 keeps the sample range.
    double active_eps = 1e-3;
    /// Closure fields fit the spline to coefficient * inner (continuous where
    /// the conditional mean of inner alone may jump) and divide the
    /// coefficient back out. The smoothing parameter is selected on inner.
    bool flux_form = true;
};

ConditionalEstimate ce_moving_average(const ScatterSlice& slice, const UniformGrid& grid,
                                      const MovingAverageOptions& options = {});

ConditionalEstimate ce_smoothing_spline(const ScatterSlice& slice, const UniformGrid& grid,
                                        const SplineOptions& options = {});

ConditionalEstimate estimate_conditional(const ScatterSlice& slice, const UniformGrid& grid,
                                         const EstimatorOptions& options);

/// Natural cubic smoothing spline through weighted unique knots.
struct SmoothingSplineFit {
    std::vector<double> knots;
    std::vector<double> weights;
    std::vector<double> ybar;
    std::vector<double> fitted;
    /// Second derivatives at the knots (zero at both ends).
    std::vector<double> second;
    double lambda = 0.0;
    double lambda_scale = 1.0;
    double gcv = 0.0;
    /// Log generalized-likelihood score (lower is better).
    double gml = 0.0;
    double trace = 0.0;
    double rss = 0.0;
    std::size_t n_samples = 0;

    double operator()(double x) const;
};

/// Fits with a given lambda, or selects lambda by GCV over
/// `gcv_points` log-spaced multiples of the data-derived scale.
SmoothingSplineFit fit_smoothing_spline(std::span<const double> x, std::span<const double> y,
                                        const SplineOptions& options = {});

/// Gaussian-kernel density on the grid, renormalized to unit integral.
/// A non-positive or absent bandwidth selects Silverman's rule.
GridFunction1D kde_pdf(std::span<const double> samples, const UniformGrid& grid,
                       std::optional<double> bandwidth = std::nullopt);

double silverman_bandwidth(std::span<const double> samples);

struct CumulantEntry {
    std::size_t k = 0;
    double value = 0.0;
    /// |c_k| / k!
    double rescaled = 0.0;
};

/// c_k = E[x_i x_j^k] - E[x_i] E[x_j^k] for k = 1..max_order.
std::vector<CumulantEntry> cumulants(std::span<const double> xi, std::span<const double> xj, std::size_t max_order);

std::vector<CumulantEntry> cumulants(const TrajectoryEnsemble& ensemble, std::size_t i, std::size_t j,
                                     std::size_t max_order, std::size_t t_index);

/// Nodes with p >= eps * max(p), reduced to the longest contiguous run.
Mask active_mask(const GridFunction1D& pdf, double eps);

}  // namespace ropdf
