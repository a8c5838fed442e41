#include <algorithm>
#include <boost/math/special_functions/fpclassify.hpp>
#include <boost/math/interpolators/pchip.hpp>
#include <cmath>
#include <functional>
#include <memory>

#include "ropdf/error.hpp"
#include "ropdf/estimators.hpp"

namespace ropdf {

std::string_view to_string(EstimatorKind kind) noexcept {
    return kind == EstimatorKind::moving_average ? "moving_average" : "smoothing_spline";
}

EstimatorKind estimator_from_string(std::string_view name) {
    if (name == "moving_average") return EstimatorKind::moving_average;
    if (name == "smoothing_spline") return EstimatorKind::smoothing_spline;
    throw InvalidArgument("unknown estimator '" + std::string(name) + "'");
}

void ConditionalEstimate::restrict_to(const Mask& mask) {
    if (mask.size() != values.size()) throw InvalidArgument("mask size differs from the estimate grid");
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!mask[i]) {
            active[i] = false;
            values[i] = 0.0;
        }
    }
}

namespace {

struct Bin {
    std::size_t count = 0;
    double sx = 0.0;
    double sy = 0.0;
};

void validate_slice(const ScatterSlice& s) {
    if (s.x.empty()) throw InvalidArgument("conditional estimate: empty slice");
    if (s.x.size() != s.y.size()) throw InvalidArgument("conditional estimate: x and y lengths differ");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) {
            throw InvalidArgument("conditional estimate: slice contains non-finite values");
        }
    }
}

}  // namespace

ConditionalEstimate ce_moving_average(const ScatterSlice& slice, const UniformGrid& grid,
                                      const MovingAverageOptions& options) {
    validate_slice(slice);
    const std::size_t m = slice.x.size();
    if (options.min_per_bin < 1) throw InvalidArgument("moving average: min_per_bin must be at least 1");
    if (m < options.min_per_bin) throw InvalidArgument("moving average: fewer samples than min_per_bin");
    const auto [lo_it, hi_it] = std::minmax_element(slice.x.begin(), slice.x.end());
    const double lo = *lo_it, hi = *hi_it;
    if (!(hi > lo)) throw InvalidArgument("moving average: all samples share the same x (zero-width support)");

    const std::size_t n_bins =
        options.bins > 0 ? options.bins
                         : std::max<std::size_t>(10, static_cast<std::size_t>(std::floor(std::sqrt(double(m)))));
    std::vector<Bin> bins(n_bins);
    const double width = (hi - lo) / static_cast<double>(n_bins);
    for (std::size_t i = 0; i < m; ++i) {
        auto b = static_cast<std::size_t>((slice.x[i] - lo) / width);
        b = std::min(b, n_bins - 1);
        bins[b].count += 1;
        bins[b].sx += slice.x[i];
        bins[b].sy += slice.y[i];
    }
    // Merge the sparsest under-filled bin into its smaller neighbour until all qualify.
    while (bins.size() > 1) {
        std::size_t worst = bins.size();
        for (std::size_t b = 0; b < bins.size(); ++b) {
            if (bins[b].count < options.min_per_bin && (worst == bins.size() || bins[b].count < bins[worst].count)) {
                worst = b;
            }
        }
        if (worst == bins.size()) break;
        std::size_t into;
        if (worst == 0) into = 1;
        else if (worst + 1 == bins.size()) into = worst - 1;
        else into = bins[worst - 1].count <= bins[worst + 1].count ? worst - 1 : worst + 1;
        bins[into].count += bins[worst].count;
        bins[into].sx += bins[worst].sx;
        bins[into].sy += bins[worst].sy;
        bins.erase(bins.begin() + static_cast<std::ptrdiff_t>(worst));
    }

    std::vector<double> nx, ny;
    for (const auto& b : bins) {
        if (b.count == 0) continue;
        nx.push_back(b.sx / static_cast<double>(b.count));
        ny.push_back(b.sy / static_cast<double>(b.count));
    }

    ConditionalEstimate est;
    est.grid = grid;
    est.values.assign(grid.n, 0.0);
    est.active.assign(grid.n, false);
    est.method = EstimatorKind::moving_average;
    est.hyperparams = {{"bins", double(n_bins)}, {"merged_bins", double(nx.size())},
                       {"min_per_bin", double(options.min_per_bin)}};
    est.selection = options.bins > 0 ? "fixed" : "sqrt_rule";
    est.n_samples = m;

    std::function<double(double)> interp;
    if (nx.size() >= 4) {
        auto p = std::make_shared<boost::math::interpolators::pchip<std::vector<double>>>(std::vector<double>{nx},
                                                                                           std::vector<double>{ny});
        interp = [p](double x) { return (*p)(x); };
    } else if (nx.size() >= 2) {
        interp = [&nx, &ny](double x) {
            auto it = std::upper_bound(nx.begin(), nx.end(), x);
            std::size_t j = std::clamp<std::size_t>(static_cast<std::size_t>(it - nx.begin()), 1, nx.size() - 1);
            const double s = (x - nx[j - 1]) / (nx[j] - nx[j - 1]);
            return (1.0 - s) * ny[j - 1] + s * ny[j];
        };
    } else {
        const double c = ny.front();
        interp = [c](double) { return c; };
    }
    for (std::size_t i = 0; i < grid.n; ++i) {
        const double x = grid.node(i);
        if (x < lo || x > hi) continue;
        const double xc = std::clamp(x, nx.front(), nx.back());
        est.values[i] = interp(xc);
        est.active[i] = true;
    }
    return est;
}

ConditionalEstimate estimate_conditional(const ScatterSlice& slice, const UniformGrid& grid,
                                         const EstimatorOptions& options) {
    return options.kind == EstimatorKind::moving_average ? ce_moving_average(slice, grid, options.moving_average)
                                                         : ce_smoothing_spline(slice, grid, options.spline);
}

}  // namespace ropdf
