#include <algorithm>
#include <cmath>
#include <numeric>

#include "ropdf/error.hpp"
#include "ropdf/estimators.hpp"

namespace ropdf {

namespace {

double quantile(std::vector<double> sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

double silverman_bandwidth(std::span<const double> samples) {
    const std::size_t n = samples.size();
    if (n < 2) throw InvalidArgument("kde: at least 2 samples are required");
    const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / double(n);
    double ss = 0.0;
    for (double v : samples) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / double(n - 1));
    if (!(sd > 0.0)) throw InvalidArgument("kde: sample set has zero variance");
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    const double iqr = quantile(sorted, 0.75) - quantile(sorted, 0.25);
    const double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
    return 0.9 * spread * std::pow(double(n), -0.2);
}

GridFunction1D kde_pdf(std::span<const double> samples, const UniformGrid& grid, std::optional<double> bandwidth) {
    if (samples.size() < 2) throw InvalidArgument("kde: at least 2 samples are required");
    for (double v : samples) {
        if (!std::isfinite(v)) throw InvalidArgument("kde: non-finite sample");
    }
    const double h = bandwidth && *bandwidth > 0.0 ? *bandwidth : silverman_bandwidth(samples);
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    GridFunction1D out(grid, FieldKind::pdf);
    const double cut = 9.0 * h;
    const double inv = 1.0 / h;
    for (std::size_t i = 0; i < grid.n; ++i) {
        const double x = grid.node(i);
        auto b = std::lower_bound(sorted.begin(), sorted.end(), x - cut);
        auto e = std::upper_bound(b, sorted.end(), x + cut);
        double acc = 0.0;
        for (auto it = b; it != e; ++it) {
            const double u = (x - *it) * inv;
            acc += std::exp(-0.5 * u * u);
        }
        out.values[i] = acc;
    }
    const double mass = integrate(out.values, grid.dx());
    if (!(mass > 0.0)) throw NumericalError("kde: no sample mass falls on the grid");
    for (double& v : out.values) v /= mass;
    return out;
}

}  // namespace ropdf
