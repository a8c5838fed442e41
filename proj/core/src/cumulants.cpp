#include <cmath>

#include "ropdf/error.hpp"
#include "ropdf/estimators.hpp"

namespace ropdf {

std::vector<CumulantEntry> cumulants(std::span<const double> xi, std::span<const double> xj, std::size_t max_order) {
    if (max_order < 1) throw InvalidArgument("cumulants: max_order must be at least 1");
    if (xi.size() != xj.size() || xi.empty()) throw InvalidArgument("cumulants: sample vectors must match and be non-empty");
    const double n = static_cast<double>(xi.size());
    double mean_i = 0.0;
    for (double v : xi) mean_i += v;
    mean_i /= n;
    std::vector<double> cross(max_order + 1, 0.0), power(max_order + 1, 0.0);
    for (std::size_t s = 0; s < xi.size(); ++s) {
        double p = 1.0;
        for (std::size_t k = 1; k <= max_order; ++k) {
            p *= xj[s];
            if (!std::isfinite(p) || !std::isfinite(xi[s] * p)) {
                throw NumericalError("cumulants: x_j^" + std::to_string(k) + " overflows for the sample range");
            }
            power[k] += p;
            cross[k] += xi[s] * p;
        }
    }
    std::vector<CumulantEntry> out;
    double factorial = 1.0;
    for (std::size_t k = 1; k <= max_order; ++k) {
        factorial *= static_cast<double>(k);
        const double c = cross[k] / n - mean_i * (power[k] / n);
        if (!std::isfinite(c)) throw NumericalError("cumulants: order " + std::to_string(k) + " overflows");
        out.push_back({k, c, std::abs(c) / factorial});
    }
    return out;
}

std::vector<CumulantEntry> cumulants(const TrajectoryEnsemble& ensemble, std::size_t i, std::size_t j,
                                     std::size_t max_order, std::size_t t_index) {
    const auto xi = component_samples(ensemble, t_index, i);
    const auto xj = component_samples(ensemble, t_index, j);
    return cumulants(xi, xj, max_order);
}

}  // namespace ropdf
