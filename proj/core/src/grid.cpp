#include "ropdf/grid.hpp"

#include <cmath>
#include <numeric>

#include "ropdf/error.hpp"

namespace ropdf {

UniformGrid::UniformGrid(double lo_, double hi_, std::size_t n_) : lo(lo_), hi(hi_), n(n_) {
    if (!(std::isfinite(lo) && std::isfinite(hi)) || !(hi > lo)) {
        throw InvalidArgument("grid bounds must be finite with hi > lo");
    }
    if (n < 2) {
        throw InvalidArgument("grid needs at least two nodes");
    }
}

std::vector<double> UniformGrid::nodes() const {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = node(i);
    return x;
}

bool UniformGrid::same_as(const UniformGrid& other) const noexcept {
    return lo == other.lo && hi == other.hi && n == other.n;
}

std::string_view to_string(FieldKind kind) noexcept {
    switch (kind) {
        case FieldKind::pdf: return "pdf";
        case FieldKind::flux_h: return "flux_h";
        case FieldKind::memory: return "memory";
        case FieldKind::generic: return "generic";
    }
    return "generic";
}

GridFunction1D::GridFunction1D(UniformGrid g, std::vector<double> v, FieldKind k)
    : grid(g), values(std::move(v)), kind(k) {
    if (values.size() != grid.n) {
        throw InvalidArgument("grid function size does not match its grid");
    }
}

GridFunction1D::GridFunction1D(UniformGrid g, FieldKind k) : grid(g), values(g.n, 0.0), kind(k) {}

double GridFunction1D::integral() const noexcept { return integrate(values, grid.dx()); }

double integrate(std::span<const double> values, double dx) noexcept {
    return std::accumulate(values.begin(), values.end(), 0.0) * dx;
}

void normalize_pdf(GridFunction1D& pdf) {
    for (double& v : pdf.values) {
        if (!std::isfinite(v)) throw NumericalError("density contains non-finite values");
        if (v < 0.0) v = 0.0;
    }
    const double mass = pdf.integral();
    if (!(mass > 0.0)) throw NumericalError("density has no positive mass");
    for (double& v : pdf.values) v /= mass;
    pdf.kind = FieldKind::pdf;
}

}  // namespace ropdf
