#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace ropdf {

/// Uniform grid on [lo, hi) with n nodes x_i = lo + i*dx, dx = (hi - lo)/n.
/// The right endpoint is the periodic image of the left one, so quadrature is
/// the plain sum times dx (the trapezoidal rule on a periodic interval).
struct UniformGrid {
    double lo = 0.0;
    double hi = 1.0;
    std::size_t n = 0;

    UniformGrid() = default;
    UniformGrid(double lo, double hi, std::size_t n);

    double dx() const noexcept { return (hi - lo) / static_cast<double>(n); }
    double length() const noexcept { return hi - lo; }
    double node(std::size_t i) const noexcept { return lo + static_cast<double>(i) * dx(); }
    std::vector<double> nodes() const;

    /// Exact equality of bounds and size.
    bool same_as(const UniformGrid& other) const noexcept;
};

enum class FieldKind { pdf, flux_h, memory, generic };

std::string_view to_string(FieldKind kind) noexcept;

/// Scalar field sampled on a UniformGrid.
struct GridFunction1D {
    UniformGrid grid;
    std::vector<double> values;
    FieldKind kind = FieldKind::generic;

    GridFunction1D() = default;
    GridFunction1D(UniformGrid grid, std::vector<double> values, FieldKind kind = FieldKind::generic);
    GridFunction1D(UniformGrid grid, FieldKind kind);

    std::size_t size() const noexcept { return values.size(); }
    double integral() const noexcept;
};

/// Periodic trapezoidal quadrature of samples on a uniform grid.
double integrate(std::span<const double> values, double dx) noexcept;

/// Clip negatives to zero and rescale to unit integral. Throws NumericalError
/// when nothing positive remains.
void normalize_pdf(GridFunction1D& pdf);

}  // namespace ropdf
