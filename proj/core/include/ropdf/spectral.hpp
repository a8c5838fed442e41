#pragma once

#include <complex>
#include <memory>
#include <span>
#include <vector>

#include "ropdf/grid.hpp"

namespace ropdf {

/// Fourier pseudo-spectral operators on a periodic UniformGrid with an even
/// number of nodes. Instances own FFT workspaces and are not shareable across
/// threads; create one per concurrent solve.
class SpectralOperator {
public:
    explicit SpectralOperator(const UniformGrid& grid);
    ~SpectralOperator();
    SpectralOperator(const SpectralOperator&) = delete;
    SpectralOperator& operator=(const SpectralOperator&) = delete;
    SpectralOperator(SpectralOperator&&) noexcept;
    SpectralOperator& operator=(SpectralOperator&&) noexcept;

    const UniformGrid& grid() const noexcept;

    /// du/dx; the Nyquist mode is discarded.
    void derivative(std::span<const double> u, std::span<double> out);

    /// -d/dx (v * u) with the product truncated above 2/3 of the largest
    /// wavenumber; `out` is overwritten, or accumulated into when `accumulate`.
    void flux_divergence(std::span<const double> v, std::span<const double> u, std::span<double> out,
                         bool accumulate = false);

    /// Exponential filter exp(-alpha (k / kc)^order), kc = 2/3 of the largest
    /// wavenumber and alpha = -ln(machine epsilon).
    void filter(std::span<double> u);

    /// Largest resolved wavenumber pi / dx.
    double k_max() const noexcept;

    static constexpr int filter_order = 36;
    static double filter_strength() noexcept;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace ropdf
