#include "ropdf/spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <limits>
#include <mutex>

#include "ropdf/error.hpp"

namespace ropdf {

namespace {

std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

constexpr double kPi = 3.14159265358979323846;

}  // namespace

double SpectralOperator::filter_strength() noexcept { return -std::log(std::numeric_limits<double>::epsilon()); }

struct SpectralOperator::Impl {
    UniformGrid grid;
    std::size_t n = 0, nc = 0;
    double* real = nullptr;
    fftw_complex* spec = nullptr;
    fftw_plan forward = nullptr, backward = nullptr;
    std::vector<double> k;        // physical wavenumbers per retained mode
    std::vector<double> sigma;    // filter factors
    std::vector<double> product;  // scratch

    explicit Impl(const UniformGrid& g) : grid(g), n(g.n), nc(g.n / 2 + 1) {
        real = fftw_alloc_real(n);
        spec = fftw_alloc_complex(nc);
        if (!real || !spec) throw NumericalError("spectral: FFT workspace allocation failed");
        {
            std::lock_guard lock(planner_mutex());
            forward = fftw_plan_dft_r2c_1d(static_cast<int>(n), real, spec, FFTW_ESTIMATE);
            backward = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec, real, FFTW_ESTIMATE);
        }
        if (!forward || !backward) throw NumericalError("spectral: FFT planning failed");
        k.resize(nc);
        sigma.resize(nc);
        const double kc_index = (2.0 / 3.0) * static_cast<double>(n / 2);
        const double alpha = filter_strength();
        for (std::size_t m = 0; m < nc; ++m) {
            k[m] = 2.0 * kPi * static_cast<double>(m) / g.length();
            const double eta = static_cast<double>(m) / kc_index;
            sigma[m] = std::exp(-alpha * std::pow(eta, filter_order));
        }
        product.resize(n);
    }

    ~Impl() {
        std::lock_guard lock(planner_mutex());
        if (forward) fftw_destroy_plan(forward);
        if (backward) fftw_destroy_plan(backward);
        if (real) fftw_free(real);
        if (spec) fftw_free(spec);
    }

    bool beyond_two_thirds(std::size_t m) const { return 3 * m > n; }
};

SpectralOperator::SpectralOperator(const UniformGrid& grid) {
    if (grid.n < 4 || grid.n % 2 != 0) throw InvalidArgument("spectral grid needs an even node count >= 4");
    impl_ = std::make_unique<Impl>(grid);
}

SpectralOperator::~SpectralOperator() = default;
SpectralOperator::SpectralOperator(SpectralOperator&&) noexcept = default;
SpectralOperator& SpectralOperator::operator=(SpectralOperator&&) noexcept = default;

const UniformGrid& SpectralOperator::grid() const noexcept { return impl_->grid; }

double SpectralOperator::k_max() const noexcept { return kPi / impl_->grid.dx(); }

void SpectralOperator::derivative(std::span<const double> u, std::span<double> out) {
    auto& s = *impl_;
    if (u.size() != s.n || out.size() != s.n) throw InvalidArgument("spectral: field size differs from grid");
    std::copy(u.begin(), u.end(), s.real);
    fftw_execute(s.forward);
    const double scale = 1.0 / static_cast<double>(s.n);
    for (std::size_t m = 0; m < s.nc; ++m) {
        const double re = s.spec[m][0], im = s.spec[m][1];
        const double km = (m == s.n / 2) ? 0.0 : s.k[m] * scale;
        s.spec[m][0] = -km * im;
        s.spec[m][1] = km * re;
    }
    fftw_execute(s.backward);
    std::copy_n(s.real, s.n, out.begin());
}

void SpectralOperator::flux_divergence(std::span<const double> v, std::span<const double> u, std::span<double> out,
                                       bool accumulate) {
    auto& s = *impl_;
    if (v.size() != s.n || u.size() != s.n || out.size() != s.n) {
        throw InvalidArgument("spectral: field size differs from grid");
    }
    for (std::size_t i = 0; i < s.n; ++i) s.real[i] = v[i] * u[i];
    fftw_execute(s.forward);
    const double scale = 1.0 / static_cast<double>(s.n);
    for (std::size_t m = 0; m < s.nc; ++m) {
        if (s.beyond_two_thirds(m) || m == s.n / 2) {
            s.spec[m][0] = s.spec[m][1] = 0.0;
            continue;
        }
        const double re = s.spec[m][0], im = s.spec[m][1];
        const double km = -s.k[m] * scale;
        s.spec[m][0] = -km * im;
        s.spec[m][1] = km * re;
    }
    fftw_execute(s.backward);
    if (accumulate) {
        for (std::size_t i = 0; i < s.n; ++i) out[i] += s.real[i];
    } else {
        std::copy_n(s.real, s.n, out.begin());
    }
}

void SpectralOperator::filter(std::span<double> u) {
    auto& s = *impl_;
    if (u.size() != s.n) throw InvalidArgument("spectral: field size differs from grid");
    std::copy(u.begin(), u.end(), s.real);
    fftw_execute(s.forward);
    const double scale = 1.0 / static_cast<double>(s.n);
    for (std::size_t m = 0; m < s.nc; ++m) {
        s.spec[m][0] *= s.sigma[m] * scale;
        s.spec[m][1] *= s.sigma[m] * scale;
    }
    fftw_execute(s.backward);
    std::copy_n(s.real, s.n, u.begin());
}

}  // namespace ropdf
