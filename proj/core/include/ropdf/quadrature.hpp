#pragma once

#include <cstddef>
#include <vector>

#include "ropdf/models.hpp"

namespace ropdf {

struct QuadratureRule {
    std::vector<double> nodes;
    /// Probability weights (sum to one).
    std::vector<double> weights;
};

/// Gauss rule exact for polynomials of degree 2n-1 against the distribution:
/// Hermite for Gaussian, Legendre for uniform, generalized Laguerre for Gamma,
/// a single node for a point mass.
QuadratureRule gauss_rule(const ScalarDistribution& d, std::size_t n);

}  // namespace ropdf
