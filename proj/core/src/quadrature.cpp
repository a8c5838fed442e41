#include "ropdf/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>

#include "ropdf/error.hpp"

namespace ropdf {

namespace {

// Golub-Welsch: eigen-decomposition of the Jacobi matrix of the monic
// orthogonal polynomials; weights are squared first eigenvector components.
QuadratureRule golub_welsch(const Eigen::VectorXd& diag, const Eigen::VectorXd& sub) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
    solver.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    if (solver.info() != Eigen::Success) throw NumericalError("quadrature: eigen-decomposition failed");
    QuadratureRule r;
    const auto n = static_cast<std::size_t>(diag.size());
    r.nodes.resize(n);
    r.weights.resize(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        r.nodes[i] = solver.eigenvalues()(static_cast<Eigen::Index>(i));
        const double v = solver.eigenvectors()(0, static_cast<Eigen::Index>(i));
        r.weights[i] = v * v;
        total += r.weights[i];
    }
    for (double& w : r.weights) w /= total;
    return r;
}

}  // namespace

QuadratureRule gauss_rule(const ScalarDistribution& d, std::size_t n) {
    if (n == 0) throw InvalidArgument("quadrature: at least one node is required");
    if (const auto* p = std::get_if<Deterministic>(&d)) return {{p->value}, {1.0}};
    const auto m = static_cast<Eigen::Index>(n);
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd sub = Eigen::VectorXd::Zero(std::max<Eigen::Index>(m - 1, 0));
    if (const auto* g = std::get_if<Gaussian>(&d)) {
        for (Eigen::Index k = 1; k < m; ++k) sub(k - 1) = std::sqrt(static_cast<double>(k));
        auto r = golub_welsch(diag, sub);
        const double sd = std::sqrt(g->variance);
        for (double& x : r.nodes) x = g->mean + sd * x;
        return r;
    }
    if (const auto* u = std::get_if<Uniform>(&d)) {
        for (Eigen::Index k = 1; k < m; ++k) {
            const double kk = static_cast<double>(k);
            sub(k - 1) = kk / std::sqrt(4.0 * kk * kk - 1.0);
        }
        auto r = golub_welsch(diag, sub);
        for (double& x : r.nodes) x = 0.5 * (u->lo + u->hi) + 0.5 * (u->hi - u->lo) * x;
        return r;
    }
    const auto& gm = std::get<Gamma>(d);
    const double alpha = gm.shape - 1.0;
    for (Eigen::Index k = 0; k < m; ++k) diag(k) = 2.0 * static_cast<double>(k) + alpha + 1.0;
    for (Eigen::Index k = 1; k < m; ++k) {
        const double kk = static_cast<double>(k);
        sub(k - 1) = std::sqrt(kk * (kk + alpha));
    }
    auto r = golub_welsch(diag, sub);
    for (double& x : r.nodes) x *= gm.scale;
    return r;
}

}  // namespace ropdf
