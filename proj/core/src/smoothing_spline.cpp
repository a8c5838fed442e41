#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ropdf/error.hpp"
#include "ropdf/estimators.hpp"

namespace ropdf {

namespace {

struct Knots {
    std::vector<double> x, w, ybar;
    double within_ss = 0.0;
};

Knots collapse_duplicates(std::span<const double> x, std::span<const double> y) {
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    // Abscissae closer than 1e-6 of the interquartile range share a knot.
    const auto xq = [&](double q) { return x[order[static_cast<std::size_t>(q * double(order.size() - 1))]]; };
    double spread = order.empty() ? 0.0 : xq(0.75) - xq(0.25);
    if (!(spread > 0.0) && !order.empty()) spread = x[order.back()] - x[order.front()];
    const double tol = 1e-6 * spread;
    Knots k;
    for (std::size_t s = 0; s < order.size();) {
        std::size_t e = s;
        double sum = 0.0, xsum = 0.0;
        while (e < order.size() && x[order[e]] - x[order[s]] <= tol) {
            xsum += x[order[e]];
            sum += y[order[e++]];
        }
        const double count = static_cast<double>(e - s);
        const double mean = sum / count;
        for (std::size_t r = s; r < e; ++r) k.within_ss += (y[order[r]] - mean) * (y[order[r]] - mean);
        k.x.push_back(e - s == 1 ? x[order[s]] : xsum / count);
        k.w.push_back(count);
        k.ybar.push_back(mean);
        s = e;
    }
    return k;
}

// Symmetric pentadiagonal matrix stored by diagonals.
struct Band {
    std::vector<double> d0, d1, d2;
    explicit Band(std::size_t m) : d0(m, 0.0), d1(m, 0.0), d2(m, 0.0) {}
    double at(std::size_t i, std::size_t j) const {
        if (i > j) std::swap(i, j);
        switch (j - i) {
            case 0: return d0[i];
            case 1: return d1[i];
            case 2: return d2[i];
            default: return 0.0;
        }
    }
};

struct Ldl {
    std::vector<double> d, l1, l2;
};

Ldl factor(const Band& b) {
    const std::size_t m = b.d0.size();
    Ldl f{std::vector<double>(m), std::vector<double>(m, 0.0), std::vector<double>(m, 0.0)};
    for (std::size_t i = 0; i < m; ++i) {
        double di = b.d0[i];
        if (i >= 1) di -= f.l1[i - 1] * f.l1[i - 1] * f.d[i - 1];
        if (i >= 2) di -= f.l2[i - 2] * f.l2[i - 2] * f.d[i - 2];
        if (!(di > 0.0) || !std::isfinite(di)) {
            throw NumericalError("smoothing spline: singular system (degenerate knot spacing)");
        }
        f.d[i] = di;
        if (i + 1 < m) {
            double v = b.d1[i];
            if (i >= 1) v -= f.l2[i - 1] * f.l1[i - 1] * f.d[i - 1];
            f.l1[i] = v / di;
        }
        if (i + 2 < m) f.l2[i] = b.d2[i] / di;
    }
    return f;
}

std::vector<double> solve(const Ldl& f, std::vector<double> z) {
    const std::size_t m = z.size();
    for (std::size_t i = 0; i < m; ++i) {
        if (i >= 1) z[i] -= f.l1[i - 1] * z[i - 1];
        if (i >= 2) z[i] -= f.l2[i - 2] * z[i - 2];
    }
    for (std::size_t i = 0; i < m; ++i) z[i] /= f.d[i];
    for (std::size_t i = m; i-- > 0;) {
        if (i + 1 < m) z[i] -= f.l1[i] * z[i + 1];
        if (i + 2 < m) z[i] -= f.l2[i] * z[i + 2];
    }
    return z;
}

// Band of the inverse from the LDL^T factors.
Band inverse_band(const Ldl& f) {
    const std::size_t m = f.d.size();
    Band s(m);
    for (std::size_t i = m; i-- > 0;) {
        const double a = i + 1 < m ? f.l1[i] : 0.0;
        const double b = i + 2 < m ? f.l2[i] : 0.0;
        const double s11 = i + 1 < m ? s.d0[i + 1] : 0.0;
        const double s12 = i + 2 < m ? s.d1[i + 1] : 0.0;
        const double s22 = i + 2 < m ? s.d0[i + 2] : 0.0;
        s.d2[i] = -a * s12 - b * s22;
        s.d1[i] = -a * s11 - b * s12;
        s.d0[i] = 1.0 / f.d[i] - a * s.d1[i] - b * s.d2[i];
    }
    return s;
}

class Problem {
public:
    explicit Problem(Knots k) : k_(std::move(k)) {
        const std::size_t n = k_.x.size();
        m_ = n - 2;
        h_.resize(n - 1);
        for (std::size_t i = 0; i + 1 < n; ++i) {
            h_[i] = k_.x[i + 1] - k_.x[i];
            if (!(h_[i] > 0.0) || !std::isfinite(1.0 / h_[i])) {
                throw NumericalError("smoothing spline: singular system (degenerate knot spacing)");
            }
        }
        r_ = Band(m_);
        qwq_ = Band(m_);
        for (std::size_t c = 0; c < m_; ++c) {
            r_.d0[c] = (h_[c] + h_[c + 1]) / 3.0;
            if (c + 1 < m_) r_.d1[c] = h_[c + 1] / 6.0;
        }
        for (std::size_t i = 0; i < n; ++i) {
            const auto cols = columns(i);
            for (std::size_t a = 0; a < cols.size(); ++a) {
                for (std::size_t b = a; b < cols.size(); ++b) {
                    const std::size_t c = cols[a], d = cols[b];
                    const double v = q(i, c) * q(i, d) / k_.w[i];
                    switch (d - c) {
                        case 0: qwq_.d0[c] += v; break;
                        case 1: qwq_.d1[c] += v; break;
                        case 2: qwq_.d2[c] += v; break;
                        default: break;
                    }
                }
            }
        }
        qty_.assign(m_, 0.0);
        for (std::size_t c = 0; c < m_; ++c) {
            for (std::size_t i = c; i <= c + 2; ++i) qty_[c] += q(i, c) * k_.ybar[i];
        }
        total_weight_ = std::accumulate(k_.w.begin(), k_.w.end(), 0.0);
    }

    // The equivalent kernel bandwidth of a smoothing spline scales like
    // (lambda / (N density))^(1/4); the reference lambda corresponds to a
    // bandwidth of 1/30 of the data range.
    double lambda_scale() const {
        const double range = k_.x.back() - k_.x.front();
        const double frac = 1.0 / 30.0;
        return total_weight_ * range * range * range * frac * frac * frac * frac;
    }

    SmoothingSplineFit fit(double lambda, double gamma_penalty = 1.0) const {
        const std::size_t n = k_.x.size();
        Band b(m_);
        for (std::size_t c = 0; c < m_; ++c) {
            b.d0[c] = r_.d0[c] + lambda * qwq_.d0[c];
            b.d1[c] = r_.d1[c] + lambda * qwq_.d1[c];
            b.d2[c] = r_.d2[c] + lambda * qwq_.d2[c];
        }
        const Ldl f = factor(b);
        const std::vector<double> gamma = solve(f, qty_);
        const Band sigma = inverse_band(f);

        SmoothingSplineFit out;
        out.knots = k_.x;
        out.weights = k_.w;
        out.ybar = k_.ybar;
        out.fitted.resize(n);
        out.second.assign(n, 0.0);
        for (std::size_t c = 0; c < m_; ++c) out.second[c + 1] = gamma[c];
        out.lambda = lambda;
        out.n_samples = static_cast<std::size_t>(total_weight_);

        double rss = k_.within_ss;
        for (std::size_t i = 0; i < n; ++i) {
            const auto cols = columns(i);
            double qg = 0.0;
            for (std::size_t c : cols) qg += q(i, c) * gamma[c];
            out.fitted[i] = k_.ybar[i] - lambda * qg / k_.w[i];
            const double r = k_.ybar[i] - out.fitted[i];
            rss += k_.w[i] * r * r;
        }
        // tr(A) = n - lambda tr(B^-1 Q^T W^-1 Q) = 2 + tr(B^-1 R); only the
        // band of B^-1 is needed and no large terms cancel.
        double tr_br = 0.0;
        for (std::size_t c = 0; c < m_; ++c) {
            tr_br += r_.d0[c] * sigma.d0[c];
            if (c + 1 < m_) tr_br += 2.0 * r_.d1[c] * sigma.d1[c];
        }
        const double resid_trace = static_cast<double>(n) - 2.0 - tr_br;
        out.rss = rss;
        out.trace = static_cast<double>(n) - resid_trace;
        const double denom = 1.0 - gamma_penalty * out.trace / total_weight_;
        out.gcv = (rss / total_weight_) / (denom * denom);
        if (!std::isfinite(out.gcv) || denom <= 0.0) out.gcv = std::numeric_limits<double>::infinity();
        // log of the generalized likelihood score; W(I - A) = lambda Q B^-1 Q^T.
        double quad = 0.0, logdet = 0.0;
        for (std::size_t c = 0; c < m_; ++c) {
            quad += qty_[c] * gamma[c];
            logdet += std::log(f.d[c]);
        }
        out.gml = std::log(k_.within_ss + lambda * quad) - std::log(lambda) + logdet / static_cast<double>(m_);
        if (!std::isfinite(out.gml)) out.gml = std::numeric_limits<double>::infinity();
        return out;
    }

private:
    // Nonzero Q entries: column c touches rows c, c+1, c+2.
    double q(std::size_t i, std::size_t c) const {
        if (i == c) return 1.0 / h_[c];
        if (i == c + 1) return -1.0 / h_[c] - 1.0 / h_[c + 1];
        if (i == c + 2) return 1.0 / h_[c + 1];
        return 0.0;
    }
    std::vector<std::size_t> columns(std::size_t i) const {
        std::vector<std::size_t> cols;
        for (std::size_t c = i >= 2 ? i - 2 : 0; c <= i && c < m_; ++c) cols.push_back(c);
        return cols;
    }

    Knots k_;
    std::size_t m_ = 0;
    std::vector<double> h_;
    Band r_{0}, qwq_{0};
    std::vector<double> qty_;
    double total_weight_ = 0.0;
};

SmoothingSplineFit two_knot_fit(const Knots& k, std::size_t n_samples) {
    SmoothingSplineFit out;
    out.knots = k.x;
    out.weights = k.w;
    out.ybar = k.ybar;
    out.fitted = k.ybar;
    out.second.assign(k.x.size(), 0.0);
    out.rss = k.within_ss;
    out.trace = 2.0;
    out.n_samples = n_samples;
    const double denom = 1.0 - 2.0 / static_cast<double>(n_samples);
    out.gcv = denom > 0.0 ? (out.rss / static_cast<double>(n_samples)) / (denom * denom)
                          : std::numeric_limits<double>::infinity();
    return out;
}

}  // namespace

double SmoothingSplineFit::operator()(double x) const {
    const std::size_t n = knots.size();
    if (n == 1) return fitted[0];
    if (x <= knots.front()) {
        const double h = knots[1] - knots[0];
        const double slope = (fitted[1] - fitted[0]) / h - h / 6.0 * second[1];
        return fitted[0] + slope * (x - knots[0]);
    }
    if (x >= knots.back()) {
        const double h = knots[n - 1] - knots[n - 2];
        const double slope = (fitted[n - 1] - fitted[n - 2]) / h + h / 6.0 * second[n - 2];
        return fitted[n - 1] + slope * (x - knots[n - 1]);
    }
    const auto it = std::upper_bound(knots.begin(), knots.end(), x);
    const std::size_t j = static_cast<std::size_t>(it - knots.begin()) - 1;
    const double h = knots[j + 1] - knots[j];
    const double a = x - knots[j], b = knots[j + 1] - x;
    return (a * fitted[j + 1] + b * fitted[j]) / h -
           a * b / 6.0 * ((1.0 + a / h) * second[j + 1] + (1.0 + b / h) * second[j]);
}

SmoothingSplineFit fit_smoothing_spline(std::span<const double> x, std::span<const double> y,
                                        const SplineOptions& options) {
    if (x.size() != y.size()) throw InvalidArgument("smoothing spline: x and y lengths differ");
    if (x.size() < 4) throw InvalidArgument("smoothing spline: at least 4 samples are required");
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
            throw InvalidArgument("smoothing spline: non-finite samples");
        }
    }
    Knots k = collapse_duplicates(x, y);
    if (k.x.size() < 2) throw InvalidArgument("smoothing spline: all x values are identical");
    if (k.x.size() == 2) return two_knot_fit(k, x.size());

    const Problem problem(std::move(k));
    const double scale = problem.lambda_scale();
    if (options.lambda) {
        if (!(*options.lambda >= 0.0) || !std::isfinite(*options.lambda)) {
            throw InvalidArgument("smoothing spline: lambda must be finite and non-negative");
        }
        auto fit = problem.fit(*options.lambda);
        fit.lambda_scale = scale;
        return fit;
    }
    if (options.gcv_points < 2 || !(options.gcv_lo > 0.0) || !(options.gcv_hi > options.gcv_lo)) {
        throw InvalidArgument("smoothing spline: invalid GCV grid");
    }
    std::optional<SmoothingSplineFit> best;
    const double llo = std::log10(options.gcv_lo), lhi = std::log10(options.gcv_hi);
    for (std::size_t i = 0; i < options.gcv_points; ++i) {
        const double lam = scale * std::pow(10.0, llo + (lhi - llo) * double(i) / double(options.gcv_points - 1));
        SmoothingSplineFit fit;
        try {
            fit = problem.fit(lam, options.gcv_gamma);
        } catch (const NumericalError&) {
            continue;
        }
        const auto score = [&](const SmoothingSplineFit& f) {
            return options.criterion == SmoothingCriterion::gml ? f.gml : f.gcv;
        };
        if (std::isfinite(score(fit)) && (!best || score(fit) < score(*best))) best = std::move(fit);
    }
    if (!best) throw NumericalError("smoothing spline: smoothing-parameter grid exhausted without a finite score");
    best->lambda_scale = scale;
    return *best;
}

ConditionalEstimate ce_smoothing_spline(const ScatterSlice& slice, const UniformGrid& grid,
                                        const SplineOptions& options) {
    const SmoothingSplineFit fit = fit_smoothing_spline(slice.x, slice.y, options);
    ConditionalEstimate est;
    est.grid = grid;
    est.values.assign(grid.n, 0.0);
    est.active.assign(grid.n, false);
    est.method = EstimatorKind::smoothing_spline;
    est.hyperparams = {{"lambda", fit.lambda}, {"lambda_scale", fit.lambda_scale}, {"gcv", fit.gcv},
                       {"effective_dof", fit.trace}};
    est.selection = options.lambda ? "fixed" : options.criterion == SmoothingCriterion::gml ? "gml" : "gcv";
    est.n_samples = slice.x.size();
    const double lo = fit.knots.front(), hi = fit.knots.back();
    for (std::size_t i = 0; i < grid.n; ++i) {
        const double x = grid.node(i);
        if (x < lo || x > hi) continue;
        est.values[i] = fit(x);
        est.active[i] = true;
    }
    return est;
}

}  // namespace ropdf
