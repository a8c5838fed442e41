#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "ropdf/error.hpp"
#include "ropdf/estimators.hpp"

using namespace ropdf;

namespace {

ScatterSlice gaussian_benchmark(std::size_t M, std::uint64_t seed) {
    const auto m = builtin_model("gaussian_static");
    ScatterSlice s;
    for (const auto& x : sample_initial(m, M, seed)) {
        s.x.push_back(x[0]);
        s.y.push_back(x[1]);
    }
    return s;
}

double rms_from_line(const ConditionalEstimate& e) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < e.grid.n; ++i) {
        const double x = e.grid.node(i);
        if (x < -2.0 || x > 2.0) continue;
        const double d = e.values[i] - (2.0 + 1.5 * x);
        sum += d * d;
        ++n;
    }
    return std::sqrt(sum / double(n));
}

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

const UniformGrid bench_grid(-4.0, 4.0, 161);

}  // namespace

TEST(MovingAverage, PreservesConstants) {
    std::mt19937_64 eng(1);
    std::normal_distribution<double> n;
    ScatterSlice s;
    for (int i = 0; i < 500; ++i) {
        s.x.push_back(n(eng));
        s.y.push_back(3.25);
    }
    const auto e = ce_moving_average(s, bench_grid);
    for (std::size_t i = 0; i < e.grid.n; ++i) EXPECT_NEAR(e.values[i], e.active[i] ? 3.25 : 0.0, 1e-12);
}

TEST(MovingAverage, SingleBinGivesGlobalMean) {
    const auto s = gaussian_benchmark(300, 2);
    double mean = 0.0;
    for (double y : s.y) mean += y;
    mean /= double(s.y.size());
    MovingAverageOptions o;
    o.bins = 1;
    const auto e = ce_moving_average(s, bench_grid, o);
    for (std::size_t i = 0; i < e.grid.n; ++i) {
        if (e.active[i]) EXPECT_NEAR(e.values[i], mean, 1e-12);
    }
}

TEST(MovingAverage, InactiveOutsideSampleRange) {
    const auto s = gaussian_benchmark(200, 3);
    const auto [lo, hi] = std::minmax_element(s.x.begin(), s.x.end());
    const auto e = ce_moving_average(s, bench_grid);
    for (std::size_t i = 0; i < e.grid.n; ++i) {
        const double x = e.grid.node(i);
        if (x < *lo || x > *hi) {
            EXPECT_FALSE(e.active[i]);
            EXPECT_EQ(e.values[i], 0.0);
        }
    }
}

TEST(MovingAverage, RejectsDegenerateSlices) {
    ScatterSlice s{0.0, {1, 1, 1, 1, 1, 1}, {0, 1, 2, 3, 4, 5}};
    EXPECT_THROW(ce_moving_average(s, bench_grid), InvalidArgument);
    EXPECT_THROW(ce_moving_average(ScatterSlice{}, bench_grid), InvalidArgument);
}

TEST(SmoothingSpline, ZeroLambdaInterpolates) {
    std::vector<double> x = {0.0, 0.4, 1.1, 1.5, 2.3, 3.0, 3.2};
    std::vector<double> y = {1.0, -0.5, 2.0, 0.1, 0.7, -1.2, 0.4};
    SplineOptions o;
    o.lambda = 0.0;
    const auto f = fit_smoothing_spline(x, y, o);
    for (std::size_t i = 0; i < x.size(); ++i) {
        EXPECT_NEAR(f.fitted[i], y[i], 1e-10);
        EXPECT_NEAR(f(x[i]), y[i], 1e-10);
    }
    EXPECT_EQ(f.second.front(), 0.0);
    EXPECT_EQ(f.second.back(), 0.0);
}

TEST(SmoothingSpline, HugeLambdaTendsToLeastSquaresLine) {
    const auto s = gaussian_benchmark(400, 4);
    const double n = double(s.x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
        sx += s.x[i];
        sy += s.y[i];
        sxx += s.x[i] * s.x[i];
        sxy += s.x[i] * s.y[i];
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double icpt = (sy - slope * sx) / n;
    SplineOptions o;
    o.lambda = 1e14;
    const auto f = fit_smoothing_spline(s.x, s.y, o);
    for (double x : {-1.5, 0.0, 0.7, 1.9}) EXPECT_NEAR(f(x), icpt + slope * x, 1e-6);
}

TEST(SmoothingSpline, ResidualsSatisfyPenalizedNormalEquations) {
    const auto s = gaussian_benchmark(300, 5);
    const auto f = fit_smoothing_spline(s.x, s.y);
    double wr = 0, wrx = 0, fwr = 0, scale = 0;
    for (std::size_t i = 0; i < f.knots.size(); ++i) {
        const double r = f.ybar[i] - f.fitted[i];
        wr += f.weights[i] * r;
        wrx += f.weights[i] * r * f.knots[i];
        fwr += f.weights[i] * f.fitted[i] * r;
        scale += f.weights[i] * std::abs(f.fitted[i] * r);
    }
    double roughness = 0.0;
    for (std::size_t i = 0; i + 1 < f.knots.size(); ++i) {
        const double h = f.knots[i + 1] - f.knots[i];
        const double a = f.second[i], b = f.second[i + 1];
        roughness += h / 3.0 * (a * a + a * b + b * b);
    }
    EXPECT_NEAR(wr, 0.0, 1e-8 * scale);
    EXPECT_NEAR(wrx, 0.0, 1e-8 * scale * 4.0);
    EXPECT_NEAR(fwr, f.lambda * roughness, 1e-8 * scale);
}

TEST(SmoothingSpline, DuplicatesAreAveragedWithWeights) {
    std::vector<double> x = {0, 1, 1, 2, 3, 4, 4, 4};
    std::vector<double> y = {0, 1, 3, 2, 5, 1, 2, 6};
    SplineOptions o;
    o.lambda = 0.0;
    const auto f = fit_smoothing_spline(x, y, o);
    ASSERT_EQ(f.knots.size(), 5u);
    EXPECT_EQ(f.weights[1], 2.0);
    EXPECT_EQ(f.weights[4], 3.0);
    EXPECT_NEAR(f(1.0), 2.0, 1e-10);
    EXPECT_NEAR(f(4.0), 3.0, 1e-10);
    EXPECT_EQ(f.n_samples, 8u);
}

TEST(SmoothingSpline, NearDuplicateAbscissaeAreMerged) {
    std::vector<double> x, y;
    for (int i = 0; i < 50; ++i) {
        x.push_back(0.1 * i);
        y.push_back(std::sin(0.1 * i));
    }
    x.push_back(2.0 + 1e-13);
    y.push_back(std::sin(2.0) + 0.01);
    SplineOptions o;
    o.lambda = 1e-8;
    SmoothingSplineFit f;
    ASSERT_NO_THROW(f = fit_smoothing_spline(x, y, o));
    EXPECT_EQ(f.knots.size(), 50u);
}

TEST(SmoothingSpline, TraceInflationSmoothsMore) {
    const auto s = gaussian_benchmark(500, 6);
    SplineOptions classic;
    classic.gcv_gamma = 1.0;
    SplineOptions inflated;
    inflated.gcv_gamma = 2.0;
    const auto a = fit_smoothing_spline(s.x, s.y, classic);
    const auto b = fit_smoothing_spline(s.x, s.y, inflated);
    EXPECT_GE(b.lambda, a.lambda);
    EXPECT_LE(b.trace, a.trace + 1e-12);
    EXPECT_GE(a.trace, 2.0 - 1e-9);
    EXPECT_LE(a.trace, double(a.knots.size()) + 1e-9);
}

TEST(SmoothingSpline, GmlCriterionSelectsAFiniteFit) {
    const auto s = gaussian_benchmark(500, 6);
    SplineOptions o;
    o.criterion = SmoothingCriterion::gml;
    const auto f = fit_smoothing_spline(s.x, s.y, o);
    EXPECT_TRUE(std::isfinite(f.gml));
    EXPECT_GT(f.lambda, 0.0);
}

TEST(SmoothingSpline, RejectsBadInput) {
    std::vector<double> x = {1, 1, 1, 1, 1}, y = {1, 2, 3, 4, 5};
    EXPECT_THROW(fit_smoothing_spline(x, y), InvalidArgument);
    std::vector<double> few = {1, 2, 3};
    EXPECT_THROW(fit_smoothing_spline(few, few), InvalidArgument);
    SplineOptions o;
    o.lambda = -1.0;
    std::vector<double> ok = {0, 1, 2, 3, 4};
    EXPECT_THROW(fit_smoothing_spline(ok, ok, o), InvalidArgument);
}

TEST(SmoothingSpline, GaussianBenchmarkBeatsMovingAverageOnAverage) {
    double spline = 0.0, average = 0.0;
    for (std::uint64_t seed = 100; seed < 110; ++seed) {
        const auto s = gaussian_benchmark(1000, seed);
        spline += rms_from_line(ce_smoothing_spline(s, bench_grid));
        average += rms_from_line(ce_moving_average(s, bench_grid));
    }
    EXPECT_LT(spline, average);
}

TEST(Estimators, ErrorDecaysWithSampleSize) {
    for (const auto kind : {EstimatorKind::moving_average, EstimatorKind::smoothing_spline}) {
        std::vector<double> errs;
        for (std::size_t M : {10u, 100u, 1000u, 10000u}) {
            double e = 0.0;
            for (std::uint64_t seed = 0; seed < 5; ++seed) {
                EstimatorOptions o;
                o.kind = kind;
                e += rms_from_line(estimate_conditional(gaussian_benchmark(M, 1000 + seed), bench_grid, o));
            }
            errs.push_back(e);
        }
        int inversions = 0;
        for (std::size_t i = 1; i < errs.size(); ++i) inversions += errs[i] > errs[i - 1];
        EXPECT_LE(inversions, 1) << to_string(kind);
        EXPECT_LT(errs.back(), errs.front()) << to_string(kind);
    }
}

TEST(Estimators, ZeroOutsideTheActiveRegion) {
    const auto s = gaussian_benchmark(300, 9);
    for (const auto kind : {EstimatorKind::moving_average, EstimatorKind::smoothing_spline}) {
        EstimatorOptions o;
        o.kind = kind;
        const auto e = estimate_conditional(s, bench_grid, o);
        for (std::size_t i = 0; i < e.grid.n; ++i) {
            if (!e.active[i]) EXPECT_EQ(e.values[i], 0.0);
            EXPECT_TRUE(std::isfinite(e.values[i]));
        }
    }
}

TEST(Estimators, RestrictToNarrowsTheMask) {
    const auto s = gaussian_benchmark(300, 10);
    auto e = ce_smoothing_spline(s, bench_grid);
    Mask keep(e.grid.n, false);
    for (std::size_t i = 70; i < 90; ++i) keep[i] = true;
    e.restrict_to(keep);
    for (std::size_t i = 0; i < e.grid.n; ++i) {
        if (!keep[i]) {
            EXPECT_FALSE(e.active[i]);
            EXPECT_EQ(e.values[i], 0.0);
        }
    }
}

TEST(Kde, StandardNormalWithinOnePercent) {
    std::mt19937_64 eng(12);
    std::normal_distribution<double> n;
    std::vector<double> x(100000);
    for (auto& v : x) v = n(eng);
    const UniformGrid g(-6.0, 6.0, 240);
    const auto p = kde_pdf(x, g);
    double worst = 0.0;
    for (std::size_t i = 0; i < g.n; ++i) worst = std::max(worst, std::abs(p.values[i] - normal_pdf(g.node(i))));
    EXPECT_LT(worst, 0.01);
    EXPECT_NEAR(p.integral(), 1.0, 1e-8);
}

TEST(Kde, TwoPointSampleIsSymmetric) {
    std::vector<double> x = {-0.7, 0.7};
    const UniformGrid g(-5.0, 5.0, 200);
    const auto p = kde_pdf(x, g, 0.5);
    for (std::size_t i = 1; i < g.n; ++i) EXPECT_NEAR(p.values[i], p.values[g.n - i], 1e-14);
    EXPECT_NEAR(p.integral(), 1.0, 1e-8);
}

TEST(Kde, SilvermanRuleAndErrors) {
    std::vector<double> x = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    double mean = 5.5, var = 0;
    for (double v : x) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / 9.0);
    const double iqr = 7.75 - 3.25;
    EXPECT_NEAR(silverman_bandwidth(x), 0.9 * std::min(sd, iqr / 1.34) * std::pow(10.0, -0.2), 1e-3);
    std::vector<double> flat = {2, 2, 2};
    EXPECT_THROW(kde_pdf(flat, UniformGrid(0, 4, 16)), InvalidArgument);
    std::vector<double> one = {2};
    EXPECT_THROW(kde_pdf(one, UniformGrid(0, 4, 16)), InvalidArgument);
}

TEST(Cumulants, MatchBruteForceMoments) {
    std::mt19937_64 eng(13);
    std::normal_distribution<double> n(0.5, 1.0);
    std::vector<double> xi(100), xj(100);
    for (std::size_t m = 0; m < 100; ++m) {
        xj[m] = n(eng);
        xi[m] = 0.3 * xj[m] + n(eng);
    }
    const auto c = cumulants(xi, xj, 5);
    ASSERT_EQ(c.size(), 5u);
    double fact = 1.0;
    for (std::size_t k = 1; k <= 5; ++k) {
        fact *= double(k);
        long double a = 0, b = 0, ab = 0;
        for (std::size_t m = 0; m < 100; ++m) {
            const long double pk = std::pow((long double)xj[m], (long double)k);
            a += xi[m];
            b += pk;
            ab += xi[m] * pk;
        }
        const double expected = double(ab / 100 - (a / 100) * (b / 100));
        EXPECT_EQ(c[k - 1].k, k);
        EXPECT_NEAR(c[k - 1].value, expected, 1e-12 * std::max(1.0, std::abs(expected)));
        EXPECT_NEAR(c[k - 1].rescaled, std::abs(c[k - 1].value) / fact, 1e-15);
    }
}

TEST(Cumulants, FirstIsTheCovarianceAndIndependenceGivesZero) {
    std::mt19937_64 eng(14);
    std::normal_distribution<double> n;
    std::vector<double> xi(200000), xj(200000);
    for (std::size_t m = 0; m < xi.size(); ++m) {
        xi[m] = n(eng);
        xj[m] = n(eng);
    }
    const auto c = cumulants(xi, xj, 3);
    double mi = 0, mj = 0, cov = 0;
    for (std::size_t m = 0; m < xi.size(); ++m) {
        mi += xi[m];
        mj += xj[m];
    }
    mi /= double(xi.size());
    mj /= double(xi.size());
    for (std::size_t m = 0; m < xi.size(); ++m) cov += (xi[m] - mi) * (xj[m] - mj);
    cov /= double(xi.size());
    EXPECT_NEAR(c[0].value, cov, 1e-12);
    // standard errors for k = 1, 2, 3 are 1, sqrt(3), sqrt(15) over sqrt(M)
    EXPECT_LT(std::abs(c[0].value), 5.0 / std::sqrt(2e5));
    EXPECT_LT(std::abs(c[1].value), 5.0 * std::sqrt(3.0) / std::sqrt(2e5));
    EXPECT_LT(std::abs(c[2].value), 5.0 * std::sqrt(15.0) / std::sqrt(2e5));
}

TEST(ActiveMask, ThresholdBehaviour) {
    const UniformGrid g(-6.0, 6.0, 120);
    GridFunction1D p(g, FieldKind::pdf);
    for (std::size_t i = 0; i < g.n; ++i) p.values[i] = normal_pdf(g.node(i));
    Mask prev(g.n, true);
    for (double eps : {1e-300, 1e-6, 1e-3, 0.1, 0.5}) {
        const Mask m = active_mask(p, eps);
        const auto first = std::find(m.begin(), m.end(), true);
        const auto last = std::find(m.rbegin(), m.rend(), true).base();
        EXPECT_TRUE(std::all_of(first, last, [](bool b) { return b; }));
        EXPECT_TRUE(m[60]);
        for (std::size_t i = 0; i < g.n; ++i) {
            if (m[i]) EXPECT_TRUE(prev[i]);
        }
        prev = m;
    }
    const Mask all = active_mask(p, 1e-300);
    for (std::size_t i = 0; i < g.n; ++i) EXPECT_EQ(all[i], p.values[i] > 0.0);
}

TEST(ActiveMask, KeepsTheLongestRun) {
    const UniformGrid g(0.0, 10.0, 10);
    GridFunction1D p(g, std::vector<double>{0, 1, 0, 0, 1, 1, 1, 0, 1, 0}, FieldKind::pdf);
    const Mask m = active_mask(p, 0.5);
    EXPECT_EQ(m, (Mask{false, false, false, false, true, true, true, false, false, false}));
}
