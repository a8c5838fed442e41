#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "ropdf/error.hpp"
#include "ropdf/model_config.hpp"
#include "ropdf/models.hpp"

using namespace ropdf;

namespace {

std::vector<double> eval(const ModelSpec& m, std::vector<double> x) { return drift(m, x); }

// Random states inside the region where each model is meaningful.
std::vector<double> random_state(const ModelSpec& m, std::mt19937_64& eng) {
    std::vector<double> x(m.dim);
    if (m.name == "malaria") {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        double sum = 0.0;
        for (std::size_t k = 0; k < 9; ++k) sum += (x[k] = u(eng));
        for (std::size_t k = 0; k < 9; ++k) x[k] /= sum;
        x[9] = 0.5 * u(eng);
        x[10] = 0.5 * u(eng);
    } else {
        std::normal_distribution<double> n(0.0, 2.0);
        for (auto& v : x) v = n(eng);
    }
    return x;
}

}  // namespace

TEST(Models, KraichnanOrszagPointEvaluations) {
    const auto m = builtin_model("kraichnan_orszag");
    EXPECT_EQ(eval(m, {0, 0, 0}), (std::vector<double>{0, 0, 0}));
    EXPECT_EQ(eval(m, {1, 1, 1}), (std::vector<double>{1, -1, 0}));
    EXPECT_EQ(eval(m, {2, -1, 3}), (std::vector<double>{6, 3, -3}));
}

TEST(Models, RingDefaultsAndRestState) {
    const auto big = builtin_model("ring");
    EXPECT_EQ(big.dim, 1000u);
    EXPECT_EQ(big.params.at("F"), 10.0);
    EXPECT_EQ(big.params.at("A"), 0.2);
    const auto m = builtin_model("ring", {{"N", 4}});
    EXPECT_EQ(eval(m, {0, 0, 0, 0}), (std::vector<double>{10, 10, 10, 10}));
}

TEST(Models, RingWrapsIndicesPeriodically) {
    const auto m = builtin_model("ring", {{"N", 4}});
    const std::vector<double> x = {0.3, -1.1, 0.7, 2.0};
    const auto d = eval(m, x);
    for (std::size_t i = 0; i < 4; ++i) {
        const double expected = -x[i] * std::sin(x[(i + 1) % 4]) - 0.2 * x[i] + 10.0;
        EXPECT_NEAR(d[i], expected, 1e-14) << i;
    }
}

TEST(Models, DriftRejectsBadInput) {
    const auto m = builtin_model("kraichnan_orszag");
    EXPECT_THROW(eval(m, {1, 2}), InvalidArgument);
    EXPECT_THROW(eval(m, {1, 2, std::nan("")}), InvalidArgument);
}

TEST(Models, UnknownNameAndParameterAreRejected) {
    EXPECT_THROW(builtin_model("lorenz63"), InvalidArgument);
    EXPECT_THROW(builtin_model("ring", {{"G", 1.0}}), InvalidArgument);
    EXPECT_THROW(builtin_model("malaria", {{"init_M_scale", 1.5}}), InvalidArgument);
}

TEST(Models, ReassemblyMatchesDriftForEveryBuiltin) {
    std::mt19937_64 eng(7);
    for (const auto& name : builtin_model_names()) {
        const auto m = name == "ring" ? builtin_model(name, {{"N", 12}}) : builtin_model(name);
        const ReducedForm form = reduced_terms(m, m.qoi_index);
        for (int trial = 0; trial < 1000; ++trial) {
            const auto x = random_state(m, eng);
            double assembled = form.closed(x[m.qoi_index]);
            for (const auto& t : form.terms) assembled += t.coefficient(x[m.qoi_index]) * t.inner(x);
            const double direct = drift(m, x)[m.qoi_index];
            ASSERT_NEAR(assembled, direct, 1e-12 * std::max(1.0, std::abs(direct))) << name;
        }
    }
}

TEST(Models, ReducedTermsMatchTheDocumentedSplit) {
    const auto ko = reduced_terms(builtin_model("kraichnan_orszag"), 0);
    ASSERT_EQ(ko.terms.size(), 1u);
    EXPECT_EQ(ko.closed(1.7), 0.0);
    EXPECT_EQ(ko.terms[0].coefficient(1.5), 1.5);
    EXPECT_EQ(ko.terms[0].inner(std::vector<double>{9, 9, 4}), 4.0);

    const auto ring = reduced_terms(builtin_model("ring", {{"N", 6}}), 0);
    ASSERT_EQ(ring.terms.size(), 1u);
    EXPECT_NEAR(ring.closed(2.0), 10.0 - 0.2 * 2.0, 1e-15);
    EXPECT_EQ(ring.terms[0].coefficient(2.0), -2.0);
    EXPECT_NEAR(ring.terms[0].inner(std::vector<double>{0, 0.5, 0, 0, 0, 0}), std::sin(0.5), 1e-15);

    const auto mm = builtin_model("malaria");
    const std::size_t R = component_index(mm, "R");
    const auto mal = reduced_terms(mm, R);
    ASSERT_EQ(mal.terms.size(), 1u);
    const auto& p = mm.params;
    EXPECT_NEAR(mal.closed(0.3), -(p.at("w") + p.at("mu_h")) * 0.3, 1e-15);
    EXPECT_EQ(mal.terms[0].coefficient(0.3), 1.0);
    std::vector<double> x(mm.dim, 0.0);
    x[component_index(mm, "T_s")] = 0.1;
    x[component_index(mm, "T_a")] = 0.2;
    x[component_index(mm, "I_a")] = 0.05;
    x[component_index(mm, "J_a")] = 0.04;
    x[component_index(mm, "I_s")] = 0.03;
    x[component_index(mm, "J_s")] = 0.02;
    const double expected = p.at("r") * (0.1 + p.at("b") * 0.2) +
                            p.at("sigma") * (p.at("xi") * 0.05 + p.at("xi") * 0.04 + 0.03 + 0.02);
    EXPECT_NEAR(mal.terms[0].inner(x), expected, 1e-15);
}

TEST(Models, MalariaHumanClassesAreConserved) {
    const auto m = builtin_model("malaria");
    std::mt19937_64 eng(3);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto x = random_state(m, eng);
        const auto d = drift(m, x);
        EXPECT_NEAR(std::accumulate(d.begin(), d.begin() + 9, 0.0), 0.0, 1e-12);
    }
}

TEST(Models, MalariaClearanceRateIsSixDays) {
    EXPECT_DOUBLE_EQ(builtin_model("malaria").params.at("r"), 1.0 / 6.0);
}

TEST(Models, SamplingIsDeterministicAndPartitionFree) {
    const auto m = builtin_model("kraichnan_orszag");
    EXPECT_EQ(sample_initial(m, 1, 42), sample_initial(m, 1, 42));
    const auto all = sample_initial(m, 10, 9);
    auto a = sample_initial(m, 4, 9, 0);
    const auto b = sample_initial(m, 6, 9, 4);
    a.insert(a.end(), b.begin(), b.end());
    EXPECT_EQ(all, a);
    EXPECT_NE(sample_initial(m, 1, 1), sample_initial(m, 1, 2));
}

TEST(Models, MalariaSamplesSatisfyTheSimplex) {
    const auto m = builtin_model("malaria");
    for (const auto& x : sample_initial(m, 2000, 5)) {
        EXPECT_NEAR(std::accumulate(x.begin(), x.begin() + 9, 0.0), 1.0, 1e-12);
        for (std::size_t k = 0; k < 9; ++k) {
            EXPECT_GE(x[k], 0.0);
            EXPECT_LE(x[k], 1.0);
        }
        EXPECT_LE(x[9] + x[10], 1.0);
    }
}

TEST(Models, GaussianStaticSampleMeansWithinStandardError) {
    const auto m = builtin_model("gaussian_static");
    const std::size_t M = 1000000;
    const auto xs = sample_initial(m, M, 11);
    double s1 = 0, s2 = 0, c = 0;
    for (const auto& x : xs) {
        s1 += x[0];
        s2 += x[1];
    }
    s1 /= double(M);
    s2 /= double(M);
    for (const auto& x : xs) c += (x[0] - s1) * (x[1] - s2);
    c /= double(M);
    EXPECT_LT(std::abs(s1 - 0.0), 4.0 * 1.0 / std::sqrt(double(M)));
    EXPECT_LT(std::abs(s2 - 2.0), 4.0 * 2.0 / std::sqrt(double(M)));
    // covariance rho * s1 * s2 = 1.5; its standard error is below 0.003 here
    EXPECT_NEAR(c, 1.5, 0.012);
}

TEST(Models, JsonRoundTripPreservesDefinition) {
    const auto m = builtin_model("ring", {{"N", 8}, {"F", 8}});
    const auto back = model_from_json(model_to_json(m));
    EXPECT_EQ(model_hash(back), model_hash(m));
    EXPECT_EQ(back.dim, 8u);
    EXPECT_EQ(back.params.at("F"), 8.0);
    EXPECT_THROW(model_from_json("{\"name\": \"ring\", \"params\": {\"Q\": 1}}"), InvalidArgument);
    EXPECT_THROW(model_from_json("{\"name\": \"ring\", \"dim\": 7}"), InvalidArgument);
    EXPECT_THROW(model_from_json("{\"name\": \"ring\", \"colour\": 1}"), InvalidArgument);
}

TEST(Models, ComponentLookup) {
    const auto m = builtin_model("malaria");
    EXPECT_EQ(component_index(m, "R"), 8u);
    EXPECT_THROW(component_index(m, "Z"), InvalidArgument);
}
