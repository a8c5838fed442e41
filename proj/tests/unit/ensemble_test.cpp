#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "ropdf/ensemble.hpp"
#include "ropdf/error.hpp"

using namespace ropdf;

namespace {

std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "ropdf_unit";
    std::filesystem::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST(Ensemble, OscillatorReturnsAfterOnePeriod) {
    const auto m = builtin_model("linear_oscillator");
    IntegrationOptions io;
    io.dt = 2.0 * std::numbers::pi / 6283.0;
    io.t_final = 2.0 * std::numbers::pi;
    io.store_stride = 6283;
    const auto e = integrate_ensemble(m, {{1.0, 0.0}}, io);
    ASSERT_EQ(e.n_times(), 2u);
    EXPECT_NEAR(e.at(0, 1, 0), 1.0, 1e-9);
    EXPECT_NEAR(e.at(0, 1, 1), 0.0, 1e-9);
}

TEST(Ensemble, RungeKuttaIsFourthOrder) {
    const auto m = builtin_model("linear_oscillator");
    auto error_at = [&](double dt) {
        IntegrationOptions io;
        io.dt = dt;
        io.t_final = 2.0;
        io.store_stride = static_cast<std::size_t>(std::lround(2.0 / dt));
        const auto e = integrate_ensemble(m, {{1.0, 0.0}}, io);
        return std::hypot(e.at(0, 1, 0) - std::cos(2.0), e.at(0, 1, 1) + std::sin(2.0));
    };
    const double rate = std::log2(error_at(0.05) / error_at(0.025));
    EXPECT_GE(rate, 3.7);
    EXPECT_LE(rate, 4.3);
}

TEST(Ensemble, KraichnanOrszagInvariantsHold) {
    const auto m = builtin_model("kraichnan_orszag");
    IntegrationOptions io;
    io.dt = 1e-3;
    io.t_final = 10.0;
    io.store_stride = 1000;
    const auto e = simulate(m, 100, 123, io);
    for (std::size_t s = 0; s < e.n_samples(); ++s) {
        const double p0 = e.at(s, 0, 0) * e.at(s, 0, 1);
        const double q0 = e.at(s, 0, 0) * e.at(s, 0, 0) + e.at(s, 0, 1) * e.at(s, 0, 1) + e.at(s, 0, 2) * e.at(s, 0, 2);
        for (std::size_t k = 1; k < e.n_times(); ++k) {
            const double p = e.at(s, k, 0) * e.at(s, k, 1);
            const double q = e.at(s, k, 0) * e.at(s, k, 0) + e.at(s, k, 1) * e.at(s, k, 1) + e.at(s, k, 2) * e.at(s, k, 2);
            EXPECT_LE(std::abs(p - p0), 1e-6 * std::max(std::abs(p0), 1e-12) + 1e-12);
            EXPECT_LE(std::abs(q - q0), 1e-6 * q0);
        }
    }
}

TEST(Ensemble, StoresEndpointsAndUniformTimes) {
    const auto m = builtin_model("kraichnan_orszag");
    IntegrationOptions io;
    io.t_final = 1.0;
    io.store_stride = 50;
    const auto e = simulate(m, 3, 1, io);
    ASSERT_EQ(e.n_times(), 21u);
    EXPECT_DOUBLE_EQ(e.times().front(), 0.0);
    EXPECT_NEAR(e.times().back(), 1.0, 1e-12);
    for (std::size_t k = 1; k < e.n_times(); ++k) EXPECT_NEAR(e.times()[k] - e.times()[k - 1], 0.05, 1e-12);
}

TEST(Ensemble, PartitionAndThreadIndependence) {
    const auto m = builtin_model("kraichnan_orszag");
    IntegrationOptions io;
    io.t_final = 0.5;
    io.store_stride = 10;
    const auto whole = simulate(m, 40, 77, io);
    auto first = simulate(m, 15, 77, io, 0);
    first.append(simulate(m, 25, 77, io, 15));
    EXPECT_EQ(whole.data(), first.data());
    io.threads = 4;
    EXPECT_EQ(simulate(m, 40, 77, io).data(), whole.data());
}

TEST(Ensemble, DivergenceIsAnError) {
    ModelSpec m = builtin_model("advection_test");
    m.drift = [](State x, std::span<double> dx) { dx[0] = x[0] * x[0]; };
    IntegrationOptions io;
    io.dt = 0.01;
    io.t_final = 5.0;
    EXPECT_THROW(integrate_ensemble(m, {{0.1}, {3.0}}, io), Error);
    EXPECT_THROW(integrate_ensemble(m, {}, io), InvalidArgument);
}

TEST(Ensemble, SliceMatchesStoredValues) {
    const auto m = builtin_model("kraichnan_orszag");
    IntegrationOptions io;
    io.t_final = 0.2;
    io.store_stride = 100;
    const auto e = simulate(m, 25, 4, io);
    const auto same = slice(e, 1, 0, [](State s) { return s[0]; });
    EXPECT_EQ(same.x, same.y);
    EXPECT_EQ(same.x.size(), 25u);
    const auto s3 = slice(e, 1, 0, [](State s) { return s[2]; });
    for (std::size_t i = 0; i < 25; ++i) EXPECT_EQ(s3.y[i], e.at(i, 1, 2));
    EXPECT_THROW(slice(e, 9, 0, [](State s) { return s[0]; }), InvalidArgument);
}

TEST(Ensemble, ProjectionKeepsRequestedComponents) {
    const auto m = builtin_model("ring", {{"N", 10}});
    IntegrationOptions io;
    io.t_final = 0.1;
    io.store_stride = 10;
    const auto full = simulate(m, 5, 2, io);
    io.components = {0, 1};
    const auto part = simulate(m, 5, 2, io);
    ASSERT_EQ(part.n_stored(), 2u);
    for (std::size_t s = 0; s < 5; ++s) {
        EXPECT_EQ(part.at(s, 1, 0), full.at(s, 1, 0));
        EXPECT_EQ(part.at(s, 1, 1), full.at(s, 1, 1));
    }
    EXPECT_THROW(part.stored_index(4), InvalidArgument);
}

TEST(Ensemble, PersistRoundTripIsBitIdentical) {
    const auto m = builtin_model("kraichnan_orszag");
    IntegrationOptions io;
    io.t_final = 5.0;
    io.store_stride = 50;
    const auto e = simulate(m, 50, 8, io);
    const auto path = scratch("roundtrip.traj");
    persist(e, path, "abc123");
    EXPECT_EQ(std::filesystem::file_size(path), 50u * 101u * 3u * 8u);
    const auto back = load(path);
    EXPECT_EQ(back.data(), e.data());
    EXPECT_EQ(back.times(), e.times());
    EXPECT_EQ(back.provenance().seed, 8u);
    EXPECT_EQ(back.provenance().model_hash, e.provenance().model_hash);
}

TEST(Ensemble, LoadRejectsEditedManifestAndTruncation) {
    const auto m = builtin_model("kraichnan_orszag");
    IntegrationOptions io;
    io.t_final = 0.1;
    io.store_stride = 50;
    const auto e = simulate(m, 4, 8, io);
    const auto path = scratch("edited.traj");
    persist(e, path);
    const auto sidecar = path.string() + ".json";
    std::string text;
    {
        std::ifstream in(sidecar);
        text.assign(std::istreambuf_iterator<char>(in), {});
    }
    const auto pos = text.find("\"dim\": 3");
    ASSERT_NE(pos, std::string::npos);
    std::string edited = text;
    edited.replace(pos, 8, "\"dim\": 4");
    std::ofstream(sidecar) << edited;
    EXPECT_THROW(load(path), IoError);

    std::ofstream(sidecar) << text;
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 8);
    EXPECT_THROW(load(path), IoError);
}
