#include <cstring>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "phid/traces.hpp"

namespace phid {
namespace {

namespace fs = std::filesystem;

fs::path temp_path(const std::string& name)
{
    return fs::temp_directory_path() / ("phid_test_" + std::to_string(::getpid()) + "_" + name);
}

TraceTensor random_trace(std::mt19937_64& rng, std::size_t steps, std::size_t layers, std::size_t heads)
{
    std::normal_distribution<float> nd(0.0f, 3.0f);
    TraceTensor t;
    t.steps = steps;
    t.layers = layers;
    t.heads_per_layer = heads;
    t.layer_of_head = TraceTensor::default_layer_of_head(layers, heads);
    t.values.resize(steps * layers * heads);
    for (double& v : t.values) v = static_cast<double>(nd(rng)); // float32-representable
    t.model_id = "toy-é";
    t.task_label = "modadd";
    if (steps > 4) t.segment_starts = {0, steps / 2};
    return t;
}

TEST(Traces, WriteReadRoundTripIsBitExact)
{
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<std::size_t> d(1, 6);
    const fs::path p = temp_path("rt.phid");
    for (int trial = 0; trial < 25; ++trial) {
        TraceTensor t = random_trace(rng, d(rng) * 5, d(rng), d(rng));
        if (trial % 2) t.run_config = {{"seed", trial}, {"copula", true}};
        write_trace(t, p);
        const TraceTensor back = read_head_trace(p);
        EXPECT_EQ(back.steps, t.steps);
        EXPECT_EQ(back.layers, t.layers);
        EXPECT_EQ(back.heads_per_layer, t.heads_per_layer);
        EXPECT_EQ(back.layer_of_head, t.layer_of_head);
        EXPECT_EQ(back.model_id, t.model_id);
        EXPECT_EQ(back.task_label, t.task_label);
        EXPECT_EQ(back.segment_starts, t.segment_starts);
        EXPECT_EQ(back.run_config, t.run_config);
        ASSERT_EQ(back.values.size(), t.values.size());
        EXPECT_EQ(std::memcmp(back.values.data(), t.values.data(), t.values.size() * sizeof(double)), 0);
        EXPECT_EQ(encode_trace(back), encode_trace(t));
    }
    fs::remove(p);
}

TEST(Traces, ResidualRoundTripAndAdditivity)
{
    ResidualTrace r;
    r.resize(4, 2, 3);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    for (std::size_t t = 0; t < 4; ++t) {
        for (std::size_t k = 0; k < 3; ++k) r.h[(t * 3 + 0) * 3 + k] = u(rng);
        for (std::size_t l = 0; l < 2; ++l)
            for (std::size_t k = 0; k < 3; ++k) {
                const std::size_t i = (t * 2 + l) * 3 + k;
                r.a[i] = u(rng);
                r.m[i] = u(rng);
                r.h[(t * 3 + l + 1) * 3 + k] = r.h[(t * 3 + l) * 3 + k] + r.a[i] + r.m[i];
            }
    }
    EXPECT_LT(r.max_additivity_error(), 1e-15);
    const auto any = decode_trace(encode_trace(r));
    const auto& back = std::get<ResidualTrace>(any);
    EXPECT_EQ(back.steps, 4u);
    EXPECT_EQ(back.layers, 2u);
    EXPECT_EQ(back.d_model, 3u);
    // float32 storage keeps additivity to single precision
    EXPECT_LT(back.max_additivity_error(), 1e-4);
    EXPECT_EQ(encode_trace(std::get<ResidualTrace>(decode_trace(encode_trace(back)))), encode_trace(back));
}

TEST(Traces, ZeroStepsIsValidationError)
{
    Container c;
    c.header = {{"version", 1}, {"kind", "head_norms"}, {"dims", {{"T", 0}, {"N", 2}, {"L", 1}, {"H", 2}}}};
    EXPECT_THROW(decode_trace(encode_container(c)), ValidationError);
}

TEST(Traces, TruncatedPayloadNamesByteCounts)
{
    std::mt19937_64 rng(3);
    auto bytes = encode_trace(random_trace(rng, 20, 2, 2));
    const std::size_t full = bytes.size();
    bytes.pop_back();
    try {
        decode_trace(bytes);
        FAIL() << "expected TruncatedError";
    } catch (const TruncatedError& e) {
        EXPECT_EQ(e.expected(), full);
        EXPECT_EQ(e.actual(), full - 1);
        EXPECT_NE(std::string(e.what()).find(std::to_string(full)), std::string::npos);
    }
}

TEST(Traces, DistinctParseErrors)
{
    std::mt19937_64 rng(4);
    const auto good = encode_trace(random_trace(rng, 20, 2, 2));

    auto bad_magic = good;
    bad_magic[0] = 'X';
    EXPECT_THROW(decode_trace(bad_magic), BadMagicError);

    auto trailing = good;
    trailing.push_back(0);
    EXPECT_THROW(decode_trace(trailing), ShapeMismatchError);

    auto version = good;
    version[4] = 2;
    EXPECT_THROW(decode_trace(version), ParseError);

    Container c;
    c.header = {{"kind", "head_norms"}, {"dims", {{"T", 2}, {"N", 3}, {"L", 1}, {"H", 2}}}};
    c.payload.resize(6);
    EXPECT_THROW(decode_trace(encode_container(c)), ShapeMismatchError);

    c.header = {{"kind", "head_norms"},
                {"dims", {{"T", 2}, {"N", 2}, {"L", 1}, {"H", 2}}},
                {"layer_of_head", {0, 0, 0}}};
    c.payload.resize(4);
    EXPECT_THROW(decode_trace(encode_container(c)), ShapeMismatchError);

    EXPECT_THROW(decode_trace(std::vector<std::uint8_t>{'P', 'H'}), BadMagicError);
    EXPECT_THROW(read_trace(temp_path("does_not_exist")), IoError);
}

TEST(Traces, KindMismatchOnTypedRead)
{
    ResidualTrace r;
    r.resize(2, 1, 2);
    const fs::path p = temp_path("res.phid");
    write_trace(r, p);
    EXPECT_THROW(read_head_trace(p), ValidationError);
    EXPECT_NO_THROW(read_residual_trace(p));
    fs::remove(p);
}

TraceTensor single_head(std::vector<double> v)
{
    TraceTensor t;
    t.steps = v.size();
    t.layers = 1;
    t.heads_per_layer = 1;
    t.layer_of_head = {0};
    t.values = std::move(v);
    return t;
}

TEST(Standardize, UnitVarianceZeroMean)
{
    const auto s = standardize(single_head({1, 2, 3}));
    const auto& v = s.trace.values;
    EXPECT_NEAR(v[0] + v[1] + v[2], 0.0, 1e-15);
    EXPECT_NEAR((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) / 3.0, 1.0, 1e-15);
    EXPECT_FALSE(s.degenerate[0]);
}

TEST(Standardize, ConstantSeriesFlaggedAndZeroed)
{
    const auto s = standardize(single_head({5, 5, 5}));
    EXPECT_TRUE(s.degenerate[0]);
    EXPECT_EQ(s.trace.values, (std::vector<double>{0, 0, 0}));
}

TEST(Standardize, Idempotent)
{
    std::mt19937_64 rng(5);
    const TraceTensor t = random_trace(rng, 64, 3, 4);
    const auto once = standardize(t);
    const auto twice = standardize(once.trace);
    for (std::size_t i = 0; i < t.values.size(); ++i) EXPECT_NEAR(twice.trace.values[i], once.trace.values[i], 1e-12);
    EXPECT_THROW(standardize(single_head({1})), ValidationError);
}

} // namespace
} // namespace phid
