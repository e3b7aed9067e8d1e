#include <doctest.h>

#include <cmath>

#include "lighten/error.hpp"
#include "lighten/quant.hpp"
#include "lighten/random.hpp"
#include "test_util.hpp"

using namespace lighten;

TEST_CASE("representable grid round trips exactly") {
    const double s = 0.0375;
    Matrix m(2, 255);
    for (int k = -127; k <= 127; ++k) {
        m(0, static_cast<std::size_t>(k + 127)) = k * s;
        m(1, static_cast<std::size_t>(k + 127)) = k * 2.0;
    }
    const QuantizedTensor q = quantize(m, QuantAxis::per_output_channel);
    CHECK(dequantize(q) == m);
    CHECK(q.scales[0] == doctest::Approx(s).epsilon(1e-15));
    CHECK(q.code(0, 0) == -127);
}

TEST_CASE("zero matrix") {
    const QuantizedTensor q = quantize(Matrix(3, 4), QuantAxis::per_output_channel);
    for (double s : q.scales) CHECK(s == 1.0);
    for (auto c : q.codes) CHECK(c == 0);
    const QuantizedTensor t = quantize(Matrix(3, 4), QuantAxis::per_tensor);
    CHECK(t.scales == std::vector<double>{1.0});
}

TEST_CASE("error bound, code range, idempotence") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed);
        const Matrix m = random_normal(9, 13, rng, 1.0 + static_cast<double>(seed));
        const QuantAxis axis = seed % 2 ? QuantAxis::per_tensor : QuantAxis::per_output_channel;
        const QuantizedTensor q = quantize(m, axis);
        const Matrix back = dequantize(q);
        for (std::size_t i = 0; i < m.rows(); ++i)
            for (std::size_t j = 0; j < m.cols(); ++j) {
                CHECK(std::abs(m(i, j) - back(i, j)) <= q.scale_for_row(i) / 2.0);
                CHECK(std::abs(static_cast<int>(q.code(i, j))) <= kQuantMaxCode);
            }
        const QuantizedTensor again = quantize(back, axis);
        CHECK(again.codes == q.codes);
        CHECK(fake_quantize(m, axis) == back);
    }
}

TEST_CASE("round half to even") {
    // Row max 127 gives scale 1, so codes equal rounded values.
    const Matrix m{{127, 0.5, 1.5, 2.5, -0.5, -2.5}};
    const QuantizedTensor q = quantize(m, QuantAxis::per_output_channel);
    CHECK(q.code(0, 1) == 0);
    CHECK(q.code(0, 2) == 2);
    CHECK(q.code(0, 3) == 2);
    CHECK(q.code(0, 4) == 0);
    CHECK(q.code(0, 5) == -2);
}

TEST_CASE("Philox4x32-10 known answers") {
    using C = PhiloxCounter;
    CHECK(philox4x32_10({0, 0, 0, 0}, {0, 0}) == C{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(philox4x32_10({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
          C{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(philox4x32_10({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
          C{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("noise stream layout") {
    const auto z = noise_stream(4, 11, "layer/w");
    const std::uint64_t h = fnv1a64("layer/w");
    const auto x = philox4x32_10({0, 0, static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)}, {11, 0});
    const std::uint64_t w1 = (static_cast<std::uint64_t>(x[0]) << 32) | x[1];
    const std::uint64_t w2 = (static_cast<std::uint64_t>(x[2]) << 32) | x[3];
    const double u1 = (static_cast<double>(w1 >> 11) + 0.5) * 0x1.0p-53;
    const double u2 = static_cast<double>(w2 >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    CHECK(z[0] == r * std::cos(2.0 * M_PI * u2));
    CHECK(z[1] == r * std::sin(2.0 * M_PI * u2));

    CHECK(noise_stream(4, 11, "layer/w") == z);
    CHECK(noise_stream(4, 12, "layer/w") != z);
    CHECK(noise_stream(4, 11, "layer/a") != z);
    const auto u = noise_stream(2, 11, "layer/w", NoiseDistribution::uniform);
    CHECK(u[0] == std::sqrt(3.0) * (2.0 * u1 - 1.0));
}

TEST_CASE("inject noise") {
    Rng rng(1);
    const Matrix m = random_normal(5, 6, rng);
    CHECK(inject_noise(m, 0.0, 3) == m);
    CHECK(inject_noise(m, 0.03, 3, "t") == inject_noise(m, 0.03, 3, "t"));
    CHECK_THROWS_AS(inject_noise(m, -0.1, 3), InvalidArgument);

    const std::size_t n = 1000000;
    const Matrix ones(1000, 1000, 1.0);
    for (auto dist : {NoiseDistribution::gaussian, NoiseDistribution::uniform}) {
        const Matrix out = inject_noise(ones, 0.03, 42, "big", dist);
        double mean = 0.0, sq = 0.0;
        for (double v : out.data()) {
            mean += v - 1.0;
            sq += (v - 1.0) * (v - 1.0);
        }
        mean /= static_cast<double>(n);
        const double sd = std::sqrt(sq / static_cast<double>(n) - mean * mean);
        CHECK(std::abs(sd - 0.03) <= 0.003);
    }

    // Signs survive wherever ratio |z| < 1.
    const Matrix big = random_normal(100, 100, rng);
    const auto z = noise_stream(big.size(), 5, "s");
    const Matrix noisy = inject_noise(big, 0.03, 5, "s");
    for (std::size_t i = 0; i < big.size(); ++i)
        if (0.03 * std::abs(z[i]) < 1.0) CHECK((noisy.data()[i] > 0) == (big.data()[i] > 0));
}

TEST_CASE("quant-noise executor") {
    ToyDims dims;
    dims.hidden = 16;
    dims.heads = 2;
    dims.in_dim = 8;
    dims.classes = 5;
    const ToyViT m = make_toy_vit(dims, 3);
    Rng rng(2);
    const Matrix x = random_normal(8, 6, rng);
    QuantNoiseOptions quant_only;
    QuantNoiseOptions zero_noise;
    zero_noise.noise_ratio = 0.0;
    zero_noise.seed = 99;
    const QuantNoiseExecutor a(quant_only), b(zero_noise);
    ForwardOptions oa, ob;
    oa.executor = &a;
    ob.executor = &b;
    CHECK(forward(m, x, oa).logits == forward(m, x, ob).logits);

    QuantNoiseOptions off;
    off.quantize = false;
    const QuantNoiseExecutor c(off);
    ForwardOptions oc;
    oc.executor = &c;
    CHECK(forward(m, x, oc).logits == forward(m, x).logits);

    QuantNoiseOptions noisy;
    noisy.noise_ratio = 0.03;
    noisy.seed = 1;
    const QuantNoiseExecutor d(noisy);
    ForwardOptions od;
    od.executor = &d;
    const Matrix ld = forward(m, x, od).logits;
    CHECK(ld == forward(m, x, od).logits);
    CHECK(ld != forward(m, x, oa).logits);
    CHECK(test::relative_diff(ld, forward(m, x).logits) < 0.2);
}
