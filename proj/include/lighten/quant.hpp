#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include "lighten/toy_vit.hpp"

namespace lighten {

enum class QuantAxis { per_output_channel, per_tensor };

/// Symmetric 8-bit codes in [-127, 127] with one scale per row or per tensor.
struct QuantizedTensor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    QuantAxis axis = QuantAxis::per_output_channel;
    std::vector<std::int8_t> codes;  // row-major
    std::vector<double> scales;      // rows entries, or one

    std::int8_t code(std::size_t i, std::size_t j) const { return codes[i * cols + j]; }
    double scale_for_row(std::size_t i) const {
        return axis == QuantAxis::per_tensor ? scales.front() : scales[i];
    }
};

inline constexpr int kQuantMaxCode = 127;

/// scale = max|value| / 127 over the axis (1 for an all-zero group); codes
/// round half to even.
QuantizedTensor quantize(const Matrix& m, QuantAxis axis);
Matrix dequantize(const QuantizedTensor& q);
/// dequantize(quantize(m, axis)).
Matrix fake_quantize(const Matrix& m, QuantAxis axis);

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;
PhiloxCounter philox4x32_10(PhiloxCounter counter, PhiloxKey key) noexcept;

/// 64-bit FNV-1a of a tensor id.
std::uint64_t fnv1a64(std::string_view s) noexcept;

enum class NoiseDistribution { gaussian, uniform };

/// Unit-variance noise stream keyed by (seed, tensor id).
///
/// Element i uses Philox block i / 2 with counter {i/2 low, i/2 high, h low,
/// h high} and key {seed low, seed high}, where h = fnv1a64(id). The block's
/// two 64-bit words (x0 << 32 | x1, x2 << 32 | x3) become 53-bit uniforms
/// u1 = (w1 >> 11 + 0.5) 2^-53 and u2 = (w2 >> 11) 2^-53. Gaussian: Box-Muller,
/// element 2k is r cos(2 pi u2) and 2k + 1 is r sin(2 pi u2) with
/// r = sqrt(-2 ln u1). Uniform: sqrt(3) (2 u - 1) with u = u1 for even and u2
/// for odd elements.
std::vector<double> noise_stream(std::size_t count, std::uint64_t seed, std::string_view id,
                                 NoiseDistribution dist = NoiseDistribution::gaussian);

/// out = m * (1 + ratio * z), z from noise_stream in row-major order.
Matrix inject_noise(const Matrix& m, double ratio, std::uint64_t seed, std::string_view id = "",
                    NoiseDistribution dist = NoiseDistribution::gaussian);

struct QuantNoiseOptions {
    bool quantize = true;
    double noise_ratio = 0.0;
    std::uint64_t seed = 0;
    NoiseDistribution distribution = NoiseDistribution::gaussian;
};

/// Runs layers with per-channel 8-bit weights and per-tensor 8-bit
/// activations, then multiplicative noise on both. Noise is a fixed
/// realization per (seed, layer, operand).
class QuantNoiseExecutor final : public LinearExecutor {
public:
    explicit QuantNoiseExecutor(QuantNoiseOptions options) : options_(options) {}
    Matrix apply(const std::string& id, const LinearWeights& w, const Matrix& x) const override;

private:
    Matrix weight(const Matrix& m, const std::string& tag) const;
    Matrix activation(const Matrix& m, const std::string& tag) const;
    QuantNoiseOptions options_;
};

}  // namespace lighten
