#include "lighten/quant.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lighten/error.hpp"

namespace lighten {
namespace {

double group_scale(double peak) { return peak > 0.0 ? peak / kQuantMaxCode : 1.0; }

std::int8_t encode(double v, double scale) {
    const double c = std::clamp(std::nearbyint(v / scale), -double{kQuantMaxCode}, double{kQuantMaxCode});
    return static_cast<std::int8_t>(c);
}

}  // namespace

QuantizedTensor quantize(const Matrix& m, QuantAxis axis) {
    if (!m.all_finite()) throw NumericError("quantize: non-finite input");
    QuantizedTensor q;
    q.rows = m.rows();
    q.cols = m.cols();
    q.axis = axis;
    q.codes.resize(m.size());
    if (axis == QuantAxis::per_tensor) {
        double peak = 0.0;
        for (double v : m.data()) peak = std::max(peak, std::abs(v));
        q.scales = {group_scale(peak)};
    } else {
        q.scales.resize(m.rows());
        for (std::size_t i = 0; i < m.rows(); ++i) {
            double peak = 0.0;
            for (double v : m.row(i)) peak = std::max(peak, std::abs(v));
            q.scales[i] = group_scale(peak);
        }
    }
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) q.codes[i * q.cols + j] = encode(m(i, j), q.scale_for_row(i));
    return q;
}

Matrix dequantize(const QuantizedTensor& q) {
    Matrix m(q.rows, q.cols);
    for (std::size_t i = 0; i < q.rows; ++i)
        for (std::size_t j = 0; j < q.cols; ++j) m(i, j) = q.code(i, j) * q.scale_for_row(i);
    return m;
}

Matrix fake_quantize(const Matrix& m, QuantAxis axis) { return dequantize(quantize(m, axis)); }

PhiloxCounter philox4x32_10(PhiloxCounter c, PhiloxKey k) noexcept {
    constexpr std::uint32_t m0 = 0xD2511F53u, m1 = 0xCD9E8D57u;
    constexpr std::uint32_t w0 = 0x9E3779B9u, w1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = std::uint64_t{m0} * c[0];
        const std::uint64_t p1 = std::uint64_t{m1} * c[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
        c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
        k[0] += w0;
        k[1] += w1;
    }
    return c;
}

std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::vector<double> noise_stream(std::size_t count, std::uint64_t seed, std::string_view id,
                                 NoiseDistribution dist) {
    const std::uint64_t h = fnv1a64(id);
    const PhiloxKey key{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    std::vector<double> out(count);
    for (std::size_t base = 0; base < count; base += 2) {
        const std::uint64_t block = base / 2;
        const PhiloxCounter x = philox4x32_10(
            {static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32),
             static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)},
            key);
        const std::uint64_t a = (std::uint64_t{x[0]} << 32) | x[1];
        const std::uint64_t b = (std::uint64_t{x[2]} << 32) | x[3];
        const double u1 = (static_cast<double>(a >> 11) + 0.5) * 0x1.0p-53;
        const double u2 = static_cast<double>(b >> 11) * 0x1.0p-53;
        double z0, z1;
        if (dist == NoiseDistribution::gaussian) {
            const double r = std::sqrt(-2.0 * std::log(u1));
            z0 = r * std::cos(2.0 * std::numbers::pi * u2);
            z1 = r * std::sin(2.0 * std::numbers::pi * u2);
        } else {
            z0 = std::numbers::sqrt3 * (2.0 * u1 - 1.0);
            z1 = std::numbers::sqrt3 * (2.0 * u2 - 1.0);
        }
        out[base] = z0;
        if (base + 1 < count) out[base + 1] = z1;
    }
    return out;
}

Matrix inject_noise(const Matrix& m, double ratio, std::uint64_t seed, std::string_view id,
                    NoiseDistribution dist) {
    if (!(ratio >= 0.0)) throw InvalidArgument("inject_noise: ratio must be >= 0");
    if (ratio == 0.0) return m;
    const std::vector<double> z = noise_stream(m.size(), seed, id, dist);
    Matrix out = m;
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= 1.0 + ratio * z[i];
    return out;
}

Matrix QuantNoiseExecutor::weight(const Matrix& m, const std::string& tag) const {
    const Matrix q = options_.quantize ? fake_quantize(m, QuantAxis::per_output_channel) : m;
    return inject_noise(q, options_.noise_ratio, options_.seed, tag, options_.distribution);
}

Matrix QuantNoiseExecutor::activation(const Matrix& m, const std::string& tag) const {
    const Matrix q = options_.quantize ? fake_quantize(m, QuantAxis::per_tensor) : m;
    return inject_noise(q, options_.noise_ratio, options_.seed, tag, options_.distribution);
}

Matrix QuantNoiseExecutor::apply(const std::string& id, const LinearWeights& w, const Matrix& x) const {
    if (w.cols() != x.rows()) {
        throw DimensionError("layer '" + id + "': weight " + std::to_string(w.rows()) + "x" +
                             std::to_string(w.cols()) + " applied to activation " + x.shape_string());
    }
    const Matrix xq = activation(x, id + "/x");
    if (!w.factored) return matmul(weight(w.dense, id + "/w"), xq);
    const FactoredWeights& f = *w.factored;
    const Matrix bx = activation(matmul(weight(f.b, id + "/b"), xq), id + "/bx");
    StructuredSparse sp = f.sparse;
    for (std::size_t c = 0; c < sp.chunks.size(); ++c)
        sp.chunks[c].values = weight(sp.chunks[c].values, id + "/s" + std::to_string(c));
    return matmul(weight(f.a, id + "/a"), bx) + matmul(expand(sp), xq);
}

}  // namespace lighten
