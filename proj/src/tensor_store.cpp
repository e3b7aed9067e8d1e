#include "lighten/tensor_store.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

namespace lighten {
namespace {

constexpr char kMagic[4] = {'L', 'T', 'E', 'N'};
constexpr std::size_t kHeaderBytes = 16;

std::size_t align_up(std::size_t x) {
    return (x + kLtenAlignment - 1) / kLtenAlignment * kLtenAlignment;
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const std::string& in, std::size_t at) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
    return v;
}

std::uint64_t get_u64(const std::string& in, std::size_t at) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
    return v;
}

const char* dtype_name(DType t) { return t == DType::f32 ? "f32" : "i32"; }

DType parse_dtype(const std::string& s, const std::string& name) {
    if (s == "f32") return DType::f32;
    if (s == "i32") return DType::i32;
    throw FormatError(FormatErrc::malformed_manifest,
                      "tensor '" + name + "' has unsupported dtype '" + s + "'");
}

}  // namespace

const char* to_string(FormatErrc code) noexcept {
    switch (code) {
        case FormatErrc::io: return "io error";
        case FormatErrc::bad_magic: return "bad magic";
        case FormatErrc::version_mismatch: return "version mismatch";
        case FormatErrc::truncated: return "truncated blob";
        case FormatErrc::shape_mismatch: return "manifest/blob shape disagreement";
        case FormatErrc::malformed_manifest: return "malformed manifest";
    }
    return "unknown";
}

std::uint64_t Tensor::element_count() const noexcept {
    return std::accumulate(shape.begin(), shape.end(), std::uint64_t{1},
                           [](std::uint64_t a, std::uint64_t b) { return a * b; });
}

Tensor Tensor::from_matrix(const Matrix& m) {
    Tensor t;
    t.dtype = DType::f32;
    t.shape = {m.rows(), m.cols()};
    t.f32.reserve(m.size());
    for (double v : m.data()) t.f32.push_back(static_cast<float>(v));
    return t;
}

Tensor Tensor::from_floats(std::vector<std::uint64_t> shape, std::vector<float> values) {
    Tensor t;
    t.dtype = DType::f32;
    t.shape = std::move(shape);
    t.f32 = std::move(values);
    if (t.f32.size() != t.element_count())
        throw DimensionError("Tensor::from_floats: value count does not match shape");
    return t;
}

Tensor Tensor::from_ints(std::vector<std::uint64_t> shape, std::vector<std::int32_t> values) {
    Tensor t;
    t.dtype = DType::i32;
    t.shape = std::move(shape);
    t.i32 = std::move(values);
    if (t.i32.size() != t.element_count())
        throw DimensionError("Tensor::from_ints: value count does not match shape");
    return t;
}

Matrix Tensor::to_matrix() const {
    if (dtype != DType::f32) throw InvalidArgument("Tensor::to_matrix: tensor is not f32");
    const std::size_t cols = shape.empty() ? 1 : static_cast<std::size_t>(shape.back());
    const std::size_t count = static_cast<std::size_t>(element_count());
    const std::size_t rows = cols == 0 ? 0 : count / cols;
    std::vector<double> data(f32.begin(), f32.end());
    return Matrix(rows, cols, std::move(data));
}

std::string encode_container(const Container& c) {
    nlohmann::json entries = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : c.tensors) {
        const std::uint64_t want = t.element_count();
        const std::size_t have = t.dtype == DType::f32 ? t.f32.size() : t.i32.size();
        if (want != have) {
            throw FormatError(FormatErrc::shape_mismatch,
                              "tensor '" + name + "' holds " + std::to_string(have) +
                                  " values but its shape needs " + std::to_string(want));
        }
        entries.push_back({{"name", name},
                           {"dtype", dtype_name(t.dtype)},
                           {"shape", t.shape},
                           {"byte_offset", offset},
                           {"byte_len", t.byte_length()}});
        offset = align_up(offset + t.byte_length());
    }
    nlohmann::json manifest = {{"format", "LTEN"},
                               {"version", kLtenVersion},
                               {"meta", c.meta},
                               {"tensors", entries}};
    const std::string text = manifest.dump();

    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kLtenVersion);
    put_u64(out, text.size());
    out += text;
    out.resize(align_up(out.size()), '\0');
    const std::size_t blob_start = out.size();
    for (const auto& [name, t] : c.tensors) {
        out.resize(align_up(out.size() - blob_start) + blob_start, '\0');
        if (t.dtype == DType::f32) {
            for (float v : t.f32) put_u32(out, std::bit_cast<std::uint32_t>(v));
        } else {
            for (std::int32_t v : t.i32) put_u32(out, std::bit_cast<std::uint32_t>(v));
        }
    }
    return out;
}

Container decode_container(const std::string& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError(FormatErrc::bad_magic, "file does not start with \"LTEN\"");
    }
    if (bytes.size() < kHeaderBytes) throw FormatError(FormatErrc::truncated, "header cut short");
    const std::uint32_t version = get_u32(bytes, 4);
    if (version != kLtenVersion) {
        throw FormatError(FormatErrc::version_mismatch,
                          "file version " + std::to_string(version) + ", reader supports " +
                              std::to_string(kLtenVersion));
    }
    const std::uint64_t manifest_len = get_u64(bytes, 8);
    if (manifest_len > bytes.size() - kHeaderBytes) {
        throw FormatError(FormatErrc::truncated, "manifest extends past end of file");
    }
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(bytes.substr(kHeaderBytes, manifest_len));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(FormatErrc::malformed_manifest, e.what());
    }
    if (!manifest.is_object() || !manifest.contains("tensors") || !manifest["tensors"].is_array()) {
        throw FormatError(FormatErrc::malformed_manifest, "missing tensor list");
    }

    const std::size_t blob_start = align_up(kHeaderBytes + manifest_len);
    Container c;
    c.meta = manifest.value("meta", nlohmann::json::object());
    try {
        for (const auto& e : manifest["tensors"]) {
            const std::string name = e.at("name").get<std::string>();
            Tensor t;
            t.dtype = parse_dtype(e.at("dtype").get<std::string>(), name);
            t.shape = e.at("shape").get<std::vector<std::uint64_t>>();
            const std::uint64_t off = e.at("byte_offset").get<std::uint64_t>();
            const std::uint64_t len = e.at("byte_len").get<std::uint64_t>();
            if (len != t.byte_length()) {
                throw FormatError(FormatErrc::shape_mismatch,
                                  "tensor '" + name + "' byte_len " + std::to_string(len) +
                                      " disagrees with shape (" +
                                      std::to_string(t.byte_length()) + " bytes)");
            }
            if (blob_start + off + len > bytes.size()) {
                throw FormatError(FormatErrc::truncated,
                                  "tensor '" + name + "' extends past end of file");
            }
            const std::size_t base = blob_start + off;
            const std::size_t count = static_cast<std::size_t>(t.element_count());
            if (t.dtype == DType::f32) {
                t.f32.resize(count);
                for (std::size_t i = 0; i < count; ++i)
                    t.f32[i] = std::bit_cast<float>(get_u32(bytes, base + 4 * i));
            } else {
                t.i32.resize(count);
                for (std::size_t i = 0; i < count; ++i)
                    t.i32[i] = std::bit_cast<std::int32_t>(get_u32(bytes, base + 4 * i));
            }
            c.tensors.emplace(name, std::move(t));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(FormatErrc::malformed_manifest, e.what());
    }
    return c;
}

void write_container(const std::filesystem::path& path, const Container& c) {
    const std::string bytes = encode_container(c);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(FormatErrc::io, "cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError(FormatErrc::io, "write failed for " + path.string());
}

Container read_container(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(FormatErrc::io, "cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_container(bytes);
}

}  // namespace lighten
