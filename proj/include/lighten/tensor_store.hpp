#pragma once

// LTEN v1 tensor container.
//
//   bytes 0..3    ASCII "LTEN"
//   bytes 4..7    format version, u32 little-endian (= 1)
//   bytes 8..15   manifest byte length, u64 little-endian
//   manifest      UTF-8 JSON: {"format","version","meta","tensors":[{name, dtype,
//                 shape, byte_offset, byte_len}, ...]}
//   blob region   starts at the next 64-byte boundary; each tensor is raw
//                 little-endian data at blob_start + byte_offset, with every
//                 byte_offset a multiple of 64 (zero padding in between)
//
// See docs/lten_format.md for the full schema.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "lighten/error.hpp"
#include "lighten/linalg.hpp"

namespace lighten {

inline constexpr std::uint32_t kLtenVersion = 1;
inline constexpr std::size_t kLtenAlignment = 64;

enum class FormatErrc {
    io,
    bad_magic,
    version_mismatch,
    truncated,
    shape_mismatch,
    malformed_manifest,
};

const char* to_string(FormatErrc code) noexcept;

class FormatError : public Error {
public:
    FormatError(FormatErrc code, const std::string& detail)
        : Error(std::string(to_string(code)) + ": " + detail), code_(code) {}
    FormatErrc code() const noexcept { return code_; }

private:
    FormatErrc code_;
};

enum class DType { f32, i32 };

struct Tensor {
    DType dtype = DType::f32;
    std::vector<std::uint64_t> shape;
    std::vector<float> f32;
    std::vector<std::int32_t> i32;

    std::uint64_t element_count() const noexcept;
    std::uint64_t byte_length() const noexcept { return element_count() * 4; }

    /// 2-D f32 tensor; values narrowed from double.
    static Tensor from_matrix(const Matrix& m);
    static Tensor from_floats(std::vector<std::uint64_t> shape, std::vector<float> values);
    static Tensor from_ints(std::vector<std::uint64_t> shape, std::vector<std::int32_t> values);
    /// f32 tensor viewed as rows x cols, where cols is the last dimension.
    Matrix to_matrix() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

using TensorMap = std::map<std::string, Tensor>;

struct Container {
    nlohmann::json meta = nlohmann::json::object();
    TensorMap tensors;
};

void write_container(const std::filesystem::path& path, const Container& c);
Container read_container(const std::filesystem::path& path);

/// Serializes to an in-memory byte string (the exact file contents).
std::string encode_container(const Container& c);
Container decode_container(const std::string& bytes);

}  // namespace lighten
