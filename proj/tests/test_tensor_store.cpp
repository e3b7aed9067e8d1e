#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "lighten/model_graph.hpp"
#include "lighten/tensor_store.hpp"
#include "lighten/toy_vit.hpp"
#include "test_util.hpp"

using namespace lighten;

namespace {

FormatErrc decode_error(const std::string& bytes) {
    try {
        decode_container(bytes);
    } catch (const FormatError& e) {
        return e.code();
    }
    FAIL("expected FormatError");
    return FormatErrc::io;
}

std::uint32_t bits(float f) {
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    return u;
}

}  // namespace

TEST_CASE("1x1 round trip keeps bits") {
    Container c;
    c.tensors["x"] = Tensor::from_floats({1, 1}, {0.5f});
    const Container back = decode_container(encode_container(c));
    REQUIRE(back.tensors.count("x") == 1);
    CHECK(bits(back.tensors.at("x").f32[0]) == bits(0.5f));
    CHECK(back.tensors.at("x").shape == std::vector<std::uint64_t>{1, 1});
}

TEST_CASE("header layout and alignment") {
    Container c;
    c.meta = {{"k", "v"}};
    c.tensors["a"] = Tensor::from_floats({3}, {1.f, -2.f, 3.5f});
    c.tensors["b"] = Tensor::from_ints({2, 2}, {1, -1, 7, 0});
    const std::string bytes = encode_container(c);
    CHECK(bytes.substr(0, 4) == "LTEN");
    std::uint32_t version;
    std::memcpy(&version, bytes.data() + 4, 4);
    CHECK(version == 1);
    std::uint64_t manifest_len;
    std::memcpy(&manifest_len, bytes.data() + 8, 8);
    const auto manifest = nlohmann::json::parse(bytes.substr(16, manifest_len));
    CHECK(manifest.at("meta") == c.meta);
    const std::size_t blob = (16 + manifest_len + 63) / 64 * 64;
    for (const auto& t : manifest.at("tensors")) {
        CHECK(t.at("byte_offset").get<std::size_t>() % 64 == 0);
        if (t.at("name") == "a") {
            CHECK(t.at("dtype") == "f32");
            float v;
            std::memcpy(&v, bytes.data() + blob + t.at("byte_offset").get<std::size_t>() + 4, 4);
            CHECK(v == -2.f);
        } else {
            CHECK(t.at("dtype") == "i32");
        }
    }
    const Container back = decode_container(bytes);
    CHECK(back.tensors == c.tensors);
    CHECK(back.meta == c.meta);
    CHECK(encode_container(back) == bytes);
}

TEST_CASE("distinct format errors") {
    Container c;
    c.tensors["w"] = Tensor::from_floats({2, 2}, {1.f, 2.f, 3.f, 4.f});
    const std::string good = encode_container(c);

    std::string bad_magic = good;
    bad_magic[0] = 'X';
    CHECK(decode_error(bad_magic) == FormatErrc::bad_magic);

    std::string bad_version = good;
    bad_version[4] = 2;
    CHECK(decode_error(bad_version) == FormatErrc::version_mismatch);

    CHECK(decode_error(good.substr(0, good.size() - 4)) == FormatErrc::truncated);
    CHECK(decode_error(good.substr(0, 10)) == FormatErrc::truncated);

    // Manifest claims more bytes than the shape implies.
    std::uint64_t manifest_len;
    std::memcpy(&manifest_len, good.data() + 8, 8);
    std::string manifest = good.substr(16, manifest_len);
    const auto pos = manifest.find("\"byte_len\":16");
    REQUIRE(pos != std::string::npos);
    manifest.replace(pos, 13, "\"byte_len\":12");
    std::string shape_bad = good;
    shape_bad.replace(16, manifest_len, manifest);
    CHECK(decode_error(shape_bad) == FormatErrc::shape_mismatch);

    std::string garbage = good;
    garbage[16] = '!';
    CHECK(decode_error(garbage) == FormatErrc::malformed_manifest);

    CHECK_THROWS_AS(read_container("/nonexistent/file.lten"), FormatError);
}

TEST_CASE("toy model file round trip") {
    const auto dir = test::scratch_dir(std::filesystem::temp_directory_path() / "lighten_test_store");
    ToyDims dims;
    dims.hidden = 16;
    dims.heads = 2;
    dims.blocks = 4;
    dims.in_dim = 8;
    dims.classes = 5;
    const ToyViT model = make_toy_vit(dims, 3);
    const StoredModel stored = model.to_stored();
    save_model(dir / "m.lten", stored.graph, stored.tensors);
    const StoredModel back = load_model(dir / "m.lten");
    CHECK(to_json(back.graph) == to_json(stored.graph));
    CHECK(back.graph == stored.graph);
    REQUIRE(back.tensors.size() == stored.tensors.size());
    for (const auto& [name, t] : stored.tensors) {
        const Tensor& u = back.tensors.at(name);
        REQUIRE(u.f32.size() == t.f32.size());
        CHECK(std::memcmp(u.f32.data(), t.f32.data(), 4 * t.f32.size()) == 0);
    }

    save_model(dir / "m2.lten", back.graph, back.tensors);
    std::ifstream a(dir / "m.lten", std::ios::binary), b(dir / "m2.lten", std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
    CHECK(sa == sb);

    TensorMap wrong = stored.tensors;
    wrong["head"] = Tensor::from_matrix(Matrix(3, 3));
    try {
        save_model(dir / "bad.lten", stored.graph, wrong);
        FAIL("expected shape mismatch");
    } catch (const FormatError& e) {
        CHECK(e.code() == FormatErrc::shape_mismatch);
    }
}
