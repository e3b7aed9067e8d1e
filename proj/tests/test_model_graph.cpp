#include <doctest.h>

#include <filesystem>

#include "lighten/calibration.hpp"
#include "lighten/error.hpp"
#include "lighten/model_graph.hpp"
#include "lighten/random.hpp"
#include "test_util.hpp"

using namespace lighten;

TEST_CASE("graph validation") {
    ModelGraph g;
    g.layers = {{"a", LayerKind::mlp_fc1, 4, 4}, {"a", LayerKind::mlp_fc2, 4, 4}};
    g.blocks = {{{}, {"a"}}};
    CHECK_THROWS_AS(g.validate(), InvalidArgument);

    g.layers = {{"a", LayerKind::mlp_fc1, 4, 4}, {"b", LayerKind::mlp_fc2, 4, 4}};
    CHECK_THROWS_AS(g.validate(), InvalidArgument);  // b is in no group
    g.blocks = {{{}, {"a", "b"}}};
    CHECK_NOTHROW(g.validate());
    g.layers.push_back({"e", LayerKind::embed, 4, 2});
    CHECK_NOTHROW(g.validate());
    g.blocks[0].attn = {"e"};
    CHECK_THROWS_AS(g.validate(), InvalidArgument);

    CHECK(parse_layer_kind("attn_q") == LayerKind::attn_q);
    CHECK_THROWS_AS(parse_layer_kind("conv"), InvalidArgument);
    CHECK(graph_from_json(to_json(make_toy_vit({}, 1).graph)) == make_toy_vit({}, 1).graph);
}

TEST_CASE("single token through a one-layer model records the raw input") {
    Rng rng(1);
    const ToyViT m = test::make_chain({random_normal(3, 5, rng)});
    const Matrix x = random_normal(5, 1, rng);
    const CalibrationSet set = collect_calibration(m, x);
    CHECK(set.at("layer0") == x);
    CHECK(set.sample_count == 1);
}

TEST_CASE("identity chain passes activations through") {
    Rng rng(2);
    const ToyViT m = test::make_chain({Matrix::identity(4), Matrix::identity(4)});
    const Matrix x = random_normal(4, 6, rng);
    const CalibrationSet set = collect_calibration(m, x);
    CHECK(set.at("layer1") == set.at("layer0"));
    CHECK(set.at("layer0") == x);
}

TEST_CASE("toy vit calibration shapes and instrumented re-run") {
    ToyDims dims;
    dims.hidden = 16;
    dims.heads = 2;
    dims.in_dim = 8;
    dims.classes = 4;
    const ToyViT m = make_toy_vit(dims, 5);
    Rng rng(3);
    const Matrix x = random_normal(8, 8, rng);
    const CalibrationSet set = collect_calibration(m, x);
    CHECK(set.inputs.size() == 12);  // 2 blocks x 6 compressible layers
    for (const auto& l : m.graph.compressible_layers()) {
        REQUIRE(set.inputs.count(l.id) == 1);
        CHECK(set.at(l.id).rows() == l.cols);
        CHECK(set.at(l.id).cols() == 8);
    }
    CHECK(set.inputs.count("embed") == 0);
    CHECK(set.inputs.count("head") == 0);

    std::map<std::string, Matrix> seen;
    ForwardOptions opts;
    opts.on_layer_input = [&](const std::string& id, const Matrix& in) { seen[id] = in; };
    forward(m, x, opts);
    for (const auto& [id, calib] : set.inputs) CHECK(seen.at(id) == calib);

    // Samples concatenate along tokens.
    Dataset d;
    d.inputs = {x, random_normal(8, 8, rng)};
    const CalibrationSet two = collect_calibration(m, d);
    CHECK(two.token_count() == 16);
    CHECK(two.sample_count == 2);
    CHECK(two.at("blocks.1.mlp.fc2").block(0, 0, 64, 8) == set.at("blocks.1.mlp.fc2"));

    CHECK_THROWS_AS(collect_calibration(m, random_normal(7, 8, rng)), DimensionError);
}

TEST_CASE("calibration and dataset files round trip") {
    const auto dir = test::scratch_dir(std::filesystem::temp_directory_path() / "lighten_test_calib");
    ToyDims dims;
    dims.hidden = 8;
    dims.heads = 2;
    dims.blocks = 1;
    dims.in_dim = 4;
    dims.classes = 3;
    const ToyViT m = make_toy_vit(dims, 2);
    const Dataset data = make_dataset(m, 5, 3, 9);
    save_dataset(dir / "d.lten", data);
    const Dataset back = load_dataset(dir / "d.lten");
    CHECK(back.labels == data.labels);
    for (std::size_t i = 0; i < data.size(); ++i) CHECK(back.inputs[i] == data.inputs[i]);

    const CalibrationSet set = collect_calibration(m, data);
    save_calibration(dir / "c.lten", set);
    const CalibrationSet cb = load_calibration(dir / "c.lten");
    CHECK(cb.sample_count == 5);
    for (const auto& [id, x] : set.inputs)
        CHECK(max_abs_diff(cb.at(id), x) <= 1e-6 * (1.0 + frobenius_norm(x)));
    CHECK_THROWS_AS(load_calibration(dir / "d.lten"), FormatError);
}
