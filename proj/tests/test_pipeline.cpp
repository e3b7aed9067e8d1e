#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "lighten/error.hpp"
#include "lighten/pipeline.hpp"
#include "lighten/tensor_store.hpp"
#include "test_util.hpp"

using namespace lighten;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

GenToyOptions tiny_toy(const fs::path& out) {
    GenToyOptions o;
    o.out = out;
    o.dims.hidden = 16;
    o.dims.heads = 2;
    o.dims.mlp_ratio = 2;
    o.dims.in_dim = 8;
    o.dims.classes = 4;
    o.tokens = 8;
    o.calibration_samples = 4;
    o.eval_samples = 16;
    o.seed = 5;
    return o;
}

PipelineConfig fast(PipelineConfig c, const fs::path& out) {
    c.paths.output = out.string();
    c.targets.alpha = 0.3;
    c.decomposition.iters = 8;
    c.decomposition.adapt_steps = 5;
    return c;
}

}  // namespace

TEST_CASE("config schema is strict") {
    CHECK_NOTHROW(config_from_json(nlohmann::json::object()));
    CHECK_THROWS_WITH_AS(config_from_json({{"targets", {{"alhpa", 0.3}}}}), doctest::Contains("targets.alhpa"),
                         ConfigError);
    CHECK_THROWS_AS(config_from_json({{"bogus", 1}}), ConfigError);
    CHECK_THROWS_AS(config_from_json({{"targets", {{"alpha", 1.5}}}}), ConfigError);
    CHECK_THROWS_AS(config_from_json({{"targets", {{"alpha", "x"}}}}), ConfigError);
    CHECK_THROWS_AS(config_from_json({{"targets", {{"sparse_ratio", 0.0}}}}), ConfigError);

    const PipelineConfig c = config_from_json({{"paths", {{"model", "m.lten"}}}, {"seed", 9}}, "/base");
    CHECK(c.paths.model == "/base/m.lten");
    CHECK(c.paths.output == "/base/out");
    CHECK(c.seed == 9);
    CHECK(c.targets.alpha == 0.5);
    CHECK(to_json(config_from_json(to_json(c))) == to_json(c));
}

TEST_CASE("dotted overrides") {
    const auto keys = config_keys();
    CHECK(std::find(keys.begin(), keys.end(), "targets.alpha") != keys.end());
    CHECK(std::find(keys.begin(), keys.end(), "hardware.batch_tokens") != keys.end());
    CHECK(std::find(keys.begin(), keys.end(), "seed") != keys.end());
    CHECK(is_path_key("paths.model"));
    CHECK_FALSE(is_path_key("targets.alpha"));

    nlohmann::json j = nlohmann::json::object();
    apply_override(j, "targets.alpha", "0.25");
    apply_override(j, "targets.granularity", "6");
    apply_override(j, "evaluation.quantize", "false");
    apply_override(j, "paths.model", "x.lten");
    const PipelineConfig c = config_from_json(j);
    CHECK(c.targets.alpha == 0.25);
    CHECK(c.targets.granularity == 6);
    CHECK_FALSE(c.evaluation.quantize);
    CHECK(c.paths.model == "x.lten");

    CHECK_THROWS_AS(apply_override(j, "targets.nope", "1"), ConfigError);
    CHECK_THROWS_AS(apply_override(j, "targets", "1"), ConfigError);
    CHECK_THROWS_AS(apply_override(j, "targets.granularity", "-2"), ConfigError);
    CHECK_THROWS_AS(apply_override(j, "targets.granularity", "2.5"), ConfigError);
    CHECK_THROWS_AS(apply_override(j, "targets.alpha", "abc"), ConfigError);
}

TEST_CASE("compress is deterministic and verify catches a corrupted index") {
    const fs::path root = test::scratch_dir(fs::path(LIGHTEN_TEST_TMP) / "pipeline");
    std::ostringstream log;
    const PipelineConfig base = cmd_gen_toy(tiny_toy(root / "toy"), log);
    CHECK(fs::exists(root / "toy" / "model.lten"));
    CHECK(fs::exists(root / "toy" / "eval.lten"));

    const PipelineConfig c1 = fast(base, root / "run1");
    const PipelineConfig c2 = fast(base, root / "run2");
    const CompressResult r1 = cmd_compress(c1, log);
    cmd_compress(c2, log);
    CHECK(r1.plan.psi_achieved >= 0.3);
    CHECK(slurp(root / "run1" / "plan.json") == slurp(root / "run2" / "plan.json"));
    CHECK(slurp(root / "run1" / "compressed.lten") == slurp(root / "run2" / "compressed.lten"));
    CHECK(fs::exists(root / "run1" / "timing.json"));
    CHECK(log.str().find("psi = ") != std::string::npos);

    // A different thread count gives the same artifacts.
    PipelineConfig c3 = fast(base, root / "run3");
    c3.allocator.threads = 1;
    cmd_compress(c3, log);
    CHECK(slurp(root / "run1" / "plan.json") == slurp(root / "run3" / "plan.json"));

    const VerifyResult good = cmd_verify(c1, root / "run1" / "compressed.lten", root / "run1" / "plan.json", log);
    for (const auto& check : good.checks) CHECK_MESSAGE(check.passed, check.name << ": " << check.detail);
    CHECK(good.checks.size() == 8);
    CHECK(good.passed());

    Container raw = read_container(root / "run1" / "compressed.lten");
    Tensor& index = raw.tensors.at("blocks.0.attn.q.sparse.index");
    index.i32[0] = 1000;
    write_container(root / "run1" / "corrupt.lten", raw);
    const VerifyResult bad = cmd_verify(c1, root / "run1" / "corrupt.lten", root / "run1" / "plan.json", log);
    CHECK_FALSE(bad.passed());
    bool condensed_failed = false;
    for (const auto& check : bad.checks)
        if (check.name == "condensed-matmul") condensed_failed = !check.passed;
    CHECK(condensed_failed);

    // Simulation and report.
    const SimulateResult sim = cmd_simulate(c1, std::nullopt, true, true, log);
    REQUIRE(sim.baseline);
    REQUIRE(sim.compressed);
    CHECK(sim.baseline->energy.index_overhead == 0.0);
    CHECK(sim.comparison["ratios"]["edp"].get<double>() == sim.baseline->edp / sim.compressed->edp);
    CHECK(sim.comparison["ratios"]["energy"].get<double>() ==
          sim.baseline->total_energy() / sim.compressed->total_energy());
    for (const char* f : {"report_baseline.json", "report_baseline.csv", "report_compressed.json",
                          "report_compressed.csv", "comparison.json"})
        CHECK(fs::exists(root / "run1" / f));
    const nlohmann::json summary = cmd_report(c1, log);
    CHECK(summary.contains("plan"));
    CHECK(summary.contains("comparison"));
}

TEST_CASE("infeasible target") {
    const fs::path root = test::scratch_dir(fs::path(LIGHTEN_TEST_TMP) / "infeasible");
    std::ostringstream log;
    PipelineConfig c = fast(cmd_gen_toy(tiny_toy(root / "toy"), log), root / "out");
    c.targets.alpha = 0.999;
    CHECK_THROWS_WITH_AS(cmd_compress(c, log), doctest::Contains("target infeasible"), InfeasibleTarget);
    CHECK_FALSE(fs::exists(root / "out" / "plan.json"));
}
