// Command-line front end: lighten <verb> [--config FILE] [--seed N] [--out DIR]
// [--section.field VALUE ...]
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include <CLI11.hpp>

#include "lighten/error.hpp"
#include "lighten/pipeline.hpp"

namespace fs = std::filesystem;
using namespace lighten;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct CommonArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::map<std::string, std::string> overrides;
};

PipelineConfig build_config(const CommonArgs& args) {
    nlohmann::json j = nlohmann::json::object();
    fs::path base;
    if (!args.config.empty()) {
        std::ifstream in(args.config);
        if (!in) throw ConfigError("cannot open config '" + args.config + "'");
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError("config '" + args.config + "': " + e.what());
        }
        base = fs::path(args.config).parent_path();
        if (base.empty()) base = ".";
    }
    for (const auto& [key, value] : args.overrides) {
        // Command-line paths are relative to the working directory.
        apply_override(j, key, is_path_key(key) ? fs::absolute(value).string() : value);
    }
    if (args.seed) apply_override(j, "seed", std::to_string(*args.seed));
    if (!args.out.empty()) apply_override(j, "paths.output", fs::absolute(args.out).string());
    return config_from_json(j, base);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PTC-aware low-rank plus structured-sparse compression and photonic cost simulation"};
    app.require_subcommand(1);
    app.fallthrough();

    CommonArgs common;
    app.add_option("--config", common.config, "pipeline config JSON");
    app.add_option("--seed", common.seed, "random seed");
    app.add_option("--out", common.out, "output directory");
    for (const std::string& key : config_keys()) {
        if (key == "seed") continue;
        app.add_option_function<std::string>(
            "--" + key, [&common, key](const std::string& v) { common.overrides[key] = v; },
            "override " + key);
    }

    GenToyOptions toy;
    auto* gen = app.add_subcommand("gen-toy", "write a seeded toy ViT, datasets and config");
    gen->add_option("--hidden", toy.dims.hidden);
    gen->add_option("--heads", toy.dims.heads);
    gen->add_option("--blocks", toy.dims.blocks);
    gen->add_option("--mlp-ratio", toy.dims.mlp_ratio);
    gen->add_option("--in-dim", toy.dims.in_dim);
    gen->add_option("--classes", toy.dims.classes);
    gen->add_option("--tokens", toy.tokens);
    gen->add_option("--calib-samples", toy.calibration_samples);
    gen->add_option("--eval-samples", toy.eval_samples);

    auto* calibrate = app.add_subcommand("calibrate", "collect per-layer calibration activations");
    auto* compress = app.add_subcommand("compress", "allocate ranks, decompose and adapt every layer");

    std::string plan_path;
    bool baseline_only = false, compare = false;
    auto* simulate_cmd = app.add_subcommand("simulate", "energy, latency and EDP of a plan");
    simulate_cmd->add_option("--plan", plan_path, "plan JSON (default <out>/plan.json)");
    simulate_cmd->add_flag("--baseline", baseline_only, "dense baseline only");
    simulate_cmd->add_flag("--compare", compare, "baseline and compressed with ratios");

    std::string compressed_path, verify_plan;
    auto* verify = app.add_subcommand("verify", "run the invariant suite on compressed artifacts");
    verify->add_option("--compressed", compressed_path, "compressed model (default <out>/compressed.lten)");
    verify->add_option("--plan", verify_plan, "plan JSON (default <out>/plan.json)");

    auto* report = app.add_subcommand("report", "summarize artifacts in the output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (gen->parsed()) {
            toy.out = common.out.empty() ? fs::path("toy") : fs::path(common.out);
            if (common.seed) toy.seed = *common.seed;
            cmd_gen_toy(toy, std::cout);
            return kExitOk;
        }
        const PipelineConfig config = build_config(common);
        if (calibrate->parsed()) {
            cmd_calibrate(config, std::cout);
        } else if (compress->parsed()) {
            cmd_compress(config, std::cout);
        } else if (simulate_cmd->parsed()) {
            std::optional<fs::path> plan;
            if (!plan_path.empty()) plan = plan_path;
            cmd_simulate(config, plan, baseline_only || compare, !baseline_only, std::cout);
        } else if (verify->parsed()) {
            const fs::path model = compressed_path.empty() ? config.output_dir() / "compressed.lten" : fs::path(compressed_path);
            const fs::path plan = verify_plan.empty() ? config.output_dir() / "plan.json" : fs::path(verify_plan);
            return cmd_verify(config, model, plan, std::cout).passed() ? kExitOk : kExitFailure;
        } else if (report->parsed()) {
            cmd_report(config, std::cout);
        }
        return kExitOk;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const InfeasibleTarget& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
}
