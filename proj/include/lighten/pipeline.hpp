#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lighten/allocator.hpp"
#include "lighten/calibration.hpp"
#include "lighten/simulator.hpp"

namespace lighten {

/// Run configuration. Relative paths in a config file resolve against the
/// file's directory.
struct PipelineConfig {
    struct Paths {
        std::string model;
        std::string calibration;  // calibration LTEN, or a dataset to collect from
        std::string eval;         // labelled dataset for verify/report; optional
        std::string output = "out";
    } paths;
    struct Targets {
        double alpha = 0.5;
        double sparse_ratio = 0.125;
        std::size_t granularity = 8;
    } targets;
    struct Allocator {
        double threshold = 0.5;
        double temperature = 1.0;
        std::size_t basis_rank = 0;  // 0: derived from ptc_dim and hidden size
        std::size_t ptc_dim = 12;
        std::size_t threads = 0;     // 0: hardware concurrency
    } allocator;
    struct Decomposition {
        std::size_t iters = kDefaultDecomposeIters;
        std::size_t adapt_steps = 100;
        double adapt_lr = 1.0;
    } decomposition;
    struct Hardware {
        std::string engine_config;  // empty: built-in defaults
        std::string energy_params;
        std::size_t batch_tokens = 197;
    } hardware;
    struct Evaluation {
        double tau = 4.0;
        bool quantize = true;
        double noise_ratio = 0.03;
        double max_accuracy_drop = 0.05;
    } evaluation;
    std::uint64_t seed = 0;

    std::filesystem::path output_dir() const { return paths.output; }
    /// Range checks; throws ConfigError.
    void validate() const;
};

nlohmann::json to_json(const PipelineConfig& c);
/// Missing fields keep their defaults; unknown fields are a ConfigError.
PipelineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);

/// Every overridable dotted key ("targets.alpha", ...) of the schema.
std::vector<std::string> config_keys();
/// Keys holding file system paths.
bool is_path_key(const std::string& key);
/// Sets `key` in `j` from its text form, typed after the default value.
void apply_override(nlohmann::json& j, const std::string& key, const std::string& value);

struct GenToyOptions {
    std::filesystem::path out = "toy";
    ToyDims dims;
    std::size_t tokens = 16;
    std::size_t calibration_samples = 16;  // 256 calibration tokens
    std::size_t eval_samples = 64;
    std::uint64_t seed = 0;
};
/// Writes model.lten, calib.lten, eval.lten and a config.json pointing at them.
PipelineConfig cmd_gen_toy(const GenToyOptions& options, std::ostream& log);

/// Loads paths.calibration, collecting activations when it is a dataset.
CalibrationSet resolve_calibration(const PipelineConfig& config, const ToyViT& model);
/// Writes <output>/calibration.lten.
CalibrationSet cmd_calibrate(const PipelineConfig& config, std::ostream& log);

struct CompressResult {
    CompressionPlan plan;
    ToyViT model;
    double seconds = 0.0;
};
/// Calibrate, prepare full rank, allocate, decompose at the assigned ranks,
/// adapt, and write compressed.lten, plan.json and timing.json.
CompressResult cmd_compress(const PipelineConfig& config, std::ostream& log);

/// Compressed layers of `model` as they would run after f32 storage.
CompressionPlan compress_model(const PipelineConfig& config, const ToyViT& model,
                               const CalibrationSet& calibration, ToyViT& compressed, std::ostream& log);

EngineConfig load_engine_config(const PipelineConfig& config);
EnergyParams load_energy_params(const PipelineConfig& config);

struct SimulateResult {
    std::optional<CostReport> compressed;
    std::optional<CostReport> baseline;
    nlohmann::json comparison;  // null unless both ran
};
/// Baseline runs the dense model on the dense engine scaled by two tiles.
SimulateResult cmd_simulate(const PipelineConfig& config, const std::optional<std::filesystem::path>& plan_path,
                            bool baseline, bool compressed, std::ostream& log);

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};
struct VerifyResult {
    std::vector<CheckResult> checks;
    nlohmann::json metrics = nlohmann::json::object();
    bool passed() const;
};
/// Invariant suite over a compressed model and its plan.
VerifyResult cmd_verify(const PipelineConfig& config, const std::filesystem::path& compressed_path,
                        const std::filesystem::path& plan_path, std::ostream& log);

/// Summary of plan, simulation reports and verify metrics found in the output directory.
nlohmann::json cmd_report(const PipelineConfig& config, std::ostream& log);

/// Narrows every value to f32 precision, as stored on disk.
FactoredWeights round_to_storage(const FactoredWeights& f);

}  // namespace lighten
