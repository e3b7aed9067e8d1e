#include "lighten/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "lighten/distill.hpp"
#include "lighten/error.hpp"
#include "lighten/local_adapt.hpp"
#include "lighten/quant.hpp"
#include "lighten/random.hpp"

namespace lighten {
namespace fs = std::filesystem;

namespace {

const char* const kPathKeys[] = {"paths.model", "paths.calibration", "paths.eval", "paths.output",
                                 "hardware.engine_config", "hardware.energy_params"};

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + p.string() + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write '" + p.string() + "'");
    out << text;
    if (!out) throw Error("write failed for '" + p.string() + "'");
}

nlohmann::json read_json(const fs::path& p) {
    try {
        return nlohmann::json::parse(read_text(p));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("'" + p.string() + "' is not valid JSON: " + e.what());
    }
}

void write_json(const fs::path& p, const nlohmann::json& j) { write_text(p, j.dump(2) + "\n"); }

// Rejects keys that the schema does not know, recursively.
void check_known(const nlohmann::json& schema, const nlohmann::json& j, const std::string& where) {
    if (!j.is_object()) throw ConfigError("config" + where + " must be an object");
    for (const auto& [key, value] : j.items()) {
        const std::string path = where + "." + key;
        if (!schema.contains(key)) throw ConfigError("unknown config key '" + path.substr(1) + "'");
        if (schema.at(key).is_object()) check_known(schema.at(key), value, path);
    }
}

void merge_into(nlohmann::json& base, const nlohmann::json& patch) {
    for (const auto& [key, value] : patch.items()) {
        if (value.is_object() && base[key].is_object())
            merge_into(base[key], value);
        else
            base[key] = value;
    }
}

nlohmann::json* locate(nlohmann::json& j, const std::string& key) {
    nlohmann::json* node = &j;
    std::istringstream parts(key);
    std::string part;
    while (std::getline(parts, part, '.')) {
        if (!node->is_object() || !node->contains(part)) return nullptr;
        node = &(*node)[part];
    }
    return node;
}

void flatten_keys(const nlohmann::json& j, const std::string& prefix, std::vector<std::string>& out) {
    for (const auto& [key, value] : j.items()) {
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        if (value.is_object())
            flatten_keys(value, path, out);
        else
            out.push_back(path);
    }
}

std::string resolve(const std::string& p, const fs::path& base) {
    if (p.empty() || base.empty() || fs::path(p).is_absolute()) return p;
    return (base / p).lexically_normal().string();
}

std::string fixed(double v, int digits) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

ToyViT load_toy(const std::string& path, const char* what) {
    if (path.empty()) throw ConfigError(std::string("paths.") + what + " is not set");
    return ToyViT::from_stored(load_model(path));
}

std::optional<Dataset> load_eval(const PipelineConfig& config) {
    if (!config.paths.eval.empty()) return load_dataset(config.paths.eval);
    return std::nullopt;
}

double relative_diff(const Matrix& a, const Matrix& b) {
    const double scale = std::max(frobenius_norm(b), 1e-300);
    return frobenius_norm(a - b) / scale;
}

}  // namespace

void PipelineConfig::validate() const {
    if (!(targets.alpha > 0.0 && targets.alpha < 1.0)) throw ConfigError("targets.alpha must lie in (0, 1)");
    if (!(targets.sparse_ratio > 0.0 && targets.sparse_ratio < 1.0))
        throw ConfigError("targets.sparse_ratio must lie in (0, 1)");
    if (targets.granularity == 0) throw ConfigError("targets.granularity must be >= 1");
    if (!(allocator.threshold > 0.0 && allocator.threshold <= 1.0))
        throw ConfigError("allocator.threshold must lie in (0, 1]");
    if (!(allocator.temperature > 0.0)) throw ConfigError("allocator.temperature must be positive");
    if (allocator.ptc_dim < 2) throw ConfigError("allocator.ptc_dim must be >= 2");
    if (decomposition.iters == 0) throw ConfigError("decomposition.iters must be >= 1");
    if (!(decomposition.adapt_lr > 0.0)) throw ConfigError("decomposition.adapt_lr must be positive");
    if (hardware.batch_tokens == 0) throw ConfigError("hardware.batch_tokens must be >= 1");
    if (!(evaluation.tau > 0.0)) throw ConfigError("evaluation.tau must be positive");
    if (!(evaluation.noise_ratio >= 0.0)) throw ConfigError("evaluation.noise_ratio must be >= 0");
    if (paths.output.empty()) throw ConfigError("paths.output must be set");
}

nlohmann::json to_json(const PipelineConfig& c) {
    return {{"paths",
             {{"model", c.paths.model},
              {"calibration", c.paths.calibration},
              {"eval", c.paths.eval},
              {"output", c.paths.output}}},
            {"targets",
             {{"alpha", c.targets.alpha},
              {"sparse_ratio", c.targets.sparse_ratio},
              {"granularity", c.targets.granularity}}},
            {"allocator",
             {{"threshold", c.allocator.threshold},
              {"temperature", c.allocator.temperature},
              {"basis_rank", c.allocator.basis_rank},
              {"ptc_dim", c.allocator.ptc_dim},
              {"threads", c.allocator.threads}}},
            {"decomposition",
             {{"iters", c.decomposition.iters},
              {"adapt_steps", c.decomposition.adapt_steps},
              {"adapt_lr", c.decomposition.adapt_lr}}},
            {"hardware",
             {{"engine_config", c.hardware.engine_config},
              {"energy_params", c.hardware.energy_params},
              {"batch_tokens", c.hardware.batch_tokens}}},
            {"evaluation",
             {{"tau", c.evaluation.tau},
              {"quantize", c.evaluation.quantize},
              {"noise_ratio", c.evaluation.noise_ratio},
              {"max_accuracy_drop", c.evaluation.max_accuracy_drop}}},
            {"seed", c.seed}};
}

PipelineConfig config_from_json(const nlohmann::json& j, const fs::path& base_dir) {
    const nlohmann::json schema = to_json(PipelineConfig{});
    check_known(schema, j, "");
    nlohmann::json m = schema;
    merge_into(m, j);
    try {
        PipelineConfig c;
        c.paths.model = resolve(m["paths"]["model"].get<std::string>(), base_dir);
        c.paths.calibration = resolve(m["paths"]["calibration"].get<std::string>(), base_dir);
        c.paths.eval = resolve(m["paths"]["eval"].get<std::string>(), base_dir);
        c.paths.output = resolve(m["paths"]["output"].get<std::string>(), base_dir);
        c.targets.alpha = m["targets"]["alpha"].get<double>();
        c.targets.sparse_ratio = m["targets"]["sparse_ratio"].get<double>();
        c.targets.granularity = m["targets"]["granularity"].get<std::size_t>();
        c.allocator.threshold = m["allocator"]["threshold"].get<double>();
        c.allocator.temperature = m["allocator"]["temperature"].get<double>();
        c.allocator.basis_rank = m["allocator"]["basis_rank"].get<std::size_t>();
        c.allocator.ptc_dim = m["allocator"]["ptc_dim"].get<std::size_t>();
        c.allocator.threads = m["allocator"]["threads"].get<std::size_t>();
        c.decomposition.iters = m["decomposition"]["iters"].get<std::size_t>();
        c.decomposition.adapt_steps = m["decomposition"]["adapt_steps"].get<std::size_t>();
        c.decomposition.adapt_lr = m["decomposition"]["adapt_lr"].get<double>();
        c.hardware.engine_config = resolve(m["hardware"]["engine_config"].get<std::string>(), base_dir);
        c.hardware.energy_params = resolve(m["hardware"]["energy_params"].get<std::string>(), base_dir);
        c.hardware.batch_tokens = m["hardware"]["batch_tokens"].get<std::size_t>();
        c.evaluation.tau = m["evaluation"]["tau"].get<double>();
        c.evaluation.quantize = m["evaluation"]["quantize"].get<bool>();
        c.evaluation.noise_ratio = m["evaluation"]["noise_ratio"].get<double>();
        c.evaluation.max_accuracy_drop = m["evaluation"]["max_accuracy_drop"].get<double>();
        c.seed = m["seed"].get<std::uint64_t>();
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

PipelineConfig load_config(const fs::path& path) {
    return config_from_json(read_json(path), path.parent_path());
}

bool is_path_key(const std::string& key) {
    for (const char* k : kPathKeys)
        if (key == k) return true;
    return false;
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    flatten_keys(to_json(PipelineConfig{}), "", keys);
    return keys;
}

void apply_override(nlohmann::json& j, const std::string& key, const std::string& value) {
    nlohmann::json schema = to_json(PipelineConfig{});
    const nlohmann::json* kind = locate(schema, key);
    if (kind == nullptr || kind->is_object()) throw ConfigError("unknown config key '" + key + "'");
    nlohmann::json parsed;
    try {
        std::size_t used = 0;
        if (kind->is_string()) {
            parsed = value;
            used = value.size();
        } else if (kind->is_boolean()) {
            if (value == "true" || value == "1") parsed = true;
            else if (value == "false" || value == "0") parsed = false;
            else throw ConfigError("");
            used = value.size();
        } else if (kind->is_number_unsigned()) {
            if (!value.empty() && value.front() == '-') throw ConfigError("");
            parsed = static_cast<std::uint64_t>(std::stoull(value, &used));
        } else {
            parsed = std::stod(value, &used);
        }
        if (used != value.size()) throw ConfigError("");
    } catch (const std::exception&) {
        throw ConfigError("invalid value '" + value + "' for '" + key + "'");
    }
    nlohmann::json* node = &j;
    std::istringstream parts(key);
    std::string part;
    while (std::getline(parts, part, '.')) node = &(*node)[part];
    *node = parsed;
}

PipelineConfig cmd_gen_toy(const GenToyOptions& options, std::ostream& log) {
    fs::create_directories(options.out);
    const ToyViT model = make_toy_vit(options.dims, options.seed);
    save_model(options.out / "model.lten", model.graph, model.to_stored().tensors);
    const Dataset calib = make_dataset(model, options.calibration_samples, options.tokens,
                                       derive_seed(options.seed, "calibration"), false);
    save_dataset(options.out / "calib.lten", calib);
    const Dataset eval = make_dataset(model, options.eval_samples, options.tokens,
                                      derive_seed(options.seed, "eval"), true);
    save_dataset(options.out / "eval.lten", eval);

    PipelineConfig cfg;
    cfg.paths = {"model.lten", "calib.lten", "eval.lten", "out"};
    cfg.seed = options.seed;
    write_json(options.out / "config.json", to_json(cfg));
    log << "wrote toy model (" << model.graph.layers.size() << " layers, hidden " << model.graph.hidden_size
        << "), " << calib.size() << " calibration and " << eval.size() << " eval samples to "
        << options.out.string() << "\n";
    return load_config(options.out / "config.json");
}

CalibrationSet resolve_calibration(const PipelineConfig& config, const ToyViT& model) {
    if (config.paths.calibration.empty()) throw ConfigError("paths.calibration is not set");
    const Container c = read_container(config.paths.calibration);
    if (c.meta.value("kind", std::string{}) == "calibration") {
        CalibrationSet set = load_calibration(config.paths.calibration);
        for (const auto& l : model.graph.compressible_layers()) {
            if (set.at(l.id).rows() != l.cols)
                throw DimensionError("calibration for layer '" + l.id + "' has " +
                                     std::to_string(set.at(l.id).rows()) + " rows, layer takes " +
                                     std::to_string(l.cols));
        }
        return set;
    }
    return collect_calibration(model, load_dataset(config.paths.calibration));
}

CalibrationSet cmd_calibrate(const PipelineConfig& config, std::ostream& log) {
    const ToyViT model = load_toy(config.paths.model, "model");
    const CalibrationSet set = resolve_calibration(config, model);
    fs::create_directories(config.output_dir());
    save_calibration(config.output_dir() / "calibration.lten", set);
    log << "calibration: " << set.inputs.size() << " layers, " << set.token_count() << " tokens from "
        << set.sample_count << " samples\n";
    return set;
}

FactoredWeights round_to_storage(const FactoredWeights& f) {
    auto narrow = [](Matrix m) {
        for (double& v : m.data()) v = static_cast<double>(static_cast<float>(v));
        return m;
    };
    FactoredWeights out{narrow(f.a), narrow(f.b), f.sparse};
    for (auto& ch : out.sparse.chunks) ch.values = narrow(ch.values);
    return out;
}

CompressionPlan compress_model(const PipelineConfig& config, const ToyViT& model,
                               const CalibrationSet& calibration, ToyViT& compressed, std::ostream& log) {
    config.validate();
    const auto specs = model.graph.compressible_layers();
    if (specs.empty()) throw InvalidArgument("model has no compressible layers");
    const double s = config.targets.sparse_ratio;
    const std::size_t g = config.targets.granularity;

    std::vector<ScalingDiag> scaling;
    std::vector<std::pair<std::size_t, std::size_t>> shapes;
    std::vector<std::size_t> sparse_cols;
    for (const auto& l : specs) {
        const LinearWeights& w = model.linear.at(l.id);
        if (w.factored) throw InvalidArgument("layer '" + l.id + "' is already compressed");
        const Matrix& x = calibration.at(l.id);
        if (x.rows() != l.cols)
            throw DimensionError("calibration for layer '" + l.id + "' is " + x.shape_string());
        scaling.push_back(compute_scaling(x));
        shapes.emplace_back(l.rows, l.cols);
        try {
            sparse_cols.push_back(sparse_columns(l.cols, s));
        } catch (const InvalidArgument& e) {
            throw ConfigError("layer '" + l.id + "': " + e.what());
        }
    }
    BudgetModel budget(config.targets.alpha, shapes, sparse_cols);

    std::vector<LayerInput> inputs;
    for (std::size_t i = 0; i < specs.size(); ++i)
        inputs.push_back({specs[i].id, &model.linear.at(specs[i].id).dense, &scaling[i]});
    RankState state = prepare_full_rank(inputs, s, g, config.decomposition.iters, config.allocator.threads);

    const std::optional<std::size_t> b_override =
        config.allocator.basis_rank > 0 ? std::optional<std::size_t>(config.allocator.basis_rank) : std::nullopt;
    const std::size_t b = basis_rank(model.graph.hidden_size, config.allocator.ptc_dim, b_override);
    AllocationResult alloc =
        allocate_ranks(state, budget, b, {config.allocator.threshold, config.allocator.temperature, 0.10});
    log << "allocator: " << alloc.plan.iterations << " iterations, basis rank " << b << ", budget "
        << budget.spent() << "/" << budget.total() << " low-rank parameters\n";

    CompressionPlan plan = alloc.plan;
    compressed = model;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const std::string& id = specs[i].id;
        const Matrix& w = model.linear.at(id).dense;
        const std::size_t r = plan.layers[i].rank;
        try {
            Decomposition dec = decompose_layer(w, scaling[i], r, s, g, config.decomposition.iters);
            const FactoredWeights sliced = state.layers[i].sliced(r, scaling[i]);
            if (layer_error(w, scaling[i], sliced) < layer_error(w, scaling[i], dec)) {
                dec.a = sliced.a;
                dec.b = sliced.b;
                dec.sparse = sliced.sparse;
            }
            AdaptOptions ao;
            ao.steps = config.decomposition.adapt_steps;
            ao.lr = config.decomposition.adapt_lr;
            ao.seed = derive_seed(config.seed, id);
            const AdaptResult adapted = local_adapt(dec, w, calibration.at(id), ao);
            const FactoredWeights stored = round_to_storage(adapted.decomposition.factors());
            plan.layers[i].error = layer_error(w, scaling[i], stored);
            compressed.linear[id] = LinearWeights{Matrix{}, stored};
        } catch (const Error& e) {
            throw Error("compress: layer '" + id + "': " + e.what());
        }
    }
    plan.psi_achieved = psi(plan);
    compressed.graph.meta["compressed"] = "true";
    return plan;
}

CompressResult cmd_compress(const PipelineConfig& config, std::ostream& log) {
    const auto t0 = std::chrono::steady_clock::now();
    config.validate();
    const ToyViT model = load_toy(config.paths.model, "model");
    const CalibrationSet calibration = resolve_calibration(config, model);

    CompressResult result;
    result.plan = compress_model(config, model, calibration, result.model, log);
    fs::create_directories(config.output_dir());
    const StoredModel stored = result.model.to_stored();
    save_model(config.output_dir() / "compressed.lten", stored.graph, stored.tensors);
    write_json(config.output_dir() / "plan.json", to_json(result.plan));
    result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_json(config.output_dir() / "timing.json", {{"compress_seconds", result.seconds}});

    log << "psi = " << fixed(result.plan.psi_achieved, 6) << " (target " << config.targets.alpha << ")\n";
    for (const auto& l : result.plan.layers)
        log << "  " << std::left << std::setw(22) << l.id << " r=" << std::setw(4) << l.rank << " d=" << std::setw(4)
            << l.d << " error=" << fixed(l.error, 6) << "\n";
    log << "wall time " << fixed(result.seconds, 3) << " s\n";
    return result;
}

EngineConfig load_engine_config(const PipelineConfig& config) {
    if (config.hardware.engine_config.empty()) return EngineConfig{};
    return engine_config_from_json(read_json(config.hardware.engine_config));
}

EnergyParams load_energy_params(const PipelineConfig& config) {
    if (config.hardware.energy_params.empty()) return EnergyParams{};
    return energy_params_from_json(read_json(config.hardware.energy_params));
}

SimulateResult cmd_simulate(const PipelineConfig& config, const std::optional<fs::path>& plan_path,
                            bool baseline, bool compressed, std::ostream& log) {
    if (config.paths.model.empty()) throw ConfigError("paths.model is not set");
    const ModelGraph graph = graph_from_json(read_container(config.paths.model).meta);
    const EngineConfig engines = load_engine_config(config);
    const EnergyParams energy = load_energy_params(config);
    const std::size_t tokens = config.hardware.batch_tokens;
    fs::create_directories(config.output_dir());

    SimulateResult result;
    auto emit = [&](const CostReport& r, const std::string& name) {
        write_json(config.output_dir() / (name + ".json"), to_json(r));
        write_text(config.output_dir() / (name + ".csv"), to_csv(r));
        log << name << ": energy " << r.total_energy() << " J, " << r.cycles << " cycles, latency " << r.latency_s
            << " s, EDP " << r.edp << " J*s\n";
    };
    if (compressed) {
        const fs::path p = plan_path.value_or(config.output_dir() / "plan.json");
        if (!fs::exists(p)) throw ConfigError("plan file '" + p.string() + "' not found");
        const CompressionPlan plan = plan_from_json(read_json(p));
        if (plan.layers.empty()) throw ConfigError("plan '" + p.string() + "' has no layers");
        result.compressed = simulate(plan, graph, engines, energy, tokens);
        emit(*result.compressed, "report_compressed");
    }
    if (baseline) {
        result.baseline = simulate(CompressionPlan{}, graph, engines.scaled_baseline(2), energy, tokens);
        emit(*result.baseline, "report_baseline");
    }
    if (result.compressed && result.baseline) {
        result.comparison = compare_reports(*result.baseline, *result.compressed);
        write_json(config.output_dir() / "comparison.json", result.comparison);
        log << "EDP ratio (baseline / compressed) = " << result.comparison["ratios"]["edp"] << "\n";
    }
    return result;
}

bool VerifyResult::passed() const {
    for (const auto& c : checks)
        if (!c.passed) return false;
    return !checks.empty();
}

VerifyResult cmd_verify(const PipelineConfig& config, const fs::path& compressed_path, const fs::path& plan_path,
                        std::ostream& log) {
    VerifyResult out;
    auto record = [&](const std::string& name, bool ok, const std::string& detail) {
        out.checks.push_back({name, ok, detail});
        log << (ok ? "PASS " : "FAIL ") << name << (detail.empty() ? "" : ": " + detail) << "\n";
    };
    // Runs one check, turning exceptions into a failure.
    auto guarded = [&](const std::string& name, auto&& body) {
        try {
            body();
        } catch (const std::exception& e) {
            record(name, false, e.what());
        }
    };

    const ToyViT original = load_toy(config.paths.model, "model");
    const CalibrationSet calibration = resolve_calibration(config, original);
    const CompressionPlan plan = plan_from_json(read_json(plan_path));
    const Container raw = read_container(compressed_path);
    const ModelGraph graph = graph_from_json(raw.meta);

    guarded("tensor-shapes", [&] {
        check_model_tensors(graph, raw.tensors);
        record("tensor-shapes", true, "");
    });

    guarded("condensed-matmul", [&] {
        double worst = 0.0;
        std::size_t layers = 0;
        for (const auto& l : graph.compressible_layers()) {
            const LinearWeights w = load_linear(l, raw.tensors, false);
            if (!w.factored) continue;
            const Matrix& x = calibration.at(l.id);
            Matrix condensed;
            try {
                condensed = condensed_matmul(w.factored->sparse, x);
                w.factored->sparse.validate();
            } catch (const Error& e) {
                throw Error("layer '" + l.id + "': " + e.what());
            }
            worst = std::max(worst, max_abs_diff(condensed, matmul(expand(w.factored->sparse), x)));
            ++layers;
        }
        if (layers == 0) throw Error("no compressed layers found");
        record("condensed-matmul", worst <= 1e-9, std::to_string(layers) + " layers, max diff " + std::to_string(worst));
    });

    std::optional<ToyViT> compressed;
    guarded("load-compressed", [&] {
        compressed = ToyViT::from_stored({graph, raw.tensors});
        record("load-compressed", true, "");
    });

    guarded("reconstruction-fidelity", [&] {
        if (!compressed) throw Error("compressed model did not load");
        double worst = 0.0;
        std::string worst_id;
        for (const auto& pl : plan.layers) {
            const auto it = compressed->linear.find(pl.id);
            if (it == compressed->linear.end() || !it->second.factored)
                throw Error("plan layer '" + pl.id + "' is not compressed in the model");
            const Matrix& w = original.linear.at(pl.id).dense;
            const double e = layer_error(w, compute_scaling(calibration.at(pl.id)), *it->second.factored);
            if (!std::isfinite(e)) throw NumericError("layer '" + pl.id + "' error is not finite");
            const double diff = std::abs(e - pl.error);
            if (diff >= worst) {
                worst = diff;
                worst_id = pl.id;
            }
        }
        record("reconstruction-fidelity", worst <= 1e-9,
               "max |error - plan error| = " + std::to_string(worst) + " at " + worst_id);
    });

    guarded("psi", [&] {
        if (!compressed) throw Error("compressed model did not load");
        CompressionPlan actual;
        for (const auto& l : graph.compressible_layers()) {
            const LinearWeights& w = compressed->linear.at(l.id);
            const std::size_t r = w.factored ? w.factored->rank() : 0;
            const std::size_t d = w.factored ? w.factored->sparse.kept_per_chunk() : 0;
            if (!w.factored) {
                actual.layers.push_back({l.id, l.rows, l.cols, 0, l.cols, 1, 0.0});
                continue;
            }
            const LayerBudget* pl = plan.find(l.id);
            if (pl == nullptr || pl->rank != r || pl->d != d)
                throw Error("layer '" + l.id + "' stored (r, d) differs from the plan");
            actual.layers.push_back({l.id, l.rows, l.cols, r, d, w.factored->sparse.granularity, 0.0});
        }
        const double p = psi(actual);
        const bool ok = p >= plan.alpha && std::abs(p - plan.psi_achieved) <= 1e-12;
        out.metrics["psi"] = p;
        record("psi", ok, "psi " + fixed(p, 6) + " vs alpha " + fixed(plan.alpha, 6));
    });

    const std::optional<Dataset> eval = load_eval(config);
    if (!eval) {
        log << "no paths.eval: model-level checks not run\n";
    } else if (compressed) {
        const Dataset& data = *eval;
        const EngineConfig engines = load_engine_config(config);
        guarded("ptc-fidelity", [&] {
            const PtcExecutor ptc(engines.dense.ptc, engines.sparse.ptc);
            const double rel = relative_diff(dataset_logits(*compressed, data, &ptc), dataset_logits(*compressed, data));
            out.metrics["ptc_relative_diff"] = rel;
            record("ptc-fidelity", rel <= 1e-9, "relative logit diff " + std::to_string(rel));
        });
        guarded("distill-metrics", [&] {
            const Matrix teacher = dataset_logits(original, data);
            const Matrix student = dataset_logits(*compressed, data);
            const double bl = dataset_block_loss(*compressed, original, data);
            const LogitLossTerms ll = logit_loss_terms(student, teacher, data.labels, config.evaluation.tau);
            const double acc_t = accuracy(teacher, data.labels), acc_s = accuracy(student, data.labels);
            out.metrics["block_loss"] = bl;
            out.metrics["logit_loss"] = ll.total();
            out.metrics["logit_kl"] = ll.kl;
            out.metrics["logit_ce"] = ll.ce;
            out.metrics["accuracy_original"] = acc_t;
            out.metrics["accuracy_compressed"] = acc_s;
            const bool ok = std::isfinite(bl) && bl >= 0.0 && std::isfinite(ll.total()) && ll.kl >= -1e-12;
            record("distill-metrics", ok,
                   "block_loss " + fixed(bl, 6) + ", logit_loss " + fixed(ll.total(), 6) + ", accuracy " +
                       fixed(acc_t, 4) + " -> " + fixed(acc_s, 4));
        });
        guarded("quant-noise", [&] {
            QuantNoiseOptions q;
            q.quantize = config.evaluation.quantize;
            q.seed = config.seed;
            const QuantNoiseExecutor quant_only(q);
            q.noise_ratio = 0.0;
            const QuantNoiseExecutor zero_noise(q);
            q.noise_ratio = config.evaluation.noise_ratio;
            const QuantNoiseExecutor noisy(q);
            const Matrix lq = dataset_logits(*compressed, data, &quant_only);
            const Matrix l0 = dataset_logits(*compressed, data, &zero_noise);
            const double acc_q = accuracy(lq, data.labels);
            const double acc_n = evaluate(*compressed, data, &noisy);
            out.metrics["accuracy_quant"] = acc_q;
            out.metrics["accuracy_quant_noise"] = acc_n;
            const bool ok = lq == l0 && acc_q - acc_n <= config.evaluation.max_accuracy_drop;
            record("quant-noise", ok,
                   "accuracy quant " + fixed(acc_q, 4) + ", quant+noise(" + fixed(config.evaluation.noise_ratio, 3) +
                       ") " + fixed(acc_n, 4));
        });
    }

    nlohmann::json checks = nlohmann::json::array();
    for (const auto& c : out.checks) checks.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    fs::create_directories(config.output_dir());
    write_json(config.output_dir() / "verify.json", {{"passed", out.passed()}, {"checks", checks}, {"metrics", out.metrics}});
    return out;
}

nlohmann::json cmd_report(const PipelineConfig& config, std::ostream& log) {
    const fs::path dir = config.output_dir();
    nlohmann::json summary = nlohmann::json::object();
    bool any = false;
    if (fs::exists(dir / "plan.json")) {
        any = true;
        const CompressionPlan plan = plan_from_json(read_json(dir / "plan.json"));
        summary["plan"] = {{"alpha", plan.alpha}, {"psi_achieved", plan.psi_achieved}, {"layers", plan.layers.size()}};
        log << "plan: psi " << fixed(plan.psi_achieved, 4) << " (alpha " << plan.alpha << "), " << plan.layers.size()
            << " layers\n";
        log << "  " << std::left << std::setw(22) << "layer" << std::setw(10) << "shape" << std::setw(6) << "r"
            << std::setw(6) << "d" << "error\n";
        for (const auto& l : plan.layers) {
            log << "  " << std::left << std::setw(22) << l.id << std::setw(10)
                << (std::to_string(l.m) + "x" + std::to_string(l.n)) << std::setw(6) << l.rank << std::setw(6) << l.d
                << fixed(l.error, 5) << "\n";
        }
    }
    for (const char* name : {"report_baseline", "report_compressed"}) {
        const fs::path p = dir / (std::string(name) + ".json");
        if (!fs::exists(p)) continue;
        any = true;
        const nlohmann::json r = read_json(p);
        summary[name] = {{"energy_j", r["energy_j"]}, {"latency_s", r["latency_s"]}, {"edp_js", r["edp_js"]}};
        log << name << ": energy " << r["energy_j"]["total"].get<double>() << " J, latency "
            << r["latency_s"].get<double>() << " s\n";
        for (const char* part : {"data_movement", "weight_encode", "input_encode", "readout", "laser", "index_overhead"})
            log << "  " << std::left << std::setw(16) << part << r["energy_j"][part].get<double>() << "\n";
    }
    if (fs::exists(dir / "comparison.json")) {
        any = true;
        summary["comparison"] = read_json(dir / "comparison.json")["ratios"];
        log << "ratios (baseline / compressed): energy " << summary["comparison"]["energy"] << ", latency "
            << summary["comparison"]["latency"] << ", EDP " << summary["comparison"]["edp"] << "\n";
    }
    if (fs::exists(dir / "verify.json")) {
        any = true;
        const nlohmann::json v = read_json(dir / "verify.json");
        summary["verify"] = v;
        log << "verify: " << (v["passed"].get<bool>() ? "all checks passed" : "FAILED") << "\n";
    }
    if (!any) throw ConfigError("nothing to report in '" + dir.string() + "'");
    write_json(dir / "summary.json", summary);
    return summary;
}

}  // namespace lighten
