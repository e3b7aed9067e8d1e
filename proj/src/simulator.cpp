#include "lighten/simulator.hpp"

#include <algorithm>
#include <iomanip>
#include <set>
#include <sstream>

#include "lighten/error.hpp"

namespace lighten {
namespace {

constexpr double kPico = 1e-12;

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }
double dbl(std::size_t v) { return static_cast<double>(v); }

// One matmul of a rows x inner weight with inner x tokens input on the dense engine.
std::size_t dense_pass(std::size_t rows, std::size_t inner, std::size_t tokens, const EngineConfig& cfg,
                       const EnergyParams& e, EnergyBreakdown& out) {
    const PtcConfig& p = cfg.dense.ptc;
    const std::size_t inv = ceil_div(rows, p.n_h) * ceil_div(inner, p.n_lambda) * ceil_div(tokens, p.n_v);
    const double n = dbl(inv);
    const double input_share = cfg.broadcast_enabled ? dbl(cfg.dense.tiles) : 1.0;
    const double readout_share = cfg.adc_sharing_enabled ? dbl(cfg.dense.cores_per_tile) : 1.0;

    out.weight_encode += n * dbl(p.n_h * p.n_lambda) * (e.dac_weight + e.modulation) * kPico;
    out.input_encode += n * dbl(p.n_lambda * p.n_v) * (e.dac_input + e.modulation) * kPico / input_share;
    out.readout += n * dbl(p.n_h * p.n_v) * (e.adc + e.tia) * kPico / readout_share;
    out.laser += laser_energy(inv, p.n_h, p, e);
    const double dram_bytes = dbl(rows * inner) * e.bytes_per_value;
    const double sram_bytes =
        (n * dbl(p.n_h * p.n_lambda + p.n_lambda * p.n_v) + dbl(rows * tokens)) * e.bytes_per_value;
    out.data_movement += (dram_bytes * e.dram_per_byte + sram_bytes * e.sram_per_byte) * kPico;
    return inv;
}

// Condensed chunks on the sparse engine: chunk rows on n_v, kept columns on
// n_lambda, tokens on n_h.
std::size_t sparse_pass(std::size_t rows, std::size_t d, std::size_t g, std::size_t tokens,
                        const EngineConfig& cfg, const EnergyParams& e, EnergyBreakdown& out) {
    const PtcConfig& p = cfg.sparse.ptc;
    const double readout_share = cfg.adc_sharing_enabled ? dbl(cfg.sparse.cores_per_tile) : 1.0;
    const std::size_t per_tile = ceil_div(d, p.n_lambda) * ceil_div(tokens, p.n_h);
    std::size_t total = 0;
    for (std::size_t r0 = 0; r0 < rows; r0 += g) {
        const std::size_t h = std::min(g, rows - r0);
        for (std::size_t t0 = 0; t0 < h; t0 += p.n_v) {
            const std::size_t tile_rows = std::min(p.n_v, h - t0);
            const std::size_t active = cfg.gating_enabled ? operating_rows(tile_rows, p) : p.n_v;
            const double n = dbl(per_tile);
            out.weight_encode += n * dbl(active * p.n_lambda) * (e.dac_weight + e.modulation) * kPico;
            out.input_encode += n * dbl(p.n_lambda * p.n_h) * (e.dac_input + e.modulation) * kPico;
            out.readout += n * dbl(active * p.n_h) * (e.adc + e.tia) * kPico / readout_share;
            out.laser += laser_energy(per_tile, active, p, e);
            out.data_movement +=
                n * dbl(active * p.n_lambda + p.n_lambda * p.n_h) * e.bytes_per_value * e.sram_per_byte * kPico;
            total += per_tile;
        }
        const double dram_bytes = dbl(h * d) * e.bytes_per_value + dbl(d) * e.bytes_per_index;
        out.data_movement += (dram_bytes * e.dram_per_byte +
                              dbl(h * tokens) * e.bytes_per_value * e.sram_per_byte) * kPico;
        out.index_overhead += dbl(d * tokens) * e.index_fetch * kPico;
    }
    return total;
}

void finish_layer(LayerCost& c, const EngineConfig& cfg) {
    c.dense_cycles = static_schedule(c.dense_invocations, cfg.dense.cores()).makespan();
    c.sparse_cycles = c.sparse_invocations == 0
                          ? 0
                          : static_schedule(c.sparse_invocations, cfg.sparse.cores()).makespan();
    c.cycles = std::max(c.dense_cycles, c.sparse_cycles);
    c.energy = c.dense_energy;
    c.energy += c.sparse_energy;
}

void require_nonnegative(double v, const char* name) {
    if (!(v >= 0.0)) throw InvalidArgument(std::string("energy parameter '") + name + "' must be >= 0");
}

}  // namespace

void EngineConfig::validate() const {
    for (const auto* s : {&dense, &sparse}) {
        if (s->tiles == 0 || s->cores_per_tile == 0) throw InvalidArgument("engine tile and core counts must be >= 1");
        s->ptc.validate();
    }
    if (gating_enabled && sparse.ptc.n_v % 4 != 0)
        throw InvalidArgument("sparse engine gating needs n_v divisible by 4");
}

EngineConfig EngineConfig::scaled_baseline(std::size_t extra_tiles) const {
    EngineConfig b = *this;
    b.dense.tiles += extra_tiles;
    return b;
}

void EnergyParams::validate() const {
    require_nonnegative(dac_weight, "dac_weight");
    require_nonnegative(dac_input, "dac_input");
    require_nonnegative(modulation, "modulation");
    require_nonnegative(adc, "adc");
    require_nonnegative(tia, "tia");
    require_nonnegative(laser_per_channel_cycle, "laser_per_channel_cycle");
    require_nonnegative(sram_per_byte, "sram_per_byte");
    require_nonnegative(dram_per_byte, "dram_per_byte");
    require_nonnegative(index_fetch, "index_fetch");
    require_nonnegative(bytes_per_value, "bytes_per_value");
    require_nonnegative(bytes_per_index, "bytes_per_index");
    if (!(clock_ghz > 0.0)) throw InvalidArgument("clock_ghz must be positive");
}

EnergyParams EnergyParams::scaled(double f) const {
    EnergyParams s = *this;
    for (double* v : {&s.dac_weight, &s.dac_input, &s.modulation, &s.adc, &s.tia, &s.laser_per_channel_cycle,
                      &s.sram_per_byte, &s.dram_per_byte, &s.index_fetch})
        *v *= f;
    return s;
}

EnergyBreakdown& EnergyBreakdown::operator+=(const EnergyBreakdown& o) noexcept {
    data_movement += o.data_movement;
    weight_encode += o.weight_encode;
    input_encode += o.input_encode;
    readout += o.readout;
    laser += o.laser;
    index_overhead += o.index_overhead;
    return *this;
}

std::size_t Schedule::makespan() const {
    return per_core.empty() ? 0 : *std::max_element(per_core.begin(), per_core.end());
}

std::size_t Schedule::total() const {
    std::size_t t = 0;
    for (std::size_t c : per_core) t += c;
    return t;
}

Schedule static_schedule(std::size_t invocations, std::size_t cores) {
    if (cores == 0) throw InvalidArgument("static_schedule: no cores");
    Schedule s;
    s.per_core.assign(cores, invocations / cores);
    for (std::size_t c = 0; c < invocations % cores; ++c) ++s.per_core[c];
    return s;
}

double laser_energy(std::size_t invocations, std::size_t active_rows, const PtcConfig& ptc,
                    const EnergyParams& e) {
    return dbl(invocations) * dbl(ptc.n_lambda) * dbl(active_rows) * e.laser_per_channel_cycle * kPico;
}

LayerCost dense_layer_cost(const std::string& id, std::size_t rows, std::size_t cols, std::size_t rank,
                           std::size_t tokens, const EngineConfig& engines, const EnergyParams& e) {
    LayerCost c;
    c.id = id;
    if (rank == 0) {
        c.dense_invocations = dense_pass(rows, cols, tokens, engines, e, c.dense_energy);
    } else {
        // B x first, then A (B x); the rank x tokens intermediate goes through SRAM.
        c.dense_invocations = dense_pass(rank, cols, tokens, engines, e, c.dense_energy);
        c.dense_invocations += dense_pass(rows, rank, tokens, engines, e, c.dense_energy);
    }
    finish_layer(c, engines);
    return c;
}

CostReport simulate(const CompressionPlan& plan, const ModelGraph& model, const EngineConfig& engines,
                    const EnergyParams& energy, std::size_t batch_tokens) {
    engines.validate();
    energy.validate();
    if (batch_tokens == 0) throw InvalidArgument("simulate: batch_tokens must be >= 1");
    std::set<std::string> known;
    for (const auto& l : model.layers) known.insert(l.id);
    for (const auto& pl : plan.layers) {
        if (!known.contains(pl.id)) throw InvalidArgument("plan layer '" + pl.id + "' is not in the model");
        const auto& spec = model.layer(pl.id);
        if (spec.rows != pl.m || spec.cols != pl.n) {
            throw DimensionError("plan layer '" + pl.id + "' is " + std::to_string(pl.m) + "x" +
                                 std::to_string(pl.n) + ", model says " + std::to_string(spec.rows) + "x" +
                                 std::to_string(spec.cols));
        }
        if (!spec.compressible()) throw InvalidArgument("plan compresses non-compressible layer '" + pl.id + "'");
    }

    CostReport report;
    report.baseline = plan.layers.empty();
    report.batch_tokens = batch_tokens;
    for (const auto& l : model.layers) {
        const LayerBudget* pl = plan.find(l.id);
        LayerCost c = dense_layer_cost(l.id, l.rows, l.cols, pl ? pl->rank : 0, batch_tokens, engines, energy);
        if (pl && pl->d > 0) {
            if (pl->granularity == 0) throw InvalidArgument("plan layer '" + l.id + "' has granularity 0");
            c.sparse_invocations =
                sparse_pass(l.rows, pl->d, pl->granularity, batch_tokens, engines, energy, c.sparse_energy);
            finish_layer(c, engines);
        }
        report.energy += c.energy;
        report.cycles += c.cycles;
        report.layers.push_back(std::move(c));
    }
    report.latency_s = dbl(report.cycles) / (energy.clock_ghz * 1e9);
    report.edp = edp(report);
    return report;
}

double edp(const CostReport& report) { return report.total_energy() * report.latency_s; }

nlohmann::json to_json(const EnergyBreakdown& e) {
    return {{"data_movement", e.data_movement}, {"weight_encode", e.weight_encode},
            {"input_encode", e.input_encode},   {"readout", e.readout},
            {"laser", e.laser},                 {"index_overhead", e.index_overhead},
            {"total", e.total()}};
}

nlohmann::json to_json(const CostReport& r) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& c : r.layers) {
        layers.push_back({{"id", c.id},
                          {"dense_invocations", c.dense_invocations},
                          {"sparse_invocations", c.sparse_invocations},
                          {"dense_cycles", c.dense_cycles},
                          {"sparse_cycles", c.sparse_cycles},
                          {"cycles", c.cycles},
                          {"energy_j", to_json(c.energy)}});
    }
    return {{"mode", r.baseline ? "baseline" : "compressed"},
            {"batch_tokens", r.batch_tokens},
            {"energy_j", to_json(r.energy)},
            {"cycles", r.cycles},
            {"latency_s", r.latency_s},
            {"edp_js", r.edp},
            {"layers", layers}};
}

std::string to_csv(const CostReport& r) {
    std::ostringstream os;
    os << std::setprecision(17) << "layer,engine,component,energy_j\n";
    auto rows = [&](const std::string& id, const char* engine, const EnergyBreakdown& e) {
        const std::pair<const char*, double> parts[] = {
            {"data_movement", e.data_movement}, {"weight_encode", e.weight_encode},
            {"input_encode", e.input_encode},   {"readout", e.readout},
            {"laser", e.laser},                 {"index_overhead", e.index_overhead}};
        for (const auto& [name, v] : parts) os << id << ',' << engine << ',' << name << ',' << v << '\n';
    };
    for (const auto& c : r.layers) {
        rows(c.id, "dense", c.dense_energy);
        rows(c.id, "sparse", c.sparse_energy);
    }
    return os.str();
}

nlohmann::json compare_reports(const CostReport& baseline, const CostReport& compressed) {
    auto ratio = [](double b, double c) -> nlohmann::json {
        if (c == 0.0) return nullptr;
        return b / c;
    };
    const auto& eb = baseline.energy;
    const auto& ec = compressed.energy;
    nlohmann::json components = {
        {"data_movement", ratio(eb.data_movement, ec.data_movement)},
        {"weight_encode", ratio(eb.weight_encode, ec.weight_encode)},
        {"input_encode", ratio(eb.input_encode, ec.input_encode)},
        {"readout", ratio(eb.readout, ec.readout)},
        {"laser", ratio(eb.laser, ec.laser)},
        {"index_overhead", ratio(eb.index_overhead, ec.index_overhead)}};
    return {{"baseline", {{"energy_j", eb.total()}, {"latency_s", baseline.latency_s}, {"edp_js", baseline.edp}}},
            {"compressed",
             {{"energy_j", ec.total()}, {"latency_s", compressed.latency_s}, {"edp_js", compressed.edp}}},
            {"ratios",
             {{"energy", ratio(eb.total(), ec.total())},
              {"latency", ratio(baseline.latency_s, compressed.latency_s)},
              {"edp", ratio(baseline.edp, compressed.edp)},
              {"components", components}}}};
}

namespace {

nlohmann::json to_json(const EngineSpec& s) {
    return {{"tiles", s.tiles},
            {"cores_per_tile", s.cores_per_tile},
            {"ptc", {{"n_v", s.ptc.n_v}, {"n_h", s.ptc.n_h}, {"n_lambda", s.ptc.n_lambda}}}};
}

EngineSpec engine_spec_from_json(const nlohmann::json& j, EngineSpec fallback) {
    EngineSpec s = fallback;
    s.tiles = j.value("tiles", s.tiles);
    s.cores_per_tile = j.value("cores_per_tile", s.cores_per_tile);
    if (j.contains("ptc")) {
        const auto& p = j.at("ptc");
        s.ptc.n_v = p.value("n_v", s.ptc.n_v);
        s.ptc.n_h = p.value("n_h", s.ptc.n_h);
        s.ptc.n_lambda = p.value("n_lambda", s.ptc.n_lambda);
    }
    return s;
}

}  // namespace

nlohmann::json to_json(const EngineConfig& c) {
    return {{"dense", to_json(c.dense)},
            {"sparse", to_json(c.sparse)},
            {"broadcast_enabled", c.broadcast_enabled},
            {"adc_sharing_enabled", c.adc_sharing_enabled},
            {"gating_enabled", c.gating_enabled}};
}

EngineConfig engine_config_from_json(const nlohmann::json& j) {
    try {
        EngineConfig c;
        if (j.contains("dense")) c.dense = engine_spec_from_json(j.at("dense"), c.dense);
        if (j.contains("sparse")) c.sparse = engine_spec_from_json(j.at("sparse"), c.sparse);
        c.broadcast_enabled = j.value("broadcast_enabled", c.broadcast_enabled);
        c.adc_sharing_enabled = j.value("adc_sharing_enabled", c.adc_sharing_enabled);
        c.gating_enabled = j.value("gating_enabled", c.gating_enabled);
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("engine config: ") + e.what());
    }
}

nlohmann::json to_json(const EnergyParams& e) {
    return {{"dac_weight", e.dac_weight},
            {"dac_input", e.dac_input},
            {"modulation", e.modulation},
            {"adc", e.adc},
            {"tia", e.tia},
            {"laser_per_channel_cycle", e.laser_per_channel_cycle},
            {"sram_per_byte", e.sram_per_byte},
            {"dram_per_byte", e.dram_per_byte},
            {"index_fetch", e.index_fetch},
            {"clock_ghz", e.clock_ghz},
            {"bytes_per_value", e.bytes_per_value},
            {"bytes_per_index", e.bytes_per_index}};
}

EnergyParams energy_params_from_json(const nlohmann::json& j) {
    try {
        EnergyParams e;
        e.dac_weight = j.value("dac_weight", e.dac_weight);
        e.dac_input = j.value("dac_input", e.dac_input);
        e.modulation = j.value("modulation", e.modulation);
        e.adc = j.value("adc", e.adc);
        e.tia = j.value("tia", e.tia);
        e.laser_per_channel_cycle = j.value("laser_per_channel_cycle", e.laser_per_channel_cycle);
        e.sram_per_byte = j.value("sram_per_byte", e.sram_per_byte);
        e.dram_per_byte = j.value("dram_per_byte", e.dram_per_byte);
        e.index_fetch = j.value("index_fetch", e.index_fetch);
        e.clock_ghz = j.value("clock_ghz", e.clock_ghz);
        e.bytes_per_value = j.value("bytes_per_value", e.bytes_per_value);
        e.bytes_per_index = j.value("bytes_per_index", e.bytes_per_index);
        e.validate();
        return e;
    } catch (const nlohmann::json::exception& ex) {
        throw ConfigError(std::string("energy params: ") + ex.what());
    }
}

ModelGraph vit_shape_graph(std::size_t hidden, std::size_t blocks, std::size_t mlp_ratio) {
    ModelGraph g;
    g.hidden_size = hidden;
    g.meta = {{"arch", "vit"}};
    const std::size_t f = hidden * mlp_ratio;
    for (std::size_t b = 0; b < blocks; ++b) {
        const std::string p = "blocks." + std::to_string(b);
        BlockGroup group;
        const std::pair<const char*, LayerKind> attn[] = {
            {".attn.q", LayerKind::attn_q}, {".attn.k", LayerKind::attn_k},
            {".attn.v", LayerKind::attn_v}, {".attn.o", LayerKind::attn_o}};
        for (const auto& [suffix, kind] : attn) {
            g.layers.push_back({p + suffix, kind, hidden, hidden});
            group.attn.push_back(p + suffix);
        }
        g.layers.push_back({p + ".mlp.fc1", LayerKind::mlp_fc1, f, hidden});
        g.layers.push_back({p + ".mlp.fc2", LayerKind::mlp_fc2, hidden, f});
        group.mlp = {p + ".mlp.fc1", p + ".mlp.fc2"};
        g.blocks.push_back(std::move(group));
    }
    g.validate();
    return g;
}

}  // namespace lighten
