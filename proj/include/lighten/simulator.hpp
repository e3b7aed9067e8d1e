#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "lighten/allocator.hpp"
#include "lighten/model_graph.hpp"
#include "lighten/photonic.hpp"

namespace lighten {

struct EngineSpec {
    std::size_t tiles = 1;
    std::size_t cores_per_tile = 1;
    PtcConfig ptc;

    std::size_t cores() const noexcept { return tiles * cores_per_tile; }
    friend bool operator==(const EngineSpec&, const EngineSpec&) = default;
};

/// Dense engine plus reconfigurable sparse engine.
struct EngineConfig {
    EngineSpec dense{4, 2, {12, 12, 12}};
    EngineSpec sparse{3, 2, {8, 12, 12}};
    bool broadcast_enabled = true;    // dense engine input broadcast across tiles
    bool adc_sharing_enabled = true;  // cores of a tile share one ADC/TIA bank
    bool gating_enabled = true;       // sparse engine quarter power gating

    void validate() const;
    /// Dense-only comparison point: the dense engine with `extra_tiles` more
    /// tiles and no sparse engine.
    EngineConfig scaled_baseline(std::size_t extra_tiles = 2) const;
    friend bool operator==(const EngineConfig&, const EngineConfig&) = default;
};

/// Per-event energies in picojoules. Defaults are placeholders, not
/// measured device numbers.
struct EnergyParams {
    double dac_weight = 2.0;
    double dac_input = 2.0;
    double modulation = 1.0;
    double adc = 2.5;
    double tia = 0.5;
    double laser_per_channel_cycle = 0.2;
    double sram_per_byte = 1.0;
    double dram_per_byte = 20.0;
    double index_fetch = 0.3;
    double clock_ghz = 5.0;
    double bytes_per_value = 1.0;  // 8-bit weights and activations
    double bytes_per_index = 1.0;

    void validate() const;
    EnergyParams scaled(double factor) const;  // every energy times factor
};

/// Energy in joules.
struct EnergyBreakdown {
    double data_movement = 0.0;
    double weight_encode = 0.0;
    double input_encode = 0.0;
    double readout = 0.0;
    double laser = 0.0;
    double index_overhead = 0.0;

    double total() const noexcept {
        return data_movement + weight_encode + input_encode + readout + laser + index_overhead;
    }
    EnergyBreakdown& operator+=(const EnergyBreakdown& o) noexcept;
};

struct LayerCost {
    std::string id;
    std::size_t dense_invocations = 0;
    std::size_t sparse_invocations = 0;
    std::size_t dense_cycles = 0;
    std::size_t sparse_cycles = 0;
    std::size_t cycles = 0;  // max of the two engines
    EnergyBreakdown dense_energy;
    EnergyBreakdown sparse_energy;
    EnergyBreakdown energy;  // dense + sparse
};

struct CostReport {
    bool baseline = false;
    std::size_t batch_tokens = 0;
    std::vector<LayerCost> layers;
    EnergyBreakdown energy;
    std::size_t cycles = 0;
    double latency_s = 0.0;
    double edp = 0.0;

    double total_energy() const noexcept { return energy.total(); }
};

/// Round-robin assignment of invocations to the cores of one engine.
struct Schedule {
    std::vector<std::size_t> per_core;  // invocation count per core

    std::size_t makespan() const;
    std::size_t total() const;
};
Schedule static_schedule(std::size_t invocations, std::size_t cores);
/// Core that invocation i lands on.
inline std::size_t scheduled_core(std::size_t i, std::size_t cores) { return i % cores; }

/// Laser energy (J) of `invocations` PTC calls with `active_rows` rows lit.
double laser_energy(std::size_t invocations, std::size_t active_rows, const PtcConfig& ptc,
                    const EnergyParams& e);

/// Cost of W x (or A (B x)) on the dense engine.
LayerCost dense_layer_cost(const std::string& id, std::size_t rows, std::size_t cols,
                           std::size_t rank, std::size_t tokens, const EngineConfig& engines,
                           const EnergyParams& e);

/// Costs every layer of `model`. Layers absent from `plan` run dense; an empty
/// plan is the dense baseline.
CostReport simulate(const CompressionPlan& plan, const ModelGraph& model, const EngineConfig& engines,
                    const EnergyParams& energy, std::size_t batch_tokens);

double edp(const CostReport& report);

nlohmann::json to_json(const EnergyBreakdown& e);
nlohmann::json to_json(const CostReport& r);
/// One row per layer per energy component: layer,engine,component,energy_j.
std::string to_csv(const CostReport& r);
/// Baseline over compressed ratios for energy, latency, EDP and every component.
nlohmann::json compare_reports(const CostReport& baseline, const CostReport& compressed);

nlohmann::json to_json(const EngineConfig& c);
EngineConfig engine_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EnergyParams& e);
EnergyParams energy_params_from_json(const nlohmann::json& j);

/// Compressible-layer graph of a ViT-shaped model (no weights), for costing.
ModelGraph vit_shape_graph(std::size_t hidden, std::size_t blocks, std::size_t mlp_ratio = 4);

}  // namespace lighten
