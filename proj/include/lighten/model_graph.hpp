#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lighten/tensor_store.hpp"

namespace lighten {

enum class LayerKind { attn_q, attn_k, attn_v, attn_o, mlp_fc1, mlp_fc2, embed, head };

const char* to_string(LayerKind kind) noexcept;
LayerKind parse_layer_kind(const std::string& s);

/// One linear layer W (rows x cols, output x input).
struct LayerSpec {
    std::string id;
    LayerKind kind = LayerKind::mlp_fc1;
    std::size_t rows = 0;
    std::size_t cols = 0;

    bool compressible() const noexcept {
        return kind != LayerKind::embed && kind != LayerKind::head;
    }
    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct BlockGroup {
    std::vector<std::string> attn;
    std::vector<std::string> mlp;
    friend bool operator==(const BlockGroup&, const BlockGroup&) = default;
};

/// Model manifest: ordered layers plus their grouping into Transformer blocks.
///
/// `meta["arch"]` selects the forward evaluator: "vit" (pre-norm ViT) or
/// "chain" (plain product of the layers in order).
struct ModelGraph {
    std::vector<LayerSpec> layers;
    std::vector<BlockGroup> blocks;
    std::size_t hidden_size = 0;
    std::map<std::string, std::string> meta;

    const LayerSpec& layer(const std::string& id) const;
    const LayerSpec* find(const std::string& id) const noexcept;
    std::vector<LayerSpec> compressible_layers() const;

    std::string meta_or(const std::string& key, const std::string& fallback) const;
    std::size_t meta_size(const std::string& key) const;

    /// Throws InvalidArgument when ids repeat, a dimension is zero, or group
    /// membership is not a partition of the block layers.
    void validate() const;

    friend bool operator==(const ModelGraph&, const ModelGraph&) = default;
};

nlohmann::json to_json(const ModelGraph& g);
ModelGraph graph_from_json(const nlohmann::json& j);

// Tensor naming for a layer `id`: dense weight under `id`; compressed factors
// under `id.a`, `id.b`, `id.sparse.values` (f32 [chunks, g, d]) and
// `id.sparse.index` (i32 [chunks, d]).
std::string factor_a_name(const std::string& id);
std::string factor_b_name(const std::string& id);
std::string sparse_values_name(const std::string& id);
std::string sparse_index_name(const std::string& id);

struct StoredModel {
    ModelGraph graph;
    TensorMap tensors;
};

/// Writes an LTEN file whose manifest meta is the graph.
void save_model(const std::filesystem::path& path, const ModelGraph& graph,
                const TensorMap& tensors);
/// Reads an LTEN model and checks each layer's stored shapes against the graph.
StoredModel load_model(const std::filesystem::path& path);

/// Shape check shared by save and load; throws FormatError(shape_mismatch).
void check_model_tensors(const ModelGraph& graph, const TensorMap& tensors);

}  // namespace lighten
