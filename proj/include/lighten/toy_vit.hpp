#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lighten/decomposer.hpp"
#include "lighten/model_graph.hpp"

namespace lighten {

/// Weights of one linear layer: either dense W or A B + S.
struct LinearWeights {
    Matrix dense;
    std::optional<FactoredWeights> factored;

    std::size_t rows() const noexcept { return factored ? factored->a.rows() : dense.rows(); }
    std::size_t cols() const noexcept { return factored ? factored->b.cols() : dense.cols(); }
    /// W, or A B + expand(S).
    Matrix effective() const;
};

/// Reads layer `spec` from `tensors`, dense or factored. Sparse tensors are
/// validated unless `validate` is false, so a corrupted index raises
/// InvalidArgument here.
LinearWeights load_linear(const LayerSpec& spec, const TensorMap& tensors, bool validate = true);
/// Writes the tensors of one layer (dense or factored) into `tensors`.
void store_linear(const LayerSpec& spec, const LinearWeights& w, TensorMap& tensors);

/// Runs one linear layer on activations x (n x T, columns are tokens).
class LinearExecutor {
public:
    virtual ~LinearExecutor() = default;
    virtual Matrix apply(const std::string& id, const LinearWeights& w, const Matrix& x) const = 0;
};

/// Plain matmul: W x, or A (B x) + expand(S) x.
class ReferenceExecutor final : public LinearExecutor {
public:
    Matrix apply(const std::string& id, const LinearWeights& w, const Matrix& x) const override;
};

struct ToyDims {
    std::size_t hidden = 48;
    std::size_t heads = 4;
    std::size_t mlp_ratio = 4;
    std::size_t blocks = 2;
    std::size_t in_dim = 32;
    std::size_t classes = 10;
};

/// Per-block features after each residual add, tokens x hidden.
struct BlockFeatures {
    std::vector<Matrix> attn;
    std::vector<Matrix> mlp;
};

struct ForwardOptions {
    const LinearExecutor* executor = nullptr;  // reference when null
    /// Called with the exact activation fed to every linear layer.
    std::function<void(const std::string& id, const Matrix& x)> on_layer_input;
    bool record_attention = false;
};

struct ForwardResult {
    Matrix logits;  // 1 x classes (vit); 1 x out_dim (chain)
    BlockFeatures features;
    Matrix output;                 // last hidden state, hidden x T
    std::vector<Matrix> attention;  // block-major, then head; T x T, rows sum to 1
};

/// Executable model.
///
/// arch "vit": patch embed, pre-norm blocks (LN, MHSA, residual, LN, GELU MLP,
/// residual), mean pool over tokens, linear head. No biases.
/// arch "chain": the layers applied in order with no nonlinearity; logits are
/// the token mean of the output.
struct ToyViT {
    ModelGraph graph;
    std::map<std::string, LinearWeights> linear;
    std::map<std::string, std::vector<double>> norms;  // "<block>.ln1.gamma", ...

    std::string arch() const { return graph.meta_or("arch", "vit"); }
    std::size_t heads() const { return graph.meta_size("heads"); }
    std::size_t input_dim() const;

    static ToyViT from_stored(const StoredModel& stored);
    StoredModel to_stored() const;

    /// Validates shapes against the graph; throws DimensionError naming the layer.
    void check() const;
};

inline constexpr double kLayerNormEps = 1e-6;

/// One sample: input is in_dim x T.
ForwardResult forward(const ToyViT& model, const Matrix& input, const ForwardOptions& options = {});

/// Seeded toy ViT with a decaying weight spectrum.
ToyViT make_toy_vit(const ToyDims& dims, std::uint64_t seed);

/// Layer id helpers for the vit layout.
std::string block_prefix(std::size_t b);

struct Dataset {
    std::vector<Matrix> inputs;  // each in_dim x T
    std::vector<std::int32_t> labels;

    std::size_t size() const noexcept { return inputs.size(); }
};

/// Gaussian inputs; labels are the model's own argmax.
Dataset make_dataset(const ToyViT& model, std::size_t samples, std::size_t tokens, std::uint64_t seed,
                     bool with_labels = true);

/// LTEN with tensors "inputs" f32 [N, in_dim, T] and "labels" i32 [N].
void save_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& path);

/// Stacked logits, one row per sample.
Matrix dataset_logits(const ToyViT& model, const Dataset& data, const LinearExecutor* executor = nullptr);

std::size_t argmax_row(const Matrix& m, std::size_t row);

}  // namespace lighten
