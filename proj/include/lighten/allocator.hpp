#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lighten/decomposer.hpp"

namespace lighten {

/// Parameter budget for the low-rank factors under a global reduction target.
class BudgetModel {
public:
    /// `layer_shapes` are (m, n); `sparse_cols` the per-layer d. Throws
    /// InfeasibleTarget when the sparse part alone exceeds the target.
    BudgetModel(double alpha, const std::vector<std::pair<std::size_t, std::size_t>>& layer_shapes,
                const std::vector<std::size_t>& sparse_cols);

    double alpha() const noexcept { return alpha_; }
    std::size_t original_params() const noexcept { return original_; }
    std::size_t sparse_params() const noexcept { return sparse_; }
    /// Largest low-rank parameter count that keeps psi >= alpha.
    std::size_t total() const noexcept { return total_; }
    std::size_t spent() const noexcept { return spent_; }
    std::size_t remaining() const noexcept { return total_ - spent_; }

    bool can_afford(std::size_t cost) const noexcept { return cost <= remaining(); }
    void charge(std::size_t cost);

private:
    double alpha_;
    std::size_t original_ = 0;
    std::size_t sparse_ = 0;
    std::size_t total_ = 0;
    std::size_t spent_ = 0;
};

/// floor(m n / (m + n)): past this rank the factors outweigh W.
std::size_t max_useful_rank(std::size_t m, std::size_t n) noexcept;

/// Full-rank decomposition of one layer, kept for rank slicing.
struct LayerRankState {
    std::string id;
    std::size_t m = 0;
    std::size_t n = 0;
    std::size_t d = 0;
    std::size_t granularity = 0;
    std::size_t rank = 0;
    std::size_t max_rank = 0;
    /// Full spectrum of W D - S (scaled domain), min(m, n) values.
    std::vector<double> singular_values;
    /// Scaled-domain factors of the rank-max_rank SVD of W D - S.
    Matrix a_full;
    Matrix b_full;
    StructuredSparse sparse;  // scaled domain, fixed during the search
    double residual_at_max = 0.0;  // |W D - S - A_full B_full|_F
    double scaled_norm = 0.0;      // |W D|_F

    /// Normalized error when the factors are sliced to rank r.
    double error_at(std::size_t r) const;
    /// A_full[:, :r], B_full[:r, :] de-scaled by `scaling`, with the fixed S.
    FactoredWeights sliced(std::size_t r, const ScalingDiag& scaling) const;
};

struct RankState {
    std::vector<LayerRankState> layers;
    std::vector<double> errors() const;
};

struct LayerInput {
    std::string id;
    const Matrix* weight = nullptr;
    const ScalingDiag* scaling = nullptr;
};

/// Decomposes every layer once at its max rank and stores factors sorted by
/// descending singular value. Layers run in parallel.
RankState prepare_full_rank(const std::vector<LayerInput>& layers, double sparse_ratio,
                            std::size_t granularity, std::size_t iters = kDefaultDecomposeIters,
                            std::size_t threads = 0);

inline constexpr std::size_t kBaseScaleHidden = 768;

/// P for base-scale hidden sizes, P / 2 below; `override_b` wins when set.
std::size_t basis_rank(std::size_t hidden_size, std::size_t ptc_dim,
                       std::optional<std::size_t> override_b = std::nullopt,
                       std::size_t base_threshold = kBaseScaleHidden);

/// Rank increment for the current remaining budget.
std::size_t step_size(std::size_t remaining, std::size_t total, std::size_t b);

struct BatchSelection {
    std::vector<std::size_t> layers;  // descending probability
    std::vector<double> probs;        // softmax probability of each selected layer
    bool empty() const noexcept { return layers.empty(); }
};

/// Softmax over eligible layers, then the shortest descending-probability
/// prefix whose cumulative mass reaches `threshold`.
BatchSelection select_batch(const std::vector<double>& errors, double threshold,
                            double temperature = 1.0, const std::vector<bool>& eligible = {});

/// Splits |batch| * delta_r rank units proportionally to probability with
/// every member getting at least one, capped at `capacity` with overflow
/// re-offered in descending-probability order.
std::vector<std::size_t> redistribute(const BatchSelection& batch, std::size_t delta_r,
                                      const std::vector<std::size_t>& capacity = {});

struct LayerBudget {
    std::string id;
    std::size_t m = 0;
    std::size_t n = 0;
    std::size_t rank = 0;
    std::size_t d = 0;
    std::size_t granularity = 0;
    double error = 0.0;

    std::size_t params() const noexcept { return rank * (m + n) + m * d; }
};

struct CompressionPlan {
    double alpha = 0.0;
    double psi_achieved = 0.0;
    std::size_t iterations = 0;
    std::vector<LayerBudget> layers;

    const LayerBudget* find(const std::string& id) const noexcept;
};

/// 1 - sum(r (m + n) + m d) / sum(m n). Index storage is not counted.
double psi(const CompressionPlan& plan);

nlohmann::json to_json(const CompressionPlan& plan);
CompressionPlan plan_from_json(const nlohmann::json& j);

struct AllocatorOptions {
    double threshold = 0.5;
    double temperature = 1.0;
    double initial_fraction = 0.10;
};

struct AllocationResult {
    CompressionPlan plan;
    std::vector<std::vector<std::size_t>> rank_trace;  // ranks after init and each iteration
    std::vector<double> max_error_trace;
    double seconds = 0.0;
};

/// Batch-wise greedy rank allocation over prepared full-rank factors.
AllocationResult allocate_ranks(RankState& state, BudgetModel& budget, std::size_t b,
                                const AllocatorOptions& options = {});

}  // namespace lighten
