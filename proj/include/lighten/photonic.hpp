#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "lighten/decomposer.hpp"
#include "lighten/toy_vit.hpp"

namespace lighten {

/// Photonic tensor core dimensions. One invocation multiplies an
/// n_h x n_lambda weight block by an n_lambda x n_v input block.
struct PtcConfig {
    std::size_t n_v = 12;
    std::size_t n_h = 12;
    std::size_t n_lambda = 12;

    void validate() const;
    friend bool operator==(const PtcConfig&, const PtcConfig&) = default;
};

/// Zero-padded block grid of a matrix.
struct TileGrid {
    std::size_t rows = 0;  // original shape
    std::size_t cols = 0;
    std::size_t block_rows = 0;
    std::size_t block_cols = 0;
    std::size_t grid_rows = 0;  // p
    std::size_t grid_cols = 0;  // q
    std::vector<Matrix> blocks;  // row-major over the grid

    const Matrix& at(std::size_t i, std::size_t j) const { return blocks[i * grid_cols + j]; }
};

TileGrid tile(const Matrix& w, std::size_t block_rows, std::size_t block_cols);
/// p = ceil(m / n_v), q = ceil(n / n_h).
TileGrid tile_weight(const Matrix& w, const PtcConfig& ptc);
Matrix untile(const TileGrid& grid);

/// One PTC invocation: (n_h x n_lambda) * (n_lambda x n_v).
Matrix ptc_matmul(const Matrix& w_blk, const Matrix& x_blk, const PtcConfig& ptc);

/// w * x assembled from ptc_matmul calls; rows of w map to n_h, the inner
/// dimension to n_lambda, tokens to n_v.
Matrix tiled_matmul(const Matrix& w, const Matrix& x, const PtcConfig& ptc);

/// Gathers the kept input rows of x per chunk and multiplies by the
/// condensed values. Equals expand(sp) * x.
Matrix condensed_matmul(const StructuredSparse& sp, const Matrix& x);

/// condensed_matmul executed on the sparse engine's PTC: chunk rows map to
/// n_v, kept columns to n_lambda, tokens to n_h.
Matrix sparse_ptc_matmul(const StructuredSparse& sp, const Matrix& x, const PtcConfig& ptc);

enum class SplitterState { equal, full_a, full_b };
const char* to_string(SplitterState s) noexcept;

/// Two-stage splitter tree feeding the four row quarters of a PTC. Stage 1
/// splits between branch 0 (quarters 0, 1) and branch 1 (quarters 2, 3).
struct SplitterPlan {
    SplitterState stage1 = SplitterState::equal;
    std::array<SplitterState, 2> stage2{SplitterState::equal, SplitterState::equal};
    std::vector<std::size_t> active_quarters;

    /// Fraction of input optical power reaching each quarter.
    std::array<double, 4> quarter_power() const;
    /// True when the states power exactly active_quarters.
    bool consistent() const;
};

/// Requires active_rows to be 1..4 quarters of n_v; powered quarters are
/// contiguous from quarter 0.
SplitterPlan plan_splitters(std::size_t active_rows, const PtcConfig& ptc);

/// Smallest quarter multiple of n_v that is >= rows (rows <= n_v).
std::size_t operating_rows(std::size_t rows, const PtcConfig& ptc);

/// Executes linear layers through the tiled PTC model: dense weights and the
/// low-rank passes on the dense engine, the sparse term on the sparse engine.
class PtcExecutor final : public LinearExecutor {
public:
    PtcExecutor(PtcConfig dense, PtcConfig sparse) : dense_(dense), sparse_(sparse) {}
    Matrix apply(const std::string& id, const LinearWeights& w, const Matrix& x) const override;

private:
    PtcConfig dense_;
    PtcConfig sparse_;
};

}  // namespace lighten
