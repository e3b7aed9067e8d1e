#include "lighten/photonic.hpp"

#include <algorithm>

#include "lighten/error.hpp"

namespace lighten {
namespace {

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

// Padded copy of the (r0, c0) block of size nr x nc.
Matrix padded_block(const Matrix& m, std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) {
    Matrix out(nr, nc);
    const std::size_t hr = std::min(nr, m.rows() - r0);
    const std::size_t hc = std::min(nc, m.cols() - c0);
    for (std::size_t i = 0; i < hr; ++i)
        for (std::size_t j = 0; j < hc; ++j) out(i, j) = m(r0 + i, c0 + j);
    return out;
}

void check_sparse_indices(const StructuredSparse& sp, std::size_t x_rows) {
    if (x_rows != sp.full_cols) {
        throw DimensionError("condensed_matmul: sparse operand has " + std::to_string(sp.full_cols) +
                             " columns, input has " + std::to_string(x_rows) + " rows");
    }
    for (std::size_t c = 0; c < sp.chunks.size(); ++c)
        for (std::size_t col : sp.chunks[c].kept_cols)
            if (col >= sp.full_cols)
                throw InvalidArgument("condensed_matmul: index " + std::to_string(col) + " in chunk " +
                                      std::to_string(c) + " out of range");
}

Matrix gather_rows(const Matrix& x, const std::vector<std::size_t>& rows) {
    Matrix out(rows.size(), x.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto src = x.row(rows[k]);
        std::copy(src.begin(), src.end(), out.row(k).begin());
    }
    return out;
}

}  // namespace

void PtcConfig::validate() const {
    if (n_v == 0 || n_h == 0 || n_lambda == 0) throw InvalidArgument("PTC dimensions must be >= 1");
}

TileGrid tile(const Matrix& w, std::size_t block_rows, std::size_t block_cols) {
    if (block_rows == 0 || block_cols == 0) throw InvalidArgument("tile: block size must be positive");
    TileGrid g;
    g.rows = w.rows();
    g.cols = w.cols();
    g.block_rows = block_rows;
    g.block_cols = block_cols;
    g.grid_rows = ceil_div(w.rows(), block_rows);
    g.grid_cols = ceil_div(w.cols(), block_cols);
    for (std::size_t i = 0; i < g.grid_rows; ++i)
        for (std::size_t j = 0; j < g.grid_cols; ++j)
            g.blocks.push_back(padded_block(w, i * block_rows, j * block_cols, block_rows, block_cols));
    return g;
}

TileGrid tile_weight(const Matrix& w, const PtcConfig& ptc) {
    ptc.validate();
    return tile(w, ptc.n_v, ptc.n_h);
}

Matrix untile(const TileGrid& grid) {
    Matrix out(grid.rows, grid.cols);
    for (std::size_t i = 0; i < grid.grid_rows; ++i)
        for (std::size_t j = 0; j < grid.grid_cols; ++j) {
            const Matrix& b = grid.at(i, j);
            const std::size_t r0 = i * grid.block_rows, c0 = j * grid.block_cols;
            const std::size_t hr = std::min(grid.block_rows, grid.rows - r0);
            const std::size_t hc = std::min(grid.block_cols, grid.cols - c0);
            for (std::size_t r = 0; r < hr; ++r)
                for (std::size_t c = 0; c < hc; ++c) out(r0 + r, c0 + c) = b(r, c);
        }
    return out;
}

Matrix ptc_matmul(const Matrix& w_blk, const Matrix& x_blk, const PtcConfig& ptc) {
    if (w_blk.rows() != ptc.n_h || w_blk.cols() != ptc.n_lambda || x_blk.rows() != ptc.n_lambda ||
        x_blk.cols() != ptc.n_v) {
        throw DimensionError("ptc_matmul: blocks " + w_blk.shape_string() + " and " + x_blk.shape_string() +
                             " do not fit a " + std::to_string(ptc.n_h) + "x" +
                             std::to_string(ptc.n_lambda) + "x" + std::to_string(ptc.n_v) + " PTC");
    }
    return matmul(w_blk, x_blk);
}

Matrix tiled_matmul(const Matrix& w, const Matrix& x, const PtcConfig& ptc) {
    ptc.validate();
    if (w.cols() != x.rows()) {
        throw DimensionError("tiled_matmul: shape mismatch " + w.shape_string() + " * " + x.shape_string());
    }
    const TileGrid wg = tile(w, ptc.n_h, ptc.n_lambda);
    const TileGrid xg = tile(x, ptc.n_lambda, ptc.n_v);
    Matrix out(w.rows(), x.cols());
    for (std::size_t i = 0; i < wg.grid_rows; ++i)
        for (std::size_t t = 0; t < xg.grid_cols; ++t) {
            // Output-stationary: partial products over the inner tiles accumulate in place.
            Matrix acc(ptc.n_h, ptc.n_v);
            for (std::size_t k = 0; k < wg.grid_cols; ++k) acc += ptc_matmul(wg.at(i, k), xg.at(k, t), ptc);
            const std::size_t r0 = i * ptc.n_h, c0 = t * ptc.n_v;
            const std::size_t hr = std::min(ptc.n_h, out.rows() - r0);
            const std::size_t hc = std::min(ptc.n_v, out.cols() - c0);
            for (std::size_t r = 0; r < hr; ++r)
                for (std::size_t c = 0; c < hc; ++c) out(r0 + r, c0 + c) = acc(r, c);
        }
    return out;
}

Matrix condensed_matmul(const StructuredSparse& sp, const Matrix& x) {
    check_sparse_indices(sp, x.rows());
    Matrix out(sp.full_rows, x.cols());
    for (std::size_t c = 0; c < sp.chunks.size(); ++c) {
        const auto& ch = sp.chunks[c];
        out.set_block(sp.chunk_row_start(c), 0, matmul(ch.values, gather_rows(x, ch.kept_cols)));
    }
    return out;
}

Matrix sparse_ptc_matmul(const StructuredSparse& sp, const Matrix& x, const PtcConfig& ptc) {
    ptc.validate();
    check_sparse_indices(sp, x.rows());
    // Map chunk rows to n_v and tokens to n_h by running the transposed
    // geometry through tiled_matmul.
    const PtcConfig geometry{ptc.n_h, ptc.n_v, ptc.n_lambda};
    Matrix out(sp.full_rows, x.cols());
    for (std::size_t c = 0; c < sp.chunks.size(); ++c) {
        const auto& ch = sp.chunks[c];
        out.set_block(sp.chunk_row_start(c), 0,
                      tiled_matmul(ch.values, gather_rows(x, ch.kept_cols), geometry));
    }
    return out;
}

const char* to_string(SplitterState s) noexcept {
    switch (s) {
        case SplitterState::equal: return "1:1";
        case SplitterState::full_a: return "2:0";
        case SplitterState::full_b: return "0:2";
    }
    return "?";
}

std::array<double, 4> SplitterPlan::quarter_power() const {
    auto split = [](SplitterState s) -> std::array<double, 2> {
        switch (s) {
            case SplitterState::equal: return {0.5, 0.5};
            case SplitterState::full_a: return {1.0, 0.0};
            case SplitterState::full_b: return {0.0, 1.0};
        }
        return {0.0, 0.0};
    };
    const auto top = split(stage1);
    std::array<double, 4> out{};
    for (std::size_t b = 0; b < 2; ++b) {
        const auto low = split(stage2[b]);
        out[2 * b] = top[b] * low[0];
        out[2 * b + 1] = top[b] * low[1];
    }
    return out;
}

bool SplitterPlan::consistent() const {
    const auto power = quarter_power();
    std::vector<std::size_t> lit;
    for (std::size_t q = 0; q < 4; ++q)
        if (power[q] > 0.0) lit.push_back(q);
    return lit == active_quarters;
}

SplitterPlan plan_splitters(std::size_t active_rows, const PtcConfig& ptc) {
    ptc.validate();
    if (ptc.n_v % 4 != 0) throw InvalidArgument("quarter gating needs n_v divisible by 4");
    const std::size_t quarter = ptc.n_v / 4;
    if (active_rows == 0 || active_rows > ptc.n_v || active_rows % quarter != 0) {
        throw InvalidArgument("active rows " + std::to_string(active_rows) +
                              " is not a quarter multiple of n_v=" + std::to_string(ptc.n_v) +
                              "; round up with operating_rows()");
    }
    using S = SplitterState;
    SplitterPlan plan;
    switch (active_rows / quarter) {
        case 4: plan.stage1 = S::equal; plan.stage2 = {S::equal, S::equal}; break;
        case 3: plan.stage1 = S::equal; plan.stage2 = {S::equal, S::full_a}; break;
        case 2: plan.stage1 = S::full_a; plan.stage2 = {S::equal, S::equal}; break;
        default: plan.stage1 = S::full_a; plan.stage2 = {S::full_a, S::equal}; break;
    }
    for (std::size_t q = 0; q < active_rows / quarter; ++q) plan.active_quarters.push_back(q);
    return plan;
}

std::size_t operating_rows(std::size_t rows, const PtcConfig& ptc) {
    if (rows == 0 || rows > ptc.n_v) {
        throw InvalidArgument("operating_rows: " + std::to_string(rows) + " rows do not fit n_v=" +
                              std::to_string(ptc.n_v));
    }
    if (ptc.n_v % 4 != 0) return ptc.n_v;
    const std::size_t quarter = ptc.n_v / 4;
    return ceil_div(rows, quarter) * quarter;
}

Matrix PtcExecutor::apply(const std::string& id, const LinearWeights& w, const Matrix& x) const {
    if (w.cols() != x.rows()) {
        throw DimensionError("layer '" + id + "': weight " + std::to_string(w.rows()) + "x" +
                             std::to_string(w.cols()) + " applied to activation " + x.shape_string());
    }
    if (!w.factored) return tiled_matmul(w.dense, x, dense_);
    const FactoredWeights& f = *w.factored;
    const Matrix low = tiled_matmul(f.a, tiled_matmul(f.b, x, dense_), dense_);
    return low + sparse_ptc_matmul(f.sparse, x, sparse_);
}

}  // namespace lighten
