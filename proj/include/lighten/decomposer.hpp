#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "lighten/linalg.hpp"

namespace lighten {

/// Per-input-channel activation scale d_j = |X[j, :]|_2, clamped below.
struct ScalingDiag {
    std::vector<double> d;
    bool epsilon_clamped = false;

    std::size_t size() const noexcept { return d.size(); }
    std::vector<double> inverse() const;
};

/// Relative floor for scaling entries: eps = kScalingEpsilon * max_j d_j.
inline constexpr double kScalingEpsilon = 1e-8;

/// Columns of `x_calib` are calibration tokens, rows are input channels.
ScalingDiag compute_scaling(const Matrix& x_calib);

/// Unit scaling (plain Frobenius objective).
ScalingDiag identity_scaling(std::size_t n);

struct SparseChunk {
    std::vector<std::size_t> kept_cols;  // strictly increasing, length d
    Matrix values;                       // chunk_rows x d
    friend bool operator==(const SparseChunk&, const SparseChunk&) = default;
};

/// Column-vector structured sparsity with condensation.
///
/// Rows are split into chunks of height `granularity` (the last chunk may be
/// shorter). Every chunk keeps the same number d of length-g column vectors;
/// `values` is the condensed dense chunk_rows x d block.
struct StructuredSparse {
    std::size_t granularity = 0;
    std::size_t full_rows = 0;
    std::size_t full_cols = 0;
    std::vector<SparseChunk> chunks;

    std::size_t kept_per_chunk() const noexcept {
        return chunks.empty() ? 0 : chunks.front().kept_cols.size();
    }
    std::size_t chunk_row_start(std::size_t c) const noexcept { return c * granularity; }
    /// Stored nonzero budget, rows * d.
    std::size_t stored_values() const noexcept { return full_rows * kept_per_chunk(); }

    /// Throws InvalidArgument when the chunk count, per-chunk d or index
    /// ordering/range invariants do not hold.
    void validate() const;

    friend bool operator==(const StructuredSparse&, const StructuredSparse&) = default;
};

/// round(n * s); throws InvalidArgument when it rounds to zero.
std::size_t sparse_columns(std::size_t n, double sparse_ratio);
std::size_t chunk_count(std::size_t rows, std::size_t granularity);

/// Keeps, per row-chunk, the top-d columns by L1 norm (ties: lower index).
StructuredSparse structured_sparsify(const Matrix& residual, std::size_t granularity,
                                     double sparse_ratio);

/// Scatter back to a dense full_rows x full_cols matrix.
Matrix expand(const StructuredSparse& sp);

/// Gathers `dense` at the kept positions of `pattern`.
StructuredSparse condense(const Matrix& dense, const StructuredSparse& pattern);

/// Multiplies each stored value in column j by d[j].
StructuredSparse scale_sparse_columns(const StructuredSparse& sp, std::span<const double> d);

/// Stored layer: W ~ A * B + expand(S).
struct FactoredWeights {
    Matrix a;  // m x r
    Matrix b;  // r x n
    StructuredSparse sparse;

    std::size_t rank() const noexcept { return a.cols(); }
    Matrix reconstruct() const;
};

struct Decomposition {
    Matrix a;  // m x r
    Matrix b;  // r x n
    StructuredSparse sparse;
    std::size_t rank = 0;
    /// Scaled-domain objective |W D - A B - S|_F after every half-step.
    std::vector<double> objective_trace;
    double best_objective = 0.0;

    /// A * B + expand(sparse), in the unscaled weight domain.
    Matrix reconstruct() const;
    FactoredWeights factors() const { return {a, b, sparse}; }
};

inline constexpr std::size_t kDefaultDecomposeIters = 80;

/// Alternating low-rank / structured-sparse decomposition of W D.
///
/// Starts from S = 0 with an L-step, keeps the best iterate seen, and returns
/// it de-scaled so that A * B + expand(S) approximates W itself.
Decomposition decompose_layer(const Matrix& w, const ScalingDiag& scaling, std::size_t rank,
                              double sparse_ratio, std::size_t granularity,
                              std::size_t iters = kDefaultDecomposeIters);

/// |W D - (A B + S) D|_F / |W D|_F.
double layer_error(const Matrix& w, const ScalingDiag& scaling, const FactoredWeights& f);
inline double layer_error(const Matrix& w, const ScalingDiag& scaling, const Decomposition& dec) {
    return layer_error(w, scaling, dec.factors());
}

}  // namespace lighten
