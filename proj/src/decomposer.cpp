#include "lighten/decomposer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lighten/error.hpp"

namespace lighten {

std::vector<double> ScalingDiag::inverse() const {
    std::vector<double> inv(d.size());
    for (std::size_t j = 0; j < d.size(); ++j) inv[j] = 1.0 / d[j];
    return inv;
}

ScalingDiag compute_scaling(const Matrix& x_calib) {
    if (x_calib.cols() == 0 || x_calib.rows() == 0) {
        throw InvalidArgument("compute_scaling: empty calibration set");
    }
    ScalingDiag out;
    out.d.resize(x_calib.rows());
    for (std::size_t j = 0; j < x_calib.rows(); ++j) {
        double s = 0.0;
        for (double v : x_calib.row(j)) s += v * v;
        out.d[j] = std::sqrt(s);
    }
    const double peak = *std::max_element(out.d.begin(), out.d.end());
    if (!(peak > 0.0) || !std::isfinite(peak)) {
        throw NumericError("compute_scaling: calibration activations are all zero or non-finite");
    }
    const double eps = kScalingEpsilon * peak;
    for (double& v : out.d) {
        if (v < eps) {
            v = eps;
            out.epsilon_clamped = true;
        }
    }
    return out;
}

ScalingDiag identity_scaling(std::size_t n) { return {std::vector<double>(n, 1.0), false}; }

std::size_t sparse_columns(std::size_t n, double sparse_ratio) {
    if (!(sparse_ratio > 0.0 && sparse_ratio < 1.0)) {
        throw InvalidArgument("sparse ratio must lie in (0, 1), got " + std::to_string(sparse_ratio));
    }
    const auto d = static_cast<std::size_t>(std::llround(static_cast<double>(n) * sparse_ratio));
    if (d == 0) throw InvalidArgument("sparse budget rounds to zero");
    return d;
}

std::size_t chunk_count(std::size_t rows, std::size_t granularity) {
    return (rows + granularity - 1) / granularity;
}

void StructuredSparse::validate() const {
    if (granularity == 0) throw InvalidArgument("structured sparse: granularity is zero");
    if (chunks.size() != chunk_count(full_rows, granularity)) {
        throw InvalidArgument("structured sparse: " + std::to_string(chunks.size()) +
                              " chunks for " + std::to_string(full_rows) + " rows at g=" +
                              std::to_string(granularity));
    }
    const std::size_t d = kept_per_chunk();
    for (std::size_t c = 0; c < chunks.size(); ++c) {
        const auto& ch = chunks[c];
        const std::size_t h = std::min(granularity, full_rows - c * granularity);
        if (ch.kept_cols.size() != d || ch.values.rows() != h || ch.values.cols() != d) {
            throw InvalidArgument("structured sparse: chunk " + std::to_string(c) +
                                  " has inconsistent shape");
        }
        for (std::size_t k = 0; k < d; ++k) {
            if (ch.kept_cols[k] >= full_cols) {
                throw InvalidArgument("structured sparse: chunk " + std::to_string(c) +
                                      " index " + std::to_string(ch.kept_cols[k]) +
                                      " out of range");
            }
            if (k > 0 && ch.kept_cols[k] <= ch.kept_cols[k - 1]) {
                throw InvalidArgument("structured sparse: chunk " + std::to_string(c) +
                                      " indices not strictly increasing");
            }
        }
    }
}

StructuredSparse structured_sparsify(const Matrix& residual, std::size_t granularity,
                                     double sparse_ratio) {
    if (granularity < 1) throw InvalidArgument("structured_sparsify: granularity must be >= 1");
    const std::size_t m = residual.rows();
    const std::size_t n = residual.cols();
    const std::size_t d = sparse_columns(n, sparse_ratio);

    StructuredSparse sp;
    sp.granularity = granularity;
    sp.full_rows = m;
    sp.full_cols = n;
    sp.chunks.resize(chunk_count(m, granularity));

    std::vector<double> norms(n);
    std::vector<std::size_t> order(n);
    for (std::size_t c = 0; c < sp.chunks.size(); ++c) {
        const std::size_t r0 = c * granularity;
        const std::size_t h = std::min(granularity, m - r0);
        std::fill(norms.begin(), norms.end(), 0.0);
        for (std::size_t i = r0; i < r0 + h; ++i) {
            const auto row = residual.row(i);
            for (std::size_t j = 0; j < n; ++j) norms[j] += std::abs(row[j]);
        }
        std::iota(order.begin(), order.end(), 0);
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(d),
                          order.end(), [&](std::size_t x, std::size_t y) {
                              return norms[x] > norms[y] || (norms[x] == norms[y] && x < y);
                          });
        auto& chunk = sp.chunks[c];
        chunk.kept_cols.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(d));
        std::sort(chunk.kept_cols.begin(), chunk.kept_cols.end());
        chunk.values = Matrix(h, d);
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t k = 0; k < d; ++k)
                chunk.values(i, k) = residual(r0 + i, chunk.kept_cols[k]);
    }
    return sp;
}

Matrix expand(const StructuredSparse& sp) {
    Matrix out(sp.full_rows, sp.full_cols);
    for (std::size_t c = 0; c < sp.chunks.size(); ++c) {
        const auto& chunk = sp.chunks[c];
        const std::size_t r0 = sp.chunk_row_start(c);
        for (std::size_t i = 0; i < chunk.values.rows(); ++i)
            for (std::size_t k = 0; k < chunk.kept_cols.size(); ++k)
                out(r0 + i, chunk.kept_cols[k]) = chunk.values(i, k);
    }
    return out;
}

StructuredSparse condense(const Matrix& dense, const StructuredSparse& pattern) {
    if (dense.rows() != pattern.full_rows || dense.cols() != pattern.full_cols) {
        throw DimensionError("condense: matrix " + dense.shape_string() +
                             " does not match pattern " + std::to_string(pattern.full_rows) +
                             "x" + std::to_string(pattern.full_cols));
    }
    StructuredSparse out = pattern;
    for (std::size_t c = 0; c < out.chunks.size(); ++c) {
        auto& chunk = out.chunks[c];
        const std::size_t r0 = out.chunk_row_start(c);
        for (std::size_t i = 0; i < chunk.values.rows(); ++i)
            for (std::size_t k = 0; k < chunk.kept_cols.size(); ++k)
                chunk.values(i, k) = dense(r0 + i, chunk.kept_cols[k]);
    }
    return out;
}

StructuredSparse scale_sparse_columns(const StructuredSparse& sp, std::span<const double> d) {
    if (d.size() != sp.full_cols) {
        throw DimensionError("scale_sparse_columns: " + std::to_string(d.size()) +
                             " scales for " + std::to_string(sp.full_cols) + " columns");
    }
    StructuredSparse out = sp;
    for (auto& chunk : out.chunks)
        for (std::size_t i = 0; i < chunk.values.rows(); ++i)
            for (std::size_t k = 0; k < chunk.kept_cols.size(); ++k)
                chunk.values(i, k) *= d[chunk.kept_cols[k]];
    return out;
}

Matrix FactoredWeights::reconstruct() const { return matmul(a, b) + expand(sparse); }

Matrix Decomposition::reconstruct() const { return matmul(a, b) + expand(sparse); }

Decomposition decompose_layer(const Matrix& w, const ScalingDiag& scaling, std::size_t rank,
                              double sparse_ratio, std::size_t granularity, std::size_t iters) {
    if (scaling.size() != w.cols()) {
        throw DimensionError("decompose_layer: " + std::to_string(scaling.size()) +
                             " scales for weight " + w.shape_string());
    }
    if (rank < 1 || rank > std::min(w.rows(), w.cols())) {
        throw InvalidArgument("decompose_layer: rank " + std::to_string(rank) +
                              " invalid for weight " + w.shape_string());
    }
    if (iters < 1) throw InvalidArgument("decompose_layer: iters must be >= 1");
    if (granularity < 1) throw InvalidArgument("decompose_layer: granularity must be >= 1");
    sparse_columns(w.cols(), sparse_ratio);

    const Matrix wd = scale_columns(w, scaling.d);

    // S = 0 start.
    StructuredSparse sparse;
    sparse.granularity = granularity;
    sparse.full_rows = w.rows();
    sparse.full_cols = w.cols();
    Matrix sparse_dense(w.rows(), w.cols());

    Decomposition best;
    best.rank = rank;
    best.best_objective = std::numeric_limits<double>::infinity();
    std::vector<double> trace;
    trace.reserve(2 * iters);

    Matrix a, b, lowrank;
    SvdResult svd;
    bool have_svd = false;

    auto record = [&](double obj) {
        trace.push_back(obj);
        if (obj < best.best_objective) {
            best.best_objective = obj;
            best.a = a;
            best.b = b;
            best.sparse = sparse;
        }
    };

    for (std::size_t it = 0; it < iters; ++it) {
        // L-step: best rank-r fit of W D - S.
        svd = thin_svd(wd - sparse_dense, have_svd ? &svd : nullptr);
        have_svd = true;
        auto [fa, fb] = balanced_factors(svd.truncated(rank));
        a = std::move(fa);
        b = std::move(fb);
        lowrank = matmul(a, b);
        record(frobenius_norm(wd - lowrank - sparse_dense));

        // S-step: structured projection of W D - A B.
        sparse = structured_sparsify(wd - lowrank, granularity, sparse_ratio);
        sparse_dense = expand(sparse);
        record(frobenius_norm(wd - lowrank - sparse_dense));
    }

    if (best.sparse.chunks.empty()) {
        // Best iterate was the very first L-step, where S is still zero.
        best.sparse = structured_sparsify(Matrix(w.rows(), w.cols()), granularity, sparse_ratio);
    }

    const std::vector<double> inv = scaling.inverse();
    best.b = scale_columns(best.b, inv);
    best.sparse = scale_sparse_columns(best.sparse, inv);
    best.objective_trace = std::move(trace);
    return best;
}

double layer_error(const Matrix& w, const ScalingDiag& scaling, const FactoredWeights& f) {
    if (scaling.size() != w.cols()) {
        throw DimensionError("layer_error: " + std::to_string(scaling.size()) +
                             " scales for weight " + w.shape_string());
    }
    const Matrix wd = scale_columns(w, scaling.d);
    const double denom = frobenius_norm(wd);
    if (denom == 0.0) throw NumericError("layer_error: |W D|_F is zero");
    const Matrix approx = scale_columns(f.reconstruct(), scaling.d);
    return frobenius_norm(wd - approx) / denom;
}

}  // namespace lighten
