#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace lighten {

/// Dense row-major matrix of doubles.
///
/// All numerics in the library run in double precision; tensors are narrowed
/// to float only when written to disk.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);
    static Matrix diagonal(std::span<const double> d);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const noexcept {
        return {data_.data() + i * cols_, cols_};
    }

    Matrix transpose() const;

    /// Copy of rows [r0, r0+nr) and columns [c0, c0+nc).
    Matrix block(std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const;
    /// Writes `src` with its top-left corner at (r0, c0).
    void set_block(std::size_t r0, std::size_t c0, const Matrix& src);

    Matrix& operator+=(const Matrix& other);
    Matrix& operator-=(const Matrix& other);
    Matrix& operator*=(double s) noexcept;

    bool all_finite() const noexcept;
    std::string shape_string() const;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix a);

/// a * b with a fixed k-ascending summation order per output entry.
Matrix matmul(const Matrix& a, const Matrix& b);

double frobenius_norm(const Matrix& m);
double max_abs_diff(const Matrix& a, const Matrix& b);

/// m * diag(d): scales column j by d[j].
Matrix scale_columns(const Matrix& m, std::span<const double> d);
/// diag(d) * m: scales row i by d[i].
Matrix scale_rows(const Matrix& m, std::span<const double> d);

/// Leading-k singular triplets, singular values non-increasing.
struct SvdResult {
    Matrix u;                            // m x k, orthonormal columns
    std::vector<double> singular_values;  // length k
    Matrix vt;                           // k x n, orthonormal rows

    std::size_t rank() const noexcept { return singular_values.size(); }
    /// u * diag(sigma) * vt
    Matrix reconstruct() const;
    /// Keeps the first k triplets.
    SvdResult truncated(std::size_t k) const;
};

inline constexpr std::size_t kJacobiMaxSweeps = 60;
inline constexpr double kJacobiSineTolerance = 1e-12;

/// Thin SVD (k = min(rows, cols)) by one-sided Jacobi.
///
/// When `warm` is the thin SVD of a nearby matrix of the same shape, its right
/// basis seeds the rotation so only a few sweeps are needed. The result is a
/// valid SVD either way.
SvdResult thin_svd(const Matrix& m, const SvdResult* warm = nullptr);

/// Best rank-k approximation factors. Requires 1 <= k <= min(rows, cols).
SvdResult truncated_svd(const Matrix& m, std::size_t k, const SvdResult* warm = nullptr);

/// Splits a truncated SVD into balanced factors A = U sqrt(S), B = sqrt(S) Vt.
struct BalancedFactors {
    Matrix a;
    Matrix b;
};
BalancedFactors balanced_factors(const SvdResult& svd);

}  // namespace lighten
