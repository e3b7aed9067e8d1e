#include "lighten/linalg.hpp"

#include <algorithm>
#include <cmath>

#include "lighten/error.hpp"

namespace lighten {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw DimensionError("Matrix: data length " + std::to_string(data_.size()) +
                             " does not match shape " + std::to_string(rows) + "x" +
                             std::to_string(cols));
    }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw DimensionError("Matrix: ragged initializer list");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::diagonal(std::span<const double> d) {
    Matrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
}

Matrix Matrix::transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
}

Matrix Matrix::block(std::size_t r0, std::size_t c0, std::size_t nr, std::size_t nc) const {
    if (r0 + nr > rows_ || c0 + nc > cols_) {
        throw DimensionError("block: window exceeds matrix " + shape_string());
    }
    Matrix out(nr, nc);
    for (std::size_t i = 0; i < nr; ++i)
        std::copy_n(&data_[(r0 + i) * cols_ + c0], nc, &out.data_[i * nc]);
    return out;
}

void Matrix::set_block(std::size_t r0, std::size_t c0, const Matrix& src) {
    if (r0 + src.rows_ > rows_ || c0 + src.cols_ > cols_) {
        throw DimensionError("set_block: " + src.shape_string() + " does not fit in " +
                             shape_string());
    }
    for (std::size_t i = 0; i < src.rows_; ++i)
        std::copy_n(&src.data_[i * src.cols_], src.cols_, &data_[(r0 + i) * cols_ + c0]);
}

Matrix& Matrix::operator+=(const Matrix& other) {
    if (rows_ != other.rows_ || cols_ != other.cols_) {
        throw DimensionError("add: " + shape_string() + " vs " + other.shape_string());
    }
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
    if (rows_ != other.rows_ || cols_ != other.cols_) {
        throw DimensionError("subtract: " + shape_string() + " vs " + other.shape_string());
    }
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

Matrix& Matrix::operator*=(double s) noexcept {
    for (double& v : data_) v *= s;
    return *this;
}

bool Matrix::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Matrix::shape_string() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: shape mismatch " + a.shape_string() + " * " +
                             b.shape_string());
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Matrix c(m, n);
    // i-k-j order: each c(i, j) accumulates its k terms in ascending k.
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c.row(i).data();
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a(i, p);
            const double* bp = b.row(p).data();
            for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
    return c;
}

double frobenius_norm(const Matrix& m) {
    double s = 0.0;
    for (double v : m.data()) s += v * v;
    return std::sqrt(s);
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError("max_abs_diff: " + a.shape_string() + " vs " + b.shape_string());
    }
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        d = std::max(d, std::abs(a.data()[i] - b.data()[i]));
    return d;
}

Matrix scale_columns(const Matrix& m, std::span<const double> d) {
    if (d.size() != m.cols()) {
        throw DimensionError("scale_columns: " + std::to_string(d.size()) +
                             " scales for matrix " + m.shape_string());
    }
    Matrix out = m;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto r = out.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) r[j] *= d[j];
    }
    return out;
}

Matrix scale_rows(const Matrix& m, std::span<const double> d) {
    if (d.size() != m.rows()) {
        throw DimensionError("scale_rows: " + std::to_string(d.size()) + " scales for matrix " +
                             m.shape_string());
    }
    Matrix out = m;
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (double& v : out.row(i)) v *= d[i];
    return out;
}

}  // namespace lighten
