// One-sided (Hestenes) Jacobi SVD.
//
// The matrix is oriented so that rows >= cols. Column pairs of G = A V are
// rotated until mutually orthogonal; then sigma_j = |g_j|, u_j = g_j / sigma_j
// and V holds the accumulated rotations.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lighten/error.hpp"
#include "lighten/linalg.hpp"

namespace lighten {
namespace {

double dot(const double* x, const double* y, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
    return s;
}

void rotate(double* x, double* y, std::size_t n, double c, double s) {
    for (std::size_t i = 0; i < n; ++i) {
        const double xi = x[i];
        const double yi = y[i];
        x[i] = c * xi - s * yi;
        y[i] = s * xi + c * yi;
    }
}

// Column-major working state for an M x N problem (M >= N).
struct JacobiState {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> g;  // N columns of length M
    std::vector<double> v;  // N columns of length N
};

void run_sweeps(JacobiState& st) {
    const std::size_t m = st.rows;
    const std::size_t n = st.cols;
    const double tol = std::numeric_limits<double>::epsilon() * static_cast<double>(m);

    for (std::size_t sweep = 1; sweep <= kJacobiMaxSweeps; ++sweep) {
        bool converged = true;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            double* gp = &st.g[p * m];
            double* vp = &st.v[p * n];
            for (std::size_t q = p + 1; q < n; ++q) {
                double* gq = &st.g[q * m];
                const double alpha = dot(gp, gp, m);
                const double beta = dot(gq, gq, m);
                const double gamma = dot(gp, gq, m);
                if (alpha == 0.0 || beta == 0.0) continue;
                if (std::abs(gamma) <= tol * std::sqrt(alpha) * std::sqrt(beta)) continue;

                const double zeta = (beta - alpha) / (2.0 * gamma);
                double t;
                if (std::abs(zeta) > 1e150) {
                    t = 0.5 / zeta;
                } else {
                    t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                }
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                rotate(gp, gq, m, c, s);
                rotate(vp, &st.v[q * n], n, c, s);
                if (std::abs(s) >= kJacobiSineTolerance) converged = false;
            }
        }
        if (converged) return;
    }
    throw ConvergenceError("thin_svd: one-sided Jacobi did not converge", kJacobiMaxSweeps);
}

// Fills column j of `u` (M x N, column-major) with a unit vector orthogonal to
// the columns listed in `done`.
void complete_column(std::vector<double>& u, std::size_t m, std::size_t j,
                     const std::vector<std::size_t>& done) {
    for (std::size_t e = 0; e < m; ++e) {
        std::vector<double> x(m, 0.0);
        x[e] = 1.0;
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t k : done) {
                const double* uk = &u[k * m];
                const double proj = dot(uk, x.data(), m);
                for (std::size_t i = 0; i < m; ++i) x[i] -= proj * uk[i];
            }
        }
        const double nrm = std::sqrt(dot(x.data(), x.data(), m));
        if (nrm > 0.5) {
            for (std::size_t i = 0; i < m; ++i) u[j * m + i] = x[i] / nrm;
            return;
        }
    }
}

}  // namespace

SvdResult thin_svd(const Matrix& input, const SvdResult* warm) {
    if (input.empty()) throw InvalidArgument("thin_svd: empty matrix");
    if (!input.all_finite()) throw NumericError("thin_svd: non-finite input");

    const bool tall = input.rows() >= input.cols();
    const Matrix a = tall ? input : input.transpose();
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();

    JacobiState st;
    st.rows = m;
    st.cols = n;
    st.v.assign(n * n, 0.0);

    // Starting right basis, column-major.
    bool seeded = false;
    if (warm != nullptr && warm->rank() == n) {
        if (tall && warm->vt.rows() == n && warm->vt.cols() == n) {
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t p = 0; p < n; ++p) st.v[j * n + p] = warm->vt(j, p);
            seeded = true;
        } else if (!tall && warm->u.rows() == n && warm->u.cols() == n) {
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t p = 0; p < n; ++p) st.v[j * n + p] = warm->u(p, j);
            seeded = true;
        }
    }
    if (!seeded) {
        for (std::size_t j = 0; j < n; ++j) st.v[j * n + j] = 1.0;
    }

    st.g.assign(m * n, 0.0);
    if (seeded) {
        for (std::size_t j = 0; j < n; ++j) {
            const double* vj = &st.v[j * n];
            for (std::size_t i = 0; i < m; ++i) {
                const auto ai = a.row(i);
                double s = 0.0;
                for (std::size_t p = 0; p < n; ++p) s += ai[p] * vj[p];
                st.g[j * m + i] = s;
            }
        }
    } else {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) st.g[j * m + i] = a(i, j);
    }

    run_sweeps(st);

    std::vector<double> sigma(n);
    for (std::size_t j = 0; j < n; ++j) sigma[j] = std::sqrt(dot(&st.g[j * m], &st.g[j * m], m));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

    // Left vectors in sorted order, column-major.
    std::vector<double> u(m * n, 0.0);
    std::vector<std::size_t> done;
    std::vector<std::size_t> zero_cols;
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t j = order[k];
        if (sigma[j] > std::numeric_limits<double>::min()) {
            for (std::size_t i = 0; i < m; ++i) u[k * m + i] = st.g[j * m + i] / sigma[j];
            done.push_back(k);
        } else {
            zero_cols.push_back(k);
        }
    }
    for (std::size_t k : zero_cols) {
        complete_column(u, m, k, done);
        done.push_back(k);
    }

    SvdResult out;
    out.singular_values.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double s = sigma[order[k]];
        out.singular_values[k] = s > std::numeric_limits<double>::min() ? s : 0.0;
    }
    // Oriented factors: a = Uo diag(s) Vo^T.
    Matrix uo(m, n), vo(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < m; ++i) uo(i, k) = u[k * m + i];
        const std::size_t j = order[k];
        for (std::size_t p = 0; p < n; ++p) vo(p, k) = st.v[j * n + p];
    }
    if (tall) {
        out.u = std::move(uo);
        out.vt = vo.transpose();
    } else {
        out.u = std::move(vo);
        out.vt = uo.transpose();
    }
    return out;
}

SvdResult truncated_svd(const Matrix& m, std::size_t k, const SvdResult* warm) {
    const std::size_t kmax = std::min(m.rows(), m.cols());
    if (k < 1 || k > kmax) {
        throw InvalidArgument("truncated_svd: rank " + std::to_string(k) + " outside [1, " +
                              std::to_string(kmax) + "] for matrix " + m.shape_string());
    }
    return thin_svd(m, warm).truncated(k);
}

SvdResult SvdResult::truncated(std::size_t k) const {
    if (k > rank()) throw InvalidArgument("SvdResult::truncated: rank exceeds available triplets");
    SvdResult out;
    out.u = u.block(0, 0, u.rows(), k);
    out.singular_values.assign(singular_values.begin(), singular_values.begin() + k);
    out.vt = vt.block(0, 0, k, vt.cols());
    return out;
}

Matrix SvdResult::reconstruct() const {
    return matmul(scale_columns(u, singular_values), vt);
}

BalancedFactors balanced_factors(const SvdResult& svd) {
    std::vector<double> root(svd.rank());
    for (std::size_t i = 0; i < root.size(); ++i) root[i] = std::sqrt(svd.singular_values[i]);
    return {scale_columns(svd.u, root), scale_rows(svd.vt, root)};
}

}  // namespace lighten
