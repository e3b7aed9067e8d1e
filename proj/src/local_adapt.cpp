#include "lighten/local_adapt.hpp"

#include <cmath>

#include "lighten/error.hpp"
#include "lighten/random.hpp"

namespace lighten {
namespace {

double inner(const Matrix& x, const Matrix& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x.data()[i] * y.data()[i];
    return s;
}

double squared_norm(const Matrix& x) { return inner(x, x); }

}  // namespace

std::size_t adapter_rank_for(std::size_t rank) noexcept { return rank / 4 == 0 ? 1 : rank / 4; }

AdaptProblem::AdaptProblem(const FactoredWeights& base, const Matrix& w, const Matrix& x_calib)
    : base_(base), x_(x_calib), adapter_rank_(adapter_rank_for(base.rank())) {
    if (w.cols() != x_calib.rows()) {
        throw DimensionError("local_adapt: weight " + w.shape_string() +
                             " does not accept calibration " + x_calib.shape_string());
    }
    if (base.a.rows() != w.rows() || base.b.cols() != w.cols()) {
        throw DimensionError("local_adapt: factors do not match weight " + w.shape_string());
    }
    target_ = matmul(w - expand(base.sparse), x_);
}

AdapterParams AdaptProblem::initial_params(std::uint64_t seed, double init_scale) const {
    Rng rng(seed);
    const std::size_t m = base_.a.rows(), r = base_.rank(), n = base_.b.cols();
    const std::size_t k = adapter_rank_;
    AdapterParams p;
    p.ua = random_uniform(m, k, rng, -init_scale, init_scale);
    p.va = Matrix(k, r);
    p.ub = random_uniform(r, k, rng, -init_scale, init_scale);
    p.vb = Matrix(k, n);
    return p;
}

Matrix AdaptProblem::residual(const AdapterParams& p) const {
    const Matrix mm = base_.a + matmul(p.ua, p.va);
    const Matrix nn = base_.b + matmul(p.ub, p.vb);
    return target_ - matmul(mm, matmul(nn, x_));
}

double AdaptProblem::objective(const AdapterParams& p) const { return squared_norm(residual(p)); }

AdapterParams AdaptProblem::gradient(const AdapterParams& p) const {
    const Matrix mm = base_.a + matmul(p.ua, p.va);
    const Matrix nn = base_.b + matmul(p.ub, p.vb);
    const Matrix y = matmul(nn, x_);
    const Matrix r = target_ - matmul(mm, y);
    const Matrix d_m = -2.0 * matmul(r, y.transpose());
    const Matrix d_n = -2.0 * matmul(mm.transpose(), matmul(r, x_.transpose()));
    return {matmul(d_m, p.va.transpose()), matmul(p.ua.transpose(), d_m),
            matmul(d_n, p.vb.transpose()), matmul(p.ub.transpose(), d_n)};
}

AdaptProblem::StepResult AdaptProblem::descent_cycle(const AdapterParams& start,
                                                     double step_scale) const {
    AdapterParams p = start;
    for (int block = 0; block < 4; ++block) {
        const Matrix mm = base_.a + matmul(p.ua, p.va);
        const Matrix nn = base_.b + matmul(p.ub, p.vb);
        const Matrix y = matmul(nn, x_);
        const Matrix r = target_ - matmul(mm, y);

        Matrix grad, change;
        Matrix* param = nullptr;
        if (block < 2) {
            const Matrix d_m = -2.0 * matmul(r, y.transpose());
            if (block == 0) {
                grad = matmul(d_m, p.va.transpose());
                change = matmul(matmul(grad, p.va), y);
                param = &p.ua;
            } else {
                grad = matmul(p.ua.transpose(), d_m);
                change = matmul(matmul(p.ua, grad), y);
                param = &p.va;
            }
        } else {
            const Matrix d_n = -2.0 * matmul(mm.transpose(), matmul(r, x_.transpose()));
            if (block == 2) {
                grad = matmul(d_n, p.vb.transpose());
                change = matmul(mm, matmul(matmul(grad, p.vb), x_));
                param = &p.ub;
            } else {
                grad = matmul(p.ub.transpose(), d_n);
                change = matmul(mm, matmul(matmul(p.ub, grad), x_));
                param = &p.vb;
            }
        }
        // Stepping the block by -eta * grad moves the residual by +eta * change.
        const double curvature = squared_norm(change);
        if (curvature == 0.0 || !std::isfinite(curvature)) continue;
        const double eta = -inner(r, change) / curvature;
        *param -= (step_scale * eta) * grad;
    }
    return {p, objective(p)};
}

FactoredWeights AdaptProblem::merged(const AdapterParams& p) const {
    return {base_.a + matmul(p.ua, p.va), base_.b + matmul(p.ub, p.vb), base_.sparse};
}

double calibration_objective(const Matrix& w, const Matrix& x_calib, const FactoredWeights& f) {
    return squared_norm(matmul(w - f.reconstruct(), x_calib));
}

AdaptResult local_adapt(const Decomposition& dec, const Matrix& w, const Matrix& x_calib,
                        const AdaptOptions& options) {
    AdaptResult out;
    out.decomposition = dec;
    const AdaptProblem problem(dec.factors(), w, x_calib);

    AdapterParams current = problem.initial_params(options.seed, options.init_scale);
    double current_obj = problem.objective(current);
    out.initial_objective = current_obj;
    out.final_objective = current_obj;
    AdapterParams best = current;
    double best_obj = current_obj;

    double lr = options.lr;
    for (std::size_t step = 0; step < options.steps; ++step) {
        auto next = problem.descent_cycle(current, lr);
        if (!std::isfinite(next.objective)) {
            throw NumericError("local_adapt: non-finite objective at step " + std::to_string(step));
        }
        if (next.objective <= current_obj) {
            current = std::move(next.params);
            current_obj = next.objective;
            ++out.accepted_steps;
            if (current_obj < best_obj) {
                best = current;
                best_obj = current_obj;
            }
        } else {
            lr *= 0.5;
            if (lr < options.lr_floor) break;
        }
    }

    if (best_obj < out.initial_objective) {
        const FactoredWeights f = problem.merged(best);
        out.decomposition.a = f.a;
        out.decomposition.b = f.b;
        out.final_objective = best_obj;
    }
    return out;
}

}  // namespace lighten
