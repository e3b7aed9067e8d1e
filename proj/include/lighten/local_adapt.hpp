#pragma once

#include <cstddef>
#include <cstdint>

#include "lighten/decomposer.hpp"

namespace lighten {

/// Low-rank adapters: dA = ua * va (m x k, k x r), dB = ub * vb (r x k, k x n).
struct AdapterParams {
    Matrix ua;
    Matrix va;
    Matrix ub;
    Matrix vb;
};

/// Calibration regression |W X - ((A + dA)(B + dB) + S) X|_F^2 for one layer.
class AdaptProblem {
public:
    AdaptProblem(const FactoredWeights& base, const Matrix& w, const Matrix& x_calib);

    std::size_t adapter_rank() const noexcept { return adapter_rank_; }

    /// Adapters with u ~ U(-init_scale, init_scale) and v = 0, so dA = dB = 0.
    AdapterParams initial_params(std::uint64_t seed, double init_scale = 1e-3) const;

    double objective(const AdapterParams& p) const;
    /// Analytic gradient of objective() with respect to every adapter entry.
    AdapterParams gradient(const AdapterParams& p) const;

    FactoredWeights merged(const AdapterParams& p) const;
    const FactoredWeights& base() const noexcept { return base_; }

    struct StepResult {
        AdapterParams params;
        double objective;
    };
    /// One cycle over (ua, va, ub, vb): for each block, a steepest-descent
    /// step of length step_scale times the exact line-search minimizer.
    StepResult descent_cycle(const AdapterParams& p, double step_scale) const;

private:
    Matrix residual(const AdapterParams& p) const;  // target - M N X

    FactoredWeights base_;
    Matrix x_;
    Matrix target_;  // (W - S) X
    std::size_t adapter_rank_;
};

/// floor(r / 4), at least 1.
std::size_t adapter_rank_for(std::size_t rank) noexcept;

struct AdaptOptions {
    std::size_t steps = 100;
    /// Fraction of the exact line-search step taken per block update; halved
    /// whenever a cycle fails to decrease the objective.
    double lr = 1.0;
    double lr_floor = 1e-8;
    double init_scale = 1e-3;
    std::uint64_t seed = 0;
};

struct AdaptResult {
    Decomposition decomposition;
    double initial_objective = 0.0;
    double final_objective = 0.0;
    std::size_t accepted_steps = 0;
};

/// Refines A and B through low-rank adapters fitted on raw calibration
/// activations, then merges them back. The returned objective never exceeds
/// the starting one.
AdaptResult local_adapt(const Decomposition& dec, const Matrix& w, const Matrix& x_calib,
                        const AdaptOptions& options = {});

/// |W X - (A B + S) X|_F^2.
double calibration_objective(const Matrix& w, const Matrix& x_calib, const FactoredWeights& f);

}  // namespace lighten
