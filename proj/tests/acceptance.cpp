// Acceptance suite: one PASS/FAIL line per criterion. Usage: acceptance <scratch-dir>
#include <Eigen/SVD>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>

#include "lighten/allocator.hpp"
#include "lighten/decomposer.hpp"
#include "lighten/distill.hpp"
#include "lighten/local_adapt.hpp"
#include "lighten/photonic.hpp"
#include "lighten/pipeline.hpp"
#include "lighten/quant.hpp"
#include "lighten/random.hpp"
#include "lighten/simulator.hpp"
#include "test_util.hpp"

using namespace lighten;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

Eigen::MatrixXd to_eigen(const Matrix& m) {
    Eigen::MatrixXd e(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) e(i, j) = m(i, j);
    return e;
}

// Tail norm of the spectrum past rank r, from Eigen.
double svd_only_objective(const Matrix& wd, std::size_t r) {
    const Eigen::VectorXd s = Eigen::JacobiSVD<Eigen::MatrixXd>(to_eigen(wd)).singularValues();
    double t = 0.0;
    for (Eigen::Index i = static_cast<Eigen::Index>(r); i < s.size(); ++i) t += s(i) * s(i);
    return std::sqrt(t);
}

Outcome svd_dominance() {
    const auto t0 = Clock::now();
    int ok = 0, total = 0;
    double worst = -INFINITY;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Rng rng(1000 + seed);
        const Matrix w = random_normal(32, 48, rng);
        const ScalingDiag d = compute_scaling(random_normal(48, 96, rng));
        const Matrix wd = scale_columns(w, d.d);
        const std::size_t r = std::array<std::size_t, 3>{2, 4, 8}[seed % 3];
        const Decomposition dec = decompose_layer(w, d, r, 0.125, 4);
        const double baseline = svd_only_objective(wd, r);
        worst = std::max(worst, dec.best_objective - baseline);
        ++total;
        if (dec.best_objective <= baseline + 1e-9) ++ok;
    }
    const double t = seconds_since(t0);
    return {ok == total && t < 30.0,
            fmt("%d/%d within 1e-9 of SVD-only (max excess %.3g), %.2f s", ok, total, worst, t)};
}

// Rank-2 matrix plus, in every g-row chunk, d planted column vectors whose norm
// is 10x the norm of the low-rank column they sit in. Supports are drawn
// independently per chunk.
struct Planted {
    Matrix w;
    std::vector<std::vector<std::size_t>> support;  // sorted, per chunk
};

Planted planted(std::uint64_t seed, std::size_t n, std::size_t g, std::size_t d) {
    Rng rng(seed);
    const Matrix low = matmul(random_normal(n, 2, rng), random_normal(2, n, rng));
    std::vector<double> col_norm(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < n; ++i) col_norm[j] += low(i, j) * low(i, j);
        col_norm[j] = std::sqrt(col_norm[j]);
    }
    Planted p{low, {}};
    for (std::size_t c = 0; c < n / g; ++c) {
        std::vector<std::size_t> cols(n);
        std::iota(cols.begin(), cols.end(), 0);
        for (std::size_t k = 0; k < d; ++k) std::swap(cols[k], cols[k + rng.index(n - k)]);
        cols.resize(d);
        std::sort(cols.begin(), cols.end());
        for (std::size_t j : cols) {
            std::vector<double> v(g);
            double norm = 0.0;
            for (double& x : v) {
                x = rng.normal();
                norm += x * x;
            }
            norm = std::sqrt(norm);
            for (std::size_t i = 0; i < g; ++i) p.w(c * g + i, j) += 10.0 * col_norm[j] * v[i] / norm;
        }
        p.support.push_back(cols);
    }
    return p;
}

Outcome planted_recovery() {
    const auto t0 = Clock::now();
    int ok = 0, wrong_support = 0;
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Planted p = planted(2000 + seed, 48, 8, 6);
        const Decomposition dec = decompose_layer(p.w, identity_scaling(48), 2, 0.125, 8, 80);
        const double e = test::relative_diff(dec.reconstruct(), p.w);
        worst = std::max(worst, e);
        if (e <= 1e-6) ++ok;
        for (std::size_t c = 0; c < p.support.size(); ++c)
            if (dec.sparse.chunks[c].kept_cols != p.support[c]) ++wrong_support;
    }
    const double t = seconds_since(t0);
    return {ok >= 19 && t < 30.0, fmt("%d/20 at <= 1e-6 (worst %.3g), %d/120 chunks with a wrong kept set, %.2f s",
                                      ok, worst, wrong_support, t)};
}

struct AdaptInstance {
    Matrix w;
    Matrix x;
    Decomposition dec;
};

AdaptInstance adapt_instance(std::uint64_t seed) {
    Rng rng(seed);
    AdaptInstance in;
    in.w = random_normal(16, 24, rng);
    in.x = matmul(random_normal(24, 6, rng), random_normal(6, 64, rng)) + random_normal(24, 64, rng, 0.1);
    in.dec = decompose_layer(in.w, compute_scaling(in.x), 4, 0.125, 4, 20);
    return in;
}

double& entry(AdapterParams& p, int block, std::size_t i, std::size_t j) {
    Matrix* m[] = {&p.ua, &p.va, &p.ub, &p.vb};
    return (*m[block])(i, j);
}

Outcome local_adaptation() {
    // Gradient check at a point with nonzero adapters.
    const AdaptInstance in = adapt_instance(3000);
    const AdaptProblem prob(in.dec.factors(), in.w, in.x);
    Rng rng(3001);
    AdapterParams p = prob.initial_params(1, 0.1);
    p.va = random_normal(p.va.rows(), p.va.cols(), rng, 0.1);
    p.vb = random_normal(p.vb.rows(), p.vb.cols(), rng, 0.1);
    AdapterParams g = prob.gradient(p);
    const double h = 1e-5;
    double worst_fd = 0.0;
    for (int k = 0; k < 20; ++k) {
        const int block = static_cast<int>(rng.index(4));
        AdapterParams probe = p;
        const Matrix& shape = block == 0 ? p.ua : block == 1 ? p.va : block == 2 ? p.ub : p.vb;
        const std::size_t i = rng.index(shape.rows()), j = rng.index(shape.cols());
        entry(probe, block, i, j) += h;
        const double up = prob.objective(probe);
        entry(probe, block, i, j) -= 2 * h;
        const double down = prob.objective(probe);
        const double fd = (up - down) / (2 * h);
        const double an = entry(g, block, i, j);
        const double scale = std::max(std::abs(an), 1e-6 * (1.0 + prob.objective(p)));
        worst_fd = std::max(worst_fd, std::abs(fd - an) / scale);
    }

    int never_worse = 0, improved = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const AdaptInstance t = adapt_instance(3100 + seed);
        AdaptOptions opt;
        opt.steps = 50;
        opt.seed = seed;
        const AdaptResult r = local_adapt(t.dec, t.w, t.x, opt);
        const double before = calibration_objective(t.w, t.x, t.dec.factors());
        const double after = calibration_objective(t.w, t.x, r.decomposition.factors());
        if (after <= before) ++never_worse;
        if (after <= 0.99 * before) ++improved;
    }
    return {worst_fd <= 1e-4 && never_worse == 20 && improved >= 18,
            fmt("fd rel err max %.2g; non-increasing %d/20; >=1%% better %d/20", worst_fd, never_worse,
                improved)};
}

// Twelve 80x80 layers: three of rank 4, nine of rank 32, each plus small noise.
struct SyntheticModel {
    std::vector<Matrix> weights;
    std::vector<ScalingDiag> scalings;
    std::vector<LayerInput> inputs;
};

SyntheticModel synthetic_model(std::uint64_t seed) {
    Rng rng(seed);
    SyntheticModel s;
    s.weights.reserve(12);
    s.scalings.reserve(12);
    for (std::size_t l = 0; l < 12; ++l) {
        const std::size_t r = l % 4 == 0 ? 4 : 32;
        s.weights.push_back(matmul(random_normal(80, r, rng), random_normal(r, 80, rng)) +
                            random_normal(80, 80, rng, 0.01));
        s.scalings.push_back(compute_scaling(random_normal(80, 160, rng)));
    }
    for (std::size_t l = 0; l < 12; ++l) s.inputs.push_back({"layer" + std::to_string(l), &s.weights[l], &s.scalings[l]});
    return s;
}

// Total scaled-domain residual energy over all layers, relative to the total
// scaled weight energy.
double total_error(const RankState& st, const std::vector<std::size_t>& ranks) {
    double num = 0.0, den = 0.0;
    for (std::size_t l = 0; l < st.layers.size(); ++l) {
        const double e = st.layers[l].error_at(ranks[l]) * st.layers[l].scaled_norm;
        num += e * e;
        den += st.layers[l].scaled_norm * st.layers[l].scaled_norm;
    }
    return std::sqrt(num / den);
}

struct AllocatorRuns {
    int psi_ok = 0, monotone_ok = 0, fast_ok = 0, beats_uniform = 0, low_rank_ok = 0, balanced = 0;
    double max_seconds = 0.0;
    double max_prepare_seconds = 0.0;
    double mean_gain = 0.0;
};

const AllocatorRuns& allocator_runs() {
    static std::optional<AllocatorRuns> runs;
    if (runs) return *runs;
    AllocatorRuns a;
    const double alpha = 0.5;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const SyntheticModel model = synthetic_model(4000 + seed);
        const auto t_prep = Clock::now();
        RankState st = prepare_full_rank(model.inputs, 0.125, 4, 20, 1);
        a.max_prepare_seconds = std::max(a.max_prepare_seconds, seconds_since(t_prep));
        std::vector<std::pair<std::size_t, std::size_t>> shapes;
        std::vector<std::size_t> ds;
        for (const auto& l : st.layers) {
            shapes.emplace_back(l.m, l.n);
            ds.push_back(l.d);
        }
        BudgetModel budget(alpha, shapes, ds);
        const std::size_t b = basis_rank(80, 12);
        const AllocationResult res = allocate_ranks(st, budget, b);

        // Independent psi.
        double kept = 0.0, orig = 0.0;
        for (std::size_t l = 0; l < 12; ++l) {
            const LayerBudget& lb = res.plan.layers[l];
            kept += static_cast<double>(lb.rank * (80 + 80) + 80 * ds[l]);
            orig += 80.0 * 80.0;
        }
        if (1.0 - kept / orig >= alpha) ++a.psi_ok;

        bool monotone = true;
        for (std::size_t t = 1; t < res.rank_trace.size(); ++t)
            for (std::size_t l = 0; l < 12; ++l) monotone = monotone && res.rank_trace[t][l] >= res.rank_trace[t - 1][l];
        if (monotone) ++a.monotone_ok;
        if (res.seconds < 5.0) ++a.fast_ok;
        a.max_seconds = std::max(a.max_seconds, res.seconds);
        if (res.max_error_trace.back() <= res.max_error_trace.front()) ++a.balanced;

        // Uniform baseline: the largest common rank the same low-rank budget funds.
        const std::size_t uniform = std::min<std::size_t>(budget.total() / (12 * 160), st.layers[0].max_rank);
        std::vector<std::size_t> searched, flat(12, uniform);
        for (const auto& lb : res.plan.layers) searched.push_back(lb.rank);
        const double e_search = total_error(st, searched);
        const double e_flat = total_error(st, flat);
        if (e_search < e_flat) ++a.beats_uniform;
        a.mean_gain += (e_flat - e_search) / 20.0;

        std::size_t max_low = 0, min_high = SIZE_MAX;
        for (std::size_t l = 0; l < 12; ++l) {
            if (l % 4 == 0) max_low = std::max(max_low, searched[l]);
            else min_high = std::min(min_high, searched[l]);
        }
        if (2 * max_low <= min_high) ++a.low_rank_ok;
    }
    runs = a;
    return *runs;
}

Outcome allocator_contract() {
    const AllocatorRuns& a = allocator_runs();
    return {a.psi_ok == 20 && a.monotone_ok == 20 && a.fast_ok == 20 && a.beats_uniform >= 18 && a.low_rank_ok == 20,
            fmt("psi>=alpha %d/20, monotone %d/20, search max %.3g s (full-rank preparation max %.2f s), beats uniform %d/20 (mean error gap %.4f), "
                "planted rank-4 layers at <= half rank %d/20",
                a.psi_ok, a.monotone_ok, a.max_seconds, a.max_prepare_seconds, a.beats_uniform, a.mean_gain, a.low_rank_ok)};
}

Outcome error_balancing() {
    const AllocatorRuns& a = allocator_runs();
    return {a.balanced == 20, fmt("final max error <= initial on %d/20 seeds", a.balanced)};
}

Outcome condensed_equivalence() {
    Rng rng(6000);
    double worst = 0.0;
    for (int k = 0; k < 200; ++k) {
        const std::size_t m = 1 + rng.index(40), n = 2 + rng.index(40), t = 1 + rng.index(20);
        const std::size_t g = 1 + rng.index(std::min<std::size_t>(m, 8));
        const double s = std::max(0.1, rng.uniform(0.0, 0.6));
        if (std::llround(static_cast<double>(n) * s) == 0) {
            --k;
            continue;
        }
        const StructuredSparse sp = structured_sparsify(random_normal(m, n, rng), g, s);
        const Matrix x = random_normal(n, t, rng);
        worst = std::max(worst, max_abs_diff(condensed_matmul(sp, x), matmul(expand(sp), x)));
    }
    return {worst <= 1e-12, fmt("200 instances, max abs diff %.3g", worst)};
}

Outcome step_schedule() {
    bool ok = true;
    std::string detail;
    for (std::size_t b : {12, 5}) {
        const std::size_t total = 1000;
        const std::size_t half = (b + 1) / 2;
        const std::pair<std::size_t, std::size_t> cases[] = {
            {total, 2 * b}, {total / 2, 2 * b}, {total / 2 - 1, b}, {total / 4, b}, {total / 4 - 1, half}};
        for (const auto& [rem, want] : cases) {
            const std::size_t got = step_size(rem, total, b);
            ok = ok && got == want;
            detail += fmt("%zu->%zu ", rem, got);
        }
        detail += fmt("(b=%zu) ", b);
    }
    return {ok, detail};
}

Outcome splitter_planner() {
    const PtcConfig ptc{8, 12, 12};
    const EnergyParams e;
    bool ok = true;
    const double one = laser_energy(100, 2, ptc, e);
    std::string detail;
    for (std::size_t q = 1; q <= 4; ++q) {
        const SplitterPlan plan = plan_splitters(q * 2, ptc);
        const auto pw = plan.quarter_power();
        double sum = 0.0;
        std::size_t powered = 0;
        for (double v : pw) {
            sum += v;
            if (v > 0.0) ++powered;
        }
        const double laser = laser_energy(100, q * 2, ptc, e);
        const bool linear = laser == static_cast<double>(q) * one;
        ok = ok && plan.consistent() && plan.active_quarters.size() == q && powered == q && sum == 1.0 && linear;
        detail += fmt("%zuq:%s/%s,%s%s ", q, to_string(plan.stage1), to_string(plan.stage2[0]),
                      to_string(plan.stage2[1]), linear ? "" : " nonlinear");
    }
    return {ok, detail};
}

Outcome simulator_direction() {
    const auto t0 = Clock::now();
    const ModelGraph graph = vit_shape_graph(768, 12);
    CompressionPlan plan;
    plan.alpha = 0.5;
    for (const auto& l : graph.layers) {
        LayerBudget lb;
        lb.id = l.id;
        lb.m = l.rows;
        lb.n = l.cols;
        lb.granularity = 6;
        lb.d = sparse_columns(l.cols, 0.125);
        lb.rank = (lb.m * lb.n / 2 - lb.m * lb.d) / (lb.m + lb.n);
        plan.layers.push_back(lb);
    }
    plan.psi_achieved = psi(plan);
    EngineConfig engines;
    const EnergyParams energy;
    const CostReport base = simulate({}, graph, engines.scaled_baseline(2), energy, 197);
    const CostReport comp = simulate(plan, graph, engines, energy, 197);
    EngineConfig ungated = engines;
    ungated.gating_enabled = false;
    const CostReport comp_ungated = simulate(plan, graph, ungated, energy, 197);
    const double ratio = base.edp / comp.edp;
    const double t = seconds_since(t0);
    const bool ok = plan.psi_achieved >= 0.5 && comp.energy.weight_encode < base.energy.weight_encode &&
                    comp.energy.data_movement < base.energy.data_movement &&
                    comp.energy.laser < comp_ungated.energy.laser && ratio > 1.0 && t < 10.0;
    return {ok, fmt("psi %.3f; weight-encode %.3g vs %.3g J; data-movement %.3g vs %.3g J; laser gated %.3g vs "
                    "ungated %.3g J (baseline %.3g J); EDP ratio %.3f; %.2f s",
                    plan.psi_achieved, comp.energy.weight_encode, base.energy.weight_encode,
                    comp.energy.data_movement, base.energy.data_movement, comp.energy.laser,
                    comp_ungated.energy.laser, base.energy.laser, ratio, t)};
}

double reldiff_rows(const Matrix& a, const Matrix& b) { return test::relative_diff(a, b); }

Outcome loss_functions() {
    Rng rng(8000);
    double shift_worst = 0.0, oracle_worst = 0.0, block_worst = 0.0;
    bool zero_iff_identical = true;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 1 + rng.index(5), c = 2 + rng.index(8);
        const Matrix ys = random_normal(n, c, rng, 3.0), yt = random_normal(n, c, rng, 3.0);
        std::vector<std::int32_t> labels(n);
        for (auto& l : labels) l = static_cast<std::int32_t>(rng.index(c));
        const double tau = rng.uniform(0.5, 6.0);
        const double base = logit_loss(ys, yt, labels, tau);

        Matrix ys2 = ys, yt2 = yt;
        for (std::size_t i = 0; i < n; ++i) {
            const double a = rng.uniform(-50, 50), b = rng.uniform(-50, 50);
            for (std::size_t j = 0; j < c; ++j) {
                ys2(i, j) += a;
                yt2(i, j) += b;
            }
        }
        shift_worst = std::max(shift_worst, std::abs(logit_loss(ys2, yt2, labels, tau) - base));

        long double total = 0.0L;
        for (std::size_t i = 0; i < n; ++i) {
            auto log_softmax = [&](const Matrix& y, long double t, std::size_t j) {
                long double mx = -INFINITY, z = 0.0L;
                for (std::size_t k = 0; k < c; ++k) mx = std::max<long double>(mx, y(i, k) / t);
                for (std::size_t k = 0; k < c; ++k) z += std::exp(static_cast<long double>(y(i, k)) / t - mx);
                return static_cast<long double>(y(i, j)) / t - mx - std::log(z);
            };
            long double kl = 0.0L;
            for (std::size_t j = 0; j < c; ++j) {
                const long double ls = log_softmax(ys, tau, j), lt = log_softmax(yt, tau, j);
                kl += std::exp(ls) * (ls - lt);
            }
            total += 0.5L * kl - 0.5L * log_softmax(ys, 1.0L, static_cast<std::size_t>(labels[i]));
        }
        oracle_worst = std::max(oracle_worst, std::abs(static_cast<double>(total / n) - base));

        BlockFeatures f, g;
        long double want = 0.0L;
        for (int k = 0; k < 2; ++k) {
            f.attn.push_back(random_normal(4, 6, rng));
            f.mlp.push_back(random_normal(4, 6, rng));
        }
        g = f;
        zero_iff_identical = zero_iff_identical && block_loss(f, g) == 0.0;
        g.mlp[1](rng.index(4), rng.index(6)) += 1e-3;
        zero_iff_identical = zero_iff_identical && block_loss(f, g) > 0.0;
        g.attn[0] = random_normal(4, 6, rng);
        for (int k = 0; k < 2; ++k)
            for (const auto* pair : {&f.attn, &f.mlp}) {
                const auto& other = pair == &f.attn ? g.attn : g.mlp;
                for (std::size_t i = 0; i < 4; ++i)
                    for (std::size_t j = 0; j < 6; ++j) {
                        const long double dv = static_cast<long double>((*pair)[k](i, j)) - other[k](i, j);
                        want += dv * dv;
                    }
            }
        block_worst = std::max(block_worst, std::abs(block_loss(f, g) - static_cast<double>(want / 4)));
    }
    return {shift_worst <= 1e-10 && oracle_worst <= 1e-10 && block_worst <= 1e-10 && zero_iff_identical,
            fmt("shift %.2g, logit oracle %.2g, block oracle %.2g, zero iff identical %s", shift_worst,
                oracle_worst, block_worst, zero_iff_identical ? "yes" : "no")};
}

// Toy pipeline shared by the fidelity, quantization and reproducibility checks.
struct ToyRun {
    PipelineConfig config;
    CompressResult result;
    bool identical_plan = false;
    bool identical_lten = false;
    double seconds = 0.0;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

const ToyRun& toy_run(const fs::path& root) {
    static std::optional<ToyRun> run;
    if (run) return *run;
    ToyRun r;
    std::ostringstream log;
    GenToyOptions gen;
    gen.out = root / "toy";
    gen.seed = 11;
    const PipelineConfig base = cmd_gen_toy(gen, log);
    r.config = base;
    r.config.paths.output = (root / "run1").string();
    r.config.targets.alpha = 0.3;
    PipelineConfig second = r.config;
    second.paths.output = (root / "run2").string();
    const auto t0 = Clock::now();
    r.result = cmd_compress(r.config, log);
    r.seconds = seconds_since(t0);
    cmd_compress(second, log);
    r.identical_plan = slurp(root / "run1" / "plan.json") == slurp(root / "run2" / "plan.json");
    r.identical_lten = slurp(root / "run1" / "compressed.lten") == slurp(root / "run2" / "compressed.lten");
    run = std::move(r);
    return *run;
}

Outcome ptc_fidelity(const fs::path& root) {
    const ToyRun& run = toy_run(root);
    const Dataset data = load_dataset(run.config.paths.eval);
    const EngineConfig engines;
    const PtcExecutor ptc(engines.dense.ptc, engines.sparse.ptc);
    std::size_t factored = 0;
    for (const auto& [id, w] : run.result.model.linear) factored += w.factored ? 1 : 0;
    double worst = 0.0;
    for (const ToyViT* model : {&run.result.model}) {
        const Matrix ref = dataset_logits(*model, data);
        const Matrix tiled = dataset_logits(*model, data, &ptc);
        worst = std::max(worst, reldiff_rows(tiled, ref));
    }
    // Dense teacher as well.
    const ToyViT teacher = ToyViT::from_stored(load_model(run.config.paths.model));
    worst = std::max(worst, reldiff_rows(dataset_logits(teacher, data, &ptc), dataset_logits(teacher, data)));
    return {worst <= 1e-9 && factored > 0,
            fmt("%zu samples, %zu factored layers, max relative logit diff %.3g", data.size(), factored, worst)};
}

Outcome quantization(const fs::path& root) {
    Rng rng(9000);
    bool bound_ok = true;
    for (int k = 0; k < 100; ++k) {
        const Matrix w = random_normal(1 + rng.index(30), 1 + rng.index(30), rng, rng.uniform(0.01, 10.0));
        const QuantAxis axis = k % 2 == 0 ? QuantAxis::per_output_channel : QuantAxis::per_tensor;
        const QuantizedTensor q = quantize(w, axis);
        const Matrix back = dequantize(q);
        for (std::size_t i = 0; i < w.rows(); ++i)
            for (std::size_t j = 0; j < w.cols(); ++j)
                bound_ok = bound_ok && std::abs(w(i, j) - back(i, j)) <= q.scale_for_row(i) / 2;
    }

    const std::size_t n = 1000000;
    const Matrix ones(1000, 1000, 1.0);
    const Matrix noisy = inject_noise(ones, 0.03, 123, "sigma");
    double mean = 0.0, var = 0.0;
    for (double v : noisy.data()) mean += v;
    mean /= n;
    for (double v : noisy.data()) var += (v - mean) * (v - mean);
    const double sigma = std::sqrt(var / (n - 1));

    const ToyRun& run = toy_run(root);
    const Dataset data = load_dataset(run.config.paths.eval);
    QuantNoiseOptions qo;
    qo.quantize = true;
    qo.seed = run.config.seed;
    const QuantNoiseExecutor quant_only(qo);
    qo.noise_ratio = 0.03;
    const QuantNoiseExecutor quant_noise(qo);
    const double acc_q = evaluate(run.result.model, data, &quant_only);
    const double acc_qn = evaluate(run.result.model, data, &quant_noise);
    const double drop = acc_q - acc_qn;
    const bool ok = bound_ok && std::abs(sigma - 0.03) <= 0.003 && drop <= 0.05;
    return {ok, fmt("bound %s on 100 tensors; sigma %.5f over 1e6 samples; toy accuracy quant %.4f, quant+noise "
                    "%.4f (drop %.4f)",
                    bound_ok ? "holds" : "violated", sigma, acc_q, acc_qn, drop)};
}

Outcome reproducibility(const fs::path& root) {
    const ToyRun& run = toy_run(root);
    return {run.identical_plan && run.identical_lten,
            fmt("plan.json %s, compressed.lten %s (psi %.4f, %.1f s per compress)",
                run.identical_plan ? "identical" : "differs", run.identical_lten ? "identical" : "differs",
                run.result.plan.psi_achieved, run.seconds)};
}

}  // namespace

int main(int argc, char** argv) {
    const fs::path root = test::scratch_dir(argc > 1 ? fs::path(argv[1]) : fs::path("acceptance_tmp"));
    const std::pair<const char*, std::function<Outcome()>> criteria[] = {
        {"svd-baseline dominance", svd_dominance},
        {"planted recovery", planted_recovery},
        {"local adaptation", local_adaptation},
        {"allocator contract", allocator_contract},
        {"error balancing", error_balancing},
        {"condensed matmul", condensed_equivalence},
        {"ptc fidelity", [&] { return ptc_fidelity(root); }},
        {"step schedule", step_schedule},
        {"simulator direction", simulator_direction},
        {"splitter planner", splitter_planner},
        {"quantization and noise", [&] { return quantization(root); }},
        {"loss functions", loss_functions},
        {"reproducibility", [&] { return reproducibility(root); }},
    };
    int failed = 0, index = 0;
    for (const auto& [name, check] : criteria) {
        ++index;
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failed;
        std::printf("criterion %2d %s %s: %s\n", index, o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%d criteria passed\n", index - failed, index);
    return failed == 0 ? 0 : 1;
}
