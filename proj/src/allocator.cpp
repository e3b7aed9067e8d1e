#include "lighten/allocator.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include "lighten/error.hpp"

namespace lighten {

BudgetModel::BudgetModel(double alpha,
                         const std::vector<std::pair<std::size_t, std::size_t>>& layer_shapes,
                         const std::vector<std::size_t>& sparse_cols)
    : alpha_(alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw InvalidArgument("compression target alpha must lie in (0, 1)");
    }
    if (layer_shapes.size() != sparse_cols.size()) {
        throw DimensionError("BudgetModel: one sparse width per layer required");
    }
    for (std::size_t i = 0; i < layer_shapes.size(); ++i) {
        original_ += layer_shapes[i].first * layer_shapes[i].second;
        sparse_ += layer_shapes[i].first * sparse_cols[i];
    }
    if (original_ == 0) throw InvalidArgument("BudgetModel: no parameters to compress");

    const double keep = (1.0 - alpha) * static_cast<double>(original_);
    const double sparse = static_cast<double>(sparse_);
    if (keep < sparse) {
        throw InfeasibleTarget("target infeasible: sparse component alone keeps " +
                               std::to_string(sparse_) + " of " + std::to_string(original_) +
                               " parameters");
    }
    total_ = static_cast<std::size_t>(std::floor(keep - sparse));
    // Match psi() exactly, including its floating-point rounding.
    auto psi_of = [&](std::size_t t) {
        return 1.0 - static_cast<double>(t + sparse_) / static_cast<double>(original_);
    };
    while (total_ > 0 && psi_of(total_) < alpha) --total_;
    if (psi_of(total_) < alpha) {
        throw InfeasibleTarget("target infeasible: sparse component alone violates alpha");
    }
}

void BudgetModel::charge(std::size_t cost) {
    if (cost > remaining()) {
        throw InvalidArgument("BudgetModel: charge of " + std::to_string(cost) + " exceeds remaining " +
                              std::to_string(remaining()));
    }
    spent_ += cost;
}

std::size_t max_useful_rank(std::size_t m, std::size_t n) noexcept {
    const std::size_t r = (m * n) / (m + n);
    return std::max<std::size_t>(1, std::min(r, std::min(m, n)));
}

double LayerRankState::error_at(std::size_t r) const {
    // |M - M_r|_F^2 is the tail energy of the spectrum of M = W D - S.
    double tail = 0.0;
    for (std::size_t i = singular_values.size(); i-- > r;) tail += singular_values[i] * singular_values[i];
    return std::sqrt(tail) / scaled_norm;
}

FactoredWeights LayerRankState::sliced(std::size_t r, const ScalingDiag& scaling) const {
    if (r < 1 || r > max_rank) throw InvalidArgument("sliced: rank outside [1, max_rank]");
    const std::vector<double> inv = scaling.inverse();
    return {a_full.block(0, 0, m, r), scale_columns(b_full.block(0, 0, r, n), inv),
            scale_sparse_columns(sparse, inv)};
}

std::vector<double> RankState::errors() const {
    std::vector<double> e;
    e.reserve(layers.size());
    for (const auto& l : layers) e.push_back(l.error_at(l.rank));
    return e;
}

RankState prepare_full_rank(const std::vector<LayerInput>& layers, double sparse_ratio,
                            std::size_t granularity, std::size_t iters, std::size_t threads) {
    RankState state;
    state.layers.resize(layers.size());
    std::vector<std::exception_ptr> failures(layers.size());

    auto work = [&](std::size_t i) {
        try {
            const Matrix& w = *layers[i].weight;
            const ScalingDiag& scaling = *layers[i].scaling;
            LayerRankState& st = state.layers[i];
            st.id = layers[i].id;
            st.m = w.rows();
            st.n = w.cols();
            st.d = sparse_columns(st.n, sparse_ratio);
            st.granularity = granularity;
            st.max_rank = max_useful_rank(st.m, st.n);

            const Decomposition dec =
                decompose_layer(w, scaling, st.max_rank, sparse_ratio, granularity, iters);
            st.sparse = scale_sparse_columns(dec.sparse, scaling.d);
            const Matrix wd = scale_columns(w, scaling.d);
            st.scaled_norm = frobenius_norm(wd);
            if (st.scaled_norm == 0.0) throw NumericError("layer '" + st.id + "' has |W D|_F = 0");
            const SvdResult svd = thin_svd(wd - expand(st.sparse));
            st.singular_values = svd.singular_values;
            st.residual_at_max = st.error_at(st.max_rank) * st.scaled_norm;
            auto [a, b] = balanced_factors(svd.truncated(st.max_rank));
            st.a_full = std::move(a);
            st.b_full = std::move(b);
        } catch (...) {
            failures[i] = std::current_exception();
        }
    };

    std::size_t workers = threads == 0 ? std::thread::hardware_concurrency() : threads;
    workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(1, layers.size()));
    if (workers == 1) {
        for (std::size_t i = 0; i < layers.size(); ++i) work(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < workers; ++t) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < layers.size(); i = next++) work(i);
            });
        }
    }
    for (std::size_t i = 0; i < failures.size(); ++i) {
        if (failures[i]) {
            try {
                std::rethrow_exception(failures[i]);
            } catch (const std::exception& e) {
                throw Error("prepare_full_rank: layer '" + layers[i].id + "': " + e.what());
            }
        }
    }
    return state;
}

std::size_t basis_rank(std::size_t hidden_size, std::size_t ptc_dim,
                       std::optional<std::size_t> override_b, std::size_t base_threshold) {
    if (override_b) {
        if (*override_b == 0) throw InvalidArgument("basis rank override must be >= 1");
        return *override_b;
    }
    if (ptc_dim < 2) throw InvalidArgument("basis_rank: PTC dimension must be >= 2");
    return hidden_size >= base_threshold ? ptc_dim : ptc_dim / 2;
}

std::size_t step_size(std::size_t remaining, std::size_t total, std::size_t b) {
    if (total == 0) throw InvalidArgument("step_size: total budget must be positive");
    if (2 * remaining >= total) return 2 * b;
    if (4 * remaining >= total) return b;
    return std::max<std::size_t>(1, (b + 1) / 2);
}

BatchSelection select_batch(const std::vector<double>& errors, double threshold, double temperature,
                            const std::vector<bool>& eligible) {
    if (!(threshold > 0.0 && threshold <= 1.0)) {
        throw InvalidArgument("select_batch: threshold must lie in (0, 1]");
    }
    if (!(temperature > 0.0)) throw InvalidArgument("select_batch: temperature must be positive");
    if (!eligible.empty() && eligible.size() != errors.size()) {
        throw DimensionError("select_batch: eligibility mask length mismatch");
    }
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < errors.size(); ++i) {
        if (!std::isfinite(errors[i])) {
            throw NumericError("select_batch: non-finite error for layer " + std::to_string(i));
        }
        if (eligible.empty() || eligible[i]) idx.push_back(i);
    }
    BatchSelection out;
    if (idx.empty()) return out;

    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t i : idx) peak = std::max(peak, errors[i] / temperature);
    std::vector<double> p(errors.size(), 0.0);
    double z = 0.0;
    for (std::size_t i : idx) {
        p[i] = std::exp(errors[i] / temperature - peak);
        z += p[i];
    }
    for (std::size_t i : idx) p[i] /= z;

    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) { return p[x] > p[y]; });
    double cumulative = 0.0;
    for (std::size_t i : idx) {
        out.layers.push_back(i);
        out.probs.push_back(p[i]);
        cumulative += p[i];
        if (cumulative >= threshold - 1e-12) break;
    }
    return out;
}

std::vector<std::size_t> redistribute(const BatchSelection& batch, std::size_t delta_r,
                                      const std::vector<std::size_t>& capacity) {
    const std::size_t count = batch.layers.size();
    if (count == 0) throw InvalidArgument("redistribute: empty batch");
    if (delta_r == 0) throw InvalidArgument("redistribute: step must be positive");

    const std::size_t total = count * delta_r;
    std::vector<std::size_t> inc(count, 1);
    const std::size_t rest = total - count;
    const double mass = std::accumulate(batch.probs.begin(), batch.probs.end(), 0.0);
    std::size_t given = 0;
    for (std::size_t k = 0; k < count; ++k) {
        const auto share = static_cast<std::size_t>(
            std::floor(static_cast<double>(rest) * batch.probs[k] / mass));
        inc[k] += share;
        given += share;
    }
    for (std::size_t k = 0; given < rest; k = (k + 1) % count, ++given) ++inc[k];

    if (!capacity.empty()) {
        std::size_t overflow = 0;
        for (std::size_t k = 0; k < count; ++k) {
            const std::size_t cap = capacity.at(batch.layers[k]);
            if (inc[k] > cap) {
                overflow += inc[k] - cap;
                inc[k] = cap;
            }
        }
        for (std::size_t k = 0; k < count && overflow > 0; ++k) {
            const std::size_t spare = capacity.at(batch.layers[k]) - inc[k];
            const std::size_t take = std::min(spare, overflow);
            inc[k] += take;
            overflow -= take;
        }
    }
    return inc;
}

const LayerBudget* CompressionPlan::find(const std::string& id) const noexcept {
    for (const auto& l : layers)
        if (l.id == id) return &l;
    return nullptr;
}

double psi(const CompressionPlan& plan) {
    std::size_t used = 0, original = 0;
    for (const auto& l : plan.layers) {
        used += l.params();
        original += l.m * l.n;
    }
    if (original == 0) throw InvalidArgument("psi: plan has no parameters");
    return 1.0 - static_cast<double>(used) / static_cast<double>(original);
}

nlohmann::json to_json(const CompressionPlan& plan) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : plan.layers) {
        layers.push_back({{"id", l.id},
                          {"m", l.m},
                          {"n", l.n},
                          {"r", l.rank},
                          {"d", l.d},
                          {"g", l.granularity},
                          {"params", l.params()},
                          {"error", l.error}});
    }
    return {{"alpha", plan.alpha},
            {"psi_achieved", plan.psi_achieved},
            {"iterations", plan.iterations},
            {"layers", layers}};
}

CompressionPlan plan_from_json(const nlohmann::json& j) {
    try {
        CompressionPlan plan;
        plan.alpha = j.at("alpha").get<double>();
        plan.psi_achieved = j.at("psi_achieved").get<double>();
        plan.iterations = j.value("iterations", std::size_t{0});
        for (const auto& l : j.at("layers")) {
            LayerBudget b;
            b.id = l.at("id").get<std::string>();
            b.m = l.at("m").get<std::size_t>();
            b.n = l.at("n").get<std::size_t>();
            b.rank = l.at("r").get<std::size_t>();
            b.d = l.at("d").get<std::size_t>();
            b.granularity = l.at("g").get<std::size_t>();
            b.error = l.value("error", 0.0);
            plan.layers.push_back(std::move(b));
        }
        return plan;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("plan JSON: ") + e.what());
    }
}

AllocationResult allocate_ranks(RankState& state, BudgetModel& budget, std::size_t b,
                                const AllocatorOptions& options) {
    const auto t0 = std::chrono::steady_clock::now();
    auto& layers = state.layers;
    if (layers.empty()) throw InvalidArgument("allocate_ranks: no layers");
    if (b == 0) throw InvalidArgument("allocate_ranks: basis rank must be >= 1");

    std::size_t initial_cost = 0;
    for (auto& l : layers) {
        const auto r0 = static_cast<std::size_t>(
            std::llround(options.initial_fraction * static_cast<double>(l.max_rank)));
        l.rank = std::clamp<std::size_t>(r0, 1, l.max_rank);
        initial_cost += l.rank * (l.m + l.n);
    }
    if (!budget.can_afford(initial_cost)) {
        throw InfeasibleTarget("target infeasible at 10% floor: initial ranks need " +
                               std::to_string(initial_cost) + " parameters, budget is " +
                               std::to_string(budget.remaining()));
    }
    budget.charge(initial_cost);

    AllocationResult result;
    std::vector<double> errors = state.errors();
    auto snapshot = [&] {
        std::vector<std::size_t> ranks;
        for (const auto& l : layers) ranks.push_back(l.rank);
        result.rank_trace.push_back(std::move(ranks));
        result.max_error_trace.push_back(*std::max_element(errors.begin(), errors.end()));
    };
    snapshot();

    std::size_t iterations = 0;
    std::vector<bool> eligible(layers.size());
    std::vector<std::size_t> capacity(layers.size());
    for (;;) {
        bool any = false;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const auto& l = layers[i];
            eligible[i] = l.rank < l.max_rank && budget.can_afford(l.m + l.n);
            capacity[i] = l.max_rank - l.rank;
            any = any || eligible[i];
        }
        if (!any) break;

        const BatchSelection batch =
            select_batch(errors, options.threshold, options.temperature, eligible);
        if (batch.empty()) break;
        const std::size_t delta = step_size(budget.remaining(), budget.total(), b);
        const std::vector<std::size_t> inc = redistribute(batch, delta, capacity);

        // Cheapest layers first so the budget tail is not stranded.
        std::vector<std::size_t> order(batch.layers.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
            const auto& lx = layers[batch.layers[x]];
            const auto& ly = layers[batch.layers[y]];
            return lx.m + lx.n < ly.m + ly.n;
        });
        for (std::size_t k : order) {
            auto& l = layers[batch.layers[k]];
            const std::size_t unit = l.m + l.n;
            const std::size_t units = std::min(inc[k], budget.remaining() / unit);
            if (units == 0) continue;
            budget.charge(units * unit);
            l.rank += units;
            errors[batch.layers[k]] = l.error_at(l.rank);
        }
        ++iterations;
        snapshot();
    }

    CompressionPlan& plan = result.plan;
    plan.alpha = budget.alpha();
    plan.iterations = iterations;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const auto& l = layers[i];
        plan.layers.push_back({l.id, l.m, l.n, l.rank, l.d, l.granularity, errors[i]});
    }
    plan.psi_achieved = psi(plan);
    result.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

}  // namespace lighten
