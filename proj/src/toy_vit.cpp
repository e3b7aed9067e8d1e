#include "lighten/toy_vit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "lighten/error.hpp"
#include "lighten/random.hpp"

namespace lighten {
namespace {

std::string norm_name(std::size_t b, int which, const char* part) {
    return block_prefix(b) + ".ln" + std::to_string(which) + "." + part;
}

Matrix layer_norm(const Matrix& x, const std::vector<double>& gamma, const std::vector<double>& beta) {
    Matrix out(x.rows(), x.cols());
    const auto h = static_cast<double>(x.rows());
    for (std::size_t t = 0; t < x.cols(); ++t) {
        double mean = 0.0;
        for (std::size_t i = 0; i < x.rows(); ++i) mean += x(i, t);
        mean /= h;
        double var = 0.0;
        for (std::size_t i = 0; i < x.rows(); ++i) var += (x(i, t) - mean) * (x(i, t) - mean);
        var /= h;
        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        for (std::size_t i = 0; i < x.rows(); ++i) out(i, t) = (x(i, t) - mean) * inv * gamma[i] + beta[i];
    }
    return out;
}

double gelu(double v) { return 0.5 * v * (1.0 + std::erf(v / std::numbers::sqrt2)); }

// Softmax attention for one head over columns (tokens). Returns dh x T.
Matrix attend(const Matrix& q, const Matrix& k, const Matrix& v, std::size_t r0, std::size_t dh,
              std::vector<Matrix>* record) {
    const std::size_t t_count = q.cols();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Matrix p(t_count, t_count);
    for (std::size_t t = 0; t < t_count; ++t) {
        double peak = -std::numeric_limits<double>::infinity();
        for (std::size_t s = 0; s < t_count; ++s) {
            double acc = 0.0;
            for (std::size_t i = r0; i < r0 + dh; ++i) acc += q(i, t) * k(i, s);
            p(t, s) = acc * scale;
            peak = std::max(peak, p(t, s));
        }
        double z = 0.0;
        for (std::size_t s = 0; s < t_count; ++s) {
            p(t, s) = std::exp(p(t, s) - peak);
            z += p(t, s);
        }
        for (std::size_t s = 0; s < t_count; ++s) p(t, s) /= z;
    }
    Matrix out(dh, t_count);
    for (std::size_t i = 0; i < dh; ++i)
        for (std::size_t t = 0; t < t_count; ++t) {
            double acc = 0.0;
            for (std::size_t s = 0; s < t_count; ++s) acc += p(t, s) * v(r0 + i, s);
            out(i, t) = acc;
        }
    if (record) record->push_back(std::move(p));
    return out;
}

Matrix token_mean(const Matrix& h) {
    Matrix pooled(h.rows(), 1);
    for (std::size_t i = 0; i < h.rows(); ++i) {
        double acc = 0.0;
        for (double v : h.row(i)) acc += v;
        pooled(i, 0) = acc / static_cast<double>(h.cols());
    }
    return pooled;
}

double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

Matrix spectral_weight(std::size_t m, std::size_t n, Rng& rng) {
    const std::size_t k = std::min(m, n);
    Matrix p = random_normal(m, k, rng);
    Matrix q = random_normal(k, n, rng);
    std::vector<double> s(k);
    for (std::size_t i = 0; i < k; ++i)
        s[i] = std::exp(-4.0 * static_cast<double>(i) / static_cast<double>(k)) + 0.05;
    Matrix w = matmul(scale_columns(p, s), q);
    w *= std::sqrt(static_cast<double>(m)) / frobenius_norm(w);
    for (double& v : w.data()) v = to_f32(v);
    return w;
}

}  // namespace

std::string block_prefix(std::size_t b) { return "blocks." + std::to_string(b); }

Matrix LinearWeights::effective() const { return factored ? factored->reconstruct() : dense; }

LinearWeights load_linear(const LayerSpec& spec, const TensorMap& tensors, bool validate) {
    LinearWeights w;
    if (const auto it = tensors.find(spec.id); it != tensors.end()) {
        w.dense = it->second.to_matrix();
        return w;
    }
    const Tensor& idx = tensors.at(sparse_index_name(spec.id));
    const Tensor& val = tensors.at(sparse_values_name(spec.id));
    FactoredWeights f;
    f.a = tensors.at(factor_a_name(spec.id)).to_matrix();
    f.b = tensors.at(factor_b_name(spec.id)).to_matrix();
    const auto chunks = static_cast<std::size_t>(idx.shape[0]);
    const auto d = static_cast<std::size_t>(idx.shape[1]);
    const auto g = static_cast<std::size_t>(val.shape[1]);
    f.sparse.granularity = g;
    f.sparse.full_rows = spec.rows;
    f.sparse.full_cols = spec.cols;
    for (std::size_t c = 0; c < chunks; ++c) {
        SparseChunk ch;
        const std::size_t h = std::min(g, spec.rows - c * g);
        for (std::size_t k = 0; k < d; ++k) {
            const std::int32_t col = idx.i32[c * d + k];
            if (col < 0) throw InvalidArgument("layer '" + spec.id + "': negative sparse index");
            ch.kept_cols.push_back(static_cast<std::size_t>(col));
        }
        ch.values = Matrix(h, d);
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t k = 0; k < d; ++k) ch.values(i, k) = val.f32[(c * g + i) * d + k];
        f.sparse.chunks.push_back(std::move(ch));
    }
    try {
        if (validate) f.sparse.validate();
    } catch (const Error& e) {
        throw InvalidArgument("layer '" + spec.id + "': " + e.what());
    }
    w.factored = std::move(f);
    return w;
}

void store_linear(const LayerSpec& spec, const LinearWeights& w, TensorMap& tensors) {
    if (!w.factored) {
        tensors[spec.id] = Tensor::from_matrix(w.dense);
        return;
    }
    const FactoredWeights& f = *w.factored;
    tensors[factor_a_name(spec.id)] = Tensor::from_matrix(f.a);
    tensors[factor_b_name(spec.id)] = Tensor::from_matrix(f.b);
    const std::size_t g = f.sparse.granularity;
    const std::size_t d = f.sparse.kept_per_chunk();
    const std::size_t chunks = f.sparse.chunks.size();
    std::vector<float> values(chunks * g * d, 0.0f);
    std::vector<std::int32_t> index(chunks * d);
    for (std::size_t c = 0; c < chunks; ++c) {
        const auto& ch = f.sparse.chunks[c];
        for (std::size_t k = 0; k < d; ++k) index[c * d + k] = static_cast<std::int32_t>(ch.kept_cols[k]);
        for (std::size_t i = 0; i < ch.values.rows(); ++i)
            for (std::size_t k = 0; k < d; ++k)
                values[(c * g + i) * d + k] = static_cast<float>(ch.values(i, k));
    }
    tensors[sparse_values_name(spec.id)] = Tensor::from_floats({chunks, g, d}, std::move(values));
    tensors[sparse_index_name(spec.id)] = Tensor::from_ints({chunks, d}, std::move(index));
}

Matrix ReferenceExecutor::apply(const std::string& id, const LinearWeights& w, const Matrix& x) const {
    if (w.cols() != x.rows()) {
        throw DimensionError("layer '" + id + "': weight " + std::to_string(w.rows()) + "x" +
                             std::to_string(w.cols()) + " applied to activation " + x.shape_string());
    }
    if (!w.factored) return matmul(w.dense, x);
    const FactoredWeights& f = *w.factored;
    return matmul(f.a, matmul(f.b, x)) + matmul(expand(f.sparse), x);
}

std::size_t ToyViT::input_dim() const {
    if (graph.layers.empty()) throw InvalidArgument("model has no layers");
    if (arch() == "chain") return graph.layers.front().cols;
    return graph.layer("embed").cols;
}

ToyViT ToyViT::from_stored(const StoredModel& stored) {
    ToyViT m;
    m.graph = stored.graph;
    for (const auto& l : m.graph.layers) m.linear[l.id] = load_linear(l, stored.tensors);
    if (m.arch() == "vit") {
        for (std::size_t b = 0; b < m.graph.blocks.size(); ++b) {
            for (int which : {1, 2}) {
                for (const char* part : {"gamma", "beta"}) {
                    const std::string name = norm_name(b, which, part);
                    const auto it = stored.tensors.find(name);
                    if (it == stored.tensors.end())
                        throw FormatError(FormatErrc::shape_mismatch, "missing tensor '" + name + "'");
                    m.norms[name] = std::vector<double>(it->second.f32.begin(), it->second.f32.end());
                }
            }
        }
    }
    m.check();
    return m;
}

StoredModel ToyViT::to_stored() const {
    StoredModel s;
    s.graph = graph;
    for (const auto& l : graph.layers) store_linear(l, linear.at(l.id), s.tensors);
    for (const auto& [name, v] : norms) {
        s.tensors[name] = Tensor::from_floats({v.size()}, std::vector<float>(v.begin(), v.end()));
    }
    return s;
}

void ToyViT::check() const {
    graph.validate();
    for (const auto& l : graph.layers) {
        const auto it = linear.find(l.id);
        if (it == linear.end()) throw DimensionError("layer '" + l.id + "' has no weights");
        if (it->second.rows() != l.rows || it->second.cols() != l.cols) {
            throw DimensionError("layer '" + l.id + "' weights are " + std::to_string(it->second.rows()) +
                                 "x" + std::to_string(it->second.cols()) + ", graph says " +
                                 std::to_string(l.rows) + "x" + std::to_string(l.cols));
        }
    }
    if (arch() == "chain") {
        for (std::size_t i = 1; i < graph.layers.size(); ++i) {
            if (graph.layers[i].cols != graph.layers[i - 1].rows)
                throw DimensionError("chain layer '" + graph.layers[i].id + "' does not accept its input");
        }
        return;
    }
    if (arch() != "vit") throw InvalidArgument("unknown model arch '" + arch() + "'");
    const std::size_t h = graph.hidden_size;
    if (h == 0 || h % heads() != 0) throw InvalidArgument("hidden size not divisible by heads");
    for (const auto& [name, v] : norms)
        if (v.size() != h) throw DimensionError("norm '" + name + "' has wrong length");
}

ForwardResult forward(const ToyViT& model, const Matrix& input, const ForwardOptions& options) {
    static const ReferenceExecutor reference;
    const LinearExecutor& exec = options.executor ? *options.executor : reference;
    auto run = [&](const std::string& id, const Matrix& x) {
        if (options.on_layer_input) options.on_layer_input(id, x);
        return exec.apply(id, model.linear.at(id), x);
    };
    if (input.rows() != model.input_dim()) {
        throw DimensionError("model input expects " + std::to_string(model.input_dim()) +
                             " rows, got " + input.shape_string());
    }

    ForwardResult out;
    if (model.arch() == "chain") {
        Matrix h = input;
        for (const auto& l : model.graph.layers) h = run(l.id, h);
        out.logits = token_mean(h).transpose();
        out.output = std::move(h);
        return out;
    }

    const std::size_t heads = model.heads();
    const std::size_t dh = model.graph.hidden_size / heads;
    Matrix h = run("embed", input);
    for (std::size_t b = 0; b < model.graph.blocks.size(); ++b) {
        const std::string p = block_prefix(b);
        const Matrix u = layer_norm(h, model.norms.at(norm_name(b, 1, "gamma")),
                                    model.norms.at(norm_name(b, 1, "beta")));
        const Matrix q = run(p + ".attn.q", u);
        const Matrix k = run(p + ".attn.k", u);
        const Matrix v = run(p + ".attn.v", u);
        Matrix mixed(model.graph.hidden_size, input.cols());
        for (std::size_t hh = 0; hh < heads; ++hh) {
            mixed.set_block(hh * dh, 0,
                            attend(q, k, v, hh * dh, dh, options.record_attention ? &out.attention : nullptr));
        }
        h += run(p + ".attn.o", mixed);
        out.features.attn.push_back(h.transpose());

        const Matrix u2 = layer_norm(h, model.norms.at(norm_name(b, 2, "gamma")),
                                     model.norms.at(norm_name(b, 2, "beta")));
        Matrix z = run(p + ".mlp.fc1", u2);
        for (double& e : z.data()) e = gelu(e);
        h += run(p + ".mlp.fc2", z);
        out.features.mlp.push_back(h.transpose());
    }
    out.logits = run("head", token_mean(h)).transpose();
    out.output = std::move(h);
    return out;
}

ToyViT make_toy_vit(const ToyDims& dims, std::uint64_t seed) {
    if (dims.hidden == 0 || dims.heads == 0 || dims.hidden % dims.heads != 0)
        throw InvalidArgument("toy dims: hidden must be a positive multiple of heads");
    if (dims.mlp_ratio == 0 || dims.in_dim == 0 || dims.classes == 0)
        throw InvalidArgument("toy dims: all sizes must be positive");
    Rng rng(seed);
    ToyViT m;
    ModelGraph& g = m.graph;
    const std::size_t h = dims.hidden, f = dims.hidden * dims.mlp_ratio;
    g.hidden_size = h;
    g.meta = {{"arch", "vit"},
              {"heads", std::to_string(dims.heads)},
              {"mlp_ratio", std::to_string(dims.mlp_ratio)},
              {"blocks", std::to_string(dims.blocks)},
              {"in_dim", std::to_string(dims.in_dim)},
              {"classes", std::to_string(dims.classes)}};
    auto add = [&](const std::string& id, LayerKind kind, std::size_t rows, std::size_t cols) {
        g.layers.push_back({id, kind, rows, cols});
        m.linear[id].dense = spectral_weight(rows, cols, rng);
    };
    add("embed", LayerKind::embed, h, dims.in_dim);
    for (std::size_t b = 0; b < dims.blocks; ++b) {
        const std::string p = block_prefix(b);
        BlockGroup group;
        const std::pair<const char*, LayerKind> attn[] = {
            {".attn.q", LayerKind::attn_q}, {".attn.k", LayerKind::attn_k},
            {".attn.v", LayerKind::attn_v}, {".attn.o", LayerKind::attn_o}};
        for (const auto& [suffix, kind] : attn) {
            add(p + suffix, kind, h, h);
            group.attn.push_back(p + suffix);
        }
        add(p + ".mlp.fc1", LayerKind::mlp_fc1, f, h);
        add(p + ".mlp.fc2", LayerKind::mlp_fc2, h, f);
        group.mlp = {p + ".mlp.fc1", p + ".mlp.fc2"};
        g.blocks.push_back(std::move(group));
        for (int which : {1, 2}) {
            std::vector<double> gamma(h), beta(h);
            for (auto& v : gamma) v = to_f32(1.0 + 0.1 * rng.normal());
            for (auto& v : beta) v = to_f32(0.05 * rng.normal());
            m.norms[norm_name(b, which, "gamma")] = std::move(gamma);
            m.norms[norm_name(b, which, "beta")] = std::move(beta);
        }
    }
    add("head", LayerKind::head, dims.classes, h);
    m.linear["head"].dense *= 3.0;
    for (double& v : m.linear["head"].dense.data()) v = to_f32(v);
    m.check();
    return m;
}

Dataset make_dataset(const ToyViT& model, std::size_t samples, std::size_t tokens, std::uint64_t seed,
                     bool with_labels) {
    if (samples == 0 || tokens == 0) throw InvalidArgument("dataset needs samples and tokens");
    Rng rng(seed);
    Dataset data;
    for (std::size_t i = 0; i < samples; ++i) {
        Matrix x = random_normal(model.input_dim(), tokens, rng);
        for (double& v : x.data()) v = to_f32(v);
        data.inputs.push_back(std::move(x));
    }
    if (with_labels) {
        const Matrix logits = dataset_logits(model, data);
        for (std::size_t i = 0; i < samples; ++i)
            data.labels.push_back(static_cast<std::int32_t>(argmax_row(logits, i)));
    }
    return data;
}

void save_dataset(const std::filesystem::path& path, const Dataset& data) {
    if (data.inputs.empty()) throw InvalidArgument("save_dataset: empty dataset");
    const std::size_t n = data.inputs.front().rows(), t = data.inputs.front().cols();
    std::vector<float> flat;
    flat.reserve(data.size() * n * t);
    for (const auto& x : data.inputs) {
        if (x.rows() != n || x.cols() != t) throw DimensionError("save_dataset: ragged samples");
        for (double v : x.data()) flat.push_back(static_cast<float>(v));
    }
    Container c;
    c.meta = {{"kind", "dataset"}};
    c.tensors["inputs"] = Tensor::from_floats({data.size(), n, t}, std::move(flat));
    if (!data.labels.empty()) {
        if (data.labels.size() != data.size()) throw DimensionError("save_dataset: label count mismatch");
        c.tensors["labels"] = Tensor::from_ints({data.labels.size()}, data.labels);
    }
    write_container(path, c);
}

Dataset load_dataset(const std::filesystem::path& path) {
    const Container c = read_container(path);
    const auto it = c.tensors.find("inputs");
    if (it == c.tensors.end() || it->second.shape.size() != 3 || it->second.dtype != DType::f32)
        throw FormatError(FormatErrc::shape_mismatch, path.string() + ": no f32 [N, n, T] 'inputs' tensor");
    const auto& in = it->second;
    const auto count = static_cast<std::size_t>(in.shape[0]);
    const auto n = static_cast<std::size_t>(in.shape[1]);
    const auto t = static_cast<std::size_t>(in.shape[2]);
    Dataset data;
    for (std::size_t i = 0; i < count; ++i) {
        std::vector<double> v(in.f32.begin() + static_cast<std::ptrdiff_t>(i * n * t),
                              in.f32.begin() + static_cast<std::ptrdiff_t>((i + 1) * n * t));
        data.inputs.emplace_back(n, t, std::move(v));
    }
    if (const auto lt = c.tensors.find("labels"); lt != c.tensors.end()) {
        if (lt->second.dtype != DType::i32 || lt->second.element_count() != count)
            throw FormatError(FormatErrc::shape_mismatch, path.string() + ": labels do not match inputs");
        data.labels = lt->second.i32;
    }
    return data;
}

Matrix dataset_logits(const ToyViT& model, const Dataset& data, const LinearExecutor* executor) {
    Matrix out;
    ForwardOptions opts;
    opts.executor = executor;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Matrix y = forward(model, data.inputs[i], opts).logits;
        if (i == 0) out = Matrix(data.size(), y.cols());
        out.set_block(i, 0, y);
    }
    return out;
}

std::size_t argmax_row(const Matrix& m, std::size_t row) {
    const auto r = m.row(row);
    return static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
}

}  // namespace lighten
