#include "lighten/model_graph.hpp"

#include <set>

namespace lighten {
namespace {

constexpr std::pair<LayerKind, const char*> kKindNames[] = {
    {LayerKind::attn_q, "attn_q"},   {LayerKind::attn_k, "attn_k"},
    {LayerKind::attn_v, "attn_v"},   {LayerKind::attn_o, "attn_o"},
    {LayerKind::mlp_fc1, "mlp_fc1"}, {LayerKind::mlp_fc2, "mlp_fc2"},
    {LayerKind::embed, "embed"},     {LayerKind::head, "head"},
};

std::string shape_str(const std::vector<std::uint64_t>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

void expect_shape(const TensorMap& tensors, const std::string& name,
                  const std::vector<std::uint64_t>& want, const std::string& layer) {
    const auto it = tensors.find(name);
    if (it == tensors.end()) {
        throw FormatError(FormatErrc::shape_mismatch,
                          "layer '" + layer + "' is missing tensor '" + name + "'");
    }
    if (it->second.shape != want) {
        throw FormatError(FormatErrc::shape_mismatch,
                          "layer '" + layer + "': tensor '" + name + "' has shape " +
                              shape_str(it->second.shape) + ", expected " + shape_str(want));
    }
}

}  // namespace

const char* to_string(LayerKind kind) noexcept {
    for (const auto& [k, name] : kKindNames)
        if (k == kind) return name;
    return "unknown";
}

LayerKind parse_layer_kind(const std::string& s) {
    for (const auto& [k, name] : kKindNames)
        if (s == name) return k;
    throw InvalidArgument("unknown layer kind '" + s + "'");
}

const LayerSpec* ModelGraph::find(const std::string& id) const noexcept {
    for (const auto& l : layers)
        if (l.id == id) return &l;
    return nullptr;
}

const LayerSpec& ModelGraph::layer(const std::string& id) const {
    if (const auto* l = find(id)) return *l;
    throw InvalidArgument("model has no layer '" + id + "'");
}

std::vector<LayerSpec> ModelGraph::compressible_layers() const {
    std::vector<LayerSpec> out;
    for (const auto& l : layers)
        if (l.compressible()) out.push_back(l);
    return out;
}

std::string ModelGraph::meta_or(const std::string& key, const std::string& fallback) const {
    const auto it = meta.find(key);
    return it == meta.end() ? fallback : it->second;
}

std::size_t ModelGraph::meta_size(const std::string& key) const {
    const auto it = meta.find(key);
    if (it == meta.end()) throw InvalidArgument("model meta has no '" + key + "'");
    try {
        return static_cast<std::size_t>(std::stoull(it->second));
    } catch (const std::exception&) {
        throw InvalidArgument("model meta '" + key + "' is not a count: '" + it->second + "'");
    }
}

void ModelGraph::validate() const {
    std::set<std::string> ids;
    for (const auto& l : layers) {
        if (!ids.insert(l.id).second) throw InvalidArgument("duplicate layer id '" + l.id + "'");
        if (l.rows == 0 || l.cols == 0)
            throw InvalidArgument("layer '" + l.id + "' has a zero dimension");
    }
    std::set<std::string> grouped;
    for (const auto& b : blocks) {
        for (const auto* group : {&b.attn, &b.mlp}) {
            for (const auto& id : *group) {
                const auto* l = find(id);
                if (l == nullptr) throw InvalidArgument("block references unknown layer '" + id + "'");
                if (!l->compressible())
                    throw InvalidArgument("embedding/head layer '" + id + "' placed in a block");
                if (!grouped.insert(id).second)
                    throw InvalidArgument("layer '" + id + "' belongs to more than one block group");
            }
        }
    }
    for (const auto& l : layers) {
        if (l.compressible() && !grouped.contains(l.id))
            throw InvalidArgument("layer '" + l.id + "' belongs to no block group");
    }
}

nlohmann::json to_json(const ModelGraph& g) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : g.layers)
        layers.push_back(
            {{"id", l.id}, {"kind", to_string(l.kind)}, {"rows", l.rows}, {"cols", l.cols}});
    nlohmann::json blocks = nlohmann::json::array();
    for (const auto& b : g.blocks) blocks.push_back({{"attn", b.attn}, {"mlp", b.mlp}});
    return {{"layers", layers}, {"blocks", blocks}, {"hidden_size", g.hidden_size},
            {"meta", g.meta}};
}

ModelGraph graph_from_json(const nlohmann::json& j) {
    try {
        ModelGraph g;
        for (const auto& l : j.at("layers")) {
            g.layers.push_back({l.at("id").get<std::string>(),
                                parse_layer_kind(l.at("kind").get<std::string>()),
                                l.at("rows").get<std::size_t>(), l.at("cols").get<std::size_t>()});
        }
        for (const auto& b : j.at("blocks")) {
            g.blocks.push_back({b.at("attn").get<std::vector<std::string>>(),
                                b.at("mlp").get<std::vector<std::string>>()});
        }
        g.hidden_size = j.at("hidden_size").get<std::size_t>();
        g.meta = j.value("meta", std::map<std::string, std::string>{});
        return g;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(FormatErrc::malformed_manifest, std::string("model graph: ") + e.what());
    }
}

std::string factor_a_name(const std::string& id) { return id + ".a"; }
std::string factor_b_name(const std::string& id) { return id + ".b"; }
std::string sparse_values_name(const std::string& id) { return id + ".sparse.values"; }
std::string sparse_index_name(const std::string& id) { return id + ".sparse.index"; }

void check_model_tensors(const ModelGraph& graph, const TensorMap& tensors) {
    for (const auto& l : graph.layers) {
        if (tensors.contains(l.id)) {
            expect_shape(tensors, l.id, {l.rows, l.cols}, l.id);
            continue;
        }
        const auto a = tensors.find(factor_a_name(l.id));
        if (a == tensors.end() || a->second.shape.size() != 2) {
            throw FormatError(FormatErrc::shape_mismatch,
                              "layer '" + l.id + "' has neither a dense nor a factored tensor");
        }
        const std::uint64_t r = a->second.shape[1];
        expect_shape(tensors, factor_a_name(l.id), {l.rows, r}, l.id);
        expect_shape(tensors, factor_b_name(l.id), {r, l.cols}, l.id);
        const auto idx = tensors.find(sparse_index_name(l.id));
        const auto val = tensors.find(sparse_values_name(l.id));
        if (idx == tensors.end() || val == tensors.end() || idx->second.shape.size() != 2 ||
            val->second.shape.size() != 3) {
            throw FormatError(FormatErrc::shape_mismatch,
                              "layer '" + l.id + "' has malformed sparse tensors");
        }
        const auto chunks = idx->second.shape[0];
        const auto d = idx->second.shape[1];
        const auto g = val->second.shape[1];
        expect_shape(tensors, sparse_values_name(l.id), {chunks, g, d}, l.id);
        if (g == 0 || chunks != (l.rows + g - 1) / g) {
            throw FormatError(FormatErrc::shape_mismatch,
                              "layer '" + l.id + "' sparse chunk count disagrees with rows");
        }
    }
}

void save_model(const std::filesystem::path& path, const ModelGraph& graph,
                const TensorMap& tensors) {
    graph.validate();
    check_model_tensors(graph, tensors);
    Container c;
    c.meta = to_json(graph);
    c.tensors = tensors;
    write_container(path, c);
}

StoredModel load_model(const std::filesystem::path& path) {
    Container c = read_container(path);
    StoredModel m{graph_from_json(c.meta), std::move(c.tensors)};
    check_model_tensors(m.graph, m.tensors);
    return m;
}

}  // namespace lighten
