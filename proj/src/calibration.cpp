#include "lighten/calibration.hpp"

#include "lighten/error.hpp"

namespace lighten {

const Matrix& CalibrationSet::at(const std::string& id) const {
    const auto it = inputs.find(id);
    if (it == inputs.end()) throw InvalidArgument("no calibration activations for layer '" + id + "'");
    return it->second;
}

std::size_t CalibrationSet::token_count() const {
    return inputs.empty() ? 0 : inputs.begin()->second.cols();
}

CalibrationSet collect_calibration(const ToyViT& model, const Dataset& samples) {
    if (samples.size() == 0) throw InvalidArgument("collect_calibration: no samples");
    std::map<std::string, std::vector<Matrix>> parts;
    std::map<std::string, bool> wanted;
    for (const auto& l : model.graph.layers) wanted[l.id] = l.compressible();

    ForwardOptions opts;
    opts.on_layer_input = [&](const std::string& id, const Matrix& x) {
        if (wanted.at(id)) parts[id].push_back(x);
    };
    for (std::size_t i = 0; i < samples.size(); ++i) {
        try {
            forward(model, samples.inputs[i], opts);
        } catch (const Error& e) {
            throw DimensionError("collect_calibration: sample " + std::to_string(i) + ": " + e.what());
        }
    }

    CalibrationSet set;
    set.sample_count = samples.size();
    for (auto& [id, list] : parts) {
        std::size_t total = 0;
        for (const auto& m : list) total += m.cols();
        Matrix x(list.front().rows(), total);
        std::size_t c = 0;
        for (const auto& m : list) {
            x.set_block(0, c, m);
            c += m.cols();
        }
        const auto& spec = model.graph.layer(id);
        if (x.rows() != spec.cols)
            throw DimensionError("collect_calibration: layer '" + id + "' recorded " + x.shape_string());
        set.inputs.emplace(id, std::move(x));
    }
    return set;
}

CalibrationSet collect_calibration(const ToyViT& model, const Matrix& inputs) {
    Dataset d;
    d.inputs.push_back(inputs);
    return collect_calibration(model, d);
}

void save_calibration(const std::filesystem::path& path, const CalibrationSet& set) {
    Container c;
    c.meta = {{"kind", "calibration"}, {"sample_count", set.sample_count}};
    for (const auto& [id, x] : set.inputs) c.tensors[id] = Tensor::from_matrix(x);
    write_container(path, c);
}

CalibrationSet load_calibration(const std::filesystem::path& path) {
    const Container c = read_container(path);
    if (c.meta.value("kind", std::string{}) != "calibration")
        throw FormatError(FormatErrc::malformed_manifest, path.string() + " is not a calibration file");
    CalibrationSet set;
    set.sample_count = c.meta.value("sample_count", std::size_t{0});
    for (const auto& [id, t] : c.tensors) {
        if (t.shape.size() != 2) throw FormatError(FormatErrc::shape_mismatch, "calibration '" + id + "' is not 2-D");
        set.inputs.emplace(id, t.to_matrix());
    }
    return set;
}

}  // namespace lighten
