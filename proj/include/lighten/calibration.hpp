#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "lighten/toy_vit.hpp"

namespace lighten {

/// Per-layer input activations, n_l x T (columns are calibration tokens).
struct CalibrationSet {
    std::map<std::string, Matrix> inputs;
    std::size_t sample_count = 0;

    const Matrix& at(const std::string& id) const;
    std::size_t token_count() const;
};

/// Runs every sample through the model and concatenates, per compressible
/// layer, the exact activations fed to that layer.
CalibrationSet collect_calibration(const ToyViT& model, const Dataset& samples);
CalibrationSet collect_calibration(const ToyViT& model, const Matrix& inputs);

/// LTEN with one f32 [n, T] tensor per layer id and meta {"kind": "calibration"}.
void save_calibration(const std::filesystem::path& path, const CalibrationSet& set);
CalibrationSet load_calibration(const std::filesystem::path& path);

}  // namespace lighten
