#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cartoondiff/training.hpp"

namespace cartoondiff {

enum class ShapeClass : int { circle = 0, square = 1, triangle = 2, cross = 3 };

inline constexpr int kShapeClasses = 4;

/// Labelled filled shapes over a smooth background. The shape interior
/// carries per-pixel Gaussian texture, so "semantic" content (class, position)
/// and "detail" content (texture) can be measured separately.
struct ShapeDataset {
    std::vector<ImageTensor> images;  // C x H x W, values in [-1, 1]
    std::vector<int> labels;
    std::uint64_t seed = 0;
    int size = 32;
    int channels = 1;
    double texture_amplitude = 0.3;

    std::size_t count() const { return images.size(); }
    std::vector<TrainingExample> examples() const;

    friend bool operator==(const ShapeDataset&, const ShapeDataset&) = default;
};

struct ShapeStyle {
    int size = 32;
    int channels = 1;
    double texture_amplitude = 0.3;
};

/// Image `index` of the dataset with this seed; a pure function of its arguments.
ImageTensor render_shape_image(std::uint64_t seed, std::uint64_t index, const ShapeStyle& style, int* label);

/// Generates n images; image i depends only on (seed, i).
ShapeDataset generate_dataset(int n, int size, std::uint64_t seed, int channels = 1,
                              double texture_amplitude = 0.3);

void save_dataset(const ShapeDataset& ds, const std::string& path);

/// Throws FormatError on bad magic/version and TruncationError on short files.
ShapeDataset load_dataset(const std::string& path);

}  // namespace cartoondiff
