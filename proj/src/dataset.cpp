#include "cartoondiff/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "binary_io.hpp"

namespace cartoondiff {

namespace {

constexpr std::uint32_t kDatasetVersion = 1;
constexpr int kSupersample = 4;

bool inside(ShapeClass shape, double u, double v)
{
    switch (shape) {
    case ShapeClass::circle:
        return u * u + v * v <= 1.0;
    case ShapeClass::square:
        return std::abs(u) <= 0.85 && std::abs(v) <= 0.85;
    case ShapeClass::triangle:
        // Apex at v = -1, base at v = 0.8.
        return v >= -1.0 && v <= 0.8 && std::abs(u) <= (v + 1.0) / 1.8;
    case ShapeClass::cross:
        return (std::abs(u) <= 0.3 && std::abs(v) <= 1.0) || (std::abs(v) <= 0.3 && std::abs(u) <= 1.0);
    }
    return false;
}

}  // namespace

std::vector<TrainingExample> ShapeDataset::examples() const
{
    std::vector<TrainingExample> out;
    out.reserve(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        out.push_back({images[i], labels[i]});
    }
    return out;
}

ImageTensor render_shape_image(std::uint64_t seed, std::uint64_t index, const ShapeStyle& style, int* label)
{
    if (style.size < 16) {
        throw RangeError("image size must be at least 16, got " + std::to_string(style.size));
    }
    if (style.channels != 1 && style.channels != 3) {
        throw RangeError("channel count must be 1 or 3, got " + std::to_string(style.channels));
    }
    if (!(style.texture_amplitude >= 0.0) || !std::isfinite(style.texture_amplitude)) {
        throw RangeError("texture amplitude must be finite and non-negative");
    }
    const int n = style.size;
    Rng rng(seed, Stream::data, {index});
    const int cls = static_cast<int>(rng.uniform_int(0, kShapeClasses - 1));
    const double cx = rng.uniform(0.35, 0.65) * n;
    const double cy = rng.uniform(0.35, 0.65) * n;
    const double radius = rng.uniform(0.2, 0.3) * n;
    const double gx = rng.uniform(-1.0, 1.0), gy = rng.uniform(-1.0, 1.0);
    std::vector<double> fill(static_cast<std::size_t>(style.channels));
    for (double& f : fill) {
        f = rng.uniform(0.2, 0.6);
    }

    // Fraction of each pixel covered by the shape, from a regular subgrid.
    std::vector<double> coverage(static_cast<std::size_t>(n * n));
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            int hits = 0;
            for (int sy = 0; sy < kSupersample; ++sy) {
                for (int sx = 0; sx < kSupersample; ++sx) {
                    const double px = x + (sx + 0.5) / kSupersample;
                    const double py = y + (sy + 0.5) / kSupersample;
                    hits += inside(static_cast<ShapeClass>(cls), (px - cx) / radius, (py - cy) / radius) ? 1 : 0;
                }
            }
            coverage[static_cast<std::size_t>(y * n + x)] =
                static_cast<double>(hits) / (kSupersample * kSupersample);
        }
    }

    ImageTensor img({static_cast<std::size_t>(style.channels), static_cast<std::size_t>(n),
                     static_cast<std::size_t>(n)});
    for (int c = 0; c < style.channels; ++c) {
        for (int y = 0; y < n; ++y) {
            for (int x = 0; x < n; ++x) {
                const double bg = -0.6 + 0.15 * (gx * (x / static_cast<double>(n) - 0.5) +
                                                 gy * (y / static_cast<double>(n) - 0.5));
                // Texture is drawn for every pixel so the stream layout does not depend on the shape.
                const double tex = style.texture_amplitude * rng.normal();
                const double cov = coverage[static_cast<std::size_t>(y * n + x)];
                const double v = (1.0 - cov) * bg + cov * (fill[static_cast<std::size_t>(c)] + tex);
                img[(static_cast<std::size_t>(c) * n + y) * n + x] = static_cast<float>(std::clamp(v, -1.0, 1.0));
            }
        }
    }
    if (label) {
        *label = cls;
    }
    return img;
}

ShapeDataset generate_dataset(int n, int size, std::uint64_t seed, int channels, double texture_amplitude)
{
    if (n < 1) {
        throw RangeError("dataset size must be >= 1");
    }
    ShapeDataset ds;
    ds.seed = seed;
    ds.size = size;
    ds.channels = channels;
    ds.texture_amplitude = texture_amplitude;
    const ShapeStyle style{size, channels, texture_amplitude};
    ds.images.reserve(static_cast<std::size_t>(n));
    ds.labels.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        int label = 0;
        ds.images.push_back(render_shape_image(seed, static_cast<std::uint64_t>(i), style, &label));
        ds.labels.push_back(label);
    }
    return ds;
}

void save_dataset(const ShapeDataset& ds, const std::string& path)
{
    detail::BinaryWriter w(path);
    w.bytes("CDDS", 4);
    w.u32(kDatasetVersion);
    w.u32(static_cast<std::uint32_t>(ds.count()));
    w.u32(static_cast<std::uint32_t>(ds.channels));
    w.u32(static_cast<std::uint32_t>(ds.size));
    w.u32(static_cast<std::uint32_t>(ds.size));
    w.u64(ds.seed);
    w.f64(ds.texture_amplitude);
    for (int label : ds.labels) {
        w.u32(static_cast<std::uint32_t>(label));
    }
    for (const auto& img : ds.images) {
        for (float v : img.data()) {
            w.f32(v);
        }
    }
    w.finish();
}

ShapeDataset load_dataset(const std::string& path)
{
    detail::BinaryReader r(path);
    r.expect_magic("CDDS");
    const std::uint32_t version = r.u32();
    if (version != kDatasetVersion) {
        throw FormatError(path + ": unsupported dataset version " + std::to_string(version));
    }
    const std::uint32_t count = r.u32();
    const std::uint32_t channels = r.u32();
    const std::uint32_t height = r.u32();
    const std::uint32_t width = r.u32();
    if (height != width || channels == 0 || height == 0) {
        throw FormatError(path + ": dataset images must be square with positive size");
    }
    ShapeDataset ds;
    ds.seed = r.u64();
    ds.texture_amplitude = r.f64();
    ds.channels = static_cast<int>(channels);
    ds.size = static_cast<int>(height);
    ds.labels.resize(count);
    for (auto& label : ds.labels) {
        label = static_cast<int>(r.u32());
        if (label < 0 || label >= kShapeClasses) {
            throw FormatError(path + ": label out of range");
        }
    }
    const Shape shape{channels, height, width};
    ds.images.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        ImageTensor img(shape);
        for (float& v : img.data()) {
            v = r.f32();
        }
        ds.images.push_back(std::move(img));
    }
    if (!r.at_end()) {
        throw FormatError(path + ": trailing bytes after dataset payload");
    }
    return ds;
}

}  // namespace cartoondiff
