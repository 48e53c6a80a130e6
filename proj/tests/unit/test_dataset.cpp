#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "cartoondiff/analysis.hpp"
#include "cartoondiff/dataset.hpp"

using namespace cartoondiff;

TEST_CASE("generation is deterministic per seed and index")
{
    const auto a = generate_dataset(1, 32, 42);
    const auto b = generate_dataset(1, 32, 42);
    CHECK(a == b);
    const auto c = generate_dataset(5, 32, 42);
    CHECK(c.images[0] == a.images[0]);
    CHECK(c.labels[0] == a.labels[0]);
    CHECK_FALSE(generate_dataset(1, 32, 43).images[0] == a.images[0]);

    int label = -1;
    const auto img = render_shape_image(42, 3, ShapeStyle{}, &label);
    CHECK(img == c.images[3]);
    CHECK(label == c.labels[3]);
}

TEST_CASE("class histogram is uniform within 3 sigma")
{
    const int n = 10000;
    const auto ds = generate_dataset(n, 16, 7);
    std::vector<int> hist(kShapeClasses, 0);
    for (int l : ds.labels) {
        REQUIRE(l >= 0);
        REQUIRE(l < kShapeClasses);
        ++hist[static_cast<std::size_t>(l)];
    }
    const double p = 1.0 / kShapeClasses;
    const double sd = std::sqrt(n * p * (1.0 - p));
    for (int h : hist) {
        CHECK(std::abs(h - n * p) < 3.0 * sd);
    }
}

TEST_CASE("pixels lie in [-1, 1] with the requested shape")
{
    for (int channels : {1, 3}) {
        const auto ds = generate_dataset(64, 24, 3, channels);
        for (const auto& img : ds.images) {
            REQUIRE(img.shape() == Shape{static_cast<std::size_t>(channels), 24, 24});
            for (float v : img.data()) {
                CHECK(v >= -1.0f);
                CHECK(v <= 1.0f);
            }
        }
    }
}

TEST_CASE("texture raises high-frequency energy at least twofold")
{
    const auto textured = generate_dataset(128, 32, 11, 1, 0.3);
    const auto flat = generate_dataset(128, 32, 11, 1, 0.0);
    double e_tex = 0.0, e_flat = 0.0;
    for (std::size_t i = 0; i < textured.count(); ++i) {
        // Same seed, same shapes: only the texture differs.
        CHECK(textured.labels[i] == flat.labels[i]);
        e_tex += high_freq_energy(textured.images[i], 8.0);
        e_flat += high_freq_energy(flat.images[i], 8.0);
    }
    CHECK(e_tex >= 2.0 * e_flat);
}

TEST_CASE("argument validation")
{
    CHECK_THROWS_AS(generate_dataset(0, 32, 1), RangeError);
    CHECK_THROWS_AS(generate_dataset(4, 15, 1), RangeError);
    CHECK_THROWS_AS(generate_dataset(4, 32, 1, 2), RangeError);
    CHECK_THROWS_AS(generate_dataset(4, 32, 1, 1, -0.1), RangeError);
}

TEST_CASE("examples view pairs images with labels")
{
    const auto ds = generate_dataset(6, 16, 2);
    const auto ex = ds.examples();
    REQUIRE(ex.size() == 6);
    for (std::size_t i = 0; i < ex.size(); ++i) {
        CHECK(ex[i].x0 == ds.images[i]);
        CHECK(ex[i].label == ds.labels[i]);
    }
}
