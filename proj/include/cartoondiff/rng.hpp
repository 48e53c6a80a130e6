#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

#include "cartoondiff/tensor.hpp"

namespace cartoondiff {

/// Named substream families. Every random draw in the library comes from a
/// stream keyed by (seed, family, indices...), never from global state.
enum class Stream : std::uint64_t {
    init = 1,
    sampling = 2,
    data = 3,
    train_example = 4,
    train_batch = 5,
    test = 99,
};

class Rng {
public:
    explicit Rng(std::uint64_t seed, Stream stream, std::initializer_list<std::uint64_t> indices = {});

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }

    /// Uniform integer in [lo, hi].
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi)
    {
        return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
    }

    template <typename T>
    Tensor<T> normal_tensor(const Shape& shape, double stddev = 1.0)
    {
        Tensor<T> t(shape);
        for (T& v : t.data()) {
            v = static_cast<T>(stddev * normal());
        }
        return t;
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace cartoondiff
