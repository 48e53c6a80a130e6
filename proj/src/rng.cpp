#include "cartoondiff/rng.hpp"

namespace cartoondiff {

Rng::Rng(std::uint64_t seed, Stream stream, std::initializer_list<std::uint64_t> indices)
{
    std::vector<std::uint32_t> words;
    auto push = [&](std::uint64_t v) {
        words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
        words.push_back(static_cast<std::uint32_t>(v >> 32));
    };
    push(seed);
    push(static_cast<std::uint64_t>(stream));
    for (std::uint64_t i : indices) {
        push(i);
    }
    std::seed_seq seq(words.begin(), words.end());
    engine_.seed(seq);
}

}  // namespace cartoondiff
