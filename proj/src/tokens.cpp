#include "cartoondiff/tokens.hpp"

#include <cmath>
#include <string>

namespace cartoondiff {

namespace {

void check_patch_geometry(int H, int W, int C, int p)
{
    if (p < 1 || C < 1 || H < 1 || W < 1) {
        throw ShapeError("patch geometry must be positive");
    }
    if (H % p != 0 || W % p != 0) {
        throw ShapeError("image " + std::to_string(H) + "x" + std::to_string(W) +
                         " not divisible by patch size " + std::to_string(p));
    }
}

}  // namespace

template <typename T>
Tensor<T> patchify(const Tensor<T>& img, int p)
{
    if (img.rank() != 3) {
        throw ShapeError("patchify expects a C x H x W image, got " + shape_str(img.shape()));
    }
    const int C = static_cast<int>(img.dim(0));
    const int H = static_cast<int>(img.dim(1));
    const int W = static_cast<int>(img.dim(2));
    check_patch_geometry(H, W, C, p);
    const int gh = H / p, gw = W / p;
    const std::size_t dtok = static_cast<std::size_t>(p * p * C);
    Tensor<T> tokens({static_cast<std::size_t>(gh * gw), dtok});
    for (int py = 0; py < gh; ++py) {
        for (int px = 0; px < gw; ++px) {
            auto tok = tokens.row(static_cast<std::size_t>(py * gw + px));
            std::size_t k = 0;
            for (int dy = 0; dy < p; ++dy) {
                for (int dx = 0; dx < p; ++dx) {
                    for (int c = 0; c < C; ++c) {
                        const int y = py * p + dy, x = px * p + dx;
                        tok[k++] = img[(static_cast<std::size_t>(c) * H + y) * W + x];
                    }
                }
            }
        }
    }
    return tokens;
}

template <typename T>
Tensor<T> unpatchify(const Tensor<T>& tokens, int p, int H, int W, int C)
{
    check_patch_geometry(H, W, C, p);
    const int gh = H / p, gw = W / p;
    const Shape expected{static_cast<std::size_t>(gh * gw), static_cast<std::size_t>(p * p * C)};
    if (tokens.shape() != expected) {
        throw ShapeError("unpatchify: tokens " + shape_str(tokens.shape()) + ", expected " +
                         shape_str(expected));
    }
    Tensor<T> img({static_cast<std::size_t>(C), static_cast<std::size_t>(H), static_cast<std::size_t>(W)});
    for (int py = 0; py < gh; ++py) {
        for (int px = 0; px < gw; ++px) {
            auto tok = tokens.row(static_cast<std::size_t>(py * gw + px));
            std::size_t k = 0;
            for (int dy = 0; dy < p; ++dy) {
                for (int dx = 0; dx < p; ++dx) {
                    for (int c = 0; c < C; ++c) {
                        const int y = py * p + dy, x = px * p + dx;
                        img[(static_cast<std::size_t>(c) * H + y) * W + x] = tok[k++];
                    }
                }
            }
        }
    }
    return img;
}

template <typename T>
Tensor<T> timestep_embedding(double t, int dim)
{
    if (dim < 2 || dim % 2 != 0) {
        throw ShapeError("timestep embedding dimension must be even, got " + std::to_string(dim));
    }
    Tensor<T> out({static_cast<std::size_t>(dim)});
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
        out[static_cast<std::size_t>(2 * i)] = static_cast<T>(std::sin(t * freq));
        out[static_cast<std::size_t>(2 * i + 1)] = static_cast<T>(std::cos(t * freq));
    }
    return out;
}

template <typename T>
Tensor<T> position_embedding(int grid, int dim)
{
    if (dim % 4 != 0) {
        throw ShapeError("position embedding dimension must be divisible by 4");
    }
    const int half = dim / 2;
    Tensor<T> table({static_cast<std::size_t>(grid * grid), static_cast<std::size_t>(dim)});
    for (int r = 0; r < grid; ++r) {
        for (int c = 0; c < grid; ++c) {
            const auto er = timestep_embedding<T>(r, half);
            const auto ec = timestep_embedding<T>(c, half);
            auto row = table.row(static_cast<std::size_t>(r * grid + c));
            for (int k = 0; k < half; ++k) {
                row[static_cast<std::size_t>(k)] = er[static_cast<std::size_t>(k)];
                row[static_cast<std::size_t>(half + k)] = ec[static_cast<std::size_t>(k)];
            }
        }
    }
    return table;
}

template Tensor<float> patchify(const Tensor<float>&, int);
template Tensor<double> patchify(const Tensor<double>&, int);
template Tensor<float> unpatchify(const Tensor<float>&, int, int, int, int);
template Tensor<double> unpatchify(const Tensor<double>&, int, int, int, int);
template Tensor<float> timestep_embedding(double, int);
template Tensor<double> timestep_embedding(double, int);
template Tensor<float> position_embedding(int, int);
template Tensor<double> position_embedding(int, int);

}  // namespace cartoondiff
