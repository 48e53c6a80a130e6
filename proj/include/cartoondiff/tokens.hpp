#pragma once

#include "cartoondiff/tensor.hpp"

namespace cartoondiff {

/// Splits a C x H x W image into non-overlapping p x p patches, ordered
/// row-major over the patch grid. Each token is the patch flattened as
/// (row, col, channel), giving an N x (p*p*C) matrix.
template <typename T>
Tensor<T> patchify(const Tensor<T>& img, int p);

/// Exact inverse of patchify for an image of shape C x H x W.
template <typename T>
Tensor<T> unpatchify(const Tensor<T>& tokens, int p, int H, int W, int C);

/// Sinusoidal embedding of a step index. Entry 2i is sin(t * f_i) and entry
/// 2i + 1 is cos(t * f_i), with f_i = 10000^(-2i / dim).
template <typename T>
Tensor<T> timestep_embedding(double t, int dim);

/// Fixed 2-D sin/cos position table for a grid x grid token layout. The first
/// half of each row encodes the patch row, the second half the patch column.
template <typename T>
Tensor<T> position_embedding(int grid, int dim);

}  // namespace cartoondiff
