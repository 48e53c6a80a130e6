#pragma once

// Dense kernels shared by the denoiser, sampler and trainer. Every reduction
// runs in a fixed left-to-right order, so results are bit-reproducible for a
// given input. Matrices are rank-2 tensors, vectors rank-1.

#include "cartoondiff/tensor.hpp"

namespace cartoondiff::ops {

/// a[M x K] * b[K x N]. Each output accumulates over K in index order.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// a[M x K] * b[N x K]^T.
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);

/// a[K x M]^T * b[K x N].
template <typename T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b);

/// Adds vector `bias` (length N) to every row of x[M x N].
template <typename T>
Tensor<T> add_row_vector(const Tensor<T>& x, const Tensor<T>& bias);

/// Sum over rows of x[M x N]; returns a length-N vector.
template <typename T>
Tensor<T> column_sum(const Tensor<T>& x);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s);

/// Elementwise product; shapes must match exactly.
template <typename T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b);

/// Intermediates kept by layer_norm for the backward pass.
template <typename T>
struct LayerNormCache {
    Tensor<T> normalized;       // (x - mean) / sqrt(var + eps), N x D
    std::vector<T> inv_std;     // per row
};

/// Row-wise layer normalization followed by per-column scale and shift.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps,
                     LayerNormCache<T>* cache = nullptr);

template <typename T>
struct LayerNormGrads {
    Tensor<T> dx;
    Tensor<T> dgamma;
    Tensor<T> dbeta;
};

template <typename T>
LayerNormGrads<T> layer_norm_backward(const Tensor<T>& dy, const Tensor<T>& gamma,
                                      const LayerNormCache<T>& cache);

/// Numerically stable (max-subtracted) softmax over each row.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x);

/// Given y = softmax_rows(x) and dL/dy, returns dL/dx.
template <typename T>
Tensor<T> softmax_rows_backward(const Tensor<T>& y, const Tensor<T>& dy);

/// tanh approximation of GELU.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x);

template <typename T>
Tensor<T> gelu_backward(const Tensor<T>& x, const Tensor<T>& dy);

template <typename T>
Tensor<T> silu(const Tensor<T>& x);

template <typename T>
Tensor<T> silu_backward(const Tensor<T>& x, const Tensor<T>& dy);

template <typename T>
T sum(const Tensor<T>& x);

template <typename T>
T max_abs(const Tensor<T>& x);

}  // namespace cartoondiff::ops
