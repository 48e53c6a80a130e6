#include "cartoondiff/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cartoondiff {

std::string shape_str(const Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "x" : "") << shape[i];
    }
    os << ']';
    return os.str();
}

}  // namespace cartoondiff

namespace cartoondiff::ops {

namespace {

void require_rank(const Shape& s, std::size_t rank, const char* op)
{
    if (s.size() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(s));
    }
}

/// C += A B for row-major A (m x k) and B (k x n) in i-k-j order, which
/// vectorizes over j while every element still sums over k in increasing order.
template <typename T>
void gemm(const T* pa, const T* pb, T* pc, std::size_t m, std::size_t k, std::size_t n)
{
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t kk = 0; kk < k; ++kk) {
            const T av = pa[i * k + kk];
            for (std::size_t j = 0; j < n; ++j) {
                pc[i * n + j] += av * pb[kk * n + j];
            }
        }
    }
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b)
{
    require_rank(a.shape(), 2, "matmul");
    require_rank(b.shape(), 2, "matmul");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) {
        throw ShapeError("matmul: inner dimensions differ " + shape_str(a.shape()) + " * " +
                         shape_str(b.shape()));
    }
    Tensor<T> c({m, n});
    gemm(a.data().data(), b.data().data(), c.data().data(), m, k, n);
    c.ensure_finite("matmul");
    return c;
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b)
{
    require_rank(a.shape(), 2, "matmul_nt");
    require_rank(b.shape(), 2, "matmul_nt");
    const std::size_t k = a.cols(), n = b.rows();
    if (b.cols() != k) {
        throw ShapeError("matmul_nt: inner dimensions differ " + shape_str(a.shape()) + " * " +
                         shape_str(b.shape()) + "^T");
    }
    // Transposing first keeps the vectorizable i-k-j loop and the same per-element order.
    Tensor<T> bt({k, n});
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t kk = 0; kk < k; ++kk) {
            bt[kk * n + j] = b[j * k + kk];
        }
    }
    return matmul(a, bt);
}

template <typename T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b)
{
    require_rank(a.shape(), 2, "matmul_tn");
    require_rank(b.shape(), 2, "matmul_tn");
    const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
    if (b.rows() != k) {
        throw ShapeError("matmul_tn: inner dimensions differ " + shape_str(a.shape()) + "^T * " +
                         shape_str(b.shape()));
    }
    // Transposing first keeps the tiled kernel and the same per-element order.
    Tensor<T> at({m, k});
    for (std::size_t kk = 0; kk < k; ++kk) {
        for (std::size_t i = 0; i < m; ++i) {
            at[i * k + kk] = a[kk * m + i];
        }
    }
    Tensor<T> c({m, n});
    gemm(at.data().data(), b.data().data(), c.data().data(), m, k, n);
    c.ensure_finite("matmul_tn");
    return c;
}

template <typename T>
Tensor<T> add_row_vector(const Tensor<T>& x, const Tensor<T>& bias)
{
    require_rank(x.shape(), 2, "add_row_vector");
    if (bias.size() != x.cols()) {
        throw ShapeError("add_row_vector: bias length " + std::to_string(bias.size()) +
                         " vs columns " + std::to_string(x.cols()));
    }
    Tensor<T> out = x;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto r = out.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) {
            r[j] += bias[j];
        }
    }
    return out;
}

template <typename T>
Tensor<T> column_sum(const Tensor<T>& x)
{
    require_rank(x.shape(), 2, "column_sum");
    Tensor<T> out({x.cols()});
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto r = x.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) {
            out[j] += r[j];
        }
    }
    return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b)
{
    require_same_shape(a.shape(), b.shape(), "add");
    Tensor<T> out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += b[i];
    }
    out.ensure_finite("add");
    return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b)
{
    require_same_shape(a.shape(), b.shape(), "sub");
    Tensor<T> out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] -= b[i];
    }
    out.ensure_finite("sub");
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s)
{
    Tensor<T> out = a;
    for (T& v : out.data()) {
        v *= s;
    }
    out.ensure_finite("scale");
    return out;
}

template <typename T>
Tensor<T> hadamard(const Tensor<T>& a, const Tensor<T>& b)
{
    require_same_shape(a.shape(), b.shape(), "hadamard");
    Tensor<T> out = a;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] *= b[i];
    }
    out.ensure_finite("hadamard");
    return out;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps,
                     LayerNormCache<T>* cache)
{
    require_rank(x.shape(), 2, "layer_norm");
    if (!(eps > T{0})) {
        throw RangeError("layer_norm: eps must be positive");
    }
    const std::size_t n = x.rows(), d = x.cols();
    if (gamma.size() != d || beta.size() != d) {
        throw ShapeError("layer_norm: gamma/beta length must equal row width " + std::to_string(d));
    }
    Tensor<T> out({n, d});
    Tensor<T> normalized({n, d});
    std::vector<T> inv_std(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto r = x.row(i);
        T mean = T{0};
        for (T v : r) {
            mean += v;
        }
        mean /= static_cast<T>(d);
        T var = T{0};
        for (T v : r) {
            var += (v - mean) * (v - mean);
        }
        var /= static_cast<T>(d);
        const T istd = T{1} / std::sqrt(var + eps);
        inv_std[i] = istd;
        auto nr = normalized.row(i);
        auto orow = out.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            nr[j] = (r[j] - mean) * istd;
            orow[j] = nr[j] * gamma[j] + beta[j];
        }
    }
    out.ensure_finite("layer_norm");
    if (cache) {
        cache->normalized = std::move(normalized);
        cache->inv_std = std::move(inv_std);
    }
    return out;
}

template <typename T>
LayerNormGrads<T> layer_norm_backward(const Tensor<T>& dy, const Tensor<T>& gamma,
                                      const LayerNormCache<T>& cache)
{
    require_same_shape(dy.shape(), cache.normalized.shape(), "layer_norm_backward");
    const std::size_t n = dy.rows(), d = dy.cols();
    LayerNormGrads<T> g{Tensor<T>({n, d}), Tensor<T>({d}), Tensor<T>({d})};
    std::vector<T> dxhat(d);
    for (std::size_t i = 0; i < n; ++i) {
        auto dyr = dy.row(i);
        auto xh = cache.normalized.row(i);
        T mean_dxhat = T{0};
        T mean_dxhat_xhat = T{0};
        for (std::size_t j = 0; j < d; ++j) {
            g.dgamma[j] += dyr[j] * xh[j];
            g.dbeta[j] += dyr[j];
            dxhat[j] = dyr[j] * gamma[j];
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * xh[j];
        }
        mean_dxhat /= static_cast<T>(d);
        mean_dxhat_xhat /= static_cast<T>(d);
        auto dxr = g.dx.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            dxr[j] = cache.inv_std[i] * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
        }
    }
    return g;
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x)
{
    require_rank(x.shape(), 2, "softmax_rows");
    x.ensure_finite("softmax_rows input");
    Tensor<T> out({x.rows(), x.cols()});
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto r = x.row(i);
        auto o = out.row(i);
        const T m = *std::max_element(r.begin(), r.end());
        T total = T{0};
        for (std::size_t j = 0; j < r.size(); ++j) {
            o[j] = std::exp(r[j] - m);
            total += o[j];
        }
        for (T& v : o) {
            v /= total;
        }
    }
    return out;
}

template <typename T>
Tensor<T> softmax_rows_backward(const Tensor<T>& y, const Tensor<T>& dy)
{
    require_same_shape(y.shape(), dy.shape(), "softmax_rows_backward");
    Tensor<T> dx({y.rows(), y.cols()});
    for (std::size_t i = 0; i < y.rows(); ++i) {
        auto yr = y.row(i);
        auto dyr = dy.row(i);
        T dot = T{0};
        for (std::size_t j = 0; j < yr.size(); ++j) {
            dot += yr[j] * dyr[j];
        }
        auto dxr = dx.row(i);
        for (std::size_t j = 0; j < yr.size(); ++j) {
            dxr[j] = yr[j] * (dyr[j] - dot);
        }
    }
    return dx;
}

namespace {

template <typename T>
constexpr T kGeluC = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)

template <typename T>
constexpr T kGeluA = static_cast<T>(0.044715);

}  // namespace

template <typename T>
Tensor<T> gelu(const Tensor<T>& x)
{
    Tensor<T> out = x;
    for (T& v : out.data()) {
        const T u = kGeluC<T> * (v + kGeluA<T> * v * v * v);
        v = T{0.5} * v * (T{1} + std::tanh(u));
    }
    return out;
}

template <typename T>
Tensor<T> gelu_backward(const Tensor<T>& x, const Tensor<T>& dy)
{
    require_same_shape(x.shape(), dy.shape(), "gelu_backward");
    Tensor<T> dx(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const T v = x[i];
        const T u = kGeluC<T> * (v + kGeluA<T> * v * v * v);
        const T th = std::tanh(u);
        const T du = kGeluC<T> * (T{1} + T{3} * kGeluA<T> * v * v);
        const T d = T{0.5} * (T{1} + th) + T{0.5} * v * (T{1} - th * th) * du;
        dx[i] = dy[i] * d;
    }
    return dx;
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x)
{
    Tensor<T> out = x;
    for (T& v : out.data()) {
        v = v / (T{1} + std::exp(-v));
    }
    return out;
}

template <typename T>
Tensor<T> silu_backward(const Tensor<T>& x, const Tensor<T>& dy)
{
    require_same_shape(x.shape(), dy.shape(), "silu_backward");
    Tensor<T> dx(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const T s = T{1} / (T{1} + std::exp(-x[i]));
        dx[i] = dy[i] * (s + x[i] * s * (T{1} - s));
    }
    return dx;
}

template <typename T>
T sum(const Tensor<T>& x)
{
    T acc = T{0};
    for (T v : x.data()) {
        acc += v;
    }
    return acc;
}

template <typename T>
T max_abs(const Tensor<T>& x)
{
    T m = T{0};
    for (T v : x.data()) {
        m = std::max(m, std::abs(v));
    }
    return m;
}

#define CARTOONDIFF_INSTANTIATE(T)                                                               \
    template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                               \
    template Tensor<T> matmul_nt(const Tensor<T>&, const Tensor<T>&);                            \
    template Tensor<T> matmul_tn(const Tensor<T>&, const Tensor<T>&);                            \
    template Tensor<T> add_row_vector(const Tensor<T>&, const Tensor<T>&);                       \
    template Tensor<T> column_sum(const Tensor<T>&);                                             \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                  \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                  \
    template Tensor<T> scale(const Tensor<T>&, T);                                               \
    template Tensor<T> hadamard(const Tensor<T>&, const Tensor<T>&);                             \
    template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T,       \
                                  LayerNormCache<T>*);                                           \
    template LayerNormGrads<T> layer_norm_backward(const Tensor<T>&, const Tensor<T>&,           \
                                                   const LayerNormCache<T>&);                    \
    template Tensor<T> softmax_rows(const Tensor<T>&);                                           \
    template Tensor<T> softmax_rows_backward(const Tensor<T>&, const Tensor<T>&);                \
    template Tensor<T> gelu(const Tensor<T>&);                                                   \
    template Tensor<T> gelu_backward(const Tensor<T>&, const Tensor<T>&);                        \
    template Tensor<T> silu(const Tensor<T>&);                                                   \
    template Tensor<T> silu_backward(const Tensor<T>&, const Tensor<T>&);                        \
    template T sum(const Tensor<T>&);                                                            \
    template T max_abs(const Tensor<T>&);

CARTOONDIFF_INSTANTIATE(float)
CARTOONDIFF_INSTANTIATE(double)

#undef CARTOONDIFF_INSTANTIATE

}  // namespace cartoondiff::ops
