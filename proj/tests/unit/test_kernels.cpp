#include "doctest.h"

#include <cmath>
#include <limits>

#include "cartoondiff/kernels.hpp"
#include "cartoondiff/rng.hpp"

using namespace cartoondiff;

namespace {

Tensor<double> random_matrix(std::size_t r, std::size_t c, std::uint64_t salt)
{
    Rng rng(1, Stream::test, {salt});
    return rng.normal_tensor<double>({r, c});
}

/// Textbook triple loop, the oracle for all three matmul layouts.
Tensor<double> naive_product(const Tensor<double>& a, const Tensor<double>& b, bool ta, bool tb)
{
    const std::size_t m = ta ? a.cols() : a.rows();
    const std::size_t k = ta ? a.rows() : a.cols();
    const std::size_t n = tb ? b.rows() : b.cols();
    Tensor<double> c({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t kk = 0; kk < k; ++kk) {
                acc += (ta ? a.at(kk, i) : a.at(i, kk)) * (tb ? b.at(j, kk) : b.at(kk, j));
            }
            c.at(i, j) = acc;
        }
    }
    return c;
}

/// Central-difference derivative of sum(w * f(x)) with respect to every x.
template <typename F>
Tensor<double> numeric_vjp(const Tensor<double>& x, const Tensor<double>& w, F&& f)
{
    Tensor<double> g(x.shape());
    Tensor<double> probe = x;
    const double h = 1e-6;
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + h;
        const double up = ops::sum(ops::hadamard(w, f(probe)));
        probe[i] = x[i] - h;
        const double down = ops::sum(ops::hadamard(w, f(probe)));
        probe[i] = x[i];
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

void check_close(const Tensor<double>& a, const Tensor<double>& b, double tol)
{
    REQUIRE(a.shape() == b.shape());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i] == doctest::Approx(b[i]).epsilon(tol).scale(1.0));
    }
}

}  // namespace

TEST_CASE("matmul layouts are bit-identical to the naive triple loop")
{
    // Odd sizes exercise every remainder path.
    for (std::size_t m : {1u, 5u, 17u}) {
        for (std::size_t k : {1u, 3u, 32u}) {
            for (std::size_t n : {1u, 7u, 33u}) {
                const auto a = random_matrix(m, k, 1);
                const auto b = random_matrix(k, n, 2);
                CHECK(ops::matmul(a, b) == naive_product(a, b, false, false));
                const auto bt = random_matrix(n, k, 3);
                CHECK(ops::matmul_nt(a, bt) == naive_product(a, bt, false, true));
                const auto at = random_matrix(k, m, 4);
                CHECK(ops::matmul_tn(at, b) == naive_product(at, b, true, false));
            }
        }
    }
}

TEST_CASE("matmul small example and shape errors")
{
    const Tensor<float> a({2, 2}, {1, 2, 3, 4});
    const Tensor<float> b({2, 2}, {5, 6, 7, 8});
    CHECK(ops::matmul(a, b) == Tensor<float>({2, 2}, {19, 22, 43, 50}));
    CHECK_THROWS_AS(ops::matmul(a, Tensor<float>({3, 2})), ShapeError);
    CHECK_THROWS_AS(ops::matmul(Tensor<float>({4}), b), ShapeError);
    CHECK_THROWS_AS(ops::add(a, Tensor<float>({2, 3})), ShapeError);
}

TEST_CASE("non-finite results are reported")
{
    Tensor<float> a({1, 1}, {std::numeric_limits<float>::max()});
    CHECK_THROWS_AS(ops::matmul(a, a), NonFiniteError);
    Tensor<float> nan({1, 2}, {0.0f, std::numeric_limits<float>::quiet_NaN()});
    CHECK_THROWS_AS(ops::softmax_rows(nan), NonFiniteError);
}

TEST_CASE("row vector, column sum and elementwise helpers")
{
    const Tensor<float> x({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(ops::add_row_vector(x, Tensor<float>({3}, {10, 20, 30})) ==
          Tensor<float>({2, 3}, {11, 22, 33, 14, 25, 36}));
    CHECK(ops::column_sum(x) == Tensor<float>({3}, {5, 7, 9}));
    CHECK(ops::scale(x, 2.0f) == Tensor<float>({2, 3}, {2, 4, 6, 8, 10, 12}));
    CHECK(ops::sub(x, x) == Tensor<float>({2, 3}));
    CHECK(ops::max_abs(Tensor<float>({3}, {1, -7, 3})) == 7.0f);
}

TEST_CASE("softmax of [0, ln 3] is [0.25, 0.75]")
{
    const Tensor<double> x({1, 2}, {0.0, std::log(3.0)});
    const auto y = ops::softmax_rows(x);
    CHECK(y[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(y[1] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one and ignore constant shifts")
{
    const auto x = random_matrix(6, 9, 5);
    const auto y = ops::softmax_rows(x);
    Tensor<double> shifted = x;
    for (std::size_t i = 0; i < shifted.rows(); ++i) {
        for (double& v : shifted.row(i)) {
            v += 100.0 * static_cast<double>(i);
        }
    }
    const auto ys = ops::softmax_rows(shifted);
    for (std::size_t i = 0; i < y.rows(); ++i) {
        double total = 0.0;
        for (double v : y.row(i)) {
            CHECK(v > 0.0);
            total += v;
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
    check_close(y, ys, 1e-12);
}

TEST_CASE("layer_norm rows have zero mean and unit variance")
{
    const auto x = random_matrix(4, 16, 6);
    const Tensor<double> gamma({16}, 1.0), beta({16}, 0.0);
    const auto y = ops::layer_norm(x, gamma, beta, 1e-15);
    for (std::size_t i = 0; i < y.rows(); ++i) {
        double mean = 0.0, sq = 0.0;
        for (double v : y.row(i)) {
            mean += v;
            sq += v * v;
        }
        CHECK(mean / 16.0 == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
        CHECK(sq / 16.0 == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("layer_norm backward matches central differences")
{
    const auto x = random_matrix(3, 8, 7);
    const auto gamma = random_matrix(1, 8, 8).reshaped({8});
    const auto beta = random_matrix(1, 8, 9).reshaped({8});
    const auto w = random_matrix(3, 8, 10);
    ops::LayerNormCache<double> cache;
    ops::layer_norm(x, gamma, beta, 1e-6, &cache);
    const auto g = ops::layer_norm_backward(w, gamma, cache);
    check_close(g.dx, numeric_vjp(x, w, [&](const Tensor<double>& p) { return ops::layer_norm(p, gamma, beta, 1e-6); }),
                1e-6);
    const auto dgamma =
        numeric_vjp(gamma, w, [&](const Tensor<double>& p) { return ops::layer_norm(x, p, beta, 1e-6); });
    const auto dbeta =
        numeric_vjp(beta, w, [&](const Tensor<double>& p) { return ops::layer_norm(x, gamma, p, 1e-6); });
    check_close(g.dgamma, dgamma, 1e-6);
    check_close(g.dbeta, dbeta, 1e-6);
}

TEST_CASE("softmax, gelu and silu backward match central differences")
{
    const auto x = random_matrix(3, 5, 11);
    const auto w = random_matrix(3, 5, 12);
    const auto y = ops::softmax_rows(x);
    check_close(ops::softmax_rows_backward(y, w),
                numeric_vjp(x, w, [](const Tensor<double>& p) { return ops::softmax_rows(p); }), 1e-6);
    check_close(ops::gelu_backward(x, w), numeric_vjp(x, w, [](const Tensor<double>& p) { return ops::gelu(p); }),
                1e-6);
    check_close(ops::silu_backward(x, w), numeric_vjp(x, w, [](const Tensor<double>& p) { return ops::silu(p); }),
                1e-6);
}

TEST_CASE("activation reference values")
{
    const Tensor<double> x({3}, {0.0, 1.0, -2.0});
    const auto g = ops::gelu(x);
    // tanh form: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
    const auto ref = [](double v) {
        return 0.5 * v * (1.0 + std::tanh(std::sqrt(2.0 / M_PI) * (v + 0.044715 * v * v * v)));
    };
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(g[i] == doctest::Approx(ref(x[i])).epsilon(1e-14));
    }
    const auto s = ops::silu(x);
    CHECK(s[0] == 0.0);
    CHECK(s[1] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))).epsilon(1e-14));
    CHECK(s[2] == doctest::Approx(-2.0 / (1.0 + std::exp(2.0))).epsilon(1e-14));
}
