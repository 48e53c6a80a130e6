#include "doctest.h"

#include <cmath>
#include <numbers>

#include "cartoondiff/denoiser.hpp"
#include "cartoondiff/tokens.hpp"
#include "gradient_check.hpp"

using namespace cartoondiff;

TEST_CASE("patchify of a single 2x2 patch")
{
    const ImageTensor img({1, 2, 2}, {1, 2, 3, 4});
    const auto tok = patchify(img, 2);
    CHECK(tok == ImageTensor({1, 4}, {1, 2, 3, 4}));
    CHECK(unpatchify(tok, 2, 2, 2, 1) == img);
}

TEST_CASE("patchify token order follows the index arithmetic")
{
    ImageTensor img({1, 4, 4});
    for (std::size_t i = 0; i < 16; ++i) {
        img[i] = static_cast<float>(i);
    }
    const auto tok = patchify(img, 2);
    REQUIRE(tok.shape() == Shape{4, 4});
    CHECK(tok == ImageTensor({4, 4}, {0, 1, 4, 5, 2, 3, 6, 7, 8, 9, 12, 13, 10, 11, 14, 15}));

    // Multi-channel tokens interleave channels innermost.
    ImageTensor rgb({3, 2, 2});
    for (std::size_t i = 0; i < 12; ++i) {
        rgb[i] = static_cast<float>(i);
    }
    CHECK(patchify(rgb, 2) == ImageTensor({1, 12}, {0, 4, 8, 1, 5, 9, 2, 6, 10, 3, 7, 11}));
}

TEST_CASE("patchify round trip and errors")
{
    Rng rng(1, Stream::test);
    for (int C : {1, 3}) {
        const auto x = rng.normal_tensor<float>({static_cast<std::size_t>(C), 8, 12});
        CHECK(unpatchify(patchify(x, 4), 4, 8, 12, C) == x);
    }
    CHECK(unpatchify(ImageTensor({4, 4}), 2, 4, 4, 1) == ImageTensor({1, 4, 4}));
    CHECK_THROWS_AS(patchify(ImageTensor({1, 6, 6}), 4), ShapeError);
    CHECK_THROWS_AS(unpatchify(ImageTensor({3, 4}), 2, 4, 4, 1), ShapeError);
}

TEST_CASE("timestep embedding")
{
    const auto e0 = timestep_embedding<double>(0.0, 16);
    REQUIRE(e0.size() == 16);
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(e0[2 * i] == 0.0);
        CHECK(e0[2 * i + 1] == 1.0);
    }
    const auto e1 = timestep_embedding<double>(1.0, 16);
    CHECK(e1 == timestep_embedding<double>(1.0, 16));
    const auto e2 = timestep_embedding<double>(2.0, 16);
    double dist = 0.0;
    for (std::size_t i = 0; i < 16; ++i) {
        dist += (e1[i] - e2[i]) * (e1[i] - e2[i]);
    }
    CHECK(dist > 0.0);
    // Frequency i is 10000^(-i/8); feature pair i at t = 1 is (sin f_i, cos f_i).
    for (std::size_t i = 0; i < 8; ++i) {
        const double f = std::pow(10000.0, -static_cast<double>(i) / 8.0);
        CHECK(e1[2 * i] == doctest::Approx(std::sin(f)).epsilon(1e-12));
        CHECK(e1[2 * i + 1] == doctest::Approx(std::cos(f)).epsilon(1e-12));
    }
    CHECK_THROWS_AS(timestep_embedding<double>(3.0, 15), ShapeError);
}

TEST_CASE("model config validation")
{
    ModelConfig c;
    CHECK_NOTHROW(c.validate());
    c.image_size = 30;
    CHECK_THROWS(c.validate());
    c = ModelConfig{};
    c.heads = 3;
    CHECK_THROWS(c.validate());
    c = ModelConfig{};
    c.num_classes = 0;
    CHECK_THROWS(c.validate());
}

TEST_CASE("class labels map to table rows")
{
    ModelConfig c;
    CHECK(ClassLabel::of(2).table_row(c) == 2);
    CHECK(ClassLabel::null().table_row(c) == c.num_classes);
    CHECK(ClassLabel::null().is_null());
    CHECK_THROWS_AS(ClassLabel::of(4).table_row(c), RangeError);
    CHECK_THROWS_AS(ClassLabel::of(-2), RangeError);
}

TEST_CASE("parameter inventory")
{
    ModelConfig c;
    const auto p = init_params<float>(c, 1);
    std::size_t total = 0;
    p.visit([&](const std::string&, const Tensor<float>& t) { total += t.size(); });
    CHECK(p.parameter_count() == total);
    CHECK(p.class_table.shape() == Shape{5, 64});
    CHECK(p.blocks.size() == 4);
    CHECK(p.blocks[0].ada_w.shape() == Shape{64, 384});
    CHECK(p.out_w.shape() == Shape{64, 16});
    CHECK(init_params<float>(c, 1).patch_w == p.patch_w);
    CHECK_FALSE(init_params<float>(c, 2).patch_w == p.patch_w);
}

TEST_CASE("forward shape, purity and zero-initialized head")
{
    const auto cfg = testing::tiny_config();
    Rng rng(2, Stream::test);
    const auto x = rng.normal_tensor<float>(cfg.image_shape());

    const TransformerDenoiser fresh(init_params<float>(cfg, 3));
    CHECK(fresh.predict(x, 500, ClassLabel::of(1)) == ImageTensor(cfg.image_shape()));

    const TransformerDenoiser model(testing::random_params<float>(cfg, 4, 0.1));
    const auto a = model.predict(x, 500, ClassLabel::of(1));
    CHECK(a.shape() == x.shape());
    CHECK(a.all_finite());
    CHECK(a == model.predict(x, 500, ClassLabel::of(1)));
    CHECK_FALSE(a == model.predict(x, 500, ClassLabel::null()));
    CHECK_FALSE(a == model.predict(x, 499, ClassLabel::of(1)));
    CHECK_THROWS_AS(model.predict(x, 500, ClassLabel::of(4)), RangeError);
    CHECK_THROWS_AS(model.predict(ImageTensor({1, 4, 4}), 500, ClassLabel::of(0)), ShapeError);
}

TEST_CASE("double-precision forward agrees with float")
{
    const auto cfg = testing::tiny_config();
    const auto pd = testing::random_params<double>(cfg, 5, 0.1);
    const auto pf = pd.cast<float>();
    Rng rng(6, Stream::test);
    const auto xd = rng.normal_tensor<double>(cfg.image_shape());
    const auto yd = forward(pd, xd, 123, ClassLabel::of(2));
    const auto yf = forward(pf, xd.cast<float>(), 123, ClassLabel::of(2));
    for (std::size_t i = 0; i < yd.size(); ++i) {
        CHECK(yf[i] == doctest::Approx(yd[i]).epsilon(1e-4).scale(1.0));
    }
}

namespace {

/// Posterior mean E[x0 | x_t] of a scalar Gaussian mixture by trapezoid
/// quadrature over x0; independent of the closed form.
double quadrature_posterior_mean(const std::vector<MixtureComponent>& comps, double xt, double ab)
{
    const double lo = -12.0, hi = 12.0;
    const int n = 480000;
    const double h = (hi - lo) / n;
    double num = 0.0, den = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double x0 = lo + h * i;
        double prior = 0.0;
        for (const auto& c : comps) {
            const double m = c.mean[0];
            prior += c.weight * std::exp(-0.5 * (x0 - m) * (x0 - m) / c.variance) /
                     std::sqrt(2.0 * std::numbers::pi * c.variance);
        }
        const double r = xt - std::sqrt(ab) * x0;
        const double lik = std::exp(-0.5 * r * r / (1.0 - ab));
        const double w = (i == 0 || i == n) ? 0.5 : 1.0;
        num += w * x0 * prior * lik;
        den += w * prior * lik;
    }
    return num / den;
}

}  // namespace

TEST_CASE("oracle posterior matches dense-grid quadrature")
{
    const auto sched = build_linear_schedule(1000, 1e-4, 0.02);
    const std::vector<MixtureComponent> comps = {{0.3, ImageTensor({1, 1, 1}, {-0.8f}), 0.05},
                                                 {0.7, ImageTensor({1, 1, 1}, {0.6f}), 0.02}};
    const GaussianMixtureOracle oracle(comps);
    Rng rng(7, Stream::test);
    for (int t : {1, 50, 200, 500, 900}) {
        const double ab = sched.alpha_bar(t);
        for (int k = 0; k < 3; ++k) {
            const ImageTensor xt({1, 1, 1}, {static_cast<float>(rng.normal())});
            const double want = quadrature_posterior_mean(comps, xt[0], ab);
            CHECK(oracle.posterior_mean(xt, t, sched)[0] == doctest::Approx(want).epsilon(1e-6).scale(1.0));
            const double want_eps = (xt[0] - std::sqrt(ab) * want) / std::sqrt(1.0 - ab);
            CHECK(oracle_eps(oracle, xt, t, sched)[0] ==
                  doctest::Approx(want_eps).epsilon(1e-6).scale(std::max(1.0, std::abs(want_eps))));
        }
    }
}

TEST_CASE("oracle closed-form special cases")
{
    const auto sched = build_linear_schedule(1000, 1e-4, 0.02);
    Rng rng(8, Stream::test);
    const auto mu = rng.normal_tensor<float>({1, 4, 4}, 0.5);
    const GaussianMixtureOracle delta({{1.0, mu, 0.0}});
    const auto xt = rng.normal_tensor<float>({1, 4, 4});
    const int t = 300;
    const auto eps = oracle_eps(delta, xt, t, sched);
    const double ab = sched.alpha_bar(t);
    for (std::size_t i = 0; i < xt.size(); ++i) {
        CHECK(eps[i] == doctest::Approx((xt[i] - std::sqrt(ab) * mu[i]) / std::sqrt(1.0 - ab)).epsilon(1e-5));
    }

    const GaussianMixtureOracle sym({{0.5, mu, 0.01}, {0.5, ops::scale(mu, -1.0f), 0.01}});
    const ImageTensor zero({1, 4, 4});
    const auto pm = sym.posterior_mean(zero, t, sched);
    for (double v : pm.data()) {
        CHECK(std::abs(v) < 1e-12);
    }
    const auto eps_zero = oracle_eps(sym, zero, t, sched);
    for (float v : eps_zero.data()) {
        CHECK(std::abs(v) < 1e-6);
    }
    CHECK_THROWS_AS(oracle_eps(delta, xt, 0, sched), RangeError);
}

TEST_CASE("oracle validation")
{
    const ImageTensor m({1, 2, 2});
    CHECK_THROWS(GaussianMixtureOracle({{0.5, m, 0.1}}));
    CHECK_THROWS(GaussianMixtureOracle({{1.0, m, -0.1}}));
    CHECK_THROWS(GaussianMixtureOracle({{0.5, m, 0.1}, {0.5, ImageTensor({1, 2, 3}), 0.1}}));
    CHECK_THROWS(GaussianMixtureOracle({}));
    const GaussianMixtureOracle ok({{0.25, m, 0.1}, {0.75, m, 0.1}});
    const auto sched = build_linear_schedule(1000, 1e-4, 0.02);
    const auto r = ok.responsibilities(m, 10, sched);
    CHECK(r[0] == doctest::Approx(0.25));
    CHECK(r[1] == doctest::Approx(0.75));
}
