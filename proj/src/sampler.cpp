#include "cartoondiff/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cartoondiff/tokens.hpp"

namespace cartoondiff {

void SamplerConfig::validate(const NoiseSchedule& sched) const
{
    const int T = sched.steps();
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw RangeError("guidance scale lambda must be >= 0");
    }
    if (sigma < 0 || sigma > T) {
        throw RangeError("sigma must lie in [0, " + std::to_string(T) + "]");
    }
    if (steps < 1 || steps > T) {
        throw RangeError("steps must lie in [1, " + std::to_string(T) + "]");
    }
    if (class_c < 0) {
        throw RangeError("class must be non-negative");
    }
    if (!(eps_norm > 0.0)) {
        throw RangeError("eps_norm must be positive");
    }
    const auto seq = equidistant_subsequence(sched, steps);
    for (int s : snapshot_steps) {
        if (s != 0 && std::find(seq.begin(), seq.end(), s) == seq.end()) {
            throw RangeError("snapshot step " + std::to_string(s) + " is not in the sampling subsequence");
        }
    }
}

ImageTensor cfg_combine(const ImageTensor& eps_uncond, const ImageTensor& eps_cond, double lambda)
{
    require_same_shape(eps_uncond.shape(), eps_cond.shape(), "cfg_combine");
    if (lambda == 1.0) {
        return eps_cond;
    }
    if (lambda == 0.0) {
        return eps_uncond;
    }
    const auto l = static_cast<float>(lambda);
    ImageTensor out(eps_uncond.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = eps_uncond[i] + l * (eps_cond[i] - eps_uncond[i]);
    }
    out.ensure_finite("cfg_combine");
    return out;
}

ImageTensor token_normalize(const ImageTensor& eps, int p, double eps_norm)
{
    if (!(eps_norm > 0.0)) {
        throw RangeError("token_normalize: eps_norm must be positive");
    }
    if (eps.rank() != 3) {
        throw ShapeError("token_normalize expects a C x H x W tensor");
    }
    auto tokens = patchify(eps, p);
    for (std::size_t r = 0; r < tokens.rows(); ++r) {
        auto tok = tokens.row(r);
        double l1 = 0.0;
        for (float v : tok) {
            l1 += std::abs(static_cast<double>(v));
        }
        const double denom = std::max(l1, eps_norm);
        for (float& v : tok) {
            v = static_cast<float>(static_cast<double>(v) / denom);
        }
    }
    return unpatchify(tokens, p, static_cast<int>(eps.dim(1)), static_cast<int>(eps.dim(2)),
                      static_cast<int>(eps.dim(0)));
}

ImageTensor predict_noise_guided_perturbed(const NoisePredictor& model, const ImageTensor& x_t, int t,
                                           const SamplerConfig& cfg)
{
    ImageTensor guided;
    if (cfg.lambda == 1.0) {
        guided = model.predict(x_t, t, ClassLabel::of(cfg.class_c));
    } else if (cfg.lambda == 0.0) {
        guided = model.predict(x_t, t, ClassLabel::null());
    } else {
        guided = cfg_combine(model.predict(x_t, t, ClassLabel::null()),
                             model.predict(x_t, t, ClassLabel::of(cfg.class_c)), cfg.lambda);
    }
    if (t < cfg.sigma) {
        return token_normalize(guided, model.patch_size(), cfg.eps_norm);
    }
    return guided;
}

namespace {

void check_transition(int t, int t_prev, const NoiseSchedule& sched)
{
    if (t <= t_prev || t_prev < 0) {
        throw RangeError("denoise_step needs t > t_prev >= 0, got t=" + std::to_string(t) +
                         " t_prev=" + std::to_string(t_prev));
    }
    if (!(sched.alpha_bar(t) > 0.0)) {
        throw RangeError("alpha_bar must be positive at the current step");
    }
}

ImageTensor predicted_x0(const ImageTensor& x_t, const ImageTensor& eps_t, double ab)
{
    const double sab = std::sqrt(ab), snoise = std::sqrt(1.0 - ab);
    ImageTensor x0(x_t.shape());
    for (std::size_t i = 0; i < x0.size(); ++i) {
        x0[i] = static_cast<float>((static_cast<double>(x_t[i]) - snoise * static_cast<double>(eps_t[i])) / sab);
    }
    return x0;
}

}  // namespace

StepResult denoise_step(const ImageTensor& x_t, const ImageTensor& eps_t, int t, int t_prev,
                        const NoiseSchedule& sched)
{
    require_same_shape(x_t.shape(), eps_t.shape(), "denoise_step");
    check_transition(t, t_prev, sched);
    StepResult r{ImageTensor(x_t.shape()), predicted_x0(x_t, eps_t, sched.alpha_bar(t))};
    const double ab_prev = sched.alpha_bar(t_prev);
    const double s_prev = std::sqrt(ab_prev), n_prev = std::sqrt(1.0 - ab_prev);
    for (std::size_t i = 0; i < r.x_prev.size(); ++i) {
        r.x_prev[i] = static_cast<float>(s_prev * static_cast<double>(r.x0_pred[i]) +
                                         n_prev * static_cast<double>(eps_t[i]));
    }
    r.x_prev.ensure_finite("denoise_step");
    return r;
}

StepResult denoise_step_stochastic(const ImageTensor& x_t, const ImageTensor& eps_t, int t, int t_prev,
                                   const NoiseSchedule& sched, Rng& rng)
{
    require_same_shape(x_t.shape(), eps_t.shape(), "denoise_step");
    check_transition(t, t_prev, sched);
    const double ab = sched.alpha_bar(t), ab_prev = sched.alpha_bar(t_prev);
    StepResult r{ImageTensor(x_t.shape()), predicted_x0(x_t, eps_t, ab)};
    // Posterior standard deviation of q(x_prev | x_t, x_0).
    const double var = (1.0 - ab_prev) / (1.0 - ab) * (1.0 - ab / ab_prev);
    const double dir = std::sqrt(std::max(0.0, 1.0 - ab_prev - var));
    const double s_prev = std::sqrt(ab_prev), noise = std::sqrt(var);
    for (std::size_t i = 0; i < r.x_prev.size(); ++i) {
        r.x_prev[i] = static_cast<float>(s_prev * static_cast<double>(r.x0_pred[i]) +
                                         dir * static_cast<double>(eps_t[i]) + noise * rng.normal());
    }
    r.x_prev.ensure_finite("denoise_step_stochastic");
    return r;
}

SampleResult sample(const NoisePredictor& model, const NoiseSchedule& sched, const SamplerConfig& cfg,
                    Rng& rng, const StepObserver& observer)
{
    cfg.validate(sched);
    const auto pairs = step_pairs(equidistant_subsequence(sched, cfg.steps));
    auto wants = [&](int t) {
        return std::find(cfg.snapshot_steps.begin(), cfg.snapshot_steps.end(), t) != cfg.snapshot_steps.end();
    };

    SampleResult result;
    ImageTensor x = rng.normal_tensor<float>(model.image_shape());
    for (const auto& [t, t_prev] : pairs) {
        if (observer) {
            observer(t, x);
        }
        const auto eps = predict_noise_guided_perturbed(model, x, t, cfg);
        auto step = cfg.stochastic ? denoise_step_stochastic(x, eps, t, t_prev, sched, rng)
                                   : denoise_step(x, eps, t, t_prev, sched);
        if (wants(t)) {
            result.snapshots.push_back({t, x, step.x0_pred});
        }
        x = std::move(step.x_prev);
    }
    if (observer) {
        observer(0, x);
    }
    if (wants(0)) {
        result.snapshots.push_back({0, x, x});
    }
    result.x0 = std::move(x);
    return result;
}

ImageTensor clamp_unit(const ImageTensor& img)
{
    ImageTensor out = img;
    for (float& v : out.data()) {
        v = std::clamp(v, -1.0f, 1.0f);
    }
    return out;
}

}  // namespace cartoondiff
