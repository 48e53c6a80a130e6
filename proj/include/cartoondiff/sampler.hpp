#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "cartoondiff/denoiser.hpp"
#include "cartoondiff/rng.hpp"
#include "cartoondiff/schedule.hpp"

namespace cartoondiff {

struct SamplerConfig {
    double lambda = 4.0;       // guidance scale
    int sigma = 250;           // token normalization is active for t < sigma
    int class_c = 0;
    int steps = 100;           // K
    std::uint64_t seed = 0;
    bool stochastic = false;   // add posterior noise in each update
    double eps_norm = 1e-12;   // floor of the L1 norm in token normalization
    std::vector<int> snapshot_steps;

    /// Throws RangeError when a field is outside its domain for `sched`.
    void validate(const NoiseSchedule& sched) const;
};

/// eps_u + lambda (eps_c - eps_u). lambda == 1 and lambda == 0 return the
/// conditional and unconditional inputs unchanged.
ImageTensor cfg_combine(const ImageTensor& eps_uncond, const ImageTensor& eps_cond, double lambda);

/// Divides every p x p x C token of `eps` by max(||token||_1, eps_norm).
ImageTensor token_normalize(const ImageTensor& eps, int p, double eps_norm);

/// Guided noise at step t; normalized per token when t < cfg.sigma.
ImageTensor predict_noise_guided_perturbed(const NoisePredictor& model, const ImageTensor& x_t, int t,
                                           const SamplerConfig& cfg);

struct StepResult {
    ImageTensor x_prev;
    ImageTensor x0_pred;
};

/// Deterministic update from t to t_prev:
///   x0_pred = (x_t - sqrt(1 - ab_t) eps) / sqrt(ab_t)
///   x_prev  = sqrt(ab_prev) x0_pred + sqrt(1 - ab_prev) eps
StepResult denoise_step(const ImageTensor& x_t, const ImageTensor& eps_t, int t, int t_prev,
                        const NoiseSchedule& sched);

/// Same as denoise_step but with fresh posterior noise drawn from `rng`.
StepResult denoise_step_stochastic(const ImageTensor& x_t, const ImageTensor& eps_t, int t, int t_prev,
                                   const NoiseSchedule& sched, Rng& rng);

struct Snapshot {
    int t;
    ImageTensor x_t;
    ImageTensor x0_pred;
};

struct SampleResult {
    ImageTensor x0;
    std::vector<Snapshot> snapshots;
};

/// Called with (t, X_t) before each update, and once with (0, X_0) at the end.
using StepObserver = std::function<void(int, const ImageTensor&)>;

/// Runs the reverse process from X_T ~ N(0, I) drawn from `rng`.
SampleResult sample(const NoisePredictor& model, const NoiseSchedule& sched, const SamplerConfig& cfg,
                    Rng& rng, const StepObserver& observer = {});

/// Sampling stream for run `run_index` of a batch seeded by cfg.seed.
inline Rng sampling_rng(const SamplerConfig& cfg, std::uint64_t run_index)
{
    return Rng(cfg.seed, Stream::sampling, {run_index});
}

/// Clamps every value to [-1, 1].
ImageTensor clamp_unit(const ImageTensor& img);

}  // namespace cartoondiff
