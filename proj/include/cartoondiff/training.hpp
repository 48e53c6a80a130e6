#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "cartoondiff/model.hpp"
#include "cartoondiff/rng.hpp"
#include "cartoondiff/schedule.hpp"

namespace cartoondiff {

struct TrainConfig {
    int batch_size = 64;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    long steps = 20000;
    double label_dropout_p = 0.1;
    std::uint64_t seed = 0;
    long checkpoint_every = 0;  // 0 disables intermediate checkpoints

    void validate() const;
};

struct TrainingExample {
    ImageTensor x0;
    int label;
};

/// Returns the null class with probability p, else c. Consumes one uniform draw.
ClassLabel label_dropout(ClassLabel c, double p, Rng& rng);

/// Squared-error contribution of one example, already divided by `weight`
/// (element count times batch size); gradients are accumulated into `grads`.
template <typename T>
T example_loss_and_grad(const DenoiserParams<T>& params, const Tensor<T>& x0, ClassLabel c, int t,
                        const Tensor<T>& eps, const NoiseSchedule& sched, double weight,
                        DenoiserParams<T>& grads);

template <typename T>
struct LossAndGrad {
    T loss;
    DenoiserParams<T> grads;
};

/// Mean epsilon-prediction error over the batch with exact gradients. Each
/// example draws (label dropout, t, eps) from its own stream keyed by
/// (cfg.seed, step, example index).
template <typename T>
LossAndGrad<T> loss_and_grad(const DenoiserParams<T>& params, std::span<const TrainingExample> batch,
                             const NoiseSchedule& sched, const TrainConfig& cfg, long step);

/// First and second moment estimates with bias correction.
template <typename T>
class Adam {
public:
    Adam(const DenoiserParams<T>& like, const TrainConfig& cfg);

    void update(DenoiserParams<T>& params, const DenoiserParams<T>& grads);
    long steps_taken() const { return t_; }

private:
    DenoiserParams<T> m_;
    DenoiserParams<T> v_;
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
};

struct TrainCallbacks {
    std::function<void(long step, double loss)> on_step;
    std::function<void(long step, const DenoiserParams<float>&)> on_checkpoint;
};

struct TrainResult {
    DenoiserParams<float> params;
    std::vector<double> losses;
};

/// Trains from `init` for cfg.steps Adam updates in 32-bit precision.
/// Throws DivergenceError carrying the step index on a non-finite loss.
TrainResult train(std::span<const TrainingExample> data, DenoiserParams<float> init, const TrainConfig& cfg,
                  const NoiseSchedule& sched, const TrainCallbacks& callbacks = {});

}  // namespace cartoondiff
