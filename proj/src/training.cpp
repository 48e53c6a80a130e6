#include "cartoondiff/training.hpp"

#include <cmath>
#include <string>

namespace cartoondiff {

void TrainConfig::validate() const
{
    if (batch_size < 1) {
        throw RangeError("batch_size must be >= 1");
    }
    if (!(lr > 0.0)) {
        throw RangeError("learning rate must be positive");
    }
    if (!(label_dropout_p >= 0.0 && label_dropout_p <= 1.0)) {
        throw RangeError("label_dropout_p must lie in [0, 1]");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
        throw RangeError("Adam decays must lie in [0, 1)");
    }
    if (steps < 0 || checkpoint_every < 0) {
        throw RangeError("steps and checkpoint_every must be non-negative");
    }
}

ClassLabel label_dropout(ClassLabel c, double p, Rng& rng)
{
    if (!(p >= 0.0 && p <= 1.0)) {
        throw RangeError("dropout probability must lie in [0, 1]");
    }
    return rng.uniform() < p ? ClassLabel::null() : c;
}

template <typename T>
T example_loss_and_grad(const DenoiserParams<T>& params, const Tensor<T>& x0, ClassLabel c, int t,
                        const Tensor<T>& eps, const NoiseSchedule& sched, double weight,
                        DenoiserParams<T>& grads)
{
    const auto x_t = q_sample(x0, t, eps, sched);
    ForwardCache<T> cache;
    const auto pred = forward(params, x_t, t, c, &cache);
    Tensor<T> d_out(pred.shape());
    T loss = T{0};
    const T inv_w = static_cast<T>(1.0 / weight);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const T r = pred[i] - eps[i];
        loss += r * r;
        d_out[i] = T{2} * r * inv_w;
    }
    backward(params, cache, d_out, grads);
    return loss * inv_w;
}

template <typename T>
LossAndGrad<T> loss_and_grad(const DenoiserParams<T>& params, std::span<const TrainingExample> batch,
                             const NoiseSchedule& sched, const TrainConfig& cfg, long step)
{
    if (batch.empty()) {
        throw RangeError("loss_and_grad needs a non-empty batch");
    }
    LossAndGrad<T> out{T{0}, DenoiserParams<T>::zeros(params.config)};
    const double weight = static_cast<double>(batch.size()) *
                          static_cast<double>(shape_numel(params.config.image_shape()));
    for (std::size_t i = 0; i < batch.size(); ++i) {
        Rng rng(cfg.seed, Stream::train_example, {static_cast<std::uint64_t>(step), i});
        const auto c = label_dropout(ClassLabel::of(batch[i].label), cfg.label_dropout_p, rng);
        const int t = static_cast<int>(rng.uniform_int(1, sched.steps()));
        const auto eps = rng.normal_tensor<T>(batch[i].x0.shape());
        const auto x0 = batch[i].x0.template cast<T>();
        out.loss += example_loss_and_grad(params, x0, c, t, eps, sched, weight, out.grads);
    }
    if (!std::isfinite(out.loss)) {
        throw DivergenceError("non-finite loss at step " + std::to_string(step), step);
    }
    return out;
}

template <typename T>
Adam<T>::Adam(const DenoiserParams<T>& like, const TrainConfig& cfg)
  : m_(DenoiserParams<T>::zeros(like.config)),
    v_(DenoiserParams<T>::zeros(like.config)),
    lr_(cfg.lr),
    beta1_(cfg.beta1),
    beta2_(cfg.beta2),
    eps_(cfg.adam_eps)
{ }

template <typename T>
void Adam<T>::update(DenoiserParams<T>& params, const DenoiserParams<T>& grads)
{
    ++t_;
    std::vector<Tensor<T>*> p, m, v;
    std::vector<const Tensor<T>*> g;
    params.visit([&](const std::string&, Tensor<T>& x) { p.push_back(&x); });
    m_.visit([&](const std::string&, Tensor<T>& x) { m.push_back(&x); });
    v_.visit([&](const std::string&, Tensor<T>& x) { v.push_back(&x); });
    grads.visit([&](const std::string&, const Tensor<T>& x) { g.push_back(&x); });
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const double step = lr_ * std::sqrt(bc2) / bc1;
    const auto b1 = static_cast<T>(beta1_), b2 = static_cast<T>(beta2_);
    for (std::size_t k = 0; k < p.size(); ++k) {
        auto& pk = *p[k];
        auto& mk = *m[k];
        auto& vk = *v[k];
        const auto& gk = *g[k];
        for (std::size_t i = 0; i < pk.size(); ++i) {
            mk[i] = b1 * mk[i] + (T{1} - b1) * gk[i];
            vk[i] = b2 * vk[i] + (T{1} - b2) * gk[i] * gk[i];
            pk[i] -= static_cast<T>(step * static_cast<double>(mk[i]) /
                                    (std::sqrt(static_cast<double>(vk[i])) + eps_ * std::sqrt(bc2)));
        }
    }
}

TrainResult train(std::span<const TrainingExample> data, DenoiserParams<float> init, const TrainConfig& cfg,
                  const NoiseSchedule& sched, const TrainCallbacks& callbacks)
{
    cfg.validate();
    if (data.empty()) {
        throw RangeError("training data is empty");
    }
    TrainResult result{std::move(init), {}};
    result.losses.reserve(static_cast<std::size_t>(cfg.steps));
    Adam<float> adam(result.params, cfg);
    std::vector<TrainingExample> batch(static_cast<std::size_t>(cfg.batch_size));
    for (long step = 0; step < cfg.steps; ++step) {
        Rng pick(cfg.seed, Stream::train_batch, {static_cast<std::uint64_t>(step)});
        for (auto& slot : batch) {
            slot = data[static_cast<std::size_t>(pick.uniform_int(0, static_cast<std::int64_t>(data.size()) - 1))];
        }
        LossAndGrad<float> lg{0.0f, {}};
        try {
            lg = loss_and_grad<float>(result.params, batch, sched, cfg, step);
        } catch (const NonFiniteError& e) {
            throw DivergenceError(std::string("training diverged at step ") + std::to_string(step) + ": " +
                                  e.what(), step);
        }
        adam.update(result.params, lg.grads);
        result.losses.push_back(lg.loss);
        if (callbacks.on_step) {
            callbacks.on_step(step, lg.loss);
        }
        if (callbacks.on_checkpoint && cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0) {
            callbacks.on_checkpoint(step + 1, result.params);
        }
    }
    return result;
}

template float example_loss_and_grad(const DenoiserParams<float>&, const Tensor<float>&, ClassLabel, int,
                                     const Tensor<float>&, const NoiseSchedule&, double,
                                     DenoiserParams<float>&);
template double example_loss_and_grad(const DenoiserParams<double>&, const Tensor<double>&, ClassLabel, int,
                                      const Tensor<double>&, const NoiseSchedule&, double,
                                      DenoiserParams<double>&);
template LossAndGrad<float> loss_and_grad(const DenoiserParams<float>&, std::span<const TrainingExample>,
                                          const NoiseSchedule&, const TrainConfig&, long);
template LossAndGrad<double> loss_and_grad(const DenoiserParams<double>&, std::span<const TrainingExample>,
                                           const NoiseSchedule&, const TrainConfig&, long);
template class Adam<float>;
template class Adam<double>;

}  // namespace cartoondiff
