#pragma once

#include <vector>

#include "cartoondiff/model.hpp"
#include "cartoondiff/schedule.hpp"

namespace cartoondiff {

/// Anything that predicts the noise component of X_t.
class NoisePredictor {
public:
    virtual ~NoisePredictor() = default;

    virtual ImageTensor predict(const ImageTensor& x_t, int t, ClassLabel c) const = 0;
    virtual Shape image_shape() const = 0;
    /// Token size used when the sampler normalizes predicted noise.
    virtual int patch_size() const = 0;
    virtual int num_classes() const = 0;
};

/// The trained transformer, evaluated in 32-bit precision.
class TransformerDenoiser final : public NoisePredictor {
public:
    explicit TransformerDenoiser(DenoiserParams<float> params);

    ImageTensor predict(const ImageTensor& x_t, int t, ClassLabel c) const override;
    Shape image_shape() const override { return params_.config.image_shape(); }
    int patch_size() const override { return params_.config.patch_size; }
    int num_classes() const override { return params_.config.num_classes; }

    const DenoiserParams<float>& params() const { return params_; }

private:
    DenoiserParams<float> params_;
};

struct MixtureComponent {
    double weight;
    ImageTensor mean;
    double variance;  // isotropic
};

/// Data distribution sum_k w_k N(mean_k, variance_k I), for which the
/// posterior E[X_0 | X_t] is available in closed form.
class GaussianMixtureOracle {
public:
    explicit GaussianMixtureOracle(std::vector<MixtureComponent> components);

    const std::vector<MixtureComponent>& components() const { return components_; }
    const Shape& shape() const { return components_.front().mean.shape(); }

    /// Posterior component responsibilities given x_t at step t.
    std::vector<double> responsibilities(const ImageTensor& x_t, int t, const NoiseSchedule& sched) const;

    /// E[X_0 | X_t = x_t], computed in 64-bit precision.
    Tensor<double> posterior_mean(const ImageTensor& x_t, int t, const NoiseSchedule& sched) const;

private:
    std::vector<MixtureComponent> components_;
};

/// (x_t - sqrt(alpha_bar_t) E[X_0 | x_t]) / sqrt(1 - alpha_bar_t). Requires t >= 1.
ImageTensor oracle_eps(const GaussianMixtureOracle& oracle, const ImageTensor& x_t, int t,
                       const NoiseSchedule& sched);

/// Adapts the oracle to the sampler. The class label is ignored.
class OracleDenoiser final : public NoisePredictor {
public:
    OracleDenoiser(GaussianMixtureOracle oracle, NoiseSchedule sched, int patch_size);

    ImageTensor predict(const ImageTensor& x_t, int t, ClassLabel c) const override;
    Shape image_shape() const override { return oracle_.shape(); }
    int patch_size() const override { return patch_size_; }
    int num_classes() const override { return 1; }

private:
    GaussianMixtureOracle oracle_;
    NoiseSchedule sched_;
    int patch_size_;
};

}  // namespace cartoondiff
