#include "cartoondiff/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace cartoondiff {

TransformerDenoiser::TransformerDenoiser(DenoiserParams<float> params)
  : params_(std::move(params))
{
    params_.config.validate();
}

ImageTensor TransformerDenoiser::predict(const ImageTensor& x_t, int t, ClassLabel c) const
{
    return forward(params_, x_t, t, c);
}

GaussianMixtureOracle::GaussianMixtureOracle(std::vector<MixtureComponent> components)
  : components_(std::move(components))
{
    if (components_.empty()) {
        throw RangeError("mixture needs at least one component");
    }
    double total = 0.0;
    for (const auto& c : components_) {
        if (!(c.weight > 0.0)) {
            throw RangeError("mixture weights must be positive");
        }
        if (!(c.variance >= 0.0)) {
            throw RangeError("mixture variances must be non-negative");
        }
        require_same_shape(c.mean.shape(), components_.front().mean.shape(), "mixture component");
        total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw RangeError("mixture weights must sum to 1");
    }
}

std::vector<double> GaussianMixtureOracle::responsibilities(const ImageTensor& x_t, int t,
                                                            const NoiseSchedule& sched) const
{
    require_same_shape(x_t.shape(), shape(), "oracle responsibilities");
    const double ab = sched.alpha_bar(t);
    const double sab = std::sqrt(ab);
    const double d = static_cast<double>(x_t.size());
    std::vector<double> logp(components_.size());
    for (std::size_t k = 0; k < components_.size(); ++k) {
        const auto& c = components_[k];
        const double s2 = ab * c.variance + (1.0 - ab);
        double sq = 0.0;
        for (std::size_t i = 0; i < x_t.size(); ++i) {
            const double r = static_cast<double>(x_t[i]) - sab * static_cast<double>(c.mean[i]);
            sq += r * r;
        }
        logp[k] = std::log(c.weight) - 0.5 * d * std::log(2.0 * std::numbers::pi * s2) - 0.5 * sq / s2;
    }
    const double m = *std::max_element(logp.begin(), logp.end());
    double z = 0.0;
    for (double& v : logp) {
        v = std::exp(v - m);
        z += v;
    }
    for (double& v : logp) {
        v /= z;
    }
    return logp;
}

Tensor<double> GaussianMixtureOracle::posterior_mean(const ImageTensor& x_t, int t,
                                                     const NoiseSchedule& sched) const
{
    const auto resp = responsibilities(x_t, t, sched);
    const double ab = sched.alpha_bar(t);
    const double sab = std::sqrt(ab);
    Tensor<double> mean(x_t.shape());
    for (std::size_t k = 0; k < components_.size(); ++k) {
        const auto& c = components_[k];
        const double s2 = ab * c.variance + (1.0 - ab);
        // Per-component posterior: mu + (sqrt(ab) v / s2) (x_t - sqrt(ab) mu).
        const double gain = s2 > 0.0 ? sab * c.variance / s2 : 0.0;
        for (std::size_t i = 0; i < mean.size(); ++i) {
            const double mu = c.mean[i];
            mean[i] += resp[k] * (mu + gain * (static_cast<double>(x_t[i]) - sab * mu));
        }
    }
    return mean;
}

ImageTensor oracle_eps(const GaussianMixtureOracle& oracle, const ImageTensor& x_t, int t,
                       const NoiseSchedule& sched)
{
    if (t < 1) {
        throw RangeError("oracle_eps requires t >= 1 (noise scale is zero at t = 0)");
    }
    const auto mean = oracle.posterior_mean(x_t, t, sched);
    const double ab = sched.alpha_bar(t);
    const double sab = std::sqrt(ab), snoise = std::sqrt(1.0 - ab);
    ImageTensor eps(x_t.shape());
    for (std::size_t i = 0; i < eps.size(); ++i) {
        eps[i] = static_cast<float>((static_cast<double>(x_t[i]) - sab * mean[i]) / snoise);
    }
    eps.ensure_finite("oracle_eps");
    return eps;
}

OracleDenoiser::OracleDenoiser(GaussianMixtureOracle oracle, NoiseSchedule sched, int patch_size)
  : oracle_(std::move(oracle)), sched_(std::move(sched)), patch_size_(patch_size)
{ }

ImageTensor OracleDenoiser::predict(const ImageTensor& x_t, int t, ClassLabel) const
{
    return oracle_eps(oracle_, x_t, t, sched_);
}

}  // namespace cartoondiff
