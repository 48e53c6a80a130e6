#include "cartoondiff/schedule.hpp"

#include <cmath>
#include <string>

namespace cartoondiff {

NoiseSchedule::NoiseSchedule(std::vector<double> betas)
  : betas_(std::move(betas))
{
    if (betas_.empty()) {
        throw RangeError("noise schedule needs at least one step");
    }
    alpha_bars_.reserve(betas_.size() + 1);
    alpha_bars_.push_back(1.0);
    for (double b : betas_) {
        if (!(b > 0.0 && b < 1.0)) {
            throw RangeError("beta must lie in (0, 1), got " + std::to_string(b));
        }
        alpha_bars_.push_back(alpha_bars_.back() * (1.0 - b));
    }
}

void NoiseSchedule::check_step(int t, int lo) const
{
    if (t < lo || t > steps()) {
        throw RangeError("step " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " +
                         std::to_string(steps()) + "]");
    }
}

double NoiseSchedule::beta(int t) const
{
    check_step(t, 1);
    return betas_[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::alpha(int t) const
{
    return 1.0 - beta(t);
}

double NoiseSchedule::alpha_bar(int t) const
{
    check_step(t, 0);
    return alpha_bars_[static_cast<std::size_t>(t)];
}

NoiseSchedule build_linear_schedule(int T, double beta_start, double beta_end)
{
    if (T < 1) {
        throw RangeError("schedule length T must be >= 1");
    }
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
        throw RangeError("need 0 < beta_start <= beta_end < 1");
    }
    std::vector<double> betas(static_cast<std::size_t>(T));
    for (int i = 0; i < T; ++i) {
        const double frac = T == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(T - 1);
        betas[static_cast<std::size_t>(i)] = beta_start + (beta_end - beta_start) * frac;
    }
    return NoiseSchedule(std::move(betas));
}

template <typename T>
Tensor<T> q_sample(const Tensor<T>& x0, int t, const Tensor<T>& eps, const NoiseSchedule& sched)
{
    require_same_shape(x0.shape(), eps.shape(), "q_sample");
    const double ab = sched.alpha_bar(t);
    const T signal = static_cast<T>(std::sqrt(ab));
    const T noise = static_cast<T>(std::sqrt(1.0 - ab));
    Tensor<T> out(x0.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = signal * x0[i] + noise * eps[i];
    }
    out.ensure_finite("q_sample");
    return out;
}

template Tensor<float> q_sample(const Tensor<float>&, int, const Tensor<float>&, const NoiseSchedule&);
template Tensor<double> q_sample(const Tensor<double>&, int, const Tensor<double>&, const NoiseSchedule&);

std::vector<int> equidistant_subsequence(const NoiseSchedule& sched, int K)
{
    const int T = sched.steps();
    if (K < 1 || K > T) {
        throw RangeError("step count K=" + std::to_string(K) + " outside [1, " + std::to_string(T) + "]");
    }
    std::vector<int> steps(static_cast<std::size_t>(K));
    for (int i = 0; i < K; ++i) {
        const long offset = static_cast<long>(i) * T / K;
        steps[static_cast<std::size_t>(i)] = T - static_cast<int>(offset);
    }
    return steps;
}

std::vector<StepPair> step_pairs(const std::vector<int>& steps)
{
    std::vector<StepPair> pairs;
    pairs.reserve(steps.size());
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const int prev = i + 1 < steps.size() ? steps[i + 1] : 0;
        if (prev >= steps[i]) {
            throw RangeError("step sequence must be strictly decreasing");
        }
        pairs.push_back({steps[i], prev});
    }
    return pairs;
}

}  // namespace cartoondiff
