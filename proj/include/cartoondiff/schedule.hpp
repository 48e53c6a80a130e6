#pragma once

#include <vector>

#include "cartoondiff/tensor.hpp"

namespace cartoondiff {

/// Discrete diffusion timeline. Index 0 is the clean endpoint: alpha_bar(0) == 1.
class NoiseSchedule {
public:
    /// betas[i] is beta at step i + 1.
    explicit NoiseSchedule(std::vector<double> betas);

    int steps() const noexcept { return static_cast<int>(betas_.size()); }

    double beta(int t) const;
    double alpha(int t) const;
    /// Cumulative product of alpha up to and including t; 1 at t = 0.
    double alpha_bar(int t) const;

    const std::vector<double>& betas() const noexcept { return betas_; }
    const std::vector<double>& alpha_bars() const noexcept { return alpha_bars_; }

private:
    void check_step(int t, int lo) const;

    std::vector<double> betas_;
    std::vector<double> alpha_bars_;  // T + 1 entries
};

struct ScheduleConfig {
    int T = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
};

/// Betas linearly interpolated from beta_start (t = 1) to beta_end (t = T).
NoiseSchedule build_linear_schedule(int T, double beta_start, double beta_end);

inline NoiseSchedule build_linear_schedule(const ScheduleConfig& c)
{
    return build_linear_schedule(c.T, c.beta_start, c.beta_end);
}

/// sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps.
template <typename T>
Tensor<T> q_sample(const Tensor<T>& x0, int t, const Tensor<T>& eps, const NoiseSchedule& sched);

/// One transition of the reverse process under step skipping.
struct StepPair {
    int t;
    int t_prev;

    friend bool operator==(const StepPair&, const StepPair&) = default;
};

/// K equally spaced steps, strictly decreasing from T. Entry i is
/// T - floor(i * T / K).
std::vector<int> equidistant_subsequence(const NoiseSchedule& sched, int K);

/// The subsequence paired with each step's successor; the last pair lands on 0.
std::vector<StepPair> step_pairs(const std::vector<int>& steps);

}  // namespace cartoondiff
