#pragma once

// Spectral and smoothness metrics used to separate "semantic" content (low
// radial frequencies) from "detail" content (high radial frequencies), plus
// the trajectory and sigma-ablation harnesses built on them.
//
// Energies are mean power per pixel: sum |DFT|^2 / (H W)^2 summed over
// channels, so the total equals the mean squared pixel value. A frequency bin
// (u, v) has radius sqrt(fu^2 + fv^2) with fu = min(u, H - u), fv = min(v, W - v);
// bins with radius <= rho (including DC) form the low band, the rest the high band.

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "cartoondiff/sampler.hpp"

namespace cartoondiff {

/// 2-D DFT of channel c, row-major H x W coefficients.
std::vector<std::complex<double>> dft2(const ImageTensor& img, std::size_t channel);

struct BandEnergy {
    double total = 0.0;
    double low = 0.0;
    double high = 0.0;
};

/// Throws RangeError unless 0 < rho < Nyquist (min(H, W) / 2).
BandEnergy band_energy(const ImageTensor& img, double rho);

double high_freq_energy(const ImageTensor& img, double rho);

/// Mean absolute horizontal plus vertical neighbour difference, divided by
/// the pixel count.
double total_variation(const ImageTensor& img);

/// Correlation of the low-band (DC excluded) content of two images; equals
/// the Pearson correlation of their low-pass filtered versions.
double low_band_correlation(const ImageTensor& a, const ImageTensor& b, double rho);

inline double default_cutoff(const ImageTensor& img)
{
    return static_cast<double>(img.dim(1)) / 4.0;
}

struct SpectralReport {
    double total = 0.0;
    double low = 0.0;
    double high = 0.0;
    double tv = 0.0;
};

SpectralReport spectral_report(const ImageTensor& img, double rho);

struct Summary {
    double mean = 0.0;
    double stddev = 0.0;
};

Summary summarize(const std::vector<double>& values);

struct TrajectoryRow {
    int t;
    Summary high;
    Summary low;
    Summary total;
    Summary tv;
    Summary low_corr;  // with the final X_0 of the same run
};

struct TrajectoryReport {
    std::vector<TrajectoryRow> rows;  // in snapshot order (decreasing t)
    /// Upper step of the interval where mean high-band energy grows fastest
    /// per step; -1 with fewer than two snapshots.
    int crossover_step = -1;
    /// snapshots[run][k] is the predicted X_0 at rows[k].t.
    std::vector<std::vector<ImageTensor>> x0_preds;
};

inline const std::vector<int> kDefaultTrajectorySteps = {1000, 400, 300, 200, 100, 0};

/// Samples `runs` trajectories (run i uses class i mod num_classes and
/// stream (cfg.seed, i)) and reports metrics of the predicted X_0 at each
/// snapshot step.
TrajectoryReport trajectory_report(const NoisePredictor& model, const NoiseSchedule& sched,
                                   const SamplerConfig& cfg, const std::vector<int>& snapshot_steps,
                                   int runs, double rho);

inline constexpr int kDefaultSigma = 250;

struct AblationRow {
    int sigma;
    Summary high;
    Summary tv;
    bool is_default;
    std::vector<ImageTensor> images;  // clamped final samples
};

/// For each sigma, draws n_per samples with the same per-run streams and
/// classes, so sigma is the only factor that varies between rows.
std::vector<AblationRow> ablate_sigma(const NoisePredictor& model, const NoiseSchedule& sched,
                                      const SamplerConfig& base_cfg, const std::vector<int>& sigmas, int n_per,
                                      std::uint64_t seed, double rho);

/// Tiles equally shaped images into a grid with `pad` pixels of value -1.
ImageTensor contact_sheet(const std::vector<std::vector<ImageTensor>>& rows, int pad = 1);

}  // namespace cartoondiff
