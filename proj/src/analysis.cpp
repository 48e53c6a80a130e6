#include "cartoondiff/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace cartoondiff {

namespace {

void require_image(const ImageTensor& img, const char* op)
{
    if (img.rank() != 3) {
        throw ShapeError(std::string(op) + " expects a C x H x W image, got " + shape_str(img.shape()));
    }
}

/// In-place 1-D DFT of `n` values spaced `stride` apart, using a twiddle table.
void dft_line(std::vector<std::complex<double>>& data, std::size_t start, std::size_t stride, std::size_t n,
              const std::vector<std::complex<double>>& twiddle, std::vector<std::complex<double>>& scratch)
{
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            acc += data[start + j * stride] * twiddle[(j * k) % n];
        }
        scratch[k] = acc;
    }
    for (std::size_t k = 0; k < n; ++k) {
        data[start + k * stride] = scratch[k];
    }
}

std::vector<std::complex<double>> twiddles(std::size_t n)
{
    std::vector<std::complex<double>> w(n);
    for (std::size_t k = 0; k < n; ++k) {
        w[k] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n));
    }
    return w;
}

double radius(std::size_t u, std::size_t v, std::size_t H, std::size_t W)
{
    const double fu = static_cast<double>(std::min(u, H - u));
    const double fv = static_cast<double>(std::min(v, W - v));
    return std::sqrt(fu * fu + fv * fv);
}

void check_cutoff(const ImageTensor& img, double rho)
{
    const double nyquist = static_cast<double>(std::min(img.dim(1), img.dim(2))) / 2.0;
    if (!(rho > 0.0 && rho < nyquist)) {
        throw RangeError("cutoff rho must lie in (0, " + std::to_string(nyquist) + ")");
    }
}

}  // namespace

std::vector<std::complex<double>> dft2(const ImageTensor& img, std::size_t channel)
{
    require_image(img, "dft2");
    const std::size_t H = img.dim(1), W = img.dim(2);
    if (channel >= img.dim(0)) {
        throw RangeError("channel index out of range");
    }
    std::vector<std::complex<double>> f(H * W);
    for (std::size_t i = 0; i < H * W; ++i) {
        f[i] = static_cast<double>(img[channel * H * W + i]);
    }
    std::vector<std::complex<double>> scratch(std::max(H, W));
    const auto tw_w = twiddles(W);
    for (std::size_t y = 0; y < H; ++y) {
        dft_line(f, y * W, 1, W, tw_w, scratch);
    }
    const auto tw_h = twiddles(H);
    for (std::size_t x = 0; x < W; ++x) {
        dft_line(f, x, W, H, tw_h, scratch);
    }
    return f;
}

BandEnergy band_energy(const ImageTensor& img, double rho)
{
    require_image(img, "band_energy");
    check_cutoff(img, rho);
    const std::size_t H = img.dim(1), W = img.dim(2);
    const double norm = static_cast<double>(H * W) * static_cast<double>(H * W);
    BandEnergy e;
    for (std::size_t c = 0; c < img.dim(0); ++c) {
        const auto f = dft2(img, c);
        for (std::size_t u = 0; u < H; ++u) {
            for (std::size_t v = 0; v < W; ++v) {
                const double p = std::norm(f[u * W + v]) / norm;
                e.total += p;
                if (radius(u, v, H, W) > rho) {
                    e.high += p;
                } else {
                    e.low += p;
                }
            }
        }
    }
    return e;
}

double high_freq_energy(const ImageTensor& img, double rho)
{
    return band_energy(img, rho).high;
}

double total_variation(const ImageTensor& img)
{
    require_image(img, "total_variation");
    const std::size_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
    double tv = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t y = 0; y < H; ++y) {
            for (std::size_t x = 0; x < W; ++x) {
                const double v = img[(c * H + y) * W + x];
                if (x + 1 < W) {
                    tv += std::abs(static_cast<double>(img[(c * H + y) * W + x + 1]) - v);
                }
                if (y + 1 < H) {
                    tv += std::abs(static_cast<double>(img[(c * H + y + 1) * W + x]) - v);
                }
            }
        }
    }
    return tv / static_cast<double>(C * H * W);
}

double low_band_correlation(const ImageTensor& a, const ImageTensor& b, double rho)
{
    require_image(a, "low_band_correlation");
    require_same_shape(a.shape(), b.shape(), "low_band_correlation");
    check_cutoff(a, rho);
    const std::size_t H = a.dim(1), W = a.dim(2);
    double cross = 0.0, ea = 0.0, eb = 0.0;
    for (std::size_t c = 0; c < a.dim(0); ++c) {
        const auto fa = dft2(a, c);
        const auto fb = dft2(b, c);
        for (std::size_t u = 0; u < H; ++u) {
            for (std::size_t v = 0; v < W; ++v) {
                if ((u == 0 && v == 0) || radius(u, v, H, W) > rho) {
                    continue;
                }
                const auto& x = fa[u * W + v];
                const auto& y = fb[u * W + v];
                cross += (x * std::conj(y)).real();
                ea += std::norm(x);
                eb += std::norm(y);
            }
        }
    }
    if (ea <= 0.0 || eb <= 0.0) {
        return 0.0;
    }
    return cross / std::sqrt(ea * eb);
}

SpectralReport spectral_report(const ImageTensor& img, double rho)
{
    const auto e = band_energy(img, rho);
    return {e.total, e.low, e.high, total_variation(img)};
}

Summary summarize(const std::vector<double>& values)
{
    Summary s;
    if (values.empty()) {
        return s;
    }
    for (double v : values) {
        s.mean += v;
    }
    s.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) {
            ss += (v - s.mean) * (v - s.mean);
        }
        s.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return s;
}

TrajectoryReport trajectory_report(const NoisePredictor& model, const NoiseSchedule& sched,
                                   const SamplerConfig& cfg, const std::vector<int>& snapshot_steps,
                                   int runs, double rho)
{
    if (runs < 1) {
        throw RangeError("trajectory_report needs at least one run");
    }
    SamplerConfig run_cfg = cfg;
    run_cfg.snapshot_steps = snapshot_steps;
    run_cfg.validate(sched);

    const std::size_t k = snapshot_steps.size();
    std::vector<std::vector<double>> high(k), low(k), total(k), tv(k), corr(k);
    TrajectoryReport report;
    for (int run = 0; run < runs; ++run) {
        run_cfg.class_c = run % model.num_classes();
        Rng rng = sampling_rng(run_cfg, static_cast<std::uint64_t>(run));
        const auto result = sample(model, sched, run_cfg, rng);
        const auto final_img = clamp_unit(result.x0);
        std::vector<ImageTensor> preds;
        for (int t : snapshot_steps) {
            const auto it = std::find_if(result.snapshots.begin(), result.snapshots.end(),
                                         [t](const Snapshot& s) { return s.t == t; });
            preds.push_back(clamp_unit(it->x0_pred));
        }
        for (std::size_t i = 0; i < k; ++i) {
            const auto r = spectral_report(preds[i], rho);
            high[i].push_back(r.high);
            low[i].push_back(r.low);
            total[i].push_back(r.total);
            tv[i].push_back(r.tv);
            corr[i].push_back(low_band_correlation(preds[i], final_img, rho));
        }
        report.x0_preds.push_back(std::move(preds));
    }
    for (std::size_t i = 0; i < k; ++i) {
        report.rows.push_back({snapshot_steps[i], summarize(high[i]), summarize(low[i]), summarize(total[i]),
                               summarize(tv[i]), summarize(corr[i])});
    }
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < report.rows.size(); ++i) {
        const auto& a = report.rows[i];
        const auto& b = report.rows[i + 1];
        const int span = a.t - b.t;
        if (span <= 0) {
            continue;
        }
        const double rate = (b.high.mean - a.high.mean) / span;
        if (rate > best) {
            best = rate;
            report.crossover_step = a.t;
        }
    }
    return report;
}

std::vector<AblationRow> ablate_sigma(const NoisePredictor& model, const NoiseSchedule& sched,
                                      const SamplerConfig& base_cfg, const std::vector<int>& sigmas, int n_per,
                                      std::uint64_t seed, double rho)
{
    if (n_per < 1) {
        throw RangeError("ablate_sigma needs n_per >= 1");
    }
    std::vector<AblationRow> rows;
    for (int sigma : sigmas) {
        SamplerConfig cfg = base_cfg;
        cfg.sigma = sigma;
        cfg.seed = seed;
        cfg.snapshot_steps.clear();
        cfg.validate(sched);
        AblationRow row{sigma, {}, {}, sigma == kDefaultSigma, {}};
        std::vector<double> high, tv;
        for (int i = 0; i < n_per; ++i) {
            cfg.class_c = i % model.num_classes();
            Rng rng = sampling_rng(cfg, static_cast<std::uint64_t>(i));
            auto img = clamp_unit(sample(model, sched, cfg, rng).x0);
            high.push_back(high_freq_energy(img, rho));
            tv.push_back(total_variation(img));
            row.images.push_back(std::move(img));
        }
        row.high = summarize(high);
        row.tv = summarize(tv);
        rows.push_back(std::move(row));
    }
    return rows;
}

ImageTensor contact_sheet(const std::vector<std::vector<ImageTensor>>& rows, int pad)
{
    if (rows.empty() || rows.front().empty()) {
        throw ShapeError("contact sheet needs at least one image");
    }
    const Shape cell = rows.front().front().shape();
    const std::size_t C = cell.at(0), H = cell.at(1), W = cell.at(2);
    std::size_t cols = 0;
    for (const auto& r : rows) {
        cols = std::max(cols, r.size());
    }
    const auto p = static_cast<std::size_t>(pad);
    const std::size_t out_h = rows.size() * (H + p) + p;
    const std::size_t out_w = cols * (W + p) + p;
    ImageTensor sheet({C, out_h, out_w}, -1.0f);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t q = 0; q < rows[r].size(); ++q) {
            const auto& img = rows[r][q];
            require_same_shape(img.shape(), cell, "contact_sheet");
            const std::size_t oy = p + r * (H + p), ox = p + q * (W + p);
            for (std::size_t c = 0; c < C; ++c) {
                for (std::size_t y = 0; y < H; ++y) {
                    for (std::size_t x = 0; x < W; ++x) {
                        sheet[(c * out_h + oy + y) * out_w + ox + x] = img[(c * H + y) * W + x];
                    }
                }
            }
        }
    }
    return sheet;
}

}  // namespace cartoondiff
