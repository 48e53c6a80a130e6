#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "cartoondiff/analysis.hpp"
#include "cartoondiff/checkpoint.hpp"
#include "cartoondiff/dataset.hpp"
#include "cartoondiff/image_io.hpp"
#include "cartoondiff/training.hpp"

namespace cartoondiff::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

/// Bad flag values discovered after CLI11 accepted the syntax; exits 1.
class UsageError : public Error {
public:
    using Error::Error;
};

double seconds_since(Clock::time_point start)
{
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string trim(const std::string& s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

/// Runs a validation step, reporting library range errors as usage errors.
template <typename F>
void validate_usage(F&& f)
{
    try {
        f();
    } catch (const UsageError&) {
        throw;
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
}

std::string image_ext(const ImageTensor& img)
{
    return img.dim(0) == 3 ? ".ppm" : ".pgm";
}

/// Grayscale sheets are widened to three channels so every grid is a PPM.
ImageTensor as_rgb(const ImageTensor& img)
{
    if (img.dim(0) == 3) {
        return img;
    }
    const std::size_t plane = img.dim(1) * img.dim(2);
    ImageTensor out({3, img.dim(1), img.dim(2)});
    for (std::size_t c = 0; c < 3; ++c) {
        std::copy(img.data().begin(), img.data().begin() + static_cast<std::ptrdiff_t>(plane),
                  out.data().begin() + static_cast<std::ptrdiff_t>(c * plane));
    }
    return out;
}

std::string numbered(const std::string& stem, int index, int width)
{
    std::ostringstream os;
    os << stem << std::setw(width) << std::setfill('0') << index;
    return os.str();
}

struct ScheduleOpts {
    int timesteps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;

    void add_to(CLI::App* app)
    {
        app->add_option("--timesteps", timesteps, "Diffusion steps T")->capture_default_str();
        app->add_option("--beta-start", beta_start, "First beta of the linear schedule")->capture_default_str();
        app->add_option("--beta-end", beta_end, "Last beta of the linear schedule")->capture_default_str();
    }

    NoiseSchedule build() const
    {
        std::optional<NoiseSchedule> sched;
        validate_usage([&] { sched.emplace(build_linear_schedule(timesteps, beta_start, beta_end)); });
        return *sched;
    }

    json to_json() const
    {
        return {{"timesteps", timesteps}, {"beta_start", beta_start}, {"beta_end", beta_end}};
    }
};

/// Flags shared by every command that runs the sampler.
struct SamplingOpts {
    std::string checkpoint;
    std::string out_dir;
    SamplerConfig cfg;
    ScheduleOpts sched;

    void add_to(CLI::App* app)
    {
        app->add_option("--checkpoint", checkpoint, "Trained model checkpoint")->required();
        app->add_option("--out-dir", out_dir, "Output directory")->required();
        app->add_option("--lambda", cfg.lambda, "Classifier-free guidance scale")->capture_default_str();
        app->add_option("--sigma", cfg.sigma, "Token normalization is applied for t < sigma")
            ->capture_default_str();
        app->add_option("--steps", cfg.steps, "Sampling steps K")->capture_default_str();
        app->add_option("--seed", cfg.seed, "Sampling seed")->capture_default_str();
        app->add_option("--eps-norm", cfg.eps_norm, "L1 norm floor in token normalization")
            ->capture_default_str();
        app->add_flag("--stochastic", cfg.stochastic, "Add posterior noise in each update");
        sched.add_to(app);
    }

    json to_json() const
    {
        return {{"checkpoint", checkpoint},
                {"out_dir", out_dir},
                {"lambda", cfg.lambda},
                {"sigma", cfg.sigma},
                {"steps", cfg.steps},
                {"seed", cfg.seed},
                {"eps_norm", cfg.eps_norm},
                {"stochastic", cfg.stochastic},
                {"schedule", sched.to_json()}};
    }
};

/// Collects outputs and writes the run manifest.
class Manifest {
public:
    Manifest(std::string command, const std::vector<std::string>& argv)
      : command_(std::move(command)), argv_(argv), start_(Clock::now())
    { }

    void set_config(json config, std::uint64_t seed)
    {
        config_ = std::move(config);
        seed_ = seed;
    }

    void add_output(const std::string& path) { outputs_.push_back(path); }

    void write(const std::string& path) const
    {
        json j = {{"tool", "cartoondiff"},
                  {"version", kToolVersion},
                  {"command", command_},
                  {"argv", argv_},
                  {"config", config_},
                  {"seed", seed_},
                  {"wall_time_s", seconds_since(start_)},
                  {"outputs", outputs_}};
        std::ofstream f(path);
        if (!f) {
            throw IoError("cannot write manifest " + path);
        }
        f << j.dump(2) << '\n';
    }

private:
    std::string command_;
    std::vector<std::string> argv_;
    json config_ = json::object();
    std::uint64_t seed_ = 0;
    std::vector<std::string> outputs_;
    Clock::time_point start_;
};

std::ofstream open_output(const fs::path& path)
{
    std::ofstream f(path);
    if (!f) {
        throw IoError("cannot write " + path.string());
    }
    return f;
}

void make_dir(const std::string& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create directory " + dir + ": " + ec.message());
    }
}

// ---------------------------------------------------------------- gen-data

struct GenDataOpts {
    int n = 4096;
    int size = 32;
    std::uint64_t seed = 0;
    int channels = 1;
    double texture = 0.3;
    std::string out;
    std::string manifest;
};

void add_gen_data(CLI::App& app, GenDataOpts& o)
{
    auto* sub = app.add_subcommand("gen-data", "Generate a labeled shape dataset");
    sub->add_option("--n", o.n, "Number of images")->capture_default_str();
    sub->add_option("--size", o.size, "Image height and width")->capture_default_str();
    sub->add_option("--seed", o.seed, "Generator seed")->capture_default_str();
    sub->add_option("--channels", o.channels, "1 (grayscale) or 3")->capture_default_str();
    sub->add_option("--texture", o.texture, "Interior texture amplitude")->capture_default_str();
    sub->add_option("--out", o.out, "Dataset file")->required();
    sub->add_option("--manifest", o.manifest, "Manifest path (default: <out>.manifest.json)");
}

void run_gen_data(const GenDataOpts& o, Manifest& m, std::ostream& out)
{
    if (o.n < 1) {
        throw UsageError("--n must be at least 1");
    }
    if (o.size < 16) {
        throw UsageError("--size must be at least 16");
    }
    if (o.channels != 1 && o.channels != 3) {
        throw UsageError("--channels must be 1 or 3");
    }
    if (!(o.texture >= 0.0)) {
        throw UsageError("--texture must be non-negative");
    }
    m.set_config({{"n", o.n}, {"size", o.size}, {"seed", o.seed}, {"channels", o.channels},
                  {"texture", o.texture}, {"out", o.out}},
                 o.seed);
    const auto ds = generate_dataset(o.n, o.size, o.seed, o.channels, o.texture);
    if (const auto parent = fs::path(o.out).parent_path(); !parent.empty()) {
        make_dir(parent.string());
    }
    save_dataset(ds, o.out);
    m.add_output(o.out);
    std::vector<int> hist(kShapeClasses, 0);
    for (int l : ds.labels) {
        ++hist[static_cast<std::size_t>(l)];
    }
    out << "wrote " << ds.count() << " images to " << o.out << " (class counts";
    for (int h : hist) {
        out << ' ' << h;
    }
    out << ")\n";
    m.write(o.manifest.empty() ? o.out + ".manifest.json" : o.manifest);
}

// ------------------------------------------------------------------- train

struct TrainOpts {
    std::string data;
    std::string out;
    TrainConfig train;
    ModelConfig model;
    ScheduleOpts sched;
    long log_every = 1000;
};

void add_train(CLI::App& app, TrainOpts& o)
{
    auto* sub = app.add_subcommand("train", "Train the denoiser on a dataset file");
    sub->add_option("--data", o.data, "Dataset file from gen-data")->required();
    sub->add_option("--out", o.out, "Output directory")->required();
    sub->add_option("--steps", o.train.steps, "Optimizer steps")->capture_default_str();
    sub->add_option("--batch", o.train.batch_size, "Batch size")->capture_default_str();
    sub->add_option("--lr", o.train.lr, "Adam learning rate")->capture_default_str();
    sub->add_option("--dropout-p", o.train.label_dropout_p, "Label dropout probability")->capture_default_str();
    sub->add_option("--seed", o.train.seed, "Seed for initialization and training draws")->capture_default_str();
    sub->add_option("--ckpt-every", o.train.checkpoint_every, "Checkpoint interval in steps (0: final only)")
        ->capture_default_str();
    sub->add_option("--patch", o.model.patch_size, "Patch size")->capture_default_str();
    sub->add_option("--embed-dim", o.model.embed_dim, "Transformer width")->capture_default_str();
    sub->add_option("--depth", o.model.depth, "Transformer blocks")->capture_default_str();
    sub->add_option("--heads", o.model.heads, "Attention heads")->capture_default_str();
    sub->add_option("--mlp-ratio", o.model.mlp_ratio, "MLP hidden width over embed dim")->capture_default_str();
    sub->add_option("--log-every", o.log_every, "Progress line interval in steps (0: silent)")
        ->capture_default_str();
    o.sched.add_to(sub);
}

json model_json(const ModelConfig& c)
{
    return {{"image_size", c.image_size}, {"channels", c.channels}, {"patch_size", c.patch_size},
            {"embed_dim", c.embed_dim},   {"depth", c.depth},       {"heads", c.heads},
            {"num_classes", c.num_classes}, {"mlp_ratio", c.mlp_ratio}};
}

double window_mean(const std::vector<double>& v, bool head, std::size_t n)
{
    n = std::min(n, v.size());
    if (n == 0) {
        return 0.0;
    }
    const auto first = head ? v.begin() : v.end() - static_cast<std::ptrdiff_t>(n);
    return std::accumulate(first, first + static_cast<std::ptrdiff_t>(n), 0.0) / static_cast<double>(n);
}

void run_train(TrainOpts o, Manifest& m, std::ostream& out)
{
    validate_usage([&] { o.train.validate(); });
    if (o.log_every < 0) {
        throw UsageError("--log-every must be non-negative");
    }
    const auto sched = o.sched.build();
    const auto ds = load_dataset(o.data);
    o.model.image_size = ds.size;
    o.model.channels = ds.channels;
    o.model.num_classes = kShapeClasses;
    validate_usage([&] { o.model.validate(); });

    m.set_config({{"data", o.data},
                  {"out", o.out},
                  {"steps", o.train.steps},
                  {"batch", o.train.batch_size},
                  {"lr", o.train.lr},
                  {"beta1", o.train.beta1},
                  {"beta2", o.train.beta2},
                  {"adam_eps", o.train.adam_eps},
                  {"dropout_p", o.train.label_dropout_p},
                  {"seed", o.train.seed},
                  {"ckpt_every", o.train.checkpoint_every},
                  {"model", model_json(o.model)},
                  {"schedule", o.sched.to_json()}},
                 o.train.seed);
    make_dir(o.out);
    const fs::path dir(o.out);
    auto loss_csv = open_output(dir / "loss.csv");
    loss_csv << "step,loss\n" << std::setprecision(std::numeric_limits<double>::max_digits10);

    const auto data = ds.examples();
    const auto start = Clock::now();
    TrainCallbacks cb;
    cb.on_step = [&](long step, double loss) {
        loss_csv << step << ',' << loss << '\n';
        if (o.log_every > 0 && (step + 1) % o.log_every == 0) {
            out << "step " << step + 1 << "/" << o.train.steps << " loss " << loss << " (" << std::fixed
                << std::setprecision(1) << seconds_since(start) << " s)\n"
                << std::defaultfloat << std::setprecision(6) << std::flush;
        }
    };
    cb.on_checkpoint = [&](long step, const DenoiserParams<float>& p) {
        const auto path = (dir / (numbered("ckpt_", static_cast<int>(step), 6) + ".cdif")).string();
        save_checkpoint(p, path);
        m.add_output(path);
    };
    const auto result = train(data, init_params<float>(o.model, o.train.seed), o.train, sched, cb);
    loss_csv.close();
    m.add_output((dir / "loss.csv").string());
    const auto final_path = (dir / "model.cdif").string();
    save_checkpoint(result.params, final_path);
    m.add_output(final_path);

    out << "trained " << result.params.parameter_count() << " parameters for " << o.train.steps << " steps";
    if (!result.losses.empty()) {
        out << "; mean loss first 100 " << window_mean(result.losses, true, 100) << ", last 100 "
            << window_mean(result.losses, false, 100);
    }
    out << "\nwrote " << final_path << '\n';
    m.write((dir / "manifest.json").string());
}

// ------------------------------------------------------------------ sample

struct SampleOpts {
    SamplingOpts s;
    int count = 1;
};

void add_sample(CLI::App& app, SampleOpts& o)
{
    auto* sub = app.add_subcommand("sample", "Draw images with guided, token-normalized sampling");
    o.s.add_to(sub);
    sub->add_option("--class", o.s.cfg.class_c, "Class label")->capture_default_str();
    sub->add_option("--count", o.count, "Number of images (run i uses sampling stream i)")->capture_default_str();
    sub->add_option("--snapshots", o.s.cfg.snapshot_steps, "Steps t at which to save X_t and predicted X_0")
        ->delimiter(',');
}

TransformerDenoiser load_model(const std::string& path)
{
    return TransformerDenoiser(load_checkpoint(path));
}

void run_sample(const SampleOpts& o, Manifest& m, std::ostream& out)
{
    if (o.count < 1) {
        throw UsageError("--count must be at least 1");
    }
    const auto sched = o.s.sched.build();
    validate_usage([&] { o.s.cfg.validate(sched); });
    json config = o.s.to_json();
    config["class"] = o.s.cfg.class_c;
    config["count"] = o.count;
    config["snapshots"] = o.s.cfg.snapshot_steps;
    m.set_config(config, o.s.cfg.seed);

    const auto model = load_model(o.s.checkpoint);
    if (o.s.cfg.class_c < 0 || o.s.cfg.class_c >= model.num_classes()) {
        throw UsageError("--class must lie in [0, " + std::to_string(model.num_classes()) + ")");
    }
    make_dir(o.s.out_dir);
    const fs::path dir(o.s.out_dir);
    const auto jsonl_path = (dir / "samples.jsonl").string();
    auto jsonl = open_output(jsonl_path);
    jsonl << json{{"type", "config"}, {"version", kToolVersion}, {"config", config}}.dump() << '\n';

    for (int i = 0; i < o.count; ++i) {
        const auto start = Clock::now();
        Rng rng = sampling_rng(o.s.cfg, static_cast<std::uint64_t>(i));
        const auto result = sample(model, sched, o.s.cfg, rng);
        const auto img = clamp_unit(result.x0);
        const std::string stem = numbered("sample_", i, 4);
        const auto path = (dir / (stem + image_ext(img))).string();
        encode_image(img, path);
        m.add_output(path);
        json snaps = json::array();
        for (const auto& s : result.snapshots) {
            const std::string base = stem + numbered("_t", s.t, 4);
            const auto xt_path = (dir / (base + "_xt" + image_ext(img))).string();
            const auto x0_path = (dir / (base + "_x0" + image_ext(img))).string();
            encode_image(clamp_unit(s.x_t), xt_path);
            encode_image(clamp_unit(s.x0_pred), x0_path);
            m.add_output(xt_path);
            m.add_output(x0_path);
            snaps.push_back({{"t", s.t}, {"x_t", xt_path}, {"x0_pred", x0_path}});
        }
        jsonl << json{{"type", "image"},
                      {"index", i},
                      {"class", o.s.cfg.class_c},
                      {"path", path},
                      {"snapshots", snaps},
                      {"wall_time_s", seconds_since(start)}}
                     .dump()
              << '\n';
        out << "wrote " << path << '\n';
    }
    jsonl.close();
    m.add_output(jsonl_path);
    m.write((dir / "manifest.json").string());
}

// -------------------------------------------------------------- trajectory

struct TrajectoryOpts {
    SamplingOpts s;
    int runs = 8;
    std::vector<int> at = kDefaultTrajectorySteps;
    double rho = 0.0;
};

void add_trajectory(CLI::App& app, TrajectoryOpts& o)
{
    auto* sub = app.add_subcommand("trajectory", "Spectral metrics of predicted X_0 along the sampling path");
    o.s.add_to(sub);
    sub->add_option("--runs", o.runs, "Trajectories (run i uses class i mod classes)")->capture_default_str();
    sub->add_option("--snapshots", o.at, "Steps t at which to analyse predicted X_0")
        ->delimiter(',')
        ->capture_default_str();
    sub->add_option("--rho", o.rho, "Radial frequency cutoff (0: image size / 4)")->capture_default_str();
}

double resolve_rho(double rho, const NoisePredictor& model)
{
    return rho > 0.0 ? rho : static_cast<double>(model.image_shape().at(1)) / 4.0;
}

void run_trajectory(const TrajectoryOpts& o, Manifest& m, std::ostream& out)
{
    if (o.runs < 1) {
        throw UsageError("--runs must be at least 1");
    }
    const auto sched = o.s.sched.build();
    SamplerConfig cfg = o.s.cfg;
    cfg.snapshot_steps = o.at;
    validate_usage([&] { cfg.validate(sched); });
    const auto model = load_model(o.s.checkpoint);
    const double rho = resolve_rho(o.rho, model);
    json config = o.s.to_json();
    config["runs"] = o.runs;
    config["snapshots"] = o.at;
    config["rho"] = rho;
    m.set_config(config, cfg.seed);

    validate_usage([&] { band_energy(ImageTensor(model.image_shape()), rho); });
    const auto report = trajectory_report(model, sched, cfg, o.at, o.runs, rho);

    make_dir(o.s.out_dir);
    const fs::path dir(o.s.out_dir);
    const auto csv_path = (dir / "trajectory.csv").string();
    {
        auto csv = open_output(csv_path);
        csv << "t,high_mean,high_std,low_mean,low_std,total_mean,total_std,tv_mean,tv_std,low_corr_mean,"
               "low_corr_std\n"
            << std::setprecision(8);
        for (const auto& r : report.rows) {
            csv << r.t << ',' << r.high.mean << ',' << r.high.stddev << ',' << r.low.mean << ',' << r.low.stddev
                << ',' << r.total.mean << ',' << r.total.stddev << ',' << r.tv.mean << ',' << r.tv.stddev << ','
                << r.low_corr.mean << ',' << r.low_corr.stddev << '\n';
        }
    }
    m.add_output(csv_path);
    for (std::size_t run = 0; run < report.x0_preds.size(); ++run) {
        for (std::size_t k = 0; k < o.at.size(); ++k) {
            const auto& img = report.x0_preds[run][k];
            const auto path =
                (dir / (numbered("run", static_cast<int>(run), 2) + numbered("_t", o.at[k], 4) + image_ext(img)))
                    .string();
            encode_image(img, path);
            m.add_output(path);
        }
    }
    const auto sheet = as_rgb(contact_sheet(report.x0_preds));
    const auto sheet_path = (dir / "trajectory_sheet.ppm").string();
    encode_image(sheet, sheet_path);
    m.add_output(sheet_path);

    out << std::setw(6) << "t" << std::setw(14) << "high" << std::setw(14) << "low" << std::setw(12) << "tv"
        << std::setw(12) << "low_corr" << '\n';
    for (const auto& r : report.rows) {
        out << std::setw(6) << r.t << std::setw(14) << r.high.mean << std::setw(14) << r.low.mean
            << std::setw(12) << r.tv.mean << std::setw(12) << r.low_corr.mean << '\n';
    }
    out << "fastest high-band growth below t = " << report.crossover_step << '\n';
    m.write((dir / "manifest.json").string());
}

// ------------------------------------------------------------------ ablate

struct AblateOpts {
    SamplingOpts s;
    std::vector<int> sigmas = {0, 100, 250, 400};
    int n = 64;
    double rho = 0.0;
    int sheet_cols = 8;
};

void add_ablate(CLI::App& app, AblateOpts& o)
{
    auto* sub = app.add_subcommand("ablate", "Sweep sigma with paired seeds and measure detail energy");
    o.s.add_to(sub);
    sub->add_option("--sigmas", o.sigmas, "Sigma values")->delimiter(',')->capture_default_str();
    sub->add_option("--n", o.n, "Samples per sigma")->capture_default_str();
    sub->add_option("--rho", o.rho, "Radial frequency cutoff (0: image size / 4)")->capture_default_str();
    sub->add_option("--sheet-cols", o.sheet_cols, "Images per contact sheet row")->capture_default_str();
}

void run_ablate(const AblateOpts& o, Manifest& m, std::ostream& out)
{
    if (o.n < 1 || o.sheet_cols < 1) {
        throw UsageError("--n and --sheet-cols must be at least 1");
    }
    if (o.sigmas.empty()) {
        throw UsageError("--sigmas must not be empty");
    }
    const auto sched = o.s.sched.build();
    for (int sigma : o.sigmas) {
        SamplerConfig cfg = o.s.cfg;
        cfg.sigma = sigma;
        validate_usage([&] { cfg.validate(sched); });
    }
    const auto model = load_model(o.s.checkpoint);
    const double rho = resolve_rho(o.rho, model);
    validate_usage([&] { band_energy(ImageTensor(model.image_shape()), rho); });
    json config = o.s.to_json();
    config.erase("sigma");
    config["sigmas"] = o.sigmas;
    config["n"] = o.n;
    config["rho"] = rho;
    config["sheet_cols"] = o.sheet_cols;
    m.set_config(config, o.s.cfg.seed);

    const auto rows = ablate_sigma(model, sched, o.s.cfg, o.sigmas, o.n, o.s.cfg.seed, rho);

    make_dir(o.s.out_dir);
    const fs::path dir(o.s.out_dir);
    const auto csv_path = (dir / "ablation.csv").string();
    {
        auto csv = open_output(csv_path);
        csv << "sigma,is_default,high_mean,high_std,tv_mean,tv_std\n" << std::setprecision(8);
        for (const auto& r : rows) {
            csv << r.sigma << ',' << (r.is_default ? 1 : 0) << ',' << r.high.mean << ',' << r.high.stddev << ','
                << r.tv.mean << ',' << r.tv.stddev << '\n';
        }
    }
    m.add_output(csv_path);
    std::vector<std::vector<ImageTensor>> grid;
    for (const auto& r : rows) {
        const auto cols = std::min(r.images.size(), static_cast<std::size_t>(o.sheet_cols));
        grid.emplace_back(r.images.begin(), r.images.begin() + static_cast<std::ptrdiff_t>(cols));
    }
    const auto sheet = as_rgb(contact_sheet(grid));
    const auto sheet_path = (dir / "ablation_sheet.ppm").string();
    encode_image(sheet, sheet_path);
    m.add_output(sheet_path);

    out << std::setw(7) << "sigma" << std::setw(14) << "high" << std::setw(14) << "tv" << '\n';
    for (const auto& r : rows) {
        out << std::setw(7) << r.sigma << std::setw(14) << r.high.mean << std::setw(14) << r.tv.mean
            << (r.is_default ? "  (default)" : "") << '\n';
    }
    m.write((dir / "manifest.json").string());
}

// ----------------------------------------------------------------- inspect

struct InspectOpts {
    std::string checkpoint;
    std::string manifest;
};

void add_inspect(CLI::App& app, InspectOpts& o)
{
    auto* sub = app.add_subcommand("inspect", "Print checkpoint configuration and tensor inventory");
    sub->add_option("checkpoint", o.checkpoint, "Checkpoint file")->required();
    sub->add_option("--manifest", o.manifest, "Also write a run manifest to this path");
}

void run_inspect(const InspectOpts& o, Manifest& m, std::ostream& out)
{
    m.set_config({{"checkpoint", o.checkpoint}}, 0);
    const auto info = inspect_checkpoint(o.checkpoint);
    const auto& c = info.config;
    out << "format version " << info.version << '\n'
        << "image_size " << c.image_size << "  channels " << c.channels << "  patch_size " << c.patch_size << '\n'
        << "embed_dim " << c.embed_dim << "  depth " << c.depth << "  heads " << c.heads << "  mlp_ratio "
        << c.mlp_ratio << '\n'
        << "num_classes " << c.num_classes << " (+ null class)\n"
        << "parameters " << info.parameter_count << " in " << info.tensors.size() << " tensors\n";
    for (const auto& t : info.tensors) {
        out << "  " << std::left << std::setw(22) << t.name << std::right << shape_str(t.shape) << '\n';
    }
    if (!o.manifest.empty()) {
        m.write(o.manifest);
    }
}

// --------------------------------------------------------------- dispatch

bool has_flag(const std::vector<std::string>& args, const std::string& flag)
{
    return std::any_of(args.begin(), args.end(),
                       [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
}

/// Removes `--config FILE` and appends every file entry whose flag is not
/// already on the command line, so explicit flags win.
std::vector<std::string> expand_config(const CLI::App& app, std::vector<std::string> args)
{
    std::string path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) {
                throw UsageError("--config needs a file name");
            }
            path = args[i + 1];
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
            break;
        }
    }
    if (path.empty()) {
        return args;
    }
    const CLI::App* sub = args.empty() ? nullptr : app.get_subcommand_no_throw(args.front());
    if (sub == nullptr) {
        throw UsageError("--config must follow a subcommand");
    }
    for (const auto& [key, value] : read_config_file(path)) {
        const std::string flag = "--" + key;
        const CLI::Option* opt = sub->get_option_no_throw(flag);
        if (opt == nullptr || key == "config") {
            throw UsageError("unknown key '" + key + "' in " + path);
        }
        if (has_flag(args, flag)) {
            continue;
        }
        if (opt->get_expected_min() == 0) {
            if (value == "true" || value == "1") {
                args.push_back(flag);
            } else if (value != "false" && value != "0") {
                throw UsageError("flag '" + key + "' in " + path + " must be true or false");
            }
        } else {
            args.push_back(flag);
            args.push_back(value);
        }
    }
    return args;
}

const CLI::App* active_subcommand(const CLI::App& app)
{
    for (const auto* sub : app.get_subcommands({})) {
        if (sub->parsed()) {
            return sub;
        }
    }
    return nullptr;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path)
{
    std::ifstream f(path);
    if (!f) {
        throw IoError("cannot read config file " + path);
    }
    std::vector<std::pair<std::string, std::string>> entries;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        line = trim(line.substr(0, line.find('#')));
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw FormatError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
        }
        auto key = trim(line.substr(0, eq));
        auto value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw FormatError(path + ":" + std::to_string(lineno) + ": empty key");
        }
        entries.emplace_back(std::move(key), std::move(value));
    }
    return entries;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app("CartoonDiff: token-normalized diffusion sampling on a miniature transformer", "cartoondiff");
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    GenDataOpts gen;
    TrainOpts tr;
    SampleOpts smp;
    TrajectoryOpts traj;
    AblateOpts abl;
    InspectOpts ins;
    add_gen_data(app, gen);
    add_train(app, tr);
    add_sample(app, smp);
    add_trajectory(app, traj);
    add_ablate(app, abl);
    add_inspect(app, ins);
    std::string unused_config;
    for (auto* sub : app.get_subcommands({})) {
        sub->add_option("--config", unused_config, "File of 'key = value' lines; flags override it");
    }

    try {
        auto expanded = expand_config(app, args);
        std::reverse(expanded.begin(), expanded.end());
        app.parse(expanded);
    } catch (const CLI::CallForHelp&) {
        const auto* sub = active_subcommand(app);
        out << (sub ? sub->help() : app.help());
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << kToolVersion << '\n';
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        const auto* sub = active_subcommand(app);
        err << "error: " << e.what() << "\n\n" << (sub ? sub->help() : app.help());
        return kExitUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    const auto* sub = active_subcommand(app);
    const std::string name = sub->get_name();
    Manifest manifest(name, args);
    try {
        if (name == "gen-data") {
            run_gen_data(gen, manifest, out);
        } else if (name == "train") {
            run_train(tr, manifest, out);
        } else if (name == "sample") {
            run_sample(smp, manifest, out);
        } else if (name == "trajectory") {
            run_trajectory(traj, manifest, out);
        } else if (name == "ablate") {
            run_ablate(abl, manifest, out);
        } else {
            run_inspect(ins, manifest, out);
        }
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n\n" << sub->help();
        return kExitUsage;
    } catch (const DivergenceError& e) {
        err << "error: " << e.what() << " (step " << e.step() << ")\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitOk;
}

}  // namespace cartoondiff::cli
