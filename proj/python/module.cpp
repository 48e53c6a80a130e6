#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "cartoondiff/analysis.hpp"
#include "cartoondiff/checkpoint.hpp"
#include "cartoondiff/dataset.hpp"
#include "cartoondiff/image_io.hpp"
#include "cli.hpp"

namespace py = pybind11;
using namespace cartoondiff;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

ImageTensor to_tensor(const FloatArray& a)
{
    Shape shape(a.shape(), a.shape() + a.ndim());
    std::vector<float> data(a.data(), a.data() + a.size());
    return ImageTensor(shape, std::move(data));
}

FloatArray to_array(const ImageTensor& t)
{
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    FloatArray out(shape);
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

py::dict config_dict(const ModelConfig& c)
{
    py::dict d;
    d["image_size"] = c.image_size;
    d["channels"] = c.channels;
    d["patch_size"] = c.patch_size;
    d["embed_dim"] = c.embed_dim;
    d["depth"] = c.depth;
    d["heads"] = c.heads;
    d["num_classes"] = c.num_classes;
    d["mlp_ratio"] = c.mlp_ratio;
    return d;
}

SamplerConfig sampler_config(double lambda, int sigma, int class_c, int steps, std::uint64_t seed, bool stochastic)
{
    SamplerConfig cfg;
    cfg.lambda = lambda;
    cfg.sigma = sigma;
    cfg.class_c = class_c;
    cfg.steps = steps;
    cfg.seed = seed;
    cfg.stochastic = stochastic;
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Token-normalized classifier-free diffusion sampling on a miniature transformer.";

    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<RangeError>(m, "RangeError", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<TruncationError>(m, "TruncationError", PyExc_ValueError);
    py::register_exception<NonFiniteError>(m, "NonFiniteError", PyExc_ArithmeticError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);

    m.attr("__version__") = cli::kToolVersion;

    m.def(
        "linear_schedule",
        [](int T, double beta_start, double beta_end) {
            const auto s = build_linear_schedule(T, beta_start, beta_end);
            return s.alpha_bars();
        },
        py::arg("T") = 1000, py::arg("beta_start") = 1e-4, py::arg("beta_end") = 0.02,
        "Cumulative products alpha_bar_0..alpha_bar_T of a linear beta schedule.");

    m.def(
        "equidistant_subsequence",
        [](int T, int K) { return equidistant_subsequence(build_linear_schedule(T, 1e-4, 0.02), K); },
        py::arg("T"), py::arg("K"), "K equally spaced steps from T down.");

    m.def(
        "token_normalize",
        [](const FloatArray& eps, int patch_size, double eps_norm) {
            return to_array(token_normalize(to_tensor(eps), patch_size, eps_norm));
        },
        py::arg("eps"), py::arg("patch_size"), py::arg("eps_norm") = 1e-12,
        "Divide every patch token of a C x H x W noise image by its L1 norm.");

    m.def(
        "cfg_combine",
        [](const FloatArray& uncond, const FloatArray& cond, double lambda) {
            return to_array(cfg_combine(to_tensor(uncond), to_tensor(cond), lambda));
        },
        py::arg("eps_uncond"), py::arg("eps_cond"), py::arg("lambda_"), "eps_u + lambda (eps_c - eps_u).");

    m.def(
        "generate_shapes",
        [](int n, int size, std::uint64_t seed, int channels, double texture) {
            const auto ds = generate_dataset(n, size, seed, channels, texture);
            FloatArray images({static_cast<py::ssize_t>(n), static_cast<py::ssize_t>(channels),
                               static_cast<py::ssize_t>(size), static_cast<py::ssize_t>(size)});
            float* dst = images.mutable_data();
            for (const auto& img : ds.images) {
                dst = std::copy(img.data().begin(), img.data().end(), dst);
            }
            return py::make_tuple(images, ds.labels);
        },
        py::arg("n"), py::arg("size") = 32, py::arg("seed") = 0, py::arg("channels") = 1,
        py::arg("texture") = 0.3, "Procedural shape images (n x C x H x W) and class labels.");

    m.def(
        "high_freq_energy",
        [](const FloatArray& img, double rho) { return high_freq_energy(to_tensor(img), rho); },
        py::arg("img"), py::arg("rho"), "Mean power per pixel above radial frequency rho.");

    m.def(
        "total_variation", [](const FloatArray& img) { return total_variation(to_tensor(img)); },
        py::arg("img"));

    m.def(
        "encode_netpbm",
        [](const FloatArray& img) { return py::bytes(encode_netpbm(to_tensor(img))); }, py::arg("img"),
        "Binary PGM (1 channel) or PPM (3 channels) bytes.");

    m.def(
        "decode_netpbm", [](const py::bytes& data) { return to_array(decode_netpbm(std::string(data))); },
        py::arg("data"));

    py::class_<TransformerDenoiser>(m, "Model")
        .def_static(
            "load", [](const std::string& path) { return TransformerDenoiser(load_checkpoint(path)); },
            py::arg("path"))
        .def_static(
            "init",
            [](int image_size, int embed_dim, int depth, int heads, std::uint64_t seed) {
                ModelConfig c;
                c.image_size = image_size;
                c.embed_dim = embed_dim;
                c.depth = depth;
                c.heads = heads;
                c.validate();
                return TransformerDenoiser(init_params<float>(c, seed));
            },
            py::arg("image_size") = 32, py::arg("embed_dim") = 64, py::arg("depth") = 4, py::arg("heads") = 4,
            py::arg("seed") = 0, "Freshly initialized (untrained) model.")
        .def("save", [](const TransformerDenoiser& m, const std::string& path) { save_checkpoint(m.params(), path); })
        .def_property_readonly("config", [](const TransformerDenoiser& m) { return config_dict(m.params().config); })
        .def_property_readonly("parameter_count",
                               [](const TransformerDenoiser& m) { return m.params().parameter_count(); })
        .def(
            "predict",
            [](const TransformerDenoiser& m, const FloatArray& x_t, int t, int class_c) {
                const auto c = class_c < 0 ? ClassLabel::null() : ClassLabel::of(class_c);
                return to_array(m.predict(to_tensor(x_t), t, c));
            },
            py::arg("x_t"), py::arg("t"), py::arg("class_c") = -1, "Noise prediction; class -1 is the null class.")
        .def(
            "sample",
            [](const TransformerDenoiser& m, double lambda, int sigma, int class_c, int steps, std::uint64_t seed,
               bool stochastic, int run_index) {
                const auto sched = build_linear_schedule(1000, 1e-4, 0.02);
                const auto cfg = sampler_config(lambda, sigma, class_c, steps, seed, stochastic);
                cfg.validate(sched);
                Rng rng = sampling_rng(cfg, static_cast<std::uint64_t>(run_index));
                ImageTensor x0;
                {
                    py::gil_scoped_release release;
                    x0 = sample(m, sched, cfg, rng).x0;
                }
                return to_array(x0);
            },
            py::arg("lambda_") = 4.0, py::arg("sigma") = 250, py::arg("class_c") = 0, py::arg("steps") = 100,
            py::arg("seed") = 0, py::arg("stochastic") = false, py::arg("run_index") = 0,
            "Final (unclamped) X_0 of one sampling run.");

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            const int code = cli::run(args, out, err);
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Run a command-line subcommand in-process; returns (exit code, stdout, stderr).");
}
