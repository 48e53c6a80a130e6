#include "cartoondiff/checkpoint.hpp"

#include "binary_io.hpp"

namespace cartoondiff {

namespace {

constexpr std::uint32_t kMaxNameLength = 4096;
constexpr std::uint32_t kMaxRank = 8;

void write_config(detail::BinaryWriter& w, const ModelConfig& c)
{
    for (int v : {c.image_size, c.channels, c.patch_size, c.embed_dim, c.depth, c.heads, c.num_classes,
                  c.mlp_ratio}) {
        w.u32(static_cast<std::uint32_t>(v));
    }
}

ModelConfig read_config(detail::BinaryReader& r)
{
    ModelConfig c;
    for (int* field : {&c.image_size, &c.channels, &c.patch_size, &c.embed_dim, &c.depth, &c.heads,
                       &c.num_classes, &c.mlp_ratio}) {
        *field = static_cast<int>(r.u32());
    }
    try {
        c.validate();
    } catch (const Error& e) {
        throw FormatError(r.path() + ": invalid model config: " + e.what());
    }
    return c;
}

struct Header {
    std::uint32_t version;
    ModelConfig config;
    std::uint32_t count;
};

Header read_header(detail::BinaryReader& r)
{
    r.expect_magic("CDIF");
    Header h{};
    h.version = r.u32();
    if (h.version != kCheckpointVersion) {
        throw FormatError(r.path() + ": unsupported checkpoint version " + std::to_string(h.version));
    }
    h.config = read_config(r);
    h.count = r.u32();
    return h;
}

TensorInfo read_tensor_header(detail::BinaryReader& r)
{
    TensorInfo info;
    const std::uint32_t len = r.u32();
    if (len > kMaxNameLength) {
        throw FormatError(r.path() + ": tensor name too long");
    }
    info.name.resize(len);
    r.bytes(info.name.data(), len);
    const std::uint32_t rank = r.u32();
    if (rank > kMaxRank) {
        throw FormatError(r.path() + ": tensor rank too large");
    }
    for (std::uint32_t i = 0; i < rank; ++i) {
        info.shape.push_back(r.u32());
    }
    return info;
}

}  // namespace

void save_checkpoint(const DenoiserParams<float>& params, const std::string& path)
{
    detail::BinaryWriter w(path);
    w.bytes("CDIF", 4);
    w.u32(kCheckpointVersion);
    write_config(w, params.config);
    std::uint32_t count = 0;
    params.visit([&](const std::string&, const Tensor<float>&) { ++count; });
    w.u32(count);
    params.visit([&](const std::string& name, const Tensor<float>& t) {
        w.u32(static_cast<std::uint32_t>(name.size()));
        w.bytes(name.data(), name.size());
        w.u32(static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) {
            w.u32(static_cast<std::uint32_t>(d));
        }
        for (float v : t.data()) {
            w.f32(v);
        }
    });
    w.finish();
}

DenoiserParams<float> load_checkpoint(const std::string& path)
{
    detail::BinaryReader r(path);
    const Header h = read_header(r);
    auto params = DenoiserParams<float>::zeros(h.config);
    std::uint32_t expected = 0;
    params.visit([&](const std::string&, const Tensor<float>&) { ++expected; });
    if (h.count != expected) {
        throw FormatError(path + ": expected " + std::to_string(expected) + " tensors, header says " +
                          std::to_string(h.count));
    }
    params.visit([&](const std::string& name, Tensor<float>& t) {
        const TensorInfo info = read_tensor_header(r);
        if (info.name != name || info.shape != t.shape()) {
            throw FormatError(path + ": expected tensor " + name + shape_str(t.shape()) + ", found " +
                              info.name + shape_str(info.shape));
        }
        for (float& v : t.data()) {
            v = r.f32();
        }
        if (!t.all_finite()) {
            throw FormatError(path + ": non-finite weights in " + name);
        }
    });
    if (!r.at_end()) {
        throw FormatError(path + ": trailing bytes after checkpoint payload");
    }
    return params;
}

CheckpointInfo inspect_checkpoint(const std::string& path)
{
    detail::BinaryReader r(path);
    const Header h = read_header(r);
    CheckpointInfo info{h.version, h.config, {}, 0};
    for (std::uint32_t i = 0; i < h.count; ++i) {
        auto t = read_tensor_header(r);
        const std::size_t n = shape_numel(t.shape);
        for (std::size_t k = 0; k < n; ++k) {
            r.f32();
        }
        info.parameter_count += n;
        info.tensors.push_back(std::move(t));
    }
    return info;
}

}  // namespace cartoondiff
