#include "cartoondiff/model.hpp"

#include <cmath>

#include "cartoondiff/rng.hpp"
#include "cartoondiff/tokens.hpp"

namespace cartoondiff {

namespace {

constexpr double kLayerNormEps = 1e-6;

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t start, std::size_t width)
{
    Tensor<T> out({x.rows(), width});
    for (std::size_t i = 0; i < x.rows(); ++i) {
        auto src = x.row(i);
        auto dst = out.row(i);
        for (std::size_t j = 0; j < width; ++j) {
            dst[j] = src[start + j];
        }
    }
    return out;
}

template <typename T>
void add_into_cols(Tensor<T>& x, std::size_t start, const Tensor<T>& block)
{
    for (std::size_t i = 0; i < block.rows(); ++i) {
        auto src = block.row(i);
        auto dst = x.row(i);
        for (std::size_t j = 0; j < src.size(); ++j) {
            dst[start + j] += src[j];
        }
    }
}

/// Segment k (length d) of a 1 x (n*d) modulation row, as a vector.
template <typename T>
Tensor<T> segment(const Tensor<T>& mod, std::size_t k, std::size_t d)
{
    Tensor<T> out({d});
    for (std::size_t j = 0; j < d; ++j) {
        out[j] = mod[k * d + j];
    }
    return out;
}

template <typename T>
void set_segment(Tensor<T>& dmod, std::size_t k, const Tensor<T>& v)
{
    for (std::size_t j = 0; j < v.size(); ++j) {
        dmod[k * v.size() + j] = v[j];
    }
}

template <typename T>
Tensor<T> one_plus(const Tensor<T>& v)
{
    Tensor<T> out = v;
    for (T& x : out.data()) {
        x += T{1};
    }
    return out;
}

/// h + y * gate, with gate broadcast over rows.
template <typename T>
Tensor<T> gated_residual(const Tensor<T>& h, const Tensor<T>& gate, const Tensor<T>& y)
{
    Tensor<T> out = h;
    for (std::size_t i = 0; i < h.rows(); ++i) {
        auto o = out.row(i);
        auto yr = y.row(i);
        for (std::size_t j = 0; j < o.size(); ++j) {
            o[j] += yr[j] * gate[j];
        }
    }
    return out;
}

template <typename T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src)
{
    if (dst.size() != src.size()) {
        throw ShapeError("gradient accumulation size mismatch " + shape_str(dst.shape()) + " vs " +
                         shape_str(src.shape()));
    }
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] += src[i];
    }
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b)
{
    return ops::add_row_vector(ops::matmul(x, w), b);
}

/// Backward of y = x w + b. Accumulates into dw, db and returns dx.
template <typename T>
Tensor<T> linear_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, Tensor<T>& dw,
                          Tensor<T>& db)
{
    accumulate(dw, ops::matmul_tn(x, dy));
    accumulate(db, ops::column_sum(dy));
    return ops::matmul_nt(dy, w);
}

template <typename T>
Tensor<T> block_forward(const BlockParams<T>& bp, const Tensor<T>& h, const Tensor<T>& cond_act,
                        const ModelConfig& cfg, BlockCache<T>& bc)
{
    const auto D = static_cast<std::size_t>(cfg.embed_dim);
    const auto dh = static_cast<std::size_t>(cfg.head_dim());
    const T eps = static_cast<T>(kLayerNormEps);

    bc.h_in = h;
    bc.mod = linear(cond_act, bp.ada_w, bp.ada_b);
    const auto shift1 = segment(bc.mod, 0, D), scale1 = segment(bc.mod, 1, D), gate1 = segment(bc.mod, 2, D);
    const auto shift2 = segment(bc.mod, 3, D), scale2 = segment(bc.mod, 4, D), gate2 = segment(bc.mod, 5, D);

    bc.gamma1 = one_plus(scale1);
    bc.n1 = ops::layer_norm(h, bc.gamma1, shift1, eps, &bc.ln1);
    bc.qkv = linear(bc.n1, bp.qkv_w, bp.qkv_b);

    const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
    bc.att = Tensor<T>({h.rows(), D});
    bc.attn.clear();
    for (int head = 0; head < cfg.heads; ++head) {
        const std::size_t off = static_cast<std::size_t>(head) * dh;
        const auto q = slice_cols(bc.qkv, off, dh);
        const auto k = slice_cols(bc.qkv, D + off, dh);
        const auto v = slice_cols(bc.qkv, 2 * D + off, dh);
        auto a = ops::softmax_rows(ops::scale(ops::matmul_nt(q, k), inv_sqrt));
        add_into_cols(bc.att, off, ops::matmul(a, v));
        bc.attn.push_back(std::move(a));
    }
    bc.ao = linear(bc.att, bp.proj_w, bp.proj_b);
    bc.h_mid = gated_residual(h, gate1, bc.ao);

    bc.gamma2 = one_plus(scale2);
    bc.n2 = ops::layer_norm(bc.h_mid, bc.gamma2, shift2, eps, &bc.ln2);
    bc.f1 = linear(bc.n2, bp.fc1_w, bp.fc1_b);
    bc.g = ops::gelu(bc.f1);
    bc.f2 = linear(bc.g, bp.fc2_w, bp.fc2_b);
    return gated_residual(bc.h_mid, gate2, bc.f2);
}

/// Returns dL/dh_in; accumulates parameter grads and dL/d(cond_act).
template <typename T>
Tensor<T> block_backward(const BlockParams<T>& bp, const BlockCache<T>& bc, const Tensor<T>& cond_act,
                         const ModelConfig& cfg, const Tensor<T>& dh_out, BlockParams<T>& gp,
                         Tensor<T>& d_cond_act)
{
    const auto D = static_cast<std::size_t>(cfg.embed_dim);
    const auto dh = static_cast<std::size_t>(cfg.head_dim());
    const auto gate1 = segment(bc.mod, 2, D);
    const auto gate2 = segment(bc.mod, 5, D);
    Tensor<T> dmod({1, 6 * D});

    // h_out = h_mid + gate2 * f2
    Tensor<T> dgate2({D});
    Tensor<T> df2(bc.f2.shape());
    for (std::size_t i = 0; i < dh_out.rows(); ++i) {
        auto d = dh_out.row(i);
        auto f = bc.f2.row(i);
        auto o = df2.row(i);
        for (std::size_t j = 0; j < D; ++j) {
            dgate2[j] += d[j] * f[j];
            o[j] = d[j] * gate2[j];
        }
    }
    set_segment(dmod, 5, dgate2);
    const auto dg = linear_backward(bc.g, bp.fc2_w, df2, gp.fc2_w, gp.fc2_b);
    const auto df1 = ops::gelu_backward(bc.f1, dg);
    const auto dn2 = linear_backward(bc.n2, bp.fc1_w, df1, gp.fc1_w, gp.fc1_b);
    auto ln2 = ops::layer_norm_backward(dn2, bc.gamma2, bc.ln2);
    set_segment(dmod, 3, ln2.dbeta);
    set_segment(dmod, 4, ln2.dgamma);
    Tensor<T> dh_mid = ops::add(dh_out, ln2.dx);

    // h_mid = h_in + gate1 * ao
    Tensor<T> dgate1({D});
    Tensor<T> dao(bc.ao.shape());
    for (std::size_t i = 0; i < dh_mid.rows(); ++i) {
        auto d = dh_mid.row(i);
        auto a = bc.ao.row(i);
        auto o = dao.row(i);
        for (std::size_t j = 0; j < D; ++j) {
            dgate1[j] += d[j] * a[j];
            o[j] = d[j] * gate1[j];
        }
    }
    set_segment(dmod, 2, dgate1);
    const auto datt = linear_backward(bc.att, bp.proj_w, dao, gp.proj_w, gp.proj_b);

    const T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
    Tensor<T> dqkv(bc.qkv.shape());
    for (int head = 0; head < cfg.heads; ++head) {
        const std::size_t off = static_cast<std::size_t>(head) * dh;
        const auto q = slice_cols(bc.qkv, off, dh);
        const auto k = slice_cols(bc.qkv, D + off, dh);
        const auto v = slice_cols(bc.qkv, 2 * D + off, dh);
        const auto& a = bc.attn[static_cast<std::size_t>(head)];
        const auto dout = slice_cols(datt, off, dh);
        const auto da = ops::matmul_nt(dout, v);
        const auto dv = ops::matmul_tn(a, dout);
        const auto ds = ops::scale(ops::softmax_rows_backward(a, da), inv_sqrt);
        add_into_cols(dqkv, off, ops::matmul(ds, k));
        add_into_cols(dqkv, D + off, ops::matmul_tn(ds, q));
        add_into_cols(dqkv, 2 * D + off, dv);
    }
    const auto dn1 = linear_backward(bc.n1, bp.qkv_w, dqkv, gp.qkv_w, gp.qkv_b);
    auto ln1 = ops::layer_norm_backward(dn1, bc.gamma1, bc.ln1);
    set_segment(dmod, 0, ln1.dbeta);
    set_segment(dmod, 1, ln1.dgamma);
    Tensor<T> dh_in = ops::add(dh_mid, ln1.dx);

    accumulate(d_cond_act, linear_backward(cond_act, bp.ada_w, dmod, gp.ada_w, gp.ada_b));
    return dh_in;
}

template <typename T>
Tensor<T> init_linear(Rng& rng, std::size_t fan_in, std::size_t fan_out)
{
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor<T> w({fan_in, fan_out});
    for (T& v : w.data()) {
        v = static_cast<T>(rng.uniform(-a, a));
    }
    return w;
}

}  // namespace

void ModelConfig::validate() const
{
    if (image_size < 1 || channels < 1 || patch_size < 1 || embed_dim < 1 || depth < 0 || heads < 1 ||
        num_classes < 1 || mlp_ratio < 1) {
        throw RangeError("model config fields must be positive");
    }
    if (image_size % patch_size != 0) {
        throw ShapeError("image_size must be divisible by patch_size");
    }
    if (embed_dim % heads != 0) {
        throw ShapeError("embed_dim must be divisible by heads");
    }
    if (embed_dim % 4 != 0) {
        throw ShapeError("embed_dim must be divisible by 4 for the 2-D position table");
    }
}

ClassLabel ClassLabel::of(int c)
{
    if (c < 0) {
        throw RangeError("class index must be non-negative, got " + std::to_string(c));
    }
    return ClassLabel(c);
}

int ClassLabel::table_row(const ModelConfig& config) const
{
    if (is_null()) {
        return config.num_classes;
    }
    if (value_ >= config.num_classes) {
        throw RangeError("class " + std::to_string(value_) + " out of range for " +
                         std::to_string(config.num_classes) + " classes");
    }
    return value_;
}

template <typename T>
DenoiserParams<T> DenoiserParams<T>::zeros(const ModelConfig& config)
{
    config.validate();
    const auto D = static_cast<std::size_t>(config.embed_dim);
    const auto P = static_cast<std::size_t>(config.token_dim());
    const auto H = static_cast<std::size_t>(config.mlp_hidden());
    DenoiserParams p;
    p.config = config;
    p.patch_w = Tensor<T>({P, D});
    p.patch_b = Tensor<T>({D});
    p.time_w1 = Tensor<T>({D, D});
    p.time_b1 = Tensor<T>({D});
    p.time_w2 = Tensor<T>({D, D});
    p.time_b2 = Tensor<T>({D});
    p.class_table = Tensor<T>({static_cast<std::size_t>(config.num_classes + 1), D});
    p.blocks.resize(static_cast<std::size_t>(config.depth));
    for (auto& b : p.blocks) {
        b.ada_w = Tensor<T>({D, 6 * D});
        b.ada_b = Tensor<T>({6 * D});
        b.qkv_w = Tensor<T>({D, 3 * D});
        b.qkv_b = Tensor<T>({3 * D});
        b.proj_w = Tensor<T>({D, D});
        b.proj_b = Tensor<T>({D});
        b.fc1_w = Tensor<T>({D, H});
        b.fc1_b = Tensor<T>({H});
        b.fc2_w = Tensor<T>({H, D});
        b.fc2_b = Tensor<T>({D});
    }
    p.final_ada_w = Tensor<T>({D, 2 * D});
    p.final_ada_b = Tensor<T>({2 * D});
    p.out_w = Tensor<T>({D, P});
    p.out_b = Tensor<T>({P});
    return p;
}

template <typename T>
std::size_t DenoiserParams<T>::parameter_count() const
{
    std::size_t n = 0;
    visit([&](const std::string&, const Tensor<T>& t) { n += t.size(); });
    return n;
}

template <typename T>
template <typename U>
DenoiserParams<U> DenoiserParams<T>::cast() const
{
    auto out = DenoiserParams<U>::zeros(config);
    std::vector<const Tensor<T>*> src;
    visit([&](const std::string&, const Tensor<T>& t) { src.push_back(&t); });
    std::size_t i = 0;
    out.visit([&](const std::string&, Tensor<U>& t) { t = src[i++]->template cast<U>(); });
    return out;
}

template <typename T>
DenoiserParams<T> init_params(const ModelConfig& config, std::uint64_t seed)
{
    auto p = DenoiserParams<T>::zeros(config);
    Rng rng(seed, Stream::init);
    const auto D = static_cast<std::size_t>(config.embed_dim);
    const auto P = static_cast<std::size_t>(config.token_dim());
    const auto H = static_cast<std::size_t>(config.mlp_hidden());
    p.patch_w = init_linear<T>(rng, P, D);
    p.time_w1 = rng.normal_tensor<T>({D, D}, 0.02);
    p.time_w2 = rng.normal_tensor<T>({D, D}, 0.02);
    p.class_table = rng.normal_tensor<T>(p.class_table.shape(), 0.02);
    for (auto& b : p.blocks) {
        b.qkv_w = init_linear<T>(rng, D, 3 * D);
        b.proj_w = init_linear<T>(rng, D, D);
        b.fc1_w = init_linear<T>(rng, D, H);
        b.fc2_w = init_linear<T>(rng, H, D);
    }
    return p;
}

template <typename T>
Tensor<T> forward(const DenoiserParams<T>& params, const Tensor<T>& x_t, int t, ClassLabel c,
                  ForwardCache<T>* cache)
{
    const auto& cfg = params.config;
    require_same_shape(x_t.shape(), cfg.image_shape(), "denoiser forward");
    const auto D = static_cast<std::size_t>(cfg.embed_dim);
    const int row = c.table_row(cfg);
    ForwardCache<T> local;
    ForwardCache<T>& fc = cache ? *cache : local;

    fc.tokens = patchify(x_t, cfg.patch_size);
    Tensor<T> h = ops::add(linear(fc.tokens, params.patch_w, params.patch_b),
                           position_embedding<T>(cfg.grid(), cfg.embed_dim));

    fc.temb_in = timestep_embedding<T>(t, cfg.embed_dim).reshaped({1, D});
    fc.a1 = linear(fc.temb_in, params.time_w1, params.time_b1);
    fc.s1 = ops::silu(fc.a1);
    const auto temb = linear(fc.s1, params.time_w2, params.time_b2);
    fc.class_row = row;
    Tensor<T> cemb({1, D});
    for (std::size_t j = 0; j < D; ++j) {
        cemb[j] = params.class_table.at(static_cast<std::size_t>(row), j);
    }
    fc.cond = ops::add(temb, cemb);
    fc.cond_act = ops::silu(fc.cond);

    fc.blocks.resize(params.blocks.size());
    for (std::size_t b = 0; b < params.blocks.size(); ++b) {
        h = block_forward(params.blocks[b], h, fc.cond_act, cfg, fc.blocks[b]);
    }

    fc.h_final = h;
    fc.fmod = linear(fc.cond_act, params.final_ada_w, params.final_ada_b);
    const auto shift = segment(fc.fmod, 0, D);
    fc.gammaf = one_plus(segment(fc.fmod, 1, D));
    fc.nf = ops::layer_norm(h, fc.gammaf, shift, static_cast<T>(kLayerNormEps), &fc.lnf);
    const auto out_tokens = linear(fc.nf, params.out_w, params.out_b);
    auto out = unpatchify(out_tokens, cfg.patch_size, cfg.image_size, cfg.image_size, cfg.channels);
    out.ensure_finite("denoiser forward");
    return out;
}

template <typename T>
void backward(const DenoiserParams<T>& params, const ForwardCache<T>& fc, const Tensor<T>& d_out,
              DenoiserParams<T>& grads)
{
    const auto& cfg = params.config;
    require_same_shape(d_out.shape(), cfg.image_shape(), "denoiser backward");
    const auto D = static_cast<std::size_t>(cfg.embed_dim);

    const auto d_tokens = patchify(d_out, cfg.patch_size);
    const auto dnf = linear_backward(fc.nf, params.out_w, d_tokens, grads.out_w, grads.out_b);
    auto lnf = ops::layer_norm_backward(dnf, fc.gammaf, fc.lnf);
    Tensor<T> dfmod({1, 2 * D});
    set_segment(dfmod, 0, lnf.dbeta);
    set_segment(dfmod, 1, lnf.dgamma);
    Tensor<T> d_cond_act({1, D});
    accumulate(d_cond_act,
               linear_backward(fc.cond_act, params.final_ada_w, dfmod, grads.final_ada_w, grads.final_ada_b));

    Tensor<T> dh = std::move(lnf.dx);
    for (std::size_t b = params.blocks.size(); b-- > 0;) {
        dh = block_backward(params.blocks[b], fc.blocks[b], fc.cond_act, cfg, dh, grads.blocks[b], d_cond_act);
    }

    linear_backward(fc.tokens, params.patch_w, dh, grads.patch_w, grads.patch_b);

    const auto dcond = ops::silu_backward(fc.cond, d_cond_act);
    for (std::size_t j = 0; j < D; ++j) {
        grads.class_table.at(static_cast<std::size_t>(fc.class_row), j) += dcond[j];
    }
    const auto ds1 = linear_backward(fc.s1, params.time_w2, dcond, grads.time_w2, grads.time_b2);
    const auto da1 = ops::silu_backward(fc.a1, ds1);
    linear_backward(fc.temb_in, params.time_w1, da1, grads.time_w1, grads.time_b1);
}

template struct DenoiserParams<float>;
template struct DenoiserParams<double>;
template DenoiserParams<double> DenoiserParams<float>::cast<double>() const;
template DenoiserParams<float> DenoiserParams<double>::cast<float>() const;
template DenoiserParams<float> DenoiserParams<float>::cast<float>() const;
template DenoiserParams<double> DenoiserParams<double>::cast<double>() const;
template DenoiserParams<float> init_params(const ModelConfig&, std::uint64_t);
template DenoiserParams<double> init_params(const ModelConfig&, std::uint64_t);
template Tensor<float> forward(const DenoiserParams<float>&, const Tensor<float>&, int, ClassLabel,
                               ForwardCache<float>*);
template Tensor<double> forward(const DenoiserParams<double>&, const Tensor<double>&, int, ClassLabel,
                                ForwardCache<double>*);
template void backward(const DenoiserParams<float>&, const ForwardCache<float>&, const Tensor<float>&,
                       DenoiserParams<float>&);
template void backward(const DenoiserParams<double>&, const ForwardCache<double>&, const Tensor<double>&,
                       DenoiserParams<double>&);

}  // namespace cartoondiff
