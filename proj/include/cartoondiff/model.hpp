#pragma once

// Miniature diffusion transformer that predicts the noise in X_t given the
// step index and a class label. Conditioning follows the adaLN-Zero block:
// timestep and class embeddings are summed, passed through SiLU, and mapped
// per block to shift/scale/gate vectors for the attention and MLP branches.

#include <cstdint>
#include <string>
#include <vector>

#include "cartoondiff/kernels.hpp"

namespace cartoondiff {

struct ModelConfig {
    int image_size = 32;
    int channels = 1;
    int patch_size = 4;
    int embed_dim = 64;
    int depth = 4;
    int heads = 4;
    int num_classes = 4;
    int mlp_ratio = 4;

    int grid() const { return image_size / patch_size; }
    int num_tokens() const { return grid() * grid(); }
    int token_dim() const { return patch_size * patch_size * channels; }
    int head_dim() const { return embed_dim / heads; }
    int mlp_hidden() const { return embed_dim * mlp_ratio; }
    Shape image_shape() const
    {
        return {static_cast<std::size_t>(channels), static_cast<std::size_t>(image_size),
                static_cast<std::size_t>(image_size)};
    }

    /// Throws ShapeError or RangeError when the geometry is inconsistent.
    void validate() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// A class index or the null (unconditional) class.
class ClassLabel {
public:
    static ClassLabel null() { return ClassLabel(-1); }
    static ClassLabel of(int c);

    bool is_null() const noexcept { return value_ < 0; }
    int value() const noexcept { return value_; }

    /// Row of the class embedding table; the null class uses the last row.
    int table_row(const ModelConfig& config) const;

    friend bool operator==(const ClassLabel&, const ClassLabel&) = default;

private:
    explicit ClassLabel(int v) : value_(v) { }
    int value_;
};

template <typename T>
struct BlockParams {
    Tensor<T> ada_w;   // D x 6D
    Tensor<T> ada_b;   // 6D
    Tensor<T> qkv_w;   // D x 3D
    Tensor<T> qkv_b;
    Tensor<T> proj_w;  // D x D
    Tensor<T> proj_b;
    Tensor<T> fc1_w;   // D x hidden
    Tensor<T> fc1_b;
    Tensor<T> fc2_w;   // hidden x D
    Tensor<T> fc2_b;
};

template <typename T>
struct DenoiserParams {
    ModelConfig config;
    Tensor<T> patch_w;      // token_dim x D
    Tensor<T> patch_b;
    Tensor<T> time_w1;      // D x D
    Tensor<T> time_b1;
    Tensor<T> time_w2;      // D x D
    Tensor<T> time_b2;
    Tensor<T> class_table;  // (num_classes + 1) x D, last row is the null class
    std::vector<BlockParams<T>> blocks;
    Tensor<T> final_ada_w;  // D x 2D
    Tensor<T> final_ada_b;
    Tensor<T> out_w;        // D x token_dim
    Tensor<T> out_b;

    /// All-zero parameters with the shapes implied by `config`.
    static DenoiserParams zeros(const ModelConfig& config);

    /// Calls f(name, tensor) for every parameter in a fixed order.
    template <typename F>
    void visit(F&& f)
    {
        visit_impl(*this, f);
    }

    template <typename F>
    void visit(F&& f) const
    {
        visit_impl(*this, f);
    }

    std::size_t parameter_count() const;

    template <typename U>
    DenoiserParams<U> cast() const;

private:
    template <typename Self, typename F>
    static void visit_impl(Self& self, F& f)
    {
        f("patch_w", self.patch_w);
        f("patch_b", self.patch_b);
        f("time_w1", self.time_w1);
        f("time_b1", self.time_b1);
        f("time_w2", self.time_w2);
        f("time_b2", self.time_b2);
        f("class_table", self.class_table);
        for (std::size_t i = 0; i < self.blocks.size(); ++i) {
            auto& b = self.blocks[i];
            const std::string p = "blocks." + std::to_string(i) + ".";
            f(p + "ada_w", b.ada_w);
            f(p + "ada_b", b.ada_b);
            f(p + "qkv_w", b.qkv_w);
            f(p + "qkv_b", b.qkv_b);
            f(p + "proj_w", b.proj_w);
            f(p + "proj_b", b.proj_b);
            f(p + "fc1_w", b.fc1_w);
            f(p + "fc1_b", b.fc1_b);
            f(p + "fc2_w", b.fc2_w);
            f(p + "fc2_b", b.fc2_b);
        }
        f("final_ada_w", self.final_ada_w);
        f("final_ada_b", self.final_ada_b);
        f("out_w", self.out_w);
        f("out_b", self.out_b);
    }
};

/// Fan-in scaled random weights; adaLN modulation and the output projection
/// start at zero, so the initial noise prediction is exactly 0.
template <typename T>
DenoiserParams<T> init_params(const ModelConfig& config, std::uint64_t seed);

template <typename T>
struct BlockCache {
    Tensor<T> h_in;
    Tensor<T> mod;  // 1 x 6D
    ops::LayerNormCache<T> ln1;
    Tensor<T> gamma1;
    Tensor<T> n1;
    Tensor<T> qkv;
    std::vector<Tensor<T>> attn;  // per head, N x N
    Tensor<T> att;                // heads concatenated, N x D
    Tensor<T> ao;
    Tensor<T> h_mid;
    ops::LayerNormCache<T> ln2;
    Tensor<T> gamma2;
    Tensor<T> n2;
    Tensor<T> f1;
    Tensor<T> g;
    Tensor<T> f2;
};

/// Activations retained by forward() for backward().
template <typename T>
struct ForwardCache {
    Tensor<T> tokens;
    Tensor<T> temb_in;  // 1 x D
    Tensor<T> a1;
    Tensor<T> s1;
    Tensor<T> cond;
    Tensor<T> cond_act;  // silu(cond)
    int class_row = 0;
    std::vector<BlockCache<T>> blocks;
    Tensor<T> h_final;
    Tensor<T> fmod;
    ops::LayerNormCache<T> lnf;
    Tensor<T> gammaf;
    Tensor<T> nf;
};

/// Predicted noise for x_t (C x H x W) at step t under class c.
template <typename T>
Tensor<T> forward(const DenoiserParams<T>& params, const Tensor<T>& x_t, int t, ClassLabel c,
                  ForwardCache<T>* cache = nullptr);

/// Accumulates dL/dparams into `grads` given dL/d(output image).
template <typename T>
void backward(const DenoiserParams<T>& params, const ForwardCache<T>& cache, const Tensor<T>& d_out,
              DenoiserParams<T>& grads);

}  // namespace cartoondiff
