#pragma once

// Transformer building blocks: multi-head attention with optional spatial reduction,
// the four-stage pyramid vision transformer branch, and the ViT bottleneck.

#include <torch/torch.h>

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pagty/errors.hpp"
#include "pagty/tensor.hpp"

namespace pagty {

namespace detail {

inline void init_linear(torch::nn::Linear& l) {
    torch::NoGradGuard no_grad;
    l->weight.normal_(0.0, 0.02).clamp_(-0.04, 0.04);
    if (l->bias.defined()) l->bias.zero_();
}

inline torch::nn::Linear linear(std::int64_t in, std::int64_t out, bool bias = true) {
    torch::nn::Linear l(torch::nn::LinearOptions(in, out).bias(bias));
    init_linear(l);
    return l;
}

/// [B,C,H,W] -> [B,H*W,C]
inline torch::Tensor to_tokens(const torch::Tensor& x) { return x.flatten(2).transpose(1, 2); }

/// [B,H*W,C] -> [B,C,H,W]
inline torch::Tensor to_map(const torch::Tensor& t, Size2 grid) {
    return t.transpose(1, 2).reshape({t.size(0), t.size(2), grid.h, grid.w});
}

}  // namespace detail

/// Multi-head self-attention. With sr_ratio > 1 keys and values come from a
/// strided-convolution reduction of the token map (spatial-reduction attention).
class AttentionImpl : public torch::nn::Module {
public:
    AttentionImpl(std::int64_t dim, std::int64_t heads, std::int64_t sr_ratio = 1)
        : dim_(dim), heads_(heads), sr_ratio_(sr_ratio) {
        if (heads < 1 || dim % heads != 0)
            throw ConfigError("Attention: dim " + std::to_string(dim) + " is not divisible by heads " +
                              std::to_string(heads));
        if (sr_ratio < 1) throw ConfigError("Attention: sr_ratio must be >= 1");
        q = register_module("q", detail::linear(dim, dim));
        kv = register_module("kv", detail::linear(dim, 2 * dim));
        proj = register_module("proj", detail::linear(dim, dim));
        if (sr_ratio > 1) {
            sr = register_module("sr", torch::nn::Conv2d(torch::nn::Conv2dOptions(dim, dim, sr_ratio).stride(sr_ratio)));
            sr_norm = register_module("sr_norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
        }
    }

    /// x: [B,N,C] tokens laid out on `grid` (N == grid.h * grid.w).
    torch::Tensor forward(const torch::Tensor& x, Size2 grid) {
        const auto B = x.size(0), N = x.size(1);
        const auto head_dim = dim_ / heads_;
        auto qh = q(x).reshape({B, N, heads_, head_dim}).permute({0, 2, 1, 3});

        torch::Tensor src = x;
        if (sr_ratio_ > 1) {
            auto m = detail::to_map(x, grid);
            if (grid.h >= sr_ratio_ && grid.w >= sr_ratio_) m = sr(m);
            else
                throw InputSizeError("spatial-reduction attention: token grid " + to_string(grid) +
                                     " is smaller than the reduction ratio " + std::to_string(sr_ratio_));
            src = sr_norm(detail::to_tokens(m));
        }
        const auto M = src.size(1);
        auto kvh = kv(src).reshape({B, M, 2, heads_, head_dim}).permute({2, 0, 3, 1, 4});
        auto k = kvh[0], v = kvh[1];

        auto attn = torch::softmax(torch::matmul(qh, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(head_dim)), -1);
        if (record_attention) last_attention = attn.detach();
        auto out = torch::matmul(attn, v).permute({0, 2, 1, 3}).reshape({B, N, dim_});
        return proj(out);
    }

    std::int64_t heads() const { return heads_; }

    torch::nn::Linear q{nullptr}, kv{nullptr}, proj{nullptr};
    torch::nn::Conv2d sr{nullptr};
    torch::nn::LayerNorm sr_norm{nullptr};

    /// Test hook: when set, forward() keeps the [B,heads,N,M] attention weights.
    bool record_attention = false;
    torch::Tensor last_attention;

private:
    std::int64_t dim_, heads_, sr_ratio_;
};
TORCH_MODULE(Attention);

/// Feed-forward with a depthwise 3x3 convolution between the two projections.
class MixFfnImpl : public torch::nn::Module {
public:
    MixFfnImpl(std::int64_t dim, std::int64_t hidden) {
        fc1 = register_module("fc1", detail::linear(dim, hidden));
        dwconv = register_module("dwconv", torch::nn::Conv2d(torch::nn::Conv2dOptions(hidden, hidden, 3).padding(1).groups(hidden)));
        fc2 = register_module("fc2", detail::linear(hidden, dim));
    }

    torch::Tensor forward(const torch::Tensor& x, Size2 grid) {
        auto h = fc1(x);
        h = detail::to_tokens(dwconv(detail::to_map(h, grid)));
        return fc2(torch::gelu(h));
    }

    torch::nn::Linear fc1{nullptr}, fc2{nullptr};
    torch::nn::Conv2d dwconv{nullptr};
};
TORCH_MODULE(MixFfn);

class PvtBlockImpl : public torch::nn::Module {
public:
    PvtBlockImpl(std::int64_t dim, std::int64_t heads, std::int64_t sr_ratio, double mlp_ratio) {
        norm1 = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
        attn = register_module("attn", Attention(dim, heads, sr_ratio));
        norm2 = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
        mlp = register_module("mlp", MixFfn(dim, static_cast<std::int64_t>(std::llround(dim * mlp_ratio))));
    }

    torch::Tensor forward(torch::Tensor x, Size2 grid) {
        x = x + attn->forward(norm1(x), grid);
        return x + mlp->forward(norm2(x), grid);
    }

    torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr};
    Attention attn{nullptr};
    MixFfn mlp{nullptr};
};
TORCH_MODULE(PvtBlock);

/// Overlapping patch embedding: strided conv with kernel larger than stride, then LayerNorm.
class PatchEmbedImpl : public torch::nn::Module {
public:
    PatchEmbedImpl(std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t stride) {
        conv = register_module("conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, kernel).stride(stride).padding(kernel / 2)));
        norm = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({out})));
    }

    /// Returns tokens and the grid they live on.
    std::pair<torch::Tensor, Size2> forward(const torch::Tensor& x) {
        auto m = conv(x);
        const Size2 grid = spatial_size(m);
        return {norm(detail::to_tokens(m)), grid};
    }

    torch::nn::Conv2d conv{nullptr};
    torch::nn::LayerNorm norm{nullptr};
};
TORCH_MODULE(PatchEmbed);

struct PvtSpec {
    std::int64_t in_channels = 3;
    std::array<std::int64_t, 4> channels{64, 128, 320, 512};
    std::array<std::int64_t, 4> heads{1, 2, 5, 8};
    std::array<std::int64_t, 4> depths{2, 2, 2, 2};
    std::array<std::int64_t, 4> sr_ratios{8, 4, 2, 1};
    std::array<double, 4> mlp_ratios{8, 8, 4, 4};

    static constexpr std::array<std::int64_t, 4> strides{4, 8, 16, 32};

    void validate() const {
        if (in_channels < 1) throw ConfigError("pvt: in_channels must be >= 1");
        for (int i = 0; i < 4; ++i) {
            const auto s = std::to_string(i + 1);
            if (channels[i] < 1) throw ConfigError("pvt.channels[" + s + "] must be >= 1");
            if (i > 0 && channels[i] < channels[i - 1])
                throw ConfigError("pvt.channels must be non-decreasing across stages");
            if (heads[i] < 1 || channels[i] % heads[i] != 0)
                throw ConfigError("pvt stage " + s + ": channels " + std::to_string(channels[i]) +
                                  " not divisible by heads " + std::to_string(heads[i]));
            if (depths[i] < 1) throw ConfigError("pvt.depths[" + s + "] must be >= 1");
            if (sr_ratios[i] < 1) throw ConfigError("pvt.sr_ratios[" + s + "] must be >= 1");
            if (!(mlp_ratios[i] > 0)) throw ConfigError("pvt.mlp_ratios[" + s + "] must be > 0");
        }
    }
};

struct TransformerStages {
    std::array<FeatureMap, 4> stages;
    std::array<std::int64_t, 4> strides = PvtSpec::strides;
    std::array<std::int64_t, 4> channels{};
};

class PvtBranchImpl : public torch::nn::Module {
public:
    explicit PvtBranchImpl(const PvtSpec& spec) : spec_(spec) {
        spec_.validate();
        std::int64_t in = spec_.in_channels;
        for (int i = 0; i < 4; ++i) {
            const auto s = std::to_string(i + 1);
            const std::int64_t kernel = i == 0 ? 7 : 3, stride = i == 0 ? 4 : 2;
            embeds_.push_back(register_module("patch_embed" + s, PatchEmbed(in, spec_.channels[i], kernel, stride)));
            torch::nn::ModuleList blocks;
            for (std::int64_t d = 0; d < spec_.depths[i]; ++d)
                blocks->push_back(PvtBlock(spec_.channels[i], spec_.heads[i], spec_.sr_ratios[i], spec_.mlp_ratios[i]));
            blocks_.push_back(register_module("block" + s, blocks));
            norms_.push_back(register_module("norm" + s, torch::nn::LayerNorm(torch::nn::LayerNormOptions({spec_.channels[i]}))));
            in = spec_.channels[i];
        }
    }

    TransformerStages forward(const torch::Tensor& image) {
        expect_feature_map(image, "PVT branch");
        if (image.size(2) % 32 != 0 || image.size(3) % 32 != 0)
            throw InputSizeError("PVT branch: input " + to_string(spatial_size(image)) +
                                 " is not divisible by 32");
        TransformerStages out;
        auto x = image;
        for (int i = 0; i < 4; ++i) {
            auto [tokens, grid] = embeds_[i]->forward(x);
            for (auto& b : *blocks_[i]) tokens = b->as<PvtBlock>()->forward(tokens, grid);
            x = detail::to_map(norms_[i](tokens), grid);
            out.stages[i] = x;
            out.channels[i] = spec_.channels[i];
        }
        return out;
    }

    const PvtSpec& spec() const { return spec_; }

private:
    PvtSpec spec_;
    std::vector<PatchEmbed> embeds_;
    std::vector<torch::nn::ModuleList> blocks_;
    std::vector<torch::nn::LayerNorm> norms_;
};
TORCH_MODULE(PvtBranch);

struct ViTBottleneckSpec {
    Size2 token_grid{14, 14};
    std::int64_t in_channels = 1;
    std::int64_t embed_dim = 768;
    std::int64_t depth = 12;
    std::int64_t heads = 12;
    double mlp_ratio = 4.0;

    std::int64_t token_count() const { return token_grid.h * token_grid.w; }

    void validate() const {
        if (token_grid.h < 1 || token_grid.w < 1) throw ConfigError("vit: token grid must be positive");
        if (in_channels < 1) throw ConfigError("vit: in_channels must be >= 1");
        if (embed_dim < 1 || depth < 1 || heads < 1) throw ConfigError("vit: embed_dim, depth and heads must be >= 1");
        if (embed_dim % heads != 0)
            throw ConfigError("vit: embed_dim " + std::to_string(embed_dim) + " not divisible by heads " +
                              std::to_string(heads));
        if (!(mlp_ratio > 0)) throw ConfigError("vit: mlp_ratio must be > 0");
    }
};

/// Pre-norm transformer encoder layer.
class ViTLayerImpl : public torch::nn::Module {
public:
    ViTLayerImpl(std::int64_t dim, std::int64_t heads, double mlp_ratio) {
        const auto hidden = static_cast<std::int64_t>(std::llround(dim * mlp_ratio));
        norm1 = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
        attn = register_module("attn", Attention(dim, heads, 1));
        norm2 = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
        fc1 = register_module("fc1", detail::linear(dim, hidden));
        fc2 = register_module("fc2", detail::linear(hidden, dim));
    }

    torch::Tensor forward(torch::Tensor x, Size2 grid) {
        x = x + attn->forward(norm1(x), grid);
        return x + fc2(torch::gelu(fc1(norm2(x))));
    }

    torch::nn::LayerNorm norm1{nullptr}, norm2{nullptr};
    Attention attn{nullptr};
    torch::nn::Linear fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(ViTLayer);

/// 1x1 projection to embed_dim, flatten to tokens, add learned positional embedding
/// (no class token), run `depth` encoder layers, reshape back to the token grid.
class ViTBottleneckImpl : public torch::nn::Module {
public:
    explicit ViTBottleneckImpl(const ViTBottleneckSpec& spec) : spec_(spec) {
        spec_.validate();
        proj = register_module("proj", torch::nn::Conv2d(torch::nn::Conv2dOptions(spec_.in_channels, spec_.embed_dim, 1)));
        pos_embed = register_parameter("pos_embed", torch::zeros({1, spec_.token_count(), spec_.embed_dim}));
        {
            torch::NoGradGuard no_grad;
            pos_embed.normal_(0.0, 0.02).clamp_(-0.04, 0.04);
        }
        for (std::int64_t d = 0; d < spec_.depth; ++d)
            layers->push_back(ViTLayer(spec_.embed_dim, spec_.heads, spec_.mlp_ratio));
        layers = register_module("layers", layers);
        norm = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({spec_.embed_dim})));
    }

    torch::Tensor forward(const torch::Tensor& x) {
        expect_feature_map(x, "ViT bottleneck");
        if (spatial_size(x) != spec_.token_grid)
            throw ShapeError("ViT bottleneck: input grid " + to_string(spatial_size(x)) + " != token grid " +
                             to_string(spec_.token_grid));
        if (x.size(1) != spec_.in_channels)
            throw ConfigError("ViT bottleneck: input has " + std::to_string(x.size(1)) + " channels, expected " +
                              std::to_string(spec_.in_channels));
        auto tokens = detail::to_tokens(proj(x));
        last_token_count = tokens.size(1);
        tokens = tokens + pos_embed;
        for (auto& l : *layers) tokens = l->as<ViTLayer>()->forward(tokens, spec_.token_grid);
        return detail::to_map(norm(tokens), spec_.token_grid);
    }

    const ViTBottleneckSpec& spec() const { return spec_; }

    std::vector<Attention> attention_layers() {
        std::vector<Attention> out;
        for (auto& l : *layers) out.push_back(l->as<ViTLayer>()->attn);
        return out;
    }

    torch::nn::Conv2d proj{nullptr};
    torch::Tensor pos_embed;
    torch::nn::ModuleList layers;
    torch::nn::LayerNorm norm{nullptr};

    /// Number of tokens seen by the last forward pass.
    std::int64_t last_token_count = 0;

private:
    ViTBottleneckSpec spec_;
};
TORCH_MODULE(ViTBottleneck);

}  // namespace pagty
