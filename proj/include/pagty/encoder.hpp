#pragma once

// Tri-branch encoder: input pyramid + PConvB stack, PVT branch, and the main CNN
// branch fused level by level through dual-attention gates, topped by the ViT bottleneck.

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "pagty/attention_gates.hpp"
#include "pagty/config.hpp"
#include "pagty/conv_blocks.hpp"
#include "pagty/errors.hpp"
#include "pagty/tensor.hpp"
#include "pagty/transformer.hpp"

namespace pagty {

struct PyramidInputs {
    std::array<FeatureMap, 4> levels;
    std::array<Size2, 4> sizes;
};

/// Four bilinear copies of `image` at 1/2, 1/4, 1/8 and 1/16 resolution.
inline PyramidInputs build_pyramid(const FeatureMap& image) {
    expect_feature_map(image, "build_pyramid");
    const Size2 s = spatial_size(image);
    if (s.h % 16 != 0 || s.w % 16 != 0)
        throw InputSizeError("build_pyramid: input " + to_string(s) + " is not divisible by 16");
    PyramidInputs p;
    for (int i = 0; i < 4; ++i) {
        p.sizes[i] = {s.h >> (i + 1), s.w >> (i + 1)};
        p.levels[i] = bilinear_resize(image, p.sizes[i]);
    }
    return p;
}

struct EncoderOutput {
    FeatureMap stem;                  // full-resolution stem features
    std::array<FeatureMap, 4> fused;  // dual-attention gate outputs per level
    std::array<FeatureMap, 4> skips;  // x_1..x_4
    FeatureMap x6;                    // ViT output (undefined when the ViT is ablated)
    FeatureMap bottleneck;            // x_7
    std::optional<TransformerStages> stages;
    std::optional<PyramidInputs> pyramid;
};

class EncoderImpl : public torch::nn::Module {
public:
    explicit EncoderImpl(const ModelConfig& config) : config_(config) {
        config_.validate();
        const auto norm = config_.normalization;
        stem = register_module("stem", DConvB(config_.in_channels, config_.level_width(0), norm));
        if (config_.flags.pvt) pvt = register_module("pvt", PvtBranch(config_.pvt_spec()));
        for (int level = 1; level <= 4; ++level) {
            const auto s = std::to_string(level);
            if (config_.flags.pyr) pconvb.push_back(register_module("pconvb" + s, PConvB(config_.pconvb_spec(level))));
            auto dag_spec = config_.dag_spec(level);
            dags.push_back(register_module("dag" + s, DualAttentionGate(dag_spec)));
            level_convs.push_back(
                register_module("main" + s, DConvB(dag_spec.out_channels(), config_.level_width(level), norm)));
        }
        std::int64_t post_in = config_.bottleneck_concat_channels();
        if (config_.flags.vit) {
            vit = register_module("vit", ViTBottleneck(config_.vit_spec()));
            post_in = config_.vit.embed_dim;
        }
        post = register_module("post", DConvB(post_in, config_.level_width(4), norm));
    }

    EncoderOutput forward(const FeatureMap& image) {
        expect_feature_map(image, "encoder");
        if (spatial_size(image) != config_.input_size || image.size(1) != config_.in_channels)
            throw ShapeError("encoder: input " + shape_string(image) + " does not match configured [B," +
                             std::to_string(config_.in_channels) + "," + to_string(config_.input_size) + "]");
        EncoderOutput out;
        if (config_.flags.pyr) out.pyramid = build_pyramid(image);
        if (config_.flags.pvt) out.stages = pvt->forward(image);

        out.stem = stem->forward(image);
        auto main = out.stem;
        for (int i = 0; i < 4; ++i) {
            main = F::max_pool2d(main, F::MaxPool2dFuncOptions(2).stride(2));
            torch::Tensor pyr_feat, trans_feat;
            if (config_.flags.pyr) pyr_feat = pconvb[i]->forward(out.pyramid->levels[i]);
            if (config_.flags.pvt) trans_feat = out.stages->stages[i];
            out.fused[i] = dags[i]->forward(pyr_feat, main, trans_feat);
            main = level_convs[i]->forward(out.fused[i]);
            out.skips[i] = main;
        }

        auto x3 = F::max_pool2d(out.skips[2], F::MaxPool2dFuncOptions(2).stride(2));
        auto concat = torch::cat({out.skips[3], x3}, 1);
        if (config_.flags.vit) {
            out.x6 = vit->forward(concat);
            out.bottleneck = post->forward(out.x6);
        } else {
            out.bottleneck = post->forward(concat);
        }
        return out;
    }

    const ModelConfig& config() const { return config_; }

    DConvB stem{nullptr}, post{nullptr};
    PvtBranch pvt{nullptr};
    ViTBottleneck vit{nullptr};
    std::vector<PConvB> pconvb;
    std::vector<DualAttentionGate> dags;
    std::vector<DConvB> level_convs;

private:
    ModelConfig config_;
};
TORCH_MODULE(Encoder);

}  // namespace pagty
