#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "pagty/config.hpp"
#include "pagty/conv_blocks.hpp"
#include "pagty/encoder.hpp"
#include "pagty/errors.hpp"
#include "pagty/tensor.hpp"

namespace pagty {

/// Skip channels entering the decoder stage that produces level `level` (0..3).
inline std::int64_t decoder_skip_channels(const ModelConfig& c, int level) {
    if (c.skip_mode == SkipMode::two_levels) return (level == 1 || level == 2) ? c.level_width(level) : 0;
    if (level == 0) return c.level_width(0);
    return c.dag_spec(level).out_channels() + c.level_width(level);
}

/// Bilinear x2 upsampling, concatenation with the level's skips, DConvB.
class DecoderStageImpl : public torch::nn::Module {
public:
    DecoderStageImpl(std::int64_t in_channels, std::int64_t skip_channels, std::int64_t out_channels,
                     Normalization norm) {
        conv = register_module("conv", DConvB(in_channels + skip_channels, out_channels, norm));
    }

    torch::Tensor forward(const torch::Tensor& x, const std::vector<torch::Tensor>& skips) {
        auto up = bilinear_resize(x, {x.size(2) * 2, x.size(3) * 2});
        if (skips.empty()) return conv->forward(up);
        std::vector<torch::Tensor> parts{up};
        parts.insert(parts.end(), skips.begin(), skips.end());
        return conv->forward(torch::cat(parts, 1));
    }

    DConvB conv{nullptr};
};
TORCH_MODULE(DecoderStage);

class PagTransYnetImpl : public torch::nn::Module {
public:
    explicit PagTransYnetImpl(const ModelConfig& config) : config_(config) {
        config_.validate();
        encoder = register_module("encoder", Encoder(config_));
        std::int64_t in = config_.level_width(4);
        for (int level = 3; level >= 0; --level) {
            const auto out = config_.level_width(level);
            decoder.push_back(register_module("decoder" + std::to_string(level),
                                              DecoderStage(in, decoder_skip_channels(config_, level), out,
                                                           config_.normalization)));
            in = out;
        }
        head = register_module("head", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, config_.num_classes, 1)));
        if (!config_.input_mean.empty()) {
            const auto n = static_cast<std::int64_t>(config_.input_mean.size());
            mean_ = register_buffer("input_mean", torch::tensor(config_.input_mean, torch::kFloat32).reshape({1, n, 1, 1}));
            std_ = register_buffer("input_std", torch::tensor(config_.input_std, torch::kFloat32).reshape({1, n, 1, 1}));
        }
    }

    /// Per-pixel class logits [B, num_classes, H, W].
    torch::Tensor forward(const torch::Tensor& image) { return forward_with_features(image).first; }

    std::pair<torch::Tensor, EncoderOutput> forward_with_features(const torch::Tensor& image) {
        expect_feature_map(image, "model");
        auto x = image;
        if (mean_.defined()) x = (x - mean_) / std_;
        auto enc = encoder->forward(x);
        auto y = enc.bottleneck;
        for (std::size_t k = 0; k < decoder.size(); ++k) {
            const int level = 3 - static_cast<int>(k);
            y = decoder[k]->forward(y, skips_for(enc, level));
        }
        return {head(y), std::move(enc)};
    }

    const ModelConfig& config() const { return config_; }

    Encoder encoder{nullptr};
    std::vector<DecoderStage> decoder;
    torch::nn::Conv2d head{nullptr};

private:
    std::vector<torch::Tensor> skips_for(const EncoderOutput& enc, int level) const {
        if (config_.skip_mode == SkipMode::two_levels) {
            if (level == 1 || level == 2) return {enc.skips[level - 1]};
            return {};
        }
        if (level == 0) return {enc.stem};
        return {enc.fused[level - 1], enc.skips[level - 1]};
    }

    ModelConfig config_;
    torch::Tensor mean_, std_;
};
TORCH_MODULE(PagTransYnet);

/// Validates the config and builds a freshly initialized model.
inline PagTransYnet build_model(const ModelConfig& config) { return PagTransYnet(config); }

inline std::int64_t parameter_count(PagTransYnet& model) { return count_parameters(*model); }

/// Parameter names of the live model, in registration order.
inline std::vector<std::string> parameter_names(const torch::nn::Module& m) {
    std::vector<std::string> names;
    for (const auto& p : m.named_parameters()) names.push_back(p.key());
    return names;
}

}  // namespace pagty
