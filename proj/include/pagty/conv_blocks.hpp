#pragma once

// Residual double-convolution block (DConvB) and the cascaded pyramid
// convolution block (PConvB).
//
//   x ──conv3x3─norm─relu─conv3x3─norm──(+)──relu──> y
//   └──────────────conv1x1───────────────┘

#include <torch/torch.h>

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "pagty/errors.hpp"
#include "pagty/tensor.hpp"

namespace pagty {

enum class Normalization { batch, group, none };

inline std::string to_string(Normalization n) {
    switch (n) {
        case Normalization::batch: return "batch";
        case Normalization::group: return "group";
        case Normalization::none: return "none";
    }
    return "?";
}

inline Normalization parse_normalization(const std::string& s) {
    if (s == "batch") return Normalization::batch;
    if (s == "group") return Normalization::group;
    if (s == "none") return Normalization::none;
    throw ConfigError("normalization: unknown value '" + s + "' (expected batch|group|none)");
}

struct DConvBSpec {
    std::int64_t in_channels = 1;
    std::int64_t out_channels = 1;
    Normalization normalization = Normalization::batch;

    void validate() const {
        if (in_channels < 1 || out_channels < 1)
            throw ConfigError("DConvB: channels must be >= 1 (in=" + std::to_string(in_channels) +
                              ", out=" + std::to_string(out_channels) + ")");
    }

    /// Trainable parameters of a block built from this spec.
    std::int64_t parameter_count() const {
        const std::int64_t cin = in_channels, cout = out_channels;
        const std::int64_t convs = (cin * cout * 9 + cout) + (cout * cout * 9 + cout) + (cin * cout + cout);
        const std::int64_t norms = normalization == Normalization::none ? 0 : 2 * 2 * cout;
        return convs + norms;
    }
};

struct PConvBSpec {
    int level = 1;
    std::vector<DConvBSpec> cascade;

    void validate() const {
        if (level < 1 || level > 4)
            throw ConfigError("PConvB: level must lie in 1..4, got " + std::to_string(level));
        if (static_cast<int>(cascade.size()) != level)
            throw ConfigError("PConvB level " + std::to_string(level) + ": cascade has " +
                              std::to_string(cascade.size()) + " DConvBs, expected " +
                              std::to_string(level));
        for (std::size_t i = 0; i < cascade.size(); ++i) {
            cascade[i].validate();
            if (i + 1 < cascade.size() && cascade[i].out_channels != cascade[i + 1].in_channels)
                throw ConfigError("PConvB level " + std::to_string(level) + ": cascade[" +
                                  std::to_string(i) + "] emits " +
                                  std::to_string(cascade[i].out_channels) + " channels but cascade[" +
                                  std::to_string(i + 1) + "] expects " +
                                  std::to_string(cascade[i + 1].in_channels));
        }
    }

    std::int64_t out_channels() const { return cascade.empty() ? 0 : cascade.back().out_channels; }

    std::vector<std::int64_t> channel_schedule() const {
        std::vector<std::int64_t> s;
        if (cascade.empty()) return s;
        s.push_back(cascade.front().in_channels);
        for (const auto& c : cascade) s.push_back(c.out_channels);
        return s;
    }

    /// Doubling schedule in -> base -> 2*base -> ... with `level` blocks.
    static PConvBSpec geometric(int level, std::int64_t in_channels, std::int64_t base_width,
                                Normalization norm = Normalization::batch) {
        PConvBSpec spec;
        spec.level = level;
        std::int64_t cin = in_channels, cout = base_width;
        for (int i = 0; i < level; ++i) {
            spec.cascade.push_back({cin, cout, norm});
            cin = cout;
            cout *= 2;
        }
        return spec;
    }
};

/// Group count for GroupNorm: the largest divisor of `channels` not above 8.
inline std::int64_t group_norm_groups(std::int64_t channels) {
    for (std::int64_t g = std::min<std::int64_t>(8, channels); g > 1; --g)
        if (channels % g == 0) return g;
    return 1;
}

class NormLayerImpl : public torch::nn::Module {
public:
    NormLayerImpl(std::int64_t channels, Normalization kind) : kind_(kind) {
        switch (kind) {
            case Normalization::batch:
                bn_ = register_module("bn", torch::nn::BatchNorm2d(channels));
                break;
            case Normalization::group:
                gn_ = register_module(
                    "gn", torch::nn::GroupNorm(torch::nn::GroupNormOptions(group_norm_groups(channels), channels)));
                break;
            case Normalization::none: break;
        }
    }

    torch::Tensor forward(const torch::Tensor& x) {
        switch (kind_) {
            case Normalization::batch: return bn_->forward(x);
            case Normalization::group: return gn_->forward(x);
            case Normalization::none: return x;
        }
        return x;
    }

    /// Affine scale of the layer (undefined for Normalization::none).
    torch::Tensor scale() {
        if (bn_) return bn_->weight;
        if (gn_) return gn_->weight;
        return {};
    }

    torch::Tensor shift() {
        if (bn_) return bn_->bias;
        if (gn_) return gn_->bias;
        return {};
    }

private:
    Normalization kind_;
    torch::nn::BatchNorm2d bn_{nullptr};
    torch::nn::GroupNorm gn_{nullptr};
};
TORCH_MODULE(NormLayer);

inline torch::nn::Conv2d make_conv(std::int64_t cin, std::int64_t cout, std::int64_t kernel) {
    torch::nn::Conv2d conv(torch::nn::Conv2dOptions(cin, cout, kernel).padding(kernel / 2).bias(true));
    torch::NoGradGuard no_grad;
    torch::nn::init::kaiming_uniform_(conv->weight, 0.0, torch::kFanIn, torch::kReLU);
    conv->bias.zero_();
    return conv;
}

class DConvBImpl : public torch::nn::Module {
public:
    explicit DConvBImpl(const DConvBSpec& spec) : spec_(spec) {
        spec_.validate();
        conv1 = register_module("conv1", make_conv(spec.in_channels, spec.out_channels, 3));
        norm1 = register_module("norm1", NormLayer(spec.out_channels, spec.normalization));
        conv2 = register_module("conv2", make_conv(spec.out_channels, spec.out_channels, 3));
        norm2 = register_module("norm2", NormLayer(spec.out_channels, spec.normalization));
        skip = register_module("skip", make_conv(spec.in_channels, spec.out_channels, 1));
    }

    DConvBImpl(std::int64_t in_channels, std::int64_t out_channels,
               Normalization norm = Normalization::batch)
        : DConvBImpl(DConvBSpec{in_channels, out_channels, norm}) {}

    torch::Tensor forward(const torch::Tensor& x) {
        expect_feature_map(x, "DConvB");
        if (x.size(1) != spec_.in_channels)
            throw ConfigError("DConvB: input has " + std::to_string(x.size(1)) +
                              " channels, block expects " + std::to_string(spec_.in_channels));
        auto main = torch::relu(norm1(conv1(x)));
        main = norm2(conv2(main));
        return torch::relu(main + skip(x));
    }

    const DConvBSpec& spec() const { return spec_; }

    torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, skip{nullptr};
    NormLayer norm1{nullptr}, norm2{nullptr};

private:
    DConvBSpec spec_;
};
TORCH_MODULE(DConvB);

class PConvBImpl : public torch::nn::Module {
public:
    explicit PConvBImpl(const PConvBSpec& spec) : spec_(spec) {
        spec_.validate();
        for (std::size_t i = 0; i < spec_.cascade.size(); ++i)
            blocks_.push_back(register_module("block" + std::to_string(i), DConvB(spec_.cascade[i])));
    }

    torch::Tensor forward(torch::Tensor p) {
        for (auto& b : blocks_) p = b->forward(p);
        return p;
    }

    const PConvBSpec& spec() const { return spec_; }

private:
    PConvBSpec spec_;
    std::vector<DConvB> blocks_;
};
TORCH_MODULE(PConvB);

/// Sum of element counts of all trainable parameters of a module.
inline std::int64_t count_parameters(const torch::nn::Module& m) {
    std::int64_t n = 0;
    for (const auto& p : m.parameters())
        if (p.requires_grad()) n += p.numel();
    return n;
}

}  // namespace pagty
