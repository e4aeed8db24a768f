#pragma once

// Additive attention gate and the dual-attention gate fusing pyramid, main-branch
// and transformer features.

#include <torch/torch.h>

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>

#include "pagty/conv_blocks.hpp"
#include "pagty/errors.hpp"
#include "pagty/tensor.hpp"

namespace pagty {

struct AttentionGateSpec {
    std::int64_t gate_channels = 1;
    std::int64_t feat_channels = 1;
    std::int64_t inter_channels = 0;  // 0 selects max(feat_channels / 2, 8)

    std::int64_t resolved_inter_channels() const {
        return inter_channels > 0 ? inter_channels : std::max<std::int64_t>(feat_channels / 2, 8);
    }

    void validate() const {
        if (gate_channels < 1 || feat_channels < 1)
            throw ConfigError("AttentionGate: gate/feature channels must be >= 1");
        if (inter_channels < 0) throw ConfigError("AttentionGate: inter_channels must be >= 1 (or 0 for auto)");
    }
};

struct GateOutput {
    torch::Tensor out;    // x * alpha, same shape as x
    torch::Tensor alpha;  // [B,1,H,W] coefficients in (0,1)
};

/// alpha = sigmoid(psi(relu(W_g g + W_x x + b))); output = x * alpha.
class AttentionGateImpl : public torch::nn::Module {
public:
    explicit AttentionGateImpl(const AttentionGateSpec& spec) : spec_(spec) {
        spec_.validate();
        const auto inter = spec_.resolved_inter_channels();
        w_g = register_module("w_g", torch::nn::Conv2d(torch::nn::Conv2dOptions(spec_.gate_channels, inter, 1).bias(false)));
        w_x = register_module("w_x", torch::nn::Conv2d(torch::nn::Conv2dOptions(spec_.feat_channels, inter, 1).bias(true)));
        psi = register_module("psi", torch::nn::Conv2d(torch::nn::Conv2dOptions(inter, 1, 1).bias(true)));
        torch::NoGradGuard no_grad;
        w_x->bias.zero_();
        psi->bias.zero_();
    }

    GateOutput forward_with_alpha(const torch::Tensor& g, const torch::Tensor& x) {
        expect_feature_map(g, "AttentionGate(gate)");
        expect_feature_map(x, "AttentionGate(features)");
        if (g.size(0) != x.size(0) || spatial_size(g) != spatial_size(x))
            throw ShapeError("AttentionGate: gate " + shape_string(g) + " and features " + shape_string(x) +
                             " must share batch and spatial dims");
        if (g.size(1) != spec_.gate_channels || x.size(1) != spec_.feat_channels)
            throw ConfigError("AttentionGate: expected gate/feature channels " +
                              std::to_string(spec_.gate_channels) + "/" + std::to_string(spec_.feat_channels) +
                              ", got " + std::to_string(g.size(1)) + "/" + std::to_string(x.size(1)));
        auto alpha = torch::sigmoid(psi(torch::relu(w_g(g) + w_x(x))));
        return {x * alpha, alpha};
    }

    torch::Tensor forward(const torch::Tensor& g, const torch::Tensor& x) {
        return forward_with_alpha(g, x).out;
    }

    const AttentionGateSpec& spec() const { return spec_; }

    torch::nn::Conv2d w_g{nullptr}, w_x{nullptr}, psi{nullptr};

private:
    AttentionGateSpec spec_;
};
TORCH_MODULE(AttentionGate);

/// Which features gate the transformer features in the second gate.
///   main_gates:     main features gate the transformer features (default)
///   pyramid_gates:  pyramid features gate the transformer features
enum class DagWiring { main_gates, pyramid_gates };

inline std::string to_string(DagWiring w) { return w == DagWiring::main_gates ? "main_gates" : "pyramid_gates"; }

inline DagWiring parse_dag_wiring(const std::string& s) {
    if (s == "main_gates") return DagWiring::main_gates;
    if (s == "pyramid_gates") return DagWiring::pyramid_gates;
    throw ConfigError("dag_wiring: unknown value '" + s + "' (expected main_gates|pyramid_gates)");
}

struct DualAttentionGateSpec {
    std::int64_t pyramid_channels = 1;
    std::int64_t main_channels = 1;
    std::int64_t transformer_channels = 1;
    Size2 target_resolution{};
    std::int64_t inter_channels = 0;  // shared F_int; 0 = auto per gate
    DagWiring wiring = DagWiring::main_gates;
    bool use_pyramid = true;
    bool use_transformer = true;

    void validate() const {
        if (!use_pyramid && !use_transformer)
            throw ConfigError("DualAttentionGate: at least one of the pyramid or transformer inputs must be enabled");
        if (main_channels < 1 || (use_pyramid && pyramid_channels < 1) ||
            (use_transformer && transformer_channels < 1))
            throw ConfigError("DualAttentionGate: channel counts must be >= 1");
        if (target_resolution.h < 1 || target_resolution.w < 1)
            throw ConfigError("DualAttentionGate: target_resolution must be positive");
    }

    /// Gate 1: pyramid gates main features.
    AttentionGateSpec ag_pyramid_main() const {
        return {pyramid_channels, main_channels, inter_channels};
    }

    /// Gate 2: main or pyramid features gate the transformer features.
    AttentionGateSpec ag_main_transformer() const {
        const bool pyramid_gate = wiring == DagWiring::pyramid_gates && use_pyramid;
        return {pyramid_gate ? pyramid_channels : main_channels, transformer_channels, inter_channels};
    }

    std::int64_t out_channels() const {
        return main_channels + (use_transformer ? transformer_channels : 0);
    }
};

/// Resamples the three inputs to the target resolution, gates main features by the
/// pyramid features and transformer features by the main features, and concatenates.
/// With the pyramid disabled the ungated main features take the first slot; with the
/// transformer disabled only the first gate's output is emitted.
class DualAttentionGateImpl : public torch::nn::Module {
public:
    explicit DualAttentionGateImpl(const DualAttentionGateSpec& spec) : spec_(spec) {
        spec_.validate();
        if (spec_.use_pyramid) ag1 = register_module("ag_pyramid_main", AttentionGate(spec_.ag_pyramid_main()));
        if (spec_.use_transformer)
            ag2 = register_module("ag_main_transformer", AttentionGate(spec_.ag_main_transformer()));
    }

    torch::Tensor forward(const torch::Tensor& pyr, const torch::Tensor& main, const torch::Tensor& trans) {
        expect_feature_map(main, "DualAttentionGate(main)");
        if (spec_.use_pyramid) expect_feature_map(pyr, "DualAttentionGate(pyramid)");
        if (spec_.use_transformer) expect_feature_map(trans, "DualAttentionGate(transformer)");
        const auto batch = main.size(0);
        if ((spec_.use_pyramid && pyr.size(0) != batch) || (spec_.use_transformer && trans.size(0) != batch))
            throw ShapeError("DualAttentionGate: batch sizes differ between inputs");

        const auto target = spec_.target_resolution;
        auto m = resample_to(main, target);
        torch::Tensor p = spec_.use_pyramid ? resample_to(pyr, target) : torch::Tensor();

        auto first = spec_.use_pyramid ? ag1->forward(p, m) : m;
        if (!spec_.use_transformer) return first;

        auto t = resample_to(trans, target);
        const auto& gate = (spec_.wiring == DagWiring::pyramid_gates && spec_.use_pyramid) ? p : m;
        auto second = ag2->forward(gate, t);
        return torch::cat({first, second}, 1);
    }

    const DualAttentionGateSpec& spec() const { return spec_; }

    AttentionGate ag1{nullptr}, ag2{nullptr};

private:
    DualAttentionGateSpec spec_;
};
TORCH_MODULE(DualAttentionGate);

}  // namespace pagty
