#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pagty/attention_gates.hpp"
#include "pagty/conv_blocks.hpp"
#include "pagty/errors.hpp"
#include "pagty/tensor.hpp"
#include "pagty/transformer.hpp"

namespace pagty {

/// Removable encoder components. The main CNN path is always present.
struct AblationFlags {
    bool pyr = true;
    bool pvt = true;
    bool vit = true;

    friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

/// Decoder skip wiring.
///   dual_feature: every stage concatenates the fused gate output and x_i of its level
///   two_levels:   only levels 1 and 2 contribute a skip (x_i alone)
enum class SkipMode { dual_feature, two_levels };

inline std::string to_string(SkipMode m) { return m == SkipMode::dual_feature ? "dual_feature" : "two_levels"; }

inline SkipMode parse_skip_mode(const std::string& s) {
    if (s == "dual_feature") return SkipMode::dual_feature;
    if (s == "two_levels") return SkipMode::two_levels;
    throw ConfigError("skip_mode: unknown value '" + s + "' (expected dual_feature|two_levels)");
}

struct VitConfig {
    std::int64_t embed_dim = 768;
    std::int64_t depth = 12;
    std::int64_t heads = 12;
    double mlp_ratio = 4.0;

    friend bool operator==(const VitConfig&, const VitConfig&) = default;
};

struct PvtConfig {
    std::array<std::int64_t, 4> channels{64, 128, 320, 512};
    std::array<std::int64_t, 4> heads{1, 2, 5, 8};
    std::array<std::int64_t, 4> depths{2, 2, 2, 2};
    std::array<std::int64_t, 4> sr_ratios{8, 4, 2, 1};
    std::array<double, 4> mlp_ratios{8, 8, 4, 4};

    friend bool operator==(const PvtConfig&, const PvtConfig&) = default;
};

struct ModelConfig {
    Size2 input_size{224, 224};
    std::int64_t in_channels = 3;
    std::int64_t num_classes = 9;
    std::int64_t base_width = 64;
    PvtConfig pvt;
    VitConfig vit;
    AblationFlags flags;
    DagWiring dag_wiring = DagWiring::main_gates;
    SkipMode skip_mode = SkipMode::dual_feature;
    Normalization normalization = Normalization::batch;
    std::int64_t ag_inter_channels = 0;  // 0: max(feat/2, 8) per gate
    std::vector<double> input_mean;      // per-channel normalization, empty = identity
    std::vector<double> input_std;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;

    /// Full-scale configuration: 224x224 input, ViT-Base bottleneck over 14x14 = 196 tokens.
    static ModelConfig full(std::int64_t num_classes = 9) {
        ModelConfig c;
        c.num_classes = num_classes;
        return c;
    }

    /// Desk-scale configuration: 64x64 input, base width 16, 4x4 token grid.
    static ModelConfig toy(std::int64_t num_classes = 3) {
        ModelConfig c;
        c.input_size = {64, 64};
        c.num_classes = num_classes;
        c.base_width = 16;
        c.pvt.channels = {16, 32, 64, 128};
        c.pvt.heads = {1, 2, 4, 8};
        c.pvt.depths = {1, 1, 1, 1};
        c.pvt.mlp_ratios = {4, 4, 4, 4};
        c.vit = {128, 2, 4, 2.0};
        return c;
    }

    /// Main-branch width of level i (1..4); level 0 is the stem.
    std::int64_t level_width(int level) const {
        return level == 0 ? base_width : base_width << (level - 1);
    }

    Size2 level_resolution(int level) const {
        return {input_size.h >> level, input_size.w >> level};
    }

    /// The bottleneck token grid sits at 1/16 of the input (14x14 for 224x224).
    Size2 token_grid() const { return level_resolution(4); }

    void validate() const {
        if (input_size.h < 32 || input_size.w < 32 || input_size.h % 32 != 0 || input_size.w % 32 != 0)
            throw ConfigError("input_size: " + to_string(input_size) + " must be positive multiples of 32");
        if (in_channels < 1) throw ConfigError("in_channels: must be >= 1");
        if (num_classes < 1) throw ConfigError("num_classes: must be >= 1");
        if (base_width < 1) throw ConfigError("base_width: must be >= 1");
        if (ag_inter_channels < 0) throw ConfigError("ag_inter_channels: must be >= 0");
        if (!flags.pyr && !flags.pvt)
            throw ConfigError("flags: disabling both pyr and pvt leaves no dual-attention gate");
        if (!input_mean.empty() && static_cast<std::int64_t>(input_mean.size()) != in_channels)
            throw ConfigError("input_mean: expected " + std::to_string(in_channels) + " entries");
        if (input_std.size() != input_mean.size())
            throw ConfigError("input_std: must have as many entries as input_mean");
        for (double s : input_std)
            if (!(s > 0)) throw ConfigError("input_std: entries must be > 0");
        pvt_spec().validate();
        vit_spec().validate();
    }

    PvtSpec pvt_spec() const {
        PvtSpec s;
        s.in_channels = in_channels;
        s.channels = pvt.channels;
        s.heads = pvt.heads;
        s.depths = pvt.depths;
        s.sr_ratios = pvt.sr_ratios;
        s.mlp_ratios = pvt.mlp_ratios;
        return s;
    }

    ViTBottleneckSpec vit_spec() const {
        return {token_grid(), bottleneck_concat_channels(), vit.embed_dim, vit.depth, vit.heads, vit.mlp_ratio};
    }

    /// Channels of concat(x_4, maxpool(x_3)).
    std::int64_t bottleneck_concat_channels() const { return level_width(4) + level_width(3); }

    DualAttentionGateSpec dag_spec(int level) const {
        DualAttentionGateSpec s;
        s.pyramid_channels = level_width(level);
        s.main_channels = level_width(level - 1);
        s.transformer_channels = pvt.channels[level - 1];
        s.target_resolution = level_resolution(level);
        s.inter_channels = ag_inter_channels;
        s.wiring = dag_wiring;
        s.use_pyramid = flags.pyr;
        s.use_transformer = flags.pvt;
        return s;
    }

    PConvBSpec pconvb_spec(int level) const {
        return PConvBSpec::geometric(level, in_channels, base_width, normalization);
    }
};

// ---------------------------------------------------------------------------
// Canonical JSON (object keys sorted by nlohmann::json). Missing keys keep defaults.

inline nlohmann::json to_json(const ModelConfig& c) {
    using nlohmann::json;
    return json{
        {"input_size", {c.input_size.h, c.input_size.w}},
        {"in_channels", c.in_channels},
        {"num_classes", c.num_classes},
        {"base_width", c.base_width},
        {"pvt", {{"channels", c.pvt.channels},
                 {"heads", c.pvt.heads},
                 {"depths", c.pvt.depths},
                 {"sr_ratios", c.pvt.sr_ratios},
                 {"mlp_ratios", c.pvt.mlp_ratios}}},
        {"vit", {{"embed_dim", c.vit.embed_dim},
                 {"depth", c.vit.depth},
                 {"heads", c.vit.heads},
                 {"mlp_ratio", c.vit.mlp_ratio}}},
        {"flags", {{"pyr", c.flags.pyr}, {"pvt", c.flags.pvt}, {"vit", c.flags.vit}}},
        {"dag_wiring", to_string(c.dag_wiring)},
        {"skip_mode", to_string(c.skip_mode)},
        {"normalization", to_string(c.normalization)},
        {"ag_inter_channels", c.ag_inter_channels},
        {"input_mean", c.input_mean},
        {"input_std", c.input_std},
    };
}

namespace detail {

template <class T>
void read_field(const nlohmann::json& j, const char* key, T& out, const std::string& prefix = "") {
    if (!j.contains(key)) return;
    try {
        j.at(key).get_to(out);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(prefix + key + ": " + e.what());
    }
}

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> known, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [k, _] : j.items()) {
        bool ok = false;
        for (const char* name : known) ok = ok || k == name;
        if (!ok) throw ConfigError(where + ": unknown field '" + k + "'");
    }
}

}  // namespace detail

inline ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig c = {}) {
    using detail::read_field;
    detail::check_keys(j, {"input_size", "in_channels", "num_classes", "base_width", "pvt", "vit", "flags",
                           "dag_wiring", "skip_mode", "normalization", "ag_inter_channels", "input_mean",
                           "input_std"},
                       "model");
    if (j.contains("input_size")) {
        std::vector<std::int64_t> s;
        read_field(j, "input_size", s);
        if (s.size() != 2) throw ConfigError("input_size: expected [H, W]");
        c.input_size = {s[0], s[1]};
    }
    read_field(j, "in_channels", c.in_channels);
    read_field(j, "num_classes", c.num_classes);
    read_field(j, "base_width", c.base_width);
    if (j.contains("pvt")) {
        const auto& p = j.at("pvt");
        detail::check_keys(p, {"channels", "heads", "depths", "sr_ratios", "mlp_ratios"}, "pvt");
        read_field(p, "channels", c.pvt.channels, "pvt.");
        read_field(p, "heads", c.pvt.heads, "pvt.");
        read_field(p, "depths", c.pvt.depths, "pvt.");
        read_field(p, "sr_ratios", c.pvt.sr_ratios, "pvt.");
        read_field(p, "mlp_ratios", c.pvt.mlp_ratios, "pvt.");
    }
    if (j.contains("vit")) {
        const auto& v = j.at("vit");
        detail::check_keys(v, {"embed_dim", "depth", "heads", "mlp_ratio"}, "vit");
        read_field(v, "embed_dim", c.vit.embed_dim, "vit.");
        read_field(v, "depth", c.vit.depth, "vit.");
        read_field(v, "heads", c.vit.heads, "vit.");
        read_field(v, "mlp_ratio", c.vit.mlp_ratio, "vit.");
    }
    if (j.contains("flags")) {
        const auto& f = j.at("flags");
        detail::check_keys(f, {"pyr", "pvt", "vit"}, "flags");
        read_field(f, "pyr", c.flags.pyr, "flags.");
        read_field(f, "pvt", c.flags.pvt, "flags.");
        read_field(f, "vit", c.flags.vit, "flags.");
    }
    std::string s;
    if (j.contains("dag_wiring")) { read_field(j, "dag_wiring", s); c.dag_wiring = parse_dag_wiring(s); }
    if (j.contains("skip_mode")) { read_field(j, "skip_mode", s); c.skip_mode = parse_skip_mode(s); }
    if (j.contains("normalization")) { read_field(j, "normalization", s); c.normalization = parse_normalization(s); }
    read_field(j, "ag_inter_channels", c.ag_inter_channels);
    read_field(j, "input_mean", c.input_mean);
    read_field(j, "input_std", c.input_std);
    return c;
}

/// Canonical text form: two-space indented JSON with sorted keys.
inline std::string canonical_text(const nlohmann::json& j) { return j.dump(2); }

}  // namespace pagty
