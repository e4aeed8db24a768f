#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <sstream>
#include <string>

#include "pagty/errors.hpp"

namespace pagty {

/// [batch, channels, height, width] activation tensor.
using FeatureMap = torch::Tensor;

struct Size2 {
    std::int64_t h = 0;
    std::int64_t w = 0;

    friend bool operator==(const Size2&, const Size2&) = default;
};

inline std::string to_string(const Size2& s) {
    return std::to_string(s.h) + "x" + std::to_string(s.w);
}

inline std::string shape_string(const torch::Tensor& t) {
    std::ostringstream os;
    os << t.sizes();
    return os.str();
}

inline void expect_feature_map(const torch::Tensor& x, const char* what) {
    if (!x.defined() || x.dim() != 4)
        throw ShapeError(std::string(what) + ": expected a 4-axis [B,C,H,W] tensor, got " +
                         (x.defined() ? shape_string(x) : std::string("undefined")));
}

inline Size2 spatial_size(const torch::Tensor& x) { return {x.size(2), x.size(3)}; }

namespace F = torch::nn::functional;

inline torch::Tensor bilinear_resize(const torch::Tensor& x, Size2 target) {
    return F::interpolate(x, F::InterpolateFuncOptions()
                                 .size(std::vector<std::int64_t>{target.h, target.w})
                                 .mode(torch::kBilinear)
                                 .align_corners(false));
}

/// Brings `x` to `target` resolution: identity when already there, max-pooling by an
/// integer factor when shrinking, bilinear (align_corners off) when growing by an
/// integer factor. Any other ratio falls back to bilinear interpolation and logs a warning.
inline torch::Tensor resample_to(const torch::Tensor& x, Size2 target) {
    const Size2 src = spatial_size(x);
    if (src == target) return x;
    const bool shrink_h = src.h >= target.h, shrink_w = src.w >= target.w;
    if (shrink_h && shrink_w && src.h % target.h == 0 && src.w % target.w == 0 &&
        src.h / target.h == src.w / target.w) {
        const std::int64_t k = src.h / target.h;
        return F::max_pool2d(x, F::MaxPool2dFuncOptions(k).stride(k));
    }
    const bool grow_h = target.h >= src.h, grow_w = target.w >= src.w;
    if (grow_h && grow_w && target.h % src.h == 0 && target.w % src.w == 0 &&
        target.h / src.h == target.w / src.w)
        return bilinear_resize(x, target);
    log::warn("resampling " + to_string(src) + " to " + to_string(target) +
              " is not an integer pooling/upsampling factor; using bilinear interpolation");
    return bilinear_resize(x, target);
}

}  // namespace pagty
