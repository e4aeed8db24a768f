#pragma once

#include <torch/torch.h>

#include <string>

#include "pagty/errors.hpp"
#include "pagty/tensor.hpp"

namespace pagty {

struct LossWeights {
    double cross_entropy = 1.0;
    double dice = 1.0;
    double dice_smooth = 1.0;
};

struct LossTerms {
    torch::Tensor total;
    torch::Tensor cross_entropy;
    torch::Tensor dice;
};

/// Soft Dice loss: 1 - mean over classes of (2 sum(p*y) + s) / (sum(p) + sum(y) + s).
inline torch::Tensor soft_dice_loss(const torch::Tensor& probs, const torch::Tensor& one_hot, double smooth) {
    const std::vector<std::int64_t> dims{0, 2, 3};
    auto inter = (probs * one_hot).sum(dims);
    auto denom = probs.sum(dims) + one_hot.sum(dims);
    auto dice = (2.0 * inter + smooth) / (denom + smooth);
    return 1.0 - dice.mean();
}

/// logits [B,C,H,W], target [B,H,W] integer class ids in [0, C).
inline LossTerms compute_loss_terms(const torch::Tensor& logits, const torch::Tensor& target,
                                    const LossWeights& w = {}) {
    expect_feature_map(logits, "loss(logits)");
    if (target.dim() != 3 || target.size(0) != logits.size(0) || target.size(1) != logits.size(2) ||
        target.size(2) != logits.size(3))
        throw ShapeError("loss: target " + shape_string(target) + " does not match logits " + shape_string(logits));
    const auto classes = logits.size(1);
    auto t = target.to(torch::kLong);
    if (t.numel() > 0) {
        const auto lo = t.min().item<std::int64_t>(), hi = t.max().item<std::int64_t>();
        if (lo < 0 || hi >= classes)
            throw DataError("loss: target class ids span [" + std::to_string(lo) + ", " + std::to_string(hi) +
                            "], expected [0, " + std::to_string(classes) + ")");
    }
    LossTerms terms;
    terms.cross_entropy = torch::nn::functional::cross_entropy(logits, t);
    auto probs = torch::softmax(logits, 1);
    auto one_hot = torch::nn::functional::one_hot(t, classes).permute({0, 3, 1, 2}).to(probs.dtype());
    terms.dice = soft_dice_loss(probs, one_hot, w.dice_smooth);
    terms.total = w.cross_entropy * terms.cross_entropy + w.dice * terms.dice;
    return terms;
}

inline torch::Tensor compute_loss(const torch::Tensor& logits, const torch::Tensor& target, const LossWeights& w = {}) {
    return compute_loss_terms(logits, target, w).total;
}

}  // namespace pagty
