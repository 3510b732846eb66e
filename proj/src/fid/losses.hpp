#pragma once

#include <vector>

#include "fid/model_config.hpp"
#include "fid/ops.hpp"

namespace fid {

// Masked reconstruction error: ||M ⊙ (pred − gt)||² / (channel-summed mask
// mass + 1e-6). mask is [N,1,H,W] (or [1,1,H,W]) with values in {0,1};
// the mask mass counts the channel broadcast, i.e. sum(M)·C.
Tensor masked_mse(const Tensor& pred, const Tensor& gt, const Tensor& mask);

// Fixed-seed random convolutional pyramid standing in for a pretrained
// perceptual backbone: four stages of widths 16/32/64/64, each two 3x3
// convs + ReLU followed by 2x average pooling. Weights are frozen; inputs
// still carry gradients through the feature maps.
class FeatureExtractor {
public:
    explicit FeatureExtractor(std::uint64_t seed = 0);
    std::vector<Tensor> features(const Tensor& image) const;  // one map per stage
    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::vector<Tensor> weights_;  // c0.w, c1.w per stage
};

// Sum over the 4 stages of the mean absolute feature difference.
Tensor feature_perceptual(const FeatureExtractor& fx, const Tensor& pred, const Tensor& gt);

// Sobel-gradient L1: mean |Sx*pred − Sx*gt| + mean |Sy*pred − Sy*gt|,
// kernels applied per channel with same padding.
Tensor edge_loss(const Tensor& pred, const Tensor& gt);

// Mean feature_perceptual over 3 patches of side min(128, R/2) sampled at
// identical coordinates in pred and gt; requires R >= 32.
Tensor patch_perceptual(const FeatureExtractor& fx, const Tensor& pred, const Tensor& gt, Rng& rng);

struct LossBreakdown {
    Tensor mse;
    Tensor perceptual;
    Tensor edge;
    Tensor patch;
    Tensor total;
};

// total = alpha·masked_mse + beta·feature_perceptual + gamma·edge_loss +
//         delta·patch_perceptual
LossBreakdown total_loss(const FeatureExtractor& fx, const Tensor& pred, const Tensor& gt,
                         const Tensor& mask, const LossWeights& weights, Rng& rng);

}  // namespace fid
