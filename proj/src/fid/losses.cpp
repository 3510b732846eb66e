#include "fid/losses.hpp"

#include <algorithm>
#include <cmath>

namespace fid {

namespace {

void check_pair(const Tensor& pred, const Tensor& gt, const char* who) {
    if (!pred.defined() || !gt.defined()) throw Error(std::string(who) + ": undefined input");
    if (pred.shape() != gt.shape())
        throw ShapeError(std::string(who) + ": shape mismatch " + shape_str(pred.shape()) +
                         " vs " + shape_str(gt.shape()));
    if (pred.rank() != 4) throw ShapeError(std::string(who) + ": expects [N,C,H,W]");
}

}  // namespace

Tensor masked_mse(const Tensor& pred, const Tensor& gt, const Tensor& mask) {
    check_pair(pred, gt, "masked_mse");
    if (mask.rank() != 4 || mask.dim(1) != 1 || mask.dim(2) != pred.dim(2) ||
        mask.dim(3) != pred.dim(3) || (mask.dim(0) != 1 && mask.dim(0) != pred.dim(0)))
        throw ShapeError("masked_mse: mask must be [N|1,1,H,W] matching the images, got " +
                         shape_str(mask.shape()));
    double mass = 0.0;
    const float* m = mask.data();
    for (std::int64_t i = 0; i < mask.numel(); ++i) {
        if (m[i] < 0.0f) throw Error("masked_mse: negative mask value");
        mass += m[i];
    }
    // Mask mass counts the channel broadcast.
    std::int64_t batch_rep = pred.dim(0) / mask.dim(0);
    double denom = mass * static_cast<double>(pred.dim(1) * batch_rep) + 1e-6;
    Tensor diff = mul(mask, sub(pred, gt));
    return scale(sum(mul(diff, diff)), 1.0 / denom);
}

FeatureExtractor::FeatureExtractor(std::uint64_t seed) : seed_(seed) {
    Rng rng(derive_seed(seed, 0xfea7));
    const int widths[4] = {16, 32, 64, 64};
    int in_ch = 3;
    for (int s = 0; s < 4; ++s) {
        int w = widths[s];
        auto make = [&](int out, int in) {
            float std_dev = std::sqrt(2.0f / static_cast<float>(in * 9));
            return Tensor::randn({out, in, 3, 3}, rng, std_dev);
        };
        weights_.push_back(make(w, in_ch));
        weights_.push_back(make(w, w));
        in_ch = w;
    }
}

std::vector<Tensor> FeatureExtractor::features(const Tensor& image) const {
    if (image.rank() != 4 || image.dim(1) != 3)
        throw ShapeError("feature extractor expects [N,3,H,W], got " + shape_str(image.shape()));
    if (image.dim(2) < 16 || image.dim(3) < 16)
        throw ShapeError("feature extractor needs resolution >= 16 for 4 pooling stages");
    std::vector<Tensor> out;
    Tensor h = image;
    for (int s = 0; s < 4; ++s) {
        h = relu(conv2d(h, weights_[2 * s], Tensor(), 1, 1));
        h = relu(conv2d(h, weights_[2 * s + 1], Tensor(), 1, 1));
        h = avg_pool2(h);
        out.push_back(h);
    }
    return out;
}

Tensor feature_perceptual(const FeatureExtractor& fx, const Tensor& pred, const Tensor& gt) {
    check_pair(pred, gt, "feature_perceptual");
    auto fp = fx.features(pred);
    auto fg = fx.features(gt);
    Tensor acc;
    for (std::size_t s = 0; s < fp.size(); ++s) {
        Tensor d = mean(abs_op(sub(fp[s], fg[s])));
        acc = acc.defined() ? add(acc, d) : d;
    }
    return acc;
}

Tensor edge_loss(const Tensor& pred, const Tensor& gt) {
    check_pair(pred, gt, "edge_loss");
    static const Tensor sx = Tensor::from({1, 1, 3, 3}, {-1, 0, 1, -2, 0, 2, -1, 0, 1});
    static const Tensor sy = Tensor::from({1, 1, 3, 3}, {-1, -2, -1, 0, 0, 0, 1, 2, 1});
    std::int64_t n = pred.dim(0), c = pred.dim(1), h = pred.dim(2), w = pred.dim(3);
    // Per-channel (depthwise) application: fold channels into the batch.
    // Borders replicate so spatially constant images have zero response.
    Tensor p = replicate_pad(reshape(pred, {n * c, 1, h, w}), 1);
    Tensor g = replicate_pad(reshape(gt, {n * c, 1, h, w}), 1);
    Tensor dx = sub(conv2d(p, sx, Tensor(), 1, 0), conv2d(g, sx, Tensor(), 1, 0));
    Tensor dy = sub(conv2d(p, sy, Tensor(), 1, 0), conv2d(g, sy, Tensor(), 1, 0));
    return add(mean(abs_op(dx)), mean(abs_op(dy)));
}

Tensor patch_perceptual(const FeatureExtractor& fx, const Tensor& pred, const Tensor& gt,
                        Rng& rng) {
    check_pair(pred, gt, "patch_perceptual");
    std::int64_t r = std::min(pred.dim(2), pred.dim(3));
    if (r < 32) throw ShapeError("patch_perceptual: resolution must be >= 32");
    // Rounded down to a multiple of 16 so the four pooling stages divide evenly.
    std::int64_t side = std::max<std::int64_t>(16, std::min<std::int64_t>(128, r / 2) / 16 * 16);
    Tensor acc;
    for (int i = 0; i < 3; ++i) {
        std::int64_t y0 = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(pred.dim(2) - side + 1)));
        std::int64_t x0 = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(pred.dim(3) - side + 1)));
        Tensor d = feature_perceptual(fx, crop2d(pred, y0, x0, side, side),
                                      crop2d(gt, y0, x0, side, side));
        acc = acc.defined() ? add(acc, d) : d;
    }
    return scale(acc, 1.0 / 3.0);
}

LossBreakdown total_loss(const FeatureExtractor& fx, const Tensor& pred, const Tensor& gt,
                         const Tensor& mask, const LossWeights& weights, Rng& rng) {
    LossBreakdown b;
    b.mse = masked_mse(pred, gt, mask);
    b.perceptual = feature_perceptual(fx, pred, gt);
    b.edge = edge_loss(pred, gt);
    b.patch = patch_perceptual(fx, pred, gt, rng);
    b.total = weighted_sum({b.mse, b.perceptual, b.edge, b.patch},
                           {weights.alpha, weights.beta, weights.gamma, weights.delta});
    return b;
}

}  // namespace fid
