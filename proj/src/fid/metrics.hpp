#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fid/losses.hpp"
#include "fid/synthetic.hpp"

namespace fid {

// Gaussian-windowed structural similarity (11x11 window, sigma 1.5,
// k1 0.01, k2 0.03, dynamic range 1.0) averaged over channels and valid
// window positions. Accepts [C,H,W] with C in {1,3}; H and W must be at
// least the window size.
double ssim(const Tensor& a, const Tensor& b);

// Mean squared error restricted to mask pixels ([1,H,W], values {0,1});
// channel-broadcast like the training loss. Plain scalar, no autodiff.
double masked_mse_metric(const Tensor& pred, const Tensor& gt, const Tensor& mask);

// Root mean squared error over all elements.
double rmse(const Tensor& a, const Tensor& b);

// Mean feature distance from the frozen random-pyramid extractor.
double feature_distance(const FeatureExtractor& fx, const Tensor& a, const Tensor& b);

struct AngularStats {
    double mean_deg = 0.0;
    double median_deg = 0.0;
    double rmse_deg = 0.0;
    double acc_11_25 = 0.0;
    double acc_22_5 = 0.0;
    double acc_30 = 0.0;
    double mean_cosine = 0.0;
};

// Per-pixel angular error between two encoded normal passes ([3,H,W] with
// components stored as (n+1)/2), evaluated inside mask ([1,H,W]). Vectors
// are decoded and re-normalized before the dot product; dots are clamped
// to [-1,1] before arccos. Throws on an empty mask.
AngularStats angular_stats(const Tensor& pred_normals, const Tensor& gt_normals,
                           const Tensor& mask);

struct PassRow {
    std::string name;
    double mse = 0.0;
    double ssim = 0.0;
    double feature_dist = 0.0;
    double mae_deg = 0.0;  // meaningful only when has_mae
    bool has_mae = false;
};

struct PassTable {
    std::vector<PassRow> rows;  // one per pass, then an "average" row
    const PassRow& average() const { return rows.back(); }
    const PassRow& row(const std::string& name) const;
};

// Per-pass metric table (mse/ssim/feature-distance per pass, angular MAE
// for the normal pass) plus an arithmetic-average row.
PassTable eval_stack(const FeatureExtractor& fx, const IntrinsicStack& pred,
                     const IntrinsicStack& gt);

// Aligned human-readable rendering of the table.
std::string format_table(const PassTable& table);
// Machine-readable line records: "<pass> <metric> <value>\n".
std::string table_records(const PassTable& table);

struct ConsistencyReport {
    double rmse = 0.0;
    double ssim = 0.0;
    double feature_dist = 0.0;
};

using DecomposeFn = std::function<IntrinsicStack(const Tensor& input_rgb)>;

// Perturb-and-render stability protocol: decompose each test image and a
// jittered copy, re-render both predicted stacks under the sample's stored
// light, and report mean RMSE / SSIM / feature distance between the two
// renders. Jitter draws are derived from `seed` per image.
ConsistencyReport self_consistency(const DecomposeFn& decompose,
                                   const std::vector<Sample>& test_set, int max_shift_px,
                                   float photometric_frac, std::uint64_t seed);

}  // namespace fid
