#pragma once

#include <vector>

#include "fid/tensor.hpp"

namespace fid {

// Binary ops broadcast NumPy-style over singleton dims (channel masks
// [N,C,1,1], spatial masks [N,1,H,W], scalars).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, float neg_slope = 0.2f);
Tensor tanh_op(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor abs_op(const Tensor& a);
// Gradient is zero where the input is clipped.
Tensor clamp(const Tensor& a, float lo, float hi);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Weighted sum of scalar ([1]) tensors, accumulated in double and rounded
// once, so the result is as tight as one float rounding allows.
Tensor weighted_sum(const std::vector<Tensor>& terms, const std::vector<double>& weights);

Tensor reshape(const Tensor& a, Shape shape);
Tensor concat_channels(const std::vector<Tensor>& parts);
Tensor slice_channels(const Tensor& a, std::int64_t begin, std::int64_t count);
Tensor crop2d(const Tensor& a, std::int64_t y0, std::int64_t x0, std::int64_t h, std::int64_t w);
// Edge-replicating border of p pixels on all four sides.
Tensor replicate_pad(const Tensor& a, std::int64_t p);

// input [N,C,H,W], weight [K,C,kh,kw] (kh,kw odd), bias [K] (optional,
// pass undefined Tensor for none).
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int pad);

// x [N,C], weight [O,C], bias [O] (optional).
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// align-corners=false sampling convention.
Tensor bilinear_resize(const Tensor& input, std::int64_t out_h, std::int64_t out_w);

// Non-overlapping 2x2 average pool; H and W must be even.
Tensor avg_pool2(const Tensor& input);

enum class PoolKind { global_avg, channel_avg, channel_max };

// global_avg -> [N,C]; channel_avg / channel_max -> [N,1,H,W].
// Max gradient routes to the first (lowest-channel) argmax.
Tensor pool_stats(const Tensor& input, PoolKind kind);

}  // namespace fid
