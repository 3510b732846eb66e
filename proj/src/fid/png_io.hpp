#pragma once

#include <string>
#include <vector>

#include "fid/synthetic.hpp"

namespace fid {

// 8-bit RGB PNG <-> [3,H,W] float tensor in [0,1]. Grayscale and alpha
// files are converted to plain RGB on read.
Tensor read_png(const std::string& path);
void write_png(const std::string& path, const Tensor& image);

// Horizontal strip of the input image and the six decomposition passes
// (albedo, normal, ao, specular, translucency, raw diffuse), separated by
// a thin white gutter, for side-by-side eyeballing.
Tensor contact_sheet(const Tensor& input_rgb, const IntrinsicStack& stack);

}  // namespace fid
