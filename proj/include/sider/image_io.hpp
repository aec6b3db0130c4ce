#pragma once

#include <string>

#include "sider/tensor.hpp"

namespace sider {

// 8-bit RGB PNG <-> {3,H,W} tensor in [0,1]. Non-RGB inputs (gray, palette,
// alpha) are expanded to RGB on read.
Tensor read_png(const std::string& path);
void write_png(const std::string& path, const Tensor& img);

// The [0,1]-float view of the 8-bit file a caller would get back after a
// save/load cycle. Metrics are computed on this.
Tensor quantize8(const Tensor& img);

// center-crop to square then bilinear resize
Tensor crop_resize(const Tensor& img, int resolution);

}  // namespace sider
