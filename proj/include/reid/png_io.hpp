#pragma once

#include <string>

#include "reid/tensor.hpp"

namespace reid {

// 8-bit RGB PNG <-> [rows, cols, 3] tensor with values in [0,1].
// The tensor's first dim maps to image rows (height), second to columns.
Tensor read_png_rgb(const std::string& path);
void write_png_rgb(const std::string& path, const Tensor& image);

}  // namespace reid
