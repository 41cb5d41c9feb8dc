#pragma once

#include <string>

#include "mvanet/tensor.hpp"

namespace mvanet {

// 8-bit binary portable pixmaps. Values quantize as round(v*255) on write and
// v/255 on read, so write-then-read is exactly the quantized map.
void write_ppm(const std::string& path, const Tensor& image);  // (1,3,H,W) in [0,1]
Tensor read_ppm(const std::string& path);

void write_pgm(const std::string& path, const Tensor& map);  // (1,1,H,W) in [0,1]
Tensor read_pgm(const std::string& path);

} // namespace mvanet
