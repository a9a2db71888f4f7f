#pragma once

#include <string>
#include <vector>

#include "seda/tensor.hpp"

namespace seda {

// Writes a binary PGM (P5, maxval 255). Values are mapped linearly from the
// grid's own [min, max] range; multi-channel images are averaged to grey.
void write_pgm(const std::string& path, const Tensor<float>& image);

// Tiles a grid of equally-sized HWC images, rows x cols in row-major order.
Tensor<float> tile_grid(const std::vector<Tensor<float>>& images, int cols);

} // namespace seda
