#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "geoseg/geometry/camera.hpp"
#include "geoseg/numerics/tensor.hpp"

namespace geoseg::gasa {

// Per-view encoder tokens as produced by the backbone stand-in: mean-pooled
// block features with the world position of the block's center pixel. Tokens
// carry their own pixel block so mask upsampling is independent of token
// order.
struct TokenGridView {
  int image_width = 0;
  int image_height = 0;
  int block = 4;
  num::Tensor<float> features;              // [n x F]
  std::vector<geom::Vec3> positions;        // world, center pixel
  std::vector<std::uint8_t> valid;          // 0 when the center depth is invalid
  std::vector<std::array<int, 4>> blocks;   // x0, y0, w, h in pixels

  std::size_t count() const { return positions.size(); }
};

}  // namespace geoseg::gasa
