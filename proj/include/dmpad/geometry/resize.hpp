#pragma once

#include <span>
#include <vector>

#include "dmpad/core/image.hpp"
#include "dmpad/geometry/regions.hpp"

namespace dmpad::geometry {

/// Bilinear resampling of a single-channel grid with half-pixel centers:
/// source coordinate = (dst + 0.5) * in / out - 0.5, clamped to the grid.
std::vector<float> resize_bilinear(std::span<const float> src, int width, int height,
                                   int out_width, int out_height);

/// Per-channel bilinear resize of an interleaved image.
Image resize_bilinear(const Image& img, int out_width, int out_height);

/// Crops `box` (intersected with the image) and resizes it to out_w x out_h.
/// Throws ValidationError when the box does not overlap the image.
Image crop_and_resize(const Image& img, const Box& box, int out_height, int out_width);

}  // namespace dmpad::geometry
