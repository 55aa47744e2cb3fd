#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pirf/grid.hpp"

namespace pirf {

// Minimal 8-bit grayscale PNG writer (stored deflate, no compression). The
// bytes depend only on the pixel values, so dumps rerun identically.
void write_png_gray(const std::filesystem::path& path, int width, int height,
                    const std::vector<std::uint8_t>& pixels);

// Tiles one channel of every field into a single grayscale atlas, left to
// right then top to bottom, with a 1px separator. All tiles share one
// min/max scale so brightness is comparable across samples; a constant
// channel maps to mid-gray.
void save_sample_grid(const std::filesystem::path& path, const std::vector<Field<float>>& fields,
                      int channel, int tiles_per_row);

}  // namespace pirf
