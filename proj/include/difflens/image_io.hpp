#pragma once

#include <string>
#include <vector>

#include "difflens/imaging.hpp"

namespace difflens {

/// Binary portable pixmap (P6), 8- or 16-bit per sample.
void save_ppm(const SceneImage& image, const std::string& path, int bits = 8);
SceneImage load_ppm(const std::string& path);

/// Binary portable graymap (P5), 16-bit, values scaled so the grid maximum
/// maps to 65535.
void save_pgm16(const std::vector<double>& values, int width, int height,
                const std::string& path);

/// Numeric grid as comma-separated rows.
void save_csv_grid(const std::vector<double>& values, int width, int height,
                   const std::string& path);

/// Raw little-endian float32 array plus a text side-car with the dimensions.
void save_raw_f32(const std::vector<double>& values, int width, int height, int channels,
                  const std::string& path);
std::vector<float> load_raw_f32(const std::string& path, int* width, int* height, int* channels);

} // namespace difflens
