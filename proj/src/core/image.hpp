#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/tensor.hpp"

namespace gcnet {
namespace io {

// 8-bit RGB image, rows top to bottom, interleaved channels.
struct PpmImage {
    int w = 0, h = 0;
    std::vector<std::uint8_t> rgb;
};

PpmImage read_ppm(const std::string& path);    // binary P6, maxval 255
void write_ppm(const PpmImage& img, const std::string& path);
void write_pgm(const LabelMap& labels, const std::string& path);  // binary P5, n must be 1
LabelMap read_pgm(const std::string& path);

// Planar [0,1] float tensor of shape (1, 3, h, w).
template <typename T>
Tensor4<T> ppm_to_tensor(const PpmImage& img);

template <typename T>
PpmImage tensor_to_ppm(const Tensor4<T>& x);

// Fixed palette rendering of a label map for the colorized P6 output mode.
PpmImage colorize_labels(const LabelMap& labels);

}  // namespace io
}  // namespace gcnet
