// Copyright Contributors to the orbitforge project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "orbitforge/common.hpp"

namespace orbitforge::image {

/// Interleaved float image, row-major from the top row, x fastest.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    Vector data;

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
};

/// Binary PFM, little-endian (scale -1). 1 or 3 channels. Values are stored as
/// 32-bit floats; non-finite values (e.g. +inf depth) survive the round trip.
void write_pfm(const std::string &path, const Image &img);
Image read_pfm(const std::string &path);

/// 8-bit binary PPM (P6) of a 3-channel image clamped to [0, 1]; single
/// channel images are written as grey.
void write_ppm(const std::string &path, const Image &img);

/// Box-filter downsample by an integer factor.
Image downsample(const Image &img, int factor);

/// Rec. 601 luma of an rgb buffer.
inline double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

} // namespace orbitforge::image
