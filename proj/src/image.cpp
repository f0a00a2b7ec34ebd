// Copyright Contributors to the orbitforge project
// SPDX-License-Identifier: Apache-2.0

#include "orbitforge/image.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>

namespace orbitforge::image {

namespace {

void check_shape(const Image &img) {
    if (img.width < 1 || img.height < 1 || (img.channels != 1 && img.channels != 3) ||
        img.data.size() != img.pixel_count() * static_cast<std::size_t>(img.channels)) {
        throw ContractError("image buffer does not match its shape");
    }
}

std::uint32_t bswap32(std::uint32_t v) {
    return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

std::uint32_t to_le(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        return bswap32(v);
    }
    return v;
}

} // namespace

void write_pfm(const std::string &path, const Image &img) {
    check_shape(img);
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot write image " + path);
    }
    f << (img.channels == 3 ? "PF" : "Pf") << "\n" << img.width << " " << img.height << "\n-1.0\n";
    const std::size_t c = static_cast<std::size_t>(img.channels);
    std::vector<std::uint32_t> row(static_cast<std::size_t>(img.width) * c);
    // PFM stores the bottom row first.
    for (int y = img.height - 1; y >= 0; --y) {
        const std::size_t base = static_cast<std::size_t>(y) * static_cast<std::size_t>(img.width) * c;
        for (std::size_t i = 0; i < row.size(); ++i) {
            const float v = static_cast<float>(img.data[base + i]);
            row[i] = to_le(std::bit_cast<std::uint32_t>(v));
        }
        f.write(reinterpret_cast<const char *>(row.data()), static_cast<std::streamsize>(row.size() * 4));
    }
    if (!f) {
        throw IoError("failed writing image " + path);
    }
}

Image read_pfm(const std::string &path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot read image " + path);
    }
    std::string magic;
    Image img;
    double scale = 0.0;
    f >> magic >> img.width >> img.height >> scale;
    if (!f || (magic != "PF" && magic != "Pf") || img.width < 1 || img.height < 1) {
        throw IoError("malformed PFM header in " + path);
    }
    f.get();
    img.channels = magic == "PF" ? 3 : 1;
    const bool little = scale < 0.0;
    const std::size_t c = static_cast<std::size_t>(img.channels);
    img.data.resize(img.pixel_count() * c);
    std::vector<std::uint32_t> row(static_cast<std::size_t>(img.width) * c);
    for (int y = img.height - 1; y >= 0; --y) {
        f.read(reinterpret_cast<char *>(row.data()), static_cast<std::streamsize>(row.size() * 4));
        if (!f) {
            throw IoError("truncated PFM data in " + path);
        }
        const std::size_t base = static_cast<std::size_t>(y) * static_cast<std::size_t>(img.width) * c;
        for (std::size_t i = 0; i < row.size(); ++i) {
            std::uint32_t bits = row[i];
            const bool swap = little != (std::endian::native == std::endian::little);
            if (swap) {
                bits = bswap32(bits);
            }
            img.data[base + i] = static_cast<double>(std::bit_cast<float>(bits));
        }
    }
    return img;
}

void write_ppm(const std::string &path, const Image &img) {
    check_shape(img);
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw IoError("cannot write image " + path);
    }
    f << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> bytes(img.pixel_count() * 3);
    for (std::size_t p = 0; p < img.pixel_count(); ++p) {
        for (std::size_t k = 0; k < 3; ++k) {
            const double v = img.channels == 3 ? img.data[3 * p + k] : img.data[p];
            const double clamped = std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0;
            bytes[3 * p + k] = static_cast<unsigned char>(std::lround(clamped * 255.0));
        }
    }
    f.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) {
        throw IoError("failed writing image " + path);
    }
}

Image downsample(const Image &img, int factor) {
    check_shape(img);
    if (factor < 1 || img.width % factor != 0 || img.height % factor != 0) {
        throw DomainError("downsample factor must divide the image size");
    }
    Image out;
    out.width = img.width / factor;
    out.height = img.height / factor;
    out.channels = img.channels;
    const std::size_t c = static_cast<std::size_t>(img.channels);
    out.data.assign(out.pixel_count() * c, 0.0);
    const double norm = 1.0 / static_cast<double>(factor * factor);
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            const std::size_t o = (static_cast<std::size_t>(y) * static_cast<std::size_t>(out.width) +
                                   static_cast<std::size_t>(x)) *
                                  c;
            for (int dy = 0; dy < factor; ++dy) {
                for (int dx = 0; dx < factor; ++dx) {
                    const std::size_t i =
                        (static_cast<std::size_t>(y * factor + dy) * static_cast<std::size_t>(img.width) +
                         static_cast<std::size_t>(x * factor + dx)) *
                        c;
                    for (std::size_t k = 0; k < c; ++k) {
                        out.data[o + k] += norm * img.data[i + k];
                    }
                }
            }
        }
    }
    return out;
}

} // namespace orbitforge::image
