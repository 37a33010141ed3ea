#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gcnet/grid.hpp"

namespace gcnet {

// Interleaved row-major 8-bit image; channels is 1 (gray) or 3 (RGB).
struct ImageU8 {
    int h = 0;
    int w = 0;
    int channels = 0;
    std::vector<std::uint8_t> px;
};

// Planar [c][h][w] doubles in [0,1] <-> 8-bit, value = round(255*v).
ImageU8 quantize_image(const std::vector<double>& planar, int c, int h, int w);
std::vector<double> dequantize_image(const ImageU8& img);

std::vector<std::uint8_t> encode_ppm(const ImageU8& img);  // P6, channels == 3
std::vector<std::uint8_t> encode_pgm(const ImageU8& img);  // P5, channels == 1
std::vector<std::uint8_t> encode_png(const ImageU8& img);  // 8-bit gray or RGB

// Dispatches on magic bytes; accepts P5/P6 and the PNG subset this library
// writes (8-bit gray/RGB, non-interlaced; all five row filters on read).
ImageU8 decode_image(const std::vector<std::uint8_t>& bytes);

void write_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_bytes(const std::string& path);

void write_image(const std::string& path, const ImageU8& img);  // by extension: .ppm/.pgm/.png
ImageU8 read_image(const std::string& path);

// Masks as images (value = round(255*m)) and as an exact dump: 8-byte header
// (H, W as little-endian uint32) followed by row-major little-endian doubles.
void write_mask_pgm(const std::string& path, const MaskGrid& m);
void write_mask_png(const std::string& path, const MaskGrid& m);
void write_mask_dump(const std::string& path, const MaskGrid& m);
MaskGrid read_mask_dump(const std::string& path);

}  // namespace gcnet
