#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace stein::harness {

/// 8-bit image, interleaved row-major; 1 (gray) or 3 (RGB) channels.
struct ImageU8 {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<uint8_t> pixels;

    uint8_t at(int y, int x, int c = 0) const {
        return pixels[(static_cast<size_t>(y) * width + x) * channels + c];
    }
};

/// Reads any 8/16-bit gray/palette/RGB(A) PNG as 8-bit gray or RGB.
ImageU8 read_png(const std::string& path);

void write_png(const std::string& path, const ImageU8& img);

}  // namespace stein::harness
