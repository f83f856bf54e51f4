#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace timbre {

// Minimal 8-bit grayscale PNG writer (zlib-backed).
void write_png_gray(const std::string& path, int width, int height,
                    const std::vector<uint8_t>& pixels);

}  // namespace timbre
