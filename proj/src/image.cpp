#include "timbre/image.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "timbre/common.hpp"

namespace timbre {

namespace {

void put_u32_be(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(uint8_t(v >> 24));
  out.push_back(uint8_t(v >> 16));
  out.push_back(uint8_t(v >> 8));
  out.push_back(uint8_t(v));
}

void write_chunk(std::ofstream& f, const char type[4],
                 const std::vector<uint8_t>& data) {
  std::vector<uint8_t> hdr;
  put_u32_be(hdr, static_cast<uint32_t>(data.size()));
  f.write(reinterpret_cast<const char*>(hdr.data()), 4);
  f.write(type, 4);
  if (!data.empty())
    f.write(reinterpret_cast<const char*>(data.data()), data.size());
  uint32_t crc = crc32(0, reinterpret_cast<const Bytef*>(type), 4);
  if (!data.empty()) crc = crc32(crc, data.data(), data.size());
  std::vector<uint8_t> tail;
  put_u32_be(tail, crc);
  f.write(reinterpret_cast<const char*>(tail.data()), 4);
}

}  // namespace

void write_png_gray(const std::string& path, int width, int height,
                    const std::vector<uint8_t>& pixels) {
  if (width <= 0 || height <= 0 ||
      pixels.size() != static_cast<size_t>(width) * height)
    throw ShapeError("write_png_gray: pixel buffer does not match dimensions");

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write PNG: " + path);

  static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  f.write(reinterpret_cast<const char*>(sig), 8);

  std::vector<uint8_t> ihdr;
  put_u32_be(ihdr, static_cast<uint32_t>(width));
  put_u32_be(ihdr, static_cast<uint32_t>(height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(0);  // grayscale
  ihdr.push_back(0);  // deflate
  ihdr.push_back(0);  // filter method
  ihdr.push_back(0);  // no interlace
  write_chunk(f, "IHDR", ihdr);

  // filter byte 0 per scanline
  std::vector<uint8_t> raw;
  raw.reserve(static_cast<size_t>(height) * (width + 1));
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);
    raw.insert(raw.end(), pixels.begin() + static_cast<size_t>(y) * width,
               pixels.begin() + static_cast<size_t>(y + 1) * width);
  }
  uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> comp(comp_len);
  if (compress2(comp.data(), &comp_len, raw.data(),
                static_cast<uLong>(raw.size()), 9) != Z_OK)
    throw IoError("PNG deflate failed for " + path);
  comp.resize(comp_len);
  write_chunk(f, "IDAT", comp);
  write_chunk(f, "IEND", {});
  if (!f) throw IoError("short write on PNG: " + path);
}

}  // namespace timbre
