#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace caseval {

// 16-bit image, channel-interleaved row-major pixels.
struct Image16 {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint16_t> pixels;

  std::uint16_t at(int x, int y, int c = 0) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint16_t& at(int x, int y, int c = 0) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

// 8-bit image, same layout. Used for flow colorization output.
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;
};

// Encodes a 16-bit grayscale (channels==1) or RGB (channels==3) PNG.
// Throws std::invalid_argument on unsupported channel counts or empty images.
std::vector<std::uint8_t> encode_png16(const Image16& img);

// Decodes a PNG, requiring 16-bit depth and gray or RGB color type.
// Throws std::runtime_error on malformed data or unexpected bit depth.
Image16 decode_png16(const std::uint8_t* data, std::size_t size);
Image16 decode_png16(const std::vector<std::uint8_t>& bytes);

std::vector<std::uint8_t> encode_png8(const Image8& img);

void write_png16(const std::string& path, const Image16& img);
Image16 read_png16(const std::string& path);
void write_png8(const std::string& path, const Image8& img);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes);

}  // namespace caseval
