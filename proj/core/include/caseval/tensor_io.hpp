#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace caseval {

// Dense per-pixel tensor, channel-interleaved row-major. On disk: three
// little-endian uint32 header fields (width, height, channels) followed by
// width*height*channels little-endian 32-bit floats.
struct Tensor3 {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t channels = 0;
  std::vector<float> values;

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * height;
  }
  const float* pixel(int x, int y) const {
    return values.data() +
           (static_cast<std::size_t>(y) * width + x) * channels;
  }
};

void write_tensor(const std::string& path, const Tensor3& t);
Tensor3 read_tensor(const std::string& path);

std::vector<std::uint8_t> encode_tensor(const Tensor3& t);
Tensor3 decode_tensor(const std::vector<std::uint8_t>& bytes);

}  // namespace caseval
