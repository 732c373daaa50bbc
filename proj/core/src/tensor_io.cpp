#include "caseval/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <stdexcept>

#include "caseval/png_io.hpp"

static_assert(std::endian::native == std::endian::little,
              "tensor codec assumes a little-endian host");

namespace caseval {

std::vector<std::uint8_t> encode_tensor(const Tensor3& t) {
  const std::size_t n =
      static_cast<std::size_t>(t.width) * t.height * t.channels;
  if (t.values.size() != n) {
    throw std::invalid_argument("encode_tensor: value count does not match dims");
  }
  std::vector<std::uint8_t> out(12 + n * 4);
  std::memcpy(out.data(), &t.width, 4);
  std::memcpy(out.data() + 4, &t.height, 4);
  std::memcpy(out.data() + 8, &t.channels, 4);
  std::memcpy(out.data() + 12, t.values.data(), n * 4);
  return out;
}

Tensor3 decode_tensor(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 12) {
    throw std::runtime_error("decode_tensor: truncated header");
  }
  Tensor3 t;
  std::memcpy(&t.width, bytes.data(), 4);
  std::memcpy(&t.height, bytes.data() + 4, 4);
  std::memcpy(&t.channels, bytes.data() + 8, 4);
  const std::size_t n =
      static_cast<std::size_t>(t.width) * t.height * t.channels;
  if (bytes.size() != 12 + n * 4) {
    throw std::runtime_error("decode_tensor: payload size does not match header");
  }
  t.values.resize(n);
  std::memcpy(t.values.data(), bytes.data() + 12, n * 4);
  return t;
}

void write_tensor(const std::string& path, const Tensor3& t) {
  write_file_bytes(path, encode_tensor(t));
}

Tensor3 read_tensor(const std::string& path) {
  return decode_tensor(read_file_bytes(path));
}

}  // namespace caseval
