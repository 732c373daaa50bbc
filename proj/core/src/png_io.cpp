#include "caseval/png_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace caseval {

namespace {

struct MemReader {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos;
};

void mem_read(png_structp png, png_bytep out, png_size_t n) {
  auto* r = static_cast<MemReader*>(png_get_io_ptr(png));
  if (r->pos + n > r->size) {
    png_error(png, "read past end of PNG buffer");
  }
  std::memcpy(out, r->data + r->pos, n);
  r->pos += n;
}

void mem_write(png_structp png, png_bytep data, png_size_t n) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + n);
}

void mem_flush(png_structp) {}

void error_fn(png_structp png, png_const_charp msg) {
  // Stash the message, then longjmp back to the guarded scope.
  auto* err = static_cast<std::string*>(png_get_error_ptr(png));
  if (err) *err = msg;
  longjmp(png_jmpbuf(png), 1);
}

void warning_fn(png_structp, png_const_charp) {}

}  // namespace

std::vector<std::uint8_t> encode_png16(const Image16& img) {
  if (img.width <= 0 || img.height <= 0) {
    throw std::invalid_argument("encode_png16: empty image");
  }
  if (img.channels != 1 && img.channels != 3) {
    throw std::invalid_argument("encode_png16: channels must be 1 or 3");
  }
  if (img.pixels.size() !=
      static_cast<std::size_t>(img.width) * img.height * img.channels) {
    throw std::invalid_argument("encode_png16: pixel buffer size mismatch");
  }

  std::vector<std::uint8_t> out;
  std::string err;
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, error_fn, warning_fn);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }

  // PNG stores 16-bit samples big-endian; pack rows explicitly.
  std::vector<std::uint8_t> rowbuf;
  std::vector<png_bytep> rows(img.height);

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("PNG encode failed: " + err);
  }

  png_set_write_fn(png, &out, mem_write, mem_flush);
  const int color =
      img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, img.width, img.height, 16, color,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  const std::size_t row_bytes =
      static_cast<std::size_t>(img.width) * img.channels * 2;
  rowbuf.resize(row_bytes * img.height);
  for (int y = 0; y < img.height; ++y) {
    std::uint8_t* dst = rowbuf.data() + row_bytes * y;
    const std::uint16_t* src =
        img.pixels.data() + static_cast<std::size_t>(y) * img.width * img.channels;
    for (std::size_t i = 0;
         i < static_cast<std::size_t>(img.width) * img.channels; ++i) {
      dst[2 * i] = static_cast<std::uint8_t>(src[i] >> 8);
      dst[2 * i + 1] = static_cast<std::uint8_t>(src[i] & 0xff);
    }
    rows[y] = dst;
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

Image16 decode_png16(const std::uint8_t* data, std::size_t size) {
  if (size < 8 || png_sig_cmp(data, 0, 8) != 0) {
    throw std::runtime_error("decode_png16: not a PNG file");
  }
  std::string err;
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, error_fn, warning_fn);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }

  MemReader reader{data, size, 0};
  Image16 img;
  std::vector<std::uint8_t> rowbuf;
  std::vector<png_bytep> rows;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("PNG decode failed: " + err);
  }

  png_set_read_fn(png, &reader, mem_read);
  png_read_info(png, info);

  const int bit_depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (bit_depth != 16) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("decode_png16: expected 16-bit PNG, got bit depth " +
                             std::to_string(bit_depth));
  }
  if (color != PNG_COLOR_TYPE_GRAY && color != PNG_COLOR_TYPE_RGB) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("decode_png16: expected grayscale or RGB color type");
  }

  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.channels = color == PNG_COLOR_TYPE_GRAY ? 1 : 3;
  if (img.width <= 0 || img.height <= 0) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("decode_png16: zero image dimensions");
  }

  const std::size_t row_bytes =
      static_cast<std::size_t>(img.width) * img.channels * 2;
  rowbuf.resize(row_bytes * img.height);
  rows.resize(img.height);
  for (int y = 0; y < img.height; ++y) {
    rows[y] = rowbuf.data() + row_bytes * y;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    img.pixels[i] = static_cast<std::uint16_t>((rowbuf[2 * i] << 8) | rowbuf[2 * i + 1]);
  }
  return img;
}

Image16 decode_png16(const std::vector<std::uint8_t>& bytes) {
  return decode_png16(bytes.data(), bytes.size());
}

std::vector<std::uint8_t> encode_png8(const Image8& img) {
  if (img.width <= 0 || img.height <= 0) {
    throw std::invalid_argument("encode_png8: empty image");
  }
  if (img.channels != 1 && img.channels != 3) {
    throw std::invalid_argument("encode_png8: channels must be 1 or 3");
  }

  std::vector<std::uint8_t> out;
  std::string err;
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, error_fn, warning_fn);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }

  std::vector<png_bytep> rows(img.height);

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("PNG encode failed: " + err);
  }

  png_set_write_fn(png, &out, mem_write, mem_flush);
  const int color =
      img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, img.width, img.height, 8, color, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t row_bytes =
      static_cast<std::size_t>(img.width) * img.channels;
  for (int y = 0; y < img.height; ++y) {
    rows[y] = const_cast<png_bytep>(img.pixels.data() + row_bytes * y);
  }
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

void write_png16(const std::string& path, const Image16& img) {
  write_file_bytes(path, encode_png16(img));
}

Image16 read_png16(const std::string& path) {
  return decode_png16(read_file_bytes(path));
}

void write_png8(const std::string& path, const Image8& img) {
  write_file_bytes(path, encode_png8(img));
}

}  // namespace caseval
