// SPDX-License-Identifier: Apache-2.0
//
// PNG codec (libpng) and a minimal BMP reader.

#include "lensless/image_io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

namespace lensless::detail {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

Image<double> decode_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw IoError("cannot open image: " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png: allocation failure");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("png: allocation failure");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("cannot decode image: " + path);
  }

  png_init_io(png, fp.get());
  png_read_info(png, info);

  const png_uint_32 width = png_get_image_width(png, info);
  const png_uint_32 height = png_get_image_height(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);

  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_set_strip_alpha(png);
  if (bit_depth == 16) png_set_swap(png);  // stored big-endian
  png_read_update_info(png, info);

  const int channels = png_get_channels(png, info);
  const int out_depth = png_get_bit_depth(png, info);
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("png " + path + ": unsupported channel count " + std::to_string(channels));
  }

  const std::size_t row_bytes = png_get_rowbytes(png, info);
  std::vector<std::uint8_t> raster(row_bytes * height);
  std::vector<png_bytep> rows(height);
  for (png_uint_32 i = 0; i < height; ++i) rows[i] = raster.data() + i * row_bytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image<double> img(static_cast<int>(height), static_cast<int>(width), channels);
  if (out_depth == 16) {
    const double scale = 1.0 / 65535.0;
    for (png_uint_32 i = 0; i < height; ++i) {
      const auto* row = reinterpret_cast<const std::uint16_t*>(raster.data() + i * row_bytes);
      for (png_uint_32 j = 0; j < width; ++j)
        for (int c = 0; c < channels; ++c)
          img(static_cast<int>(i), static_cast<int>(j), c) = row[j * channels + c] * scale;
    }
  } else {
    const double scale = 1.0 / 255.0;
    for (png_uint_32 i = 0; i < height; ++i) {
      const auto* row = raster.data() + i * row_bytes;
      for (png_uint_32 j = 0; j < width; ++j)
        for (int c = 0; c < channels; ++c)
          img(static_cast<int>(i), static_cast<int>(j), c) = row[j * channels + c] * scale;
    }
  }
  return img;
}

// Uncompressed 24/32-bit BI_RGB only; bottom-up and top-down layouts.
Image<double> decode_bmp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open image: " + path);
  std::uint8_t header[54];
  is.read(reinterpret_cast<char*>(header), 54);
  if (!is || header[0] != 'B' || header[1] != 'M')
    throw IoError("bmp " + path + ": bad header");
  auto rd_u32 = [&](int ofs) {
    std::uint32_t v;
    std::memcpy(&v, header + ofs, 4);
    return v;
  };
  auto rd_s32 = [&](int ofs) {
    std::int32_t v;
    std::memcpy(&v, header + ofs, 4);
    return v;
  };
  const std::uint32_t data_ofs = rd_u32(10);
  const std::int32_t w = rd_s32(18);
  std::int32_t h = rd_s32(22);
  std::uint16_t bpp;
  std::memcpy(&bpp, header + 28, 2);
  const std::uint32_t compression = rd_u32(30);
  if (compression != 0 || (bpp != 24 && bpp != 32))
    throw IoError("bmp " + path + ": only uncompressed 24/32-bit supported");
  const bool top_down = h < 0;
  if (top_down) h = -h;
  if (w <= 0 || h <= 0) throw IoError("bmp " + path + ": bad dimensions");

  const int bytes_pp = bpp / 8;
  const std::size_t row_stride = (static_cast<std::size_t>(w) * bytes_pp + 3) & ~std::size_t(3);
  std::vector<std::uint8_t> row(row_stride);
  Image<double> img(h, w, 3);
  is.seekg(data_ofs, std::ios::beg);
  for (int r = 0; r < h; ++r) {
    is.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row_stride));
    if (!is) throw IoError("bmp " + path + ": truncated pixel data");
    const int i = top_down ? r : (h - 1 - r);
    for (int j = 0; j < w; ++j) {
      const std::uint8_t* px = row.data() + static_cast<std::size_t>(j) * bytes_pp;
      img(i, j, 0) = px[2] / 255.0;  // BGR order on disk
      img(i, j, 1) = px[1] / 255.0;
      img(i, j, 2) = px[0] / 255.0;
    }
  }
  return img;
}

}  // namespace

Image<double> decode_image(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw IoError("cannot open image: " + path);
  std::uint8_t magic[8] = {0};
  probe.read(reinterpret_cast<char*>(magic), 8);
  probe.close();
  static const std::uint8_t png_sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  if (std::memcmp(magic, png_sig, 8) == 0) return decode_png(path);
  if (magic[0] == 'B' && magic[1] == 'M') return decode_bmp(path);
  throw IoError("cannot decode image (not PNG or BMP): " + path);
}

void encode_png(const Image<double>& img, const std::string& path, int bit_depth) {
  if (img.channels != 1 && img.channels != 3)
    throw ShapeError("encode_png: expected 1 or 3 channels");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw IoError("cannot write image: " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("png: allocation failure");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("png: allocation failure");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("cannot encode image: " + path);
  }

  png_init_io(png, fp.get());
  const int color_type = img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
  png_set_IHDR(png, info, img.width, img.height, bit_depth, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);

  const double maxval = bit_depth == 8 ? 255.0 : 65535.0;
  auto quant = [&](double v) {
    v = std::clamp(v, 0.0, 1.0);
    return static_cast<std::uint32_t>(std::floor(v * maxval + 0.5));
  };

  if (bit_depth == 8) {
    std::vector<std::uint8_t> row(static_cast<std::size_t>(img.width) * img.channels);
    for (int i = 0; i < img.height; ++i) {
      for (int j = 0; j < img.width; ++j)
        for (int c = 0; c < img.channels; ++c)
          row[static_cast<std::size_t>(j) * img.channels + c] =
              static_cast<std::uint8_t>(quant(img(i, j, c)));
      png_write_row(png, row.data());
    }
  } else {
    std::vector<std::uint16_t> row(static_cast<std::size_t>(img.width) * img.channels);
    for (int i = 0; i < img.height; ++i) {
      for (int j = 0; j < img.width; ++j)
        for (int c = 0; c < img.channels; ++c)
          row[static_cast<std::size_t>(j) * img.channels + c] =
              static_cast<std::uint16_t>(quant(img(i, j, c)));
      png_write_row(png, reinterpret_cast<png_bytep>(row.data()));
    }
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace lensless::detail
