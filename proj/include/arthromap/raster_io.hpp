#pragma once

// Raster file formats.
//
//   images  8-bit PNG, gray or RGB; intensities quantized as round(255 v).
//   depth   16-bit gray PNG holding round(10 * mm), 0 = invalid
//           (0.1 mm steps, max 6553.5 mm); or the raw float format below.
//   labels  8-bit palette PNG whose indices are class ids.
//
// Raw depth: 16-byte header {'D','P','T','H', u32 width, u32 height,
// u32 reserved = 0}, then width*height little-endian f32 mm, row-major.

#include <png.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "arthromap/raster.hpp"

namespace arthromap {

inline constexpr double kDepthPngScale = 10.0;  ///< PNG units per mm

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) {
    const bool reading = mode[0] == 'r';
    throw Error(reading ? ErrorCode::kMissingFile : ErrorCode::kIo, "cannot open " + path.string());
  }
  return f;
}

struct PngPixels {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1, 3
  int bit_depth = 8;
  bool palette = false;
  std::vector<std::uint16_t> samples;
  std::vector<png_color> palette_colors;
};

// libpng reports errors through longjmp; they come back here as a false
// return with the message in `err`.
inline bool png_read_impl(std::FILE* fp, PngPixels& out, std::string& err) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) {
    err = "png: out of memory";
    return false;
  }
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    err = "png: out of memory";
    return false;
  }
  // Heap-held so nothing on this frame is modified between setjmp and longjmp.
  const auto rows = std::make_unique<std::vector<png_bytep>>();
  const auto buffer = std::make_unique<std::vector<png_byte>>();
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    err = "png: malformed file";
    return false;
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int color_type = png_get_color_type(png, info);
  int bit_depth = png_get_bit_depth(png, info);

  out.palette = color_type == PNG_COLOR_TYPE_PALETTE;
  if (out.palette) {
    png_colorp colors = nullptr;
    int n = 0;
    if (png_get_PLTE(png, info, &colors, &n) && colors) out.palette_colors.assign(colors, colors + n);
    if (bit_depth < 8) png_set_packing(png);
    bit_depth = 8;
  } else {
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) {
      png_set_expand_gray_1_2_4_to_8(png);
      bit_depth = 8;
    }
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    if (bit_depth == 16 && std::endian::native == std::endian::little) png_set_swap(png);
  }
  png_read_update_info(png, info);
  const int channels = png_get_channels(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  buffer->resize(rowbytes * h);
  rows->resize(h);
  for (png_uint_32 y = 0; y < h; ++y) (*rows)[y] = buffer->data() + y * rowbytes;
  png_read_image(png, rows->data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  out.width = static_cast<int>(w);
  out.height = static_cast<int>(h);
  out.channels = channels;
  out.bit_depth = bit_depth;
  const std::size_t n = static_cast<std::size_t>(w) * h * channels;
  out.samples.resize(n);
  if (bit_depth == 16) {
    for (std::size_t y = 0; y < h; ++y) {
      std::memcpy(out.samples.data() + y * w * channels, (*rows)[y], static_cast<std::size_t>(w) * channels * 2);
    }
  } else {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t i = 0; i < static_cast<std::size_t>(w) * channels; ++i) {
        out.samples[y * w * channels + i] = (*rows)[y][i];
      }
    }
  }
  return true;
}

inline PngPixels read_png(const std::filesystem::path& path) {
  auto fp = open_file(path, "rb");
  PngPixels px;
  std::string err;
  if (!png_read_impl(fp.get(), px, err)) throw Error(ErrorCode::kParse, err + ": " + path.string());
  return px;
}

struct PngWriteSpec {
  int width = 0;
  int height = 0;
  int color_type = PNG_COLOR_TYPE_GRAY;
  int bit_depth = 8;
  int channels = 1;
  const std::vector<png_color>* palette = nullptr;
};

// `rows` holds big-endian samples ready for libpng.
inline bool png_write_impl(std::FILE* fp, const PngWriteSpec& spec, std::vector<png_bytep>& rows,
                           std::string& err) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) {
    err = "png: out of memory";
    return false;
  }
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    err = "png: out of memory";
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    err = "png: write failed";
    return false;
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(spec.width), static_cast<png_uint_32>(spec.height),
               spec.bit_depth, spec.color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  if (spec.palette) {
    png_set_PLTE(png, info, const_cast<png_colorp>(spec.palette->data()), static_cast<int>(spec.palette->size()));
  }
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

inline void write_png(const std::filesystem::path& path, const PngWriteSpec& spec, std::vector<png_byte>& bytes) {
  const std::size_t rowbytes = static_cast<std::size_t>(spec.width) * spec.channels * (spec.bit_depth / 8);
  std::vector<png_bytep> rows(static_cast<std::size_t>(spec.height));
  for (int y = 0; y < spec.height; ++y) rows[y] = bytes.data() + y * rowbytes;
  auto fp = open_file(path, "wb");
  std::string err;
  if (!png_write_impl(fp.get(), spec, rows, err)) throw Error(ErrorCode::kIo, err + ": " + path.string());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Color images

inline void write_image_png(const std::filesystem::path& path, const ImageBuffer& img) {
  check_image(img);
  std::vector<png_byte> bytes(img.data().size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = static_cast<png_byte>(std::lround(img.data()[i] * 255.0));
  }
  detail::PngWriteSpec spec{img.width(), img.height(),
                            img.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, 8, img.channels()};
  detail::write_png(path, spec, bytes);
}

inline ImageBuffer read_image_png(const std::filesystem::path& path) {
  auto px = detail::read_png(path);
  if (px.palette) {
    ImageBuffer img(px.width, px.height, 3);
    for (std::size_t i = 0; i < px.samples.size(); ++i) {
      const auto idx = px.samples[i];
      if (idx >= px.palette_colors.size()) throw Error(ErrorCode::kParse, "png: palette index out of range");
      const auto& c = px.palette_colors[idx];
      img.data()[3 * i + 0] = c.red / 255.0;
      img.data()[3 * i + 1] = c.green / 255.0;
      img.data()[3 * i + 2] = c.blue / 255.0;
    }
    return img;
  }
  if (px.channels == 2) px.channels = 1;  // gray+alpha is stripped by libpng
  const double scale = px.bit_depth == 16 ? 65535.0 : 255.0;
  ImageBuffer img(px.width, px.height, px.channels);
  for (std::size_t i = 0; i < px.samples.size(); ++i) img.data()[i] = px.samples[i] / scale;
  return img;
}

// ---------------------------------------------------------------------------
// Depth

inline void write_depth_png(const std::filesystem::path& path, const DepthMap& depth) {
  check_depth(depth);
  std::vector<png_byte> bytes(depth.data().size() * 2);
  for (std::size_t i = 0; i < depth.data().size(); ++i) {
    const double mm = depth.data()[i];
    long q = 0;
    if (mm > 0.0) {
      q = std::lround(mm * kDepthPngScale);
      if (q > 65535) throw Error(ErrorCode::kDomain, "depth png: value exceeds 6553.5 mm");
      q = std::max(q, 1L);
    }
    bytes[2 * i] = static_cast<png_byte>(q >> 8);
    bytes[2 * i + 1] = static_cast<png_byte>(q & 0xff);
  }
  detail::PngWriteSpec spec{depth.width(), depth.height(), PNG_COLOR_TYPE_GRAY, 16, 1};
  detail::write_png(path, spec, bytes);
}

inline DepthMap read_depth_png(const std::filesystem::path& path) {
  auto px = detail::read_png(path);
  if (px.bit_depth != 16 || px.channels != 1 || px.palette) {
    throw Error(ErrorCode::kParse, "depth png must be 16-bit single channel: " + path.string());
  }
  DepthMap depth(px.width, px.height);
  for (std::size_t i = 0; i < px.samples.size(); ++i) depth.data()[i] = px.samples[i] / kDepthPngScale;
  return depth;
}

namespace detail {

inline void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}

inline void put_f32(std::string& s, float f) { put_u32(s, std::bit_cast<std::uint32_t>(f)); }

inline float get_f32(const unsigned char* p) { return std::bit_cast<float>(get_u32(p)); }

inline std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kMissingFile, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_all(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

}  // namespace detail

inline std::string encode_depth_raw(const DepthMap& depth) {
  std::string s = "DPTH";
  detail::put_u32(s, static_cast<std::uint32_t>(depth.width()));
  detail::put_u32(s, static_cast<std::uint32_t>(depth.height()));
  detail::put_u32(s, 0);
  s.reserve(16 + depth.data().size() * 4);
  for (double v : depth.data()) detail::put_f32(s, static_cast<float>(v));
  return s;
}

inline DepthMap decode_depth_raw(const std::string& bytes) {
  if (bytes.size() < 16 || bytes.compare(0, 4, "DPTH") != 0) {
    throw Error(ErrorCode::kParse, "raw depth: bad header");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t w = detail::get_u32(p + 4);
  const std::uint32_t h = detail::get_u32(p + 8);
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (bytes.size() != 16 + 4 * n) throw Error(ErrorCode::kParse, "raw depth: payload size mismatch");
  DepthMap depth(static_cast<int>(w), static_cast<int>(h));
  for (std::size_t i = 0; i < n; ++i) depth.data()[i] = detail::get_f32(p + 16 + 4 * i);
  return depth;
}

inline void write_depth_raw(const std::filesystem::path& path, const DepthMap& depth) {
  detail::write_all(path, encode_depth_raw(depth));
}

inline DepthMap read_depth_raw(const std::filesystem::path& path) { return decode_depth_raw(detail::read_all(path)); }

/// Picks the depth codec by extension: ".png" or anything else as raw.
inline DepthMap read_depth(const std::filesystem::path& path) {
  return path.extension() == ".png" ? read_depth_png(path) : read_depth_raw(path);
}

// ---------------------------------------------------------------------------
// Labels

/// Palette stored in label PNGs; matches the mesh color convention.
inline const std::vector<png_color>& label_png_palette() {
  static const std::vector<png_color> kPalette{{0, 255, 255}, {0, 255, 0}, {255, 0, 0}, {0, 0, 255}};
  return kPalette;
}

inline void write_labels_png(const std::filesystem::path& path, const LabelMap& labels) {
  check_labels(labels);
  std::vector<png_byte> bytes(labels.data().begin(), labels.data().end());
  detail::PngWriteSpec spec{labels.width(), labels.height(), PNG_COLOR_TYPE_PALETTE, 8, 1, &label_png_palette()};
  detail::write_png(path, spec, bytes);
}

/// Accepts palette PNGs (index = class id) and 8-bit gray PNGs (value = id).
inline LabelMap read_labels_png(const std::filesystem::path& path) {
  auto px = detail::read_png(path);
  if (px.channels != 1 || px.bit_depth != 8) {
    throw Error(ErrorCode::kParse, "label png must be 8-bit indexed or gray: " + path.string());
  }
  LabelMap labels(px.width, px.height);
  for (std::size_t i = 0; i < px.samples.size(); ++i) labels.data()[i] = static_cast<std::uint8_t>(px.samples[i]);
  check_labels(labels);
  return labels;
}

}  // namespace arthromap
