#pragma once

// Minimal raster I/O: 8-bit netpbm (P2/P3/P5/P6) and PNG through libpng.

#include <png.h>

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "rsalign/error.hpp"

namespace rsalign {

/// 8-bit image with 1 (gray) or 3 (RGB) interleaved channels.
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(int x, int y, int c = 0) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

/// Three-channel 8-bit image.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  RgbImage() = default;
  RgbImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, fill) {}

  std::uint8_t* px(int x, int y) { return &rgb[(static_cast<std::size_t>(y) * width + x) * 3]; }
  const std::uint8_t* px(int x, int y) const { return &rgb[(static_cast<std::size_t>(y) * width + x) * 3]; }
};

inline RgbImage to_rgb(const Image8& img) {
  RgbImage out(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      auto* p = out.px(x, y);
      for (int c = 0; c < 3; ++c) p[c] = img.at(x, y, img.channels == 1 ? 0 : c);
    }
  }
  return out;
}

namespace detail {

inline std::vector<char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class NetpbmReader {
 public:
  NetpbmReader(const std::vector<char>& data, std::string name) : data_(data), name_(std::move(name)) {}

  int next_int() {
    skip_space();
    if (pos_ >= data_.size() || !std::isdigit(static_cast<unsigned char>(data_[pos_]))) fail("expected integer");
    long v = 0;
    while (pos_ < data_.size() && std::isdigit(static_cast<unsigned char>(data_[pos_]))) {
      v = v * 10 + (data_[pos_++] - '0');
      if (v > (1 << 24)) fail("integer out of range");
    }
    return static_cast<int>(v);
  }

  std::uint8_t next_byte() {
    if (pos_ >= data_.size()) fail("truncated pixel data");
    return static_cast<std::uint8_t>(data_[pos_++]);
  }

  void skip_single_space() {
    if (pos_ >= data_.size() || !std::isspace(static_cast<unsigned char>(data_[pos_]))) fail("bad header");
    ++pos_;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorKind::kInvalidImage, name_ + ": " + what);
  }

 private:
  void skip_space() {
    while (pos_ < data_.size()) {
      const char c = data_[pos_];
      if (c == '#') {
        while (pos_ < data_.size() && data_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<char>& data_;
  std::string name_;
  std::size_t pos_ = 2;
};

inline Image8 read_netpbm(const std::vector<char>& data, const std::string& name) {
  const char kind = data[1];
  Image8 img;
  img.channels = (kind == '3' || kind == '6') ? 3 : 1;
  NetpbmReader r(data, name);
  img.width = r.next_int();
  img.height = r.next_int();
  const int maxval = r.next_int();
  if (maxval <= 0 || maxval > 255) r.fail("only 8-bit netpbm is supported");
  if (img.width <= 0 || img.height <= 0) r.fail("zero-sized image");
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height * img.channels;
  img.pixels.resize(n);
  if (kind == '5' || kind == '6') {
    r.skip_single_space();
    for (auto& p : img.pixels) p = r.next_byte();
  } else {
    for (auto& p : img.pixels) {
      const int v = r.next_int();
      if (v > maxval) r.fail("sample exceeds maxval");
      p = static_cast<std::uint8_t>(v);
    }
  }
  return img;
}

inline Image8 read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  const std::string name = path.string();
  if (!png_image_begin_read_from_file(&image, name.c_str())) {
    throw Error(ErrorKind::kInvalidImage, name + ": " + image.message);
  }
  // Palette and gray images keep their raw 8-bit values as one channel so that
  // class-id masks survive unchanged.
  const bool gray = (image.format & PNG_FORMAT_FLAG_COLOR) == 0 && (image.format & PNG_FORMAT_FLAG_COLORMAP) == 0;
  Image8 img;
  img.width = static_cast<int>(image.width);
  img.height = static_cast<int>(image.height);
  if (gray) {
    image.format = PNG_FORMAT_GRAY;
    img.channels = 1;
  } else {
    image.format = PNG_FORMAT_RGB;
    img.channels = 3;
  }
  img.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, img.pixels.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw Error(ErrorKind::kInvalidImage, name + ": " + msg);
  }
  return img;
}

}  // namespace detail

/// Reads PNG or 8-bit netpbm, detected from the file signature.
inline Image8 read_image(const std::filesystem::path& path) {
  auto data = detail::slurp(path);
  if (data.size() >= 8 && static_cast<unsigned char>(data[0]) == 0x89 && data[1] == 'P' && data[2] == 'N' &&
      data[3] == 'G') {
    return detail::read_png(path);
  }
  if (data.size() >= 3 && data[0] == 'P' && (data[1] == '2' || data[1] == '3' || data[1] == '5' || data[1] == '6')) {
    return detail::read_netpbm(data, path.string());
  }
  throw Error(ErrorKind::kInvalidImage, path.string() + ": unsupported image format");
}

/// Binary PGM (one channel) or PPM (three channels).
inline void write_netpbm(const std::filesystem::path& path, const Image8& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << (img.channels == 1 ? "P5" : "P6") << "\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

inline void write_png(const std::filesystem::path& path, const Image8& img) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = img.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  const std::string name = path.string();
  if (!png_image_write_to_file(&image, name.c_str(), 0, img.pixels.data(), 0, nullptr)) {
    throw Error(ErrorKind::kIo, name + ": " + image.message);
  }
}

}  // namespace rsalign
