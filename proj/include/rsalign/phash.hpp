#pragma once

// 64-bit DCT perceptual hash.
//
// luma (0.299 R + 0.587 G + 0.114 B) -> 32x32 area-average resample ->
// orthonormal 2-D DCT-II -> 8x8 lowest-frequency block. The DC term is
// replaced by the median m of the 63 AC terms; bit i is set iff coefficient i
// exceeds m by more than kPhashFloor. Bits are stored MSB-first in row-major
// order of the 8x8 block (vertical frequency major).

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "rsalign/error.hpp"
#include "rsalign/image_io.hpp"

namespace rsalign {

inline constexpr int kPhashSide = 32;
inline constexpr int kPhashBlock = 8;
/// Dead band in DCT units (gray levels, orthonormal scaling) so that flat
/// images do not hash float round-off.
inline constexpr double kPhashFloor = 0.5;

struct PerceptualHash {
  std::uint64_t bits = 0;
  std::string image_id;
};

inline int hamming(std::uint64_t a, std::uint64_t b) { return std::popcount(a ^ b); }
inline int hamming(const PerceptualHash& a, const PerceptualHash& b) { return hamming(a.bits, b.bits); }

namespace detail {

/// Area-weighted resample of a float plane to side x side.
inline std::vector<double> box_resample(const std::vector<double>& src, int w, int h, int side) {
  // Per-axis overlap weights: out cell o covers [o*w/side, (o+1)*w/side).
  auto weights = [side](int n) {
    std::vector<std::vector<std::pair<int, double>>> table(static_cast<std::size_t>(side));
    const double scale = static_cast<double>(n) / side;
    for (int o = 0; o < side; ++o) {
      const double lo = o * scale, hi = (o + 1) * scale;
      for (int s = static_cast<int>(std::floor(lo)); s < n && s < hi; ++s) {
        const double overlap = std::min(hi, s + 1.0) - std::max(lo, static_cast<double>(s));
        if (overlap > 0) table[static_cast<std::size_t>(o)].push_back({s, overlap / scale});
      }
    }
    return table;
  };
  const auto wx = weights(w);
  const auto wy = weights(h);
  std::vector<double> out(static_cast<std::size_t>(side) * side, 0.0);
  for (int oy = 0; oy < side; ++oy) {
    for (int ox = 0; ox < side; ++ox) {
      double acc = 0.0;
      for (auto [sy, fy] : wy[static_cast<std::size_t>(oy)]) {
        for (auto [sx, fx] : wx[static_cast<std::size_t>(ox)]) {
          acc += fy * fx * src[static_cast<std::size_t>(sy) * w + sx];
        }
      }
      out[static_cast<std::size_t>(oy) * side + ox] = acc;
    }
  }
  return out;
}

inline const std::array<double, kPhashBlock * kPhashSide>& dct_basis() {
  static const auto table = [] {
    std::array<double, kPhashBlock * kPhashSide> t{};
    for (int u = 0; u < kPhashBlock; ++u) {
      const double alpha = u == 0 ? std::sqrt(1.0 / kPhashSide) : std::sqrt(2.0 / kPhashSide);
      for (int x = 0; x < kPhashSide; ++x) {
        t[static_cast<std::size_t>(u * kPhashSide + x)] =
            alpha * std::cos(std::numbers::pi * (2 * x + 1) * u / (2.0 * kPhashSide));
      }
    }
    return t;
  }();
  return table;
}

}  // namespace detail

/// The 8x8 low-frequency block of the orthonormal DCT-II of the 32x32 luma
/// thumbnail, row-major with vertical frequency as the row.
inline std::array<double, 64> phash_coefficients(const RgbImage& image) {
  if (image.width < 1 || image.height < 1) throw Error(ErrorKind::kInvalidImage, "cannot hash a zero-sized image");
  std::vector<double> luma(static_cast<std::size_t>(image.width) * image.height);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const auto* p = image.px(x, y);
      luma[static_cast<std::size_t>(y) * image.width + x] = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
    }
  }
  const auto small = detail::box_resample(luma, image.width, image.height, kPhashSide);
  const auto& basis = detail::dct_basis();

  // Separable transform: rows first (horizontal frequency), then columns.
  std::array<double, kPhashSide * kPhashBlock> rows{};
  for (int y = 0; y < kPhashSide; ++y) {
    for (int u = 0; u < kPhashBlock; ++u) {
      double acc = 0.0;
      for (int x = 0; x < kPhashSide; ++x) {
        acc += basis[static_cast<std::size_t>(u * kPhashSide + x)] * small[static_cast<std::size_t>(y * kPhashSide + x)];
      }
      rows[static_cast<std::size_t>(y * kPhashBlock + u)] = acc;
    }
  }
  std::array<double, 64> block{};
  for (int v = 0; v < kPhashBlock; ++v) {
    for (int u = 0; u < kPhashBlock; ++u) {
      double acc = 0.0;
      for (int y = 0; y < kPhashSide; ++y) {
        acc += basis[static_cast<std::size_t>(v * kPhashSide + y)] * rows[static_cast<std::size_t>(y * kPhashBlock + u)];
      }
      block[static_cast<std::size_t>(v * kPhashBlock + u)] = acc;
    }
  }
  return block;
}

inline std::uint64_t phash_bits_from_coefficients(std::array<double, 64> block) {
  std::array<double, 63> ac{};
  std::copy(block.begin() + 1, block.end(), ac.begin());
  std::nth_element(ac.begin(), ac.begin() + 31, ac.end());
  const double median = ac[31];
  block[0] = median;
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < 64; ++i) {
    if (block[i] > median + kPhashFloor) bits |= std::uint64_t{1} << (63 - i);
  }
  return bits;
}

inline PerceptualHash compute_phash(const RgbImage& image, std::string image_id = {}) {
  return {phash_bits_from_coefficients(phash_coefficients(image)), std::move(image_id)};
}

inline std::string to_hex(std::uint64_t bits) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = kDigits[bits & 0xf];
    bits >>= 4;
  }
  return s;
}

inline std::uint64_t from_hex(const std::string& hex) {
  if (hex.empty() || hex.size() > 16) throw Error(ErrorKind::kParse, "bad hash hex '" + hex + "'");
  std::uint64_t v = 0;
  for (char c : hex) {
    int d;
    if (c >= '0' && c <= '9') d = c - '0';
    else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
    else if (c >= 'A' && c <= 'F') d = c - 'A' + 10;
    else throw Error(ErrorKind::kParse, "bad hash hex '" + hex + "'");
    v = (v << 4) | static_cast<std::uint64_t>(d);
  }
  return v;
}

}  // namespace rsalign
