#pragma once

// Mask-to-box conversion: per-class binarization, border following over the
// binary grid, and per-component axis-aligned boxes from outer borders.

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "rsalign/error.hpp"

namespace rsalign {

/// Row-major per-pixel class ids; 0 is background.
struct LabelMask {
  int width = 0;
  int height = 0;
  std::vector<std::int32_t> class_ids;
  std::map<std::int32_t, std::string> class_names;

  std::int32_t at(int x, int y) const { return class_ids[static_cast<std::size_t>(y) * width + x]; }

  /// Throws if the grid size is wrong or a nonzero id has no name.
  void validate() const {
    if (width < 0 || height < 0 ||
        class_ids.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
      throw Error(ErrorKind::kInvalidImage, "label mask grid size does not match width x height");
    }
    for (auto id : present_classes()) {
      if (!class_names.contains(id)) {
        throw Error(ErrorKind::kInvalidClass, "class id " + std::to_string(id) + " has no name");
      }
    }
  }

  /// Nonzero ids that occur in the grid, ascending.
  std::vector<std::int32_t> present_classes() const {
    std::set<std::int32_t> ids;
    for (auto id : class_ids) {
      if (id != 0) ids.insert(id);
    }
    return {ids.begin(), ids.end()};
  }
};

struct BinaryGrid {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  std::size_t count() const {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
  }
};

struct Point {
  int x = 0;
  int y = 0;
  friend bool operator==(const Point&, const Point&) = default;
};

enum class ContourKind { kOuter, kHole };

struct Contour {
  std::vector<Point> points;
  ContourKind kind = ContourKind::kOuter;
  /// Index of the enclosing contour in the traced list, -1 for the image frame.
  int parent = -1;
};

/// Inclusive pixel coordinates.
struct Box {
  std::int32_t class_id = 0;
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;
  int y_max = 0;

  friend bool operator==(const Box&, const Box&) = default;
  friend auto operator<=>(const Box&, const Box&) = default;
};

inline BinaryGrid binarize(const LabelMask& mask, std::int32_t class_id) {
  if (!mask.class_names.contains(class_id)) {
    throw Error(ErrorKind::kInvalidClass, "class id " + std::to_string(class_id) + " is not in the class table");
  }
  BinaryGrid grid{mask.width, mask.height, std::vector<std::uint8_t>(mask.class_ids.size(), 0)};
  for (std::size_t i = 0; i < mask.class_ids.size(); ++i) {
    grid.bits[i] = mask.class_ids[i] == class_id ? 1 : 0;
  }
  return grid;
}

namespace detail {

// Clockwise in image coordinates (y grows downward), starting east.
inline constexpr std::array<int, 8> kDx{1, 1, 0, -1, -1, -1, 0, 1};
inline constexpr std::array<int, 8> kDy{0, 1, 1, 1, 0, -1, -1, -1};

inline int direction_of(int from_x, int from_y, int to_x, int to_y) {
  const int dx = to_x - from_x;
  const int dy = to_y - from_y;
  for (int d = 0; d < 8; ++d) {
    if (kDx[d] == dx && kDy[d] == dy) return d;
  }
  return -1;
}

}  // namespace detail

/// Topological border following (Suzuki & Abe) with 8-connected foreground.
/// Contours come out in raster-scan discovery order; each carries its kind and
/// the index of its parent border.
inline std::vector<Contour> trace_borders(const BinaryGrid& grid) {
  std::vector<Contour> contours;
  const int w = grid.width;
  const int h = grid.height;
  if (w <= 0 || h <= 0) return contours;

  // Padded label image; the frame stays 0.
  const int pw = w + 2;
  const int ph = h + 2;
  std::vector<int> f(static_cast<std::size_t>(pw) * ph, 0);
  auto idx = [pw](int x, int y) { return static_cast<std::size_t>(y) * pw + x; };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      f[idx(x + 1, y + 1)] = grid.at(x, y) ? 1 : 0;
    }
  }

  // Border number -> (kind, contour index). Number 1 is the frame, a hole border.
  std::vector<ContourKind> kind_of{ContourKind::kHole, ContourKind::kHole};
  std::vector<int> contour_of{-1, -1};
  int nbd = 1;

  for (int i = 1; i < ph - 1; ++i) {
    int lnbd = 1;
    for (int j = 1; j < pw - 1; ++j) {
      const int fij = f[idx(j, i)];
      if (fij == 0) continue;

      int start_dir = -1;
      ContourKind kind{};
      if (fij == 1 && f[idx(j - 1, i)] == 0) {
        kind = ContourKind::kOuter;
        start_dir = 4;  // west neighbour
      } else if (fij >= 1 && f[idx(j + 1, i)] == 0) {
        kind = ContourKind::kHole;
        start_dir = 0;  // east neighbour
        if (fij > 1) lnbd = fij;
      }

      if (start_dir >= 0) {
        ++nbd;
        // A border of the same kind as the last one met shares its parent;
        // otherwise the last border is the parent.
        const int last = contour_of[static_cast<std::size_t>(lnbd)];
        Contour contour;
        contour.kind = kind;
        if (kind == kind_of[static_cast<std::size_t>(lnbd)]) {
          contour.parent = last < 0 ? -1 : contours[static_cast<std::size_t>(last)].parent;
        } else {
          contour.parent = last;
        }

        // Clockwise search for the first nonzero neighbour.
        int first_dir = -1;
        for (int k = 0; k < 8; ++k) {
          const int d = (start_dir + k) % 8;
          if (f[idx(j + detail::kDx[d], i + detail::kDy[d])] != 0) {
            first_dir = d;
            break;
          }
        }

        if (first_dir < 0) {
          f[idx(j, i)] = -nbd;
          contour.points.push_back({j - 1, i - 1});
        } else {
          const int x1 = j + detail::kDx[first_dir];
          const int y1 = i + detail::kDy[first_dir];
          int x2 = x1, y2 = y1;
          int x3 = j, y3 = i;
          while (true) {
            contour.points.push_back({x3 - 1, y3 - 1});
            // Counter-clockwise sweep starting after (x2, y2).
            const int back = detail::direction_of(x3, y3, x2, y2);
            bool east_zero_examined = false;
            int x4 = x3, y4 = y3;
            for (int k = 1; k <= 8; ++k) {
              const int d = ((back - k) % 8 + 8) % 8;
              const int nx = x3 + detail::kDx[d];
              const int ny = y3 + detail::kDy[d];
              if (f[idx(nx, ny)] != 0) {
                x4 = nx;
                y4 = ny;
                break;
              }
              if (d == 0) east_zero_examined = true;
            }
            int& f3 = f[idx(x3, y3)];
            if (east_zero_examined) {
              f3 = -nbd;
            } else if (f3 == 1) {
              f3 = nbd;
            }
            if (x4 == j && y4 == i && x3 == x1 && y3 == y1) break;
            x2 = x3;
            y2 = y3;
            x3 = x4;
            y3 = y4;
          }
        }

        kind_of.push_back(kind);
        contour_of.push_back(static_cast<int>(contours.size()));
        contours.push_back(std::move(contour));
      }

      const int after = f[idx(j, i)];
      if (after != 1) lnbd = after < 0 ? -after : after;
    }
  }
  return contours;
}

inline Box contour_to_box(const Contour& contour, std::int32_t class_id) {
  if (contour.points.empty()) {
    throw Error(ErrorKind::kInvalidContour, "cannot box an empty contour");
  }
  Box box{class_id, contour.points[0].x, contour.points[0].y, contour.points[0].x, contour.points[0].y};
  for (const auto& p : contour.points) {
    box.x_min = std::min(box.x_min, p.x);
    box.y_min = std::min(box.y_min, p.y);
    box.x_max = std::max(box.x_max, p.x);
    box.y_max = std::max(box.y_max, p.y);
  }
  return box;
}

/// Pixel count of the 8-connected foreground component containing `seed`.
inline std::size_t component_area(const BinaryGrid& grid, Point seed) {
  std::vector<std::uint8_t> seen(grid.bits.size(), 0);
  std::vector<Point> stack{seed};
  seen[static_cast<std::size_t>(seed.y) * grid.width + seed.x] = 1;
  std::size_t area = 0;
  while (!stack.empty()) {
    const Point p = stack.back();
    stack.pop_back();
    ++area;
    for (int d = 0; d < 8; ++d) {
      const int nx = p.x + detail::kDx[d];
      const int ny = p.y + detail::kDy[d];
      if (nx < 0 || ny < 0 || nx >= grid.width || ny >= grid.height) continue;
      const auto k = static_cast<std::size_t>(ny) * grid.width + nx;
      if (grid.bits[k] && !seen[k]) {
        seen[k] = 1;
        stack.push_back({nx, ny});
      }
    }
  }
  return area;
}

/// One box per 8-connected component of each nonzero class, ordered by class id
/// then raster discovery order. Holes never produce boxes. Components with fewer
/// than `min_area` pixels are dropped.
inline std::vector<Box> mask_to_boxes(const LabelMask& mask, std::size_t min_area = 0) {
  std::vector<Box> boxes;
  for (auto class_id : mask.present_classes()) {
    BinaryGrid grid{mask.width, mask.height, std::vector<std::uint8_t>(mask.class_ids.size(), 0)};
    for (std::size_t i = 0; i < mask.class_ids.size(); ++i) {
      grid.bits[i] = mask.class_ids[i] == class_id ? 1 : 0;
    }
    for (const auto& contour : trace_borders(grid)) {
      if (contour.kind != ContourKind::kOuter) continue;
      if (min_area > 1 && component_area(grid, contour.points.front()) < min_area) continue;
      boxes.push_back(contour_to_box(contour, class_id));
    }
  }
  return boxes;
}

}  // namespace rsalign
