#pragma once

// Seeded generators shared by unit and acceptance tests.

#include <cmath>
#include <string>
#include <vector>

#include "rsalign/box2caption.hpp"
#include "rsalign/mask2box.hpp"
#include "rsalign/matrix.hpp"
#include "rsalign/rng.hpp"

namespace fixture {

/// Blobby multi-class mask: random rectangles and discs painted over noise.
inline rsalign::LabelMask random_mask(std::uint64_t seed, int w = 64, int h = 64, int classes = 4) {
  rsalign::Rng rng(seed);
  rsalign::LabelMask m{w, h, std::vector<std::int32_t>(static_cast<std::size_t>(w) * h, 0), {}};
  for (int c = 1; c <= classes; ++c) m.class_names[c] = "class " + std::to_string(c);
  for (auto& v : m.class_ids) v = rng.uniform() < 0.08 ? static_cast<std::int32_t>(1 + rng.uniform_index(classes)) : 0;
  const int shapes = 6 + static_cast<int>(rng.uniform_index(10));
  for (int s = 0; s < shapes; ++s) {
    const auto id = static_cast<std::int32_t>(rng.uniform_index(classes + 1));
    const int cx = static_cast<int>(rng.uniform_index(w)), cy = static_cast<int>(rng.uniform_index(h));
    const int r = 2 + static_cast<int>(rng.uniform_index(10));
    const bool disc = rng.uniform_index(2) == 0;
    for (int y = std::max(0, cy - r); y < std::min(h, cy + r); ++y) {
      for (int x = std::max(0, cx - r); x < std::min(w, cx + r); ++x) {
        if (disc && (x - cx) * (x - cx) + (y - cy) * (y - cy) > r * r) continue;
        m.class_ids[static_cast<std::size_t>(y) * w + x] = id;
      }
    }
  }
  return m;
}

inline rsalign::BinaryGrid random_grid(std::uint64_t seed, int w, int h, double p) {
  rsalign::Rng rng(seed);
  rsalign::BinaryGrid g{w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h)};
  for (auto& b : g.bits) b = rng.uniform() < p ? 1 : 0;
  return g;
}

inline const std::vector<std::string>& class_pool() {
  static const std::vector<std::string> pool{"airplane", "ship", "storage tank", "baseball diamond", "harbor",
                                             "bridge", "small vehicle", "large-vehicle", "tennis_court", "person",
                                             "bus", "leaf", "helicopter", "roundabout", "swimming pool"};
  return pool;
}

/// Record with 0..max_objects boxes; occasionally many of one class.
inline rsalign::DetectionRecord random_record(rsalign::Rng& rng, int index, int max_objects = 30) {
  rsalign::DetectionRecord r;
  r.image_id = "img_" + std::to_string(index);
  r.width = 32 + static_cast<int>(rng.uniform_index(1000));
  r.height = 32 + static_cast<int>(rng.uniform_index(1000));
  const auto n = rng.uniform_index(static_cast<std::uint64_t>(max_objects) + 1);
  const bool crowd = rng.uniform_index(4) == 0;
  const auto& pool = class_pool();
  for (std::uint64_t k = 0; k < n; ++k) {
    const auto& cls = crowd ? pool[0] : pool[rng.uniform_index(pool.size())];
    const int x0 = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(r.width)));
    const int y0 = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(r.height)));
    const int x1 = x0 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(r.width - x0)));
    const int y1 = y0 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(r.height - y0)));
    r.objects.push_back({rsalign::normalize_class_name(cls), rsalign::Box{0, x0, y0, x1, y1}});
  }
  return r;
}

inline rsalign::Matrix<double> random_unit_rows(rsalign::Rng& rng, std::size_t n, std::size_t d) {
  rsalign::Matrix<double> m(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    double norm = 0;
    for (auto& v : m.row(i)) {
      v = rng.normal();
      norm += v * v;
    }
    for (auto& v : m.row(i)) v /= std::sqrt(norm);
  }
  return m;
}

inline std::vector<std::vector<double>> to_rows(const rsalign::Matrix<double>& m) {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < m.rows(); ++i) out.emplace_back(m.row(i).begin(), m.row(i).end());
  return out;
}

/// Wide-margin Gaussian blobs: centres on scaled axes, unit-ish noise.
struct Blobs {
  rsalign::Matrix<double> x;
  std::vector<int> y;
};

inline Blobs blobs(std::uint64_t seed, int classes, std::size_t per_class, std::size_t dim, double margin,
                   double noise) {
  rsalign::Rng rng(seed);
  Blobs b{rsalign::Matrix<double>(static_cast<std::size_t>(classes) * per_class, dim), {}};
  std::size_t r = 0;
  for (std::size_t k = 0; k < per_class; ++k) {
    for (int c = 0; c < classes; ++c, ++r) {
      for (std::size_t j = 0; j < dim; ++j) b.x(r, j) = noise * rng.normal() + (j == static_cast<std::size_t>(c) ? margin : 0.0);
      b.y.push_back(c);
    }
  }
  return b;
}

}  // namespace fixture
