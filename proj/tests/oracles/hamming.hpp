#pragma once

#include <algorithm>
#include <bit>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "rsalign/dedup.hpp"

namespace oracle {

/// Every pair (i < j) with popcount(a ^ b) < threshold.
inline std::vector<rsalign::IndexPair> brute_pairs(const std::vector<rsalign::PerceptualHash>& h, int threshold) {
  std::vector<rsalign::IndexPair> out;
  for (std::size_t i = 0; i < h.size(); ++i) {
    for (std::size_t j = i + 1; j < h.size(); ++j) {
      int d = 0;
      for (int b = 0; b < 64; ++b) d += ((h[i].bits >> b) & 1) != ((h[j].bits >> b) & 1);
      if (d < threshold) out.push_back({i, j, d});
    }
  }
  return out;
}

/// Removed train ids under the test-first, then first-by-id-kept rule.
inline std::map<std::string, std::string> brute_removed(const std::vector<rsalign::PerceptualHash>& train,
                                                        const std::vector<rsalign::PerceptualHash>& test,
                                                        int threshold) {
  auto dist = [](std::uint64_t a, std::uint64_t b) { return std::popcount(a ^ b); };
  std::map<std::string, std::string> removed;
  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < train.size(); ++i) {
    std::tuple<int, std::string> best{99, ""};
    for (const auto& t : test) {
      const int d = dist(train[i].bits, t.bits);
      if (d < threshold) best = std::min(best, std::tuple<int, std::string>{d, t.image_id});
    }
    if (std::get<0>(best) < 99) {
      removed[train[i].image_id] = std::get<1>(best);
    } else {
      rest.push_back(i);
    }
  }
  std::stable_sort(rest.begin(), rest.end(),
                   [&](std::size_t a, std::size_t b) { return train[a].image_id < train[b].image_id; });
  std::vector<std::size_t> kept;
  for (auto i : rest) {
    std::tuple<int, std::string> best{99, ""};
    for (auto k : kept) {
      const int d = dist(train[i].bits, train[k].bits);
      if (d < threshold) best = std::min(best, std::tuple<int, std::string>{d, train[k].image_id});
    }
    if (std::get<0>(best) < 99) {
      removed[train[i].image_id] = std::get<1>(best);
    } else {
      kept.push_back(i);
    }
  }
  return removed;
}

}  // namespace oracle
