#pragma once

// Near-duplicate search over 64-bit perceptual hashes. Each hash is split into
// n_segments equal bit segments, one lookup table per segment. A pair closer
// than `threshold` bits differs in at most threshold-1 segments, so when
// n_segments >= threshold it shares at least one segment value and meets in a
// bucket; bucketed search therefore returns exactly the brute-force pair set.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "rsalign/error.hpp"
#include "rsalign/phash.hpp"

namespace rsalign {

struct DuplicatePair {
  std::string id_a;
  std::string id_b;
  int distance = 0;

  friend bool operator==(const DuplicatePair&, const DuplicatePair&) = default;
  friend auto operator<=>(const DuplicatePair&, const DuplicatePair&) = default;
};

/// Positions i < j into the indexed hash list.
struct IndexPair {
  std::size_t i = 0;
  std::size_t j = 0;
  int distance = 0;

  friend bool operator==(const IndexPair&, const IndexPair&) = default;
  friend auto operator<=>(const IndexPair&, const IndexPair&) = default;
};

class HashIndex {
 public:
  using Bucket = std::vector<std::size_t>;

  HashIndex(const std::vector<PerceptualHash>& hashes, int n_segments) : n_segments_(n_segments) {
    if (n_segments < 1 || n_segments > 64 || 64 % n_segments != 0) {
      throw Error(ErrorKind::kConfig, "n_segments must divide 64, got " + std::to_string(n_segments));
    }
    tables_.resize(static_cast<std::size_t>(n_segments));
    for (std::size_t k = 0; k < hashes.size(); ++k) {
      for (int s = 0; s < n_segments; ++s) {
        tables_[static_cast<std::size_t>(s)][segment(hashes[k].bits, s)].push_back(k);
      }
    }
    size_ = hashes.size();
  }

  int n_segments() const { return n_segments_; }
  int segment_bits() const { return 64 / n_segments_; }
  std::size_t size() const { return size_; }

  /// Value of segment s, counted from the most significant end.
  std::uint64_t segment(std::uint64_t bits, int s) const {
    const int width = segment_bits();
    const int shift = 64 - width * (s + 1);
    const std::uint64_t mask = width == 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << width) - 1);
    return (bits >> shift) & mask;
  }

  const std::unordered_map<std::uint64_t, Bucket>& table(int s) const { return tables_[static_cast<std::size_t>(s)]; }

  std::size_t bucket_entries() const {
    std::size_t total = 0;
    for (const auto& t : tables_) {
      for (const auto& [value, bucket] : t) total += bucket.size();
    }
    return total;
  }

 private:
  int n_segments_;
  std::size_t size_ = 0;
  std::vector<std::unordered_map<std::uint64_t, Bucket>> tables_;
};

inline HashIndex build_index(const std::vector<PerceptualHash>& hashes, int n_segments = 4) {
  return HashIndex(hashes, n_segments);
}

/// All index pairs at Hamming distance < threshold, sorted by (i, j).
inline std::vector<IndexPair> find_duplicate_indices(const HashIndex& index, const std::vector<PerceptualHash>& hashes,
                                                     int threshold = 2) {
  if (threshold < 1) throw Error(ErrorKind::kConfig, "threshold must be >= 1");
  if (index.n_segments() < threshold) {
    throw Error(ErrorKind::kConfig, "n_segments (" + std::to_string(index.n_segments()) +
                                        ") must be >= threshold (" + std::to_string(threshold) +
                                        ") for complete bucketed search");
  }
  if (hashes.size() != index.size()) throw Error(ErrorKind::kConfig, "hash list does not match the index");
  std::unordered_set<std::uint64_t> seen;
  std::vector<IndexPair> pairs;
  for (int s = 0; s < index.n_segments(); ++s) {
    for (const auto& [value, bucket] : index.table(s)) {
      for (std::size_t a = 0; a < bucket.size(); ++a) {
        for (std::size_t b = a + 1; b < bucket.size(); ++b) {
          const std::size_t i = std::min(bucket[a], bucket[b]);
          const std::size_t j = std::max(bucket[a], bucket[b]);
          const int d = hamming(hashes[i], hashes[j]);
          if (d >= threshold) continue;
          if (seen.insert(static_cast<std::uint64_t>(i) * hashes.size() + j).second) pairs.push_back({i, j, d});
        }
      }
    }
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

/// Duplicate pairs by image id (id_a < id_b), sorted. Ids must be unique.
inline std::vector<DuplicatePair> find_duplicates(const HashIndex& index, const std::vector<PerceptualHash>& hashes,
                                                  int threshold = 2) {
  std::set<std::string> ids;
  for (const auto& h : hashes) {
    if (!ids.insert(h.image_id).second) throw Error(ErrorKind::kConfig, "duplicate image id " + h.image_id);
  }
  std::vector<DuplicatePair> out;
  for (const auto& p : find_duplicate_indices(index, hashes, threshold)) {
    const auto& a = hashes[p.i].image_id;
    const auto& b = hashes[p.j].image_id;
    out.push_back(a < b ? DuplicatePair{a, b, p.distance} : DuplicatePair{b, a, p.distance});
  }
  std::sort(out.begin(), out.end());
  return out;
}

enum class RemovalReason { kTestOverlap, kIntraTrain };

inline const char* to_string(RemovalReason r) {
  return r == RemovalReason::kTestOverlap ? "test-overlap" : "intra-train";
}

struct Removal {
  std::string removed_id;
  std::string kept_or_test_id;
  int distance = 0;
  RemovalReason reason = RemovalReason::kTestOverlap;
};

struct DecontaminationResult {
  /// Positions of surviving train items, ascending.
  std::vector<std::size_t> kept;
  std::vector<Removal> removals;
};

struct DedupConfig {
  int threshold = 2;
  int n_segments = 4;
};

/// Drops every train item within `threshold` of a test item, then among the
/// remaining train items drops each one that duplicates an earlier kept item,
/// visiting items in lexicographic id order (so the smaller id survives).
inline DecontaminationResult decontaminate(const std::vector<PerceptualHash>& train,
                                           const std::vector<PerceptualHash>& test,
                                           const DedupConfig& config = {}) {
  std::vector<PerceptualHash> all(train);
  all.insert(all.end(), test.begin(), test.end());
  const auto index = build_index(all, config.n_segments);
  const auto pairs = find_duplicate_indices(index, all, config.threshold);
  const std::size_t n_train = train.size();

  struct Match {
    std::size_t other;
    int distance;
  };
  std::vector<std::vector<Match>> test_matches(n_train), train_matches(n_train);
  for (const auto& p : pairs) {
    if (p.i >= n_train) continue;  // test-test pairs are irrelevant
    if (p.j >= n_train) {
      test_matches[p.i].push_back({p.j, p.distance});
    } else {
      train_matches[p.i].push_back({p.j, p.distance});
      train_matches[p.j].push_back({p.i, p.distance});
    }
  }

  // Closest match first, then smaller id.
  auto better = [&](const Match& a, const Match& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return all[a.other].image_id < all[b.other].image_id;
  };

  DecontaminationResult result;
  std::vector<char> removed(n_train, 0);
  for (std::size_t i = 0; i < n_train; ++i) {
    if (test_matches[i].empty()) continue;
    const auto best = *std::min_element(test_matches[i].begin(), test_matches[i].end(), better);
    removed[i] = 1;
    result.removals.push_back({train[i].image_id, all[best.other].image_id, best.distance, RemovalReason::kTestOverlap});
  }

  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < n_train; ++i) {
    if (!removed[i]) order.push_back(i);
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (train[a].image_id != train[b].image_id) return train[a].image_id < train[b].image_id;
    return a < b;
  });
  std::vector<char> kept(n_train, 0);
  for (std::size_t i : order) {
    std::vector<Match> earlier;
    for (const auto& m : train_matches[i]) {
      if (kept[m.other]) earlier.push_back(m);
    }
    if (earlier.empty()) {
      kept[i] = 1;
      continue;
    }
    const auto best = *std::min_element(earlier.begin(), earlier.end(), better);
    removed[i] = 1;
    result.removals.push_back({train[i].image_id, all[best.other].image_id, best.distance, RemovalReason::kIntraTrain});
  }
  for (std::size_t i = 0; i < n_train; ++i) {
    if (!removed[i]) result.kept.push_back(i);
  }
  return result;
}

// Hash cache: JSON Lines {"image_id": ..., "phash_hex": ...}.

inline void write_hash_cache(const std::filesystem::path& path, const std::vector<PerceptualHash>& hashes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  for (const auto& h : hashes) {
    nlohmann::ordered_json j;
    j["image_id"] = h.image_id;
    j["phash_hex"] = to_hex(h.bits);
    out << j.dump() << "\n";
  }
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

inline void write_removal_report(const std::filesystem::path& path, const std::vector<Removal>& removals) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  for (const auto& r : removals) {
    nlohmann::ordered_json j;
    j["removed_id"] = r.removed_id;
    j["kept_or_test_id"] = r.kept_or_test_id;
    j["distance"] = r.distance;
    j["reason"] = to_string(r.reason);
    out << j.dump() << "\n";
  }
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

}  // namespace rsalign
