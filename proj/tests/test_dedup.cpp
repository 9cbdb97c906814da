#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "oracles/hamming.hpp"
#include "rsalign/dedup.hpp"
#include "rsalign/image_io.hpp"
#include "rsalign/phash.hpp"
#include "rsalign/rng.hpp"

using namespace rsalign;

namespace {

RgbImage gradient(int w, int h, int phase) {
  RgbImage img(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto v = static_cast<std::uint8_t>((x * 7 + y * 3 + phase * ((x / 8 + y / 8) % 2) * 60) % 256);
      for (int c = 0; c < 3; ++c) img.rgb[(static_cast<std::size_t>(y) * w + x) * 3 + c] = v;
    }
  }
  return img;
}

RgbImage flat(int w, int h, std::uint8_t v) {
  return RgbImage(w, h, v);
}

std::vector<PerceptualHash> random_hashes(std::uint64_t seed, std::size_t n, std::size_t planted) {
  Rng rng(seed);
  std::vector<PerceptualHash> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({rng.next(), "h" + std::to_string(i)});
  for (std::size_t k = 0; k < planted; ++k) {
    const auto src = out[rng.uniform_index(n)].bits;
    const auto flips = rng.uniform_index(2);
    auto bits = src;
    for (std::uint64_t f = 0; f < flips; ++f) bits ^= std::uint64_t{1} << rng.uniform_index(64);
    out.push_back({bits, "p" + std::to_string(k)});
  }
  return out;
}

}  // namespace

TEST(PHash, IdenticalImagesHashIdentically) {
  EXPECT_EQ(compute_phash(gradient(64, 48, 1)).bits, compute_phash(gradient(64, 48, 1)).bits);
  EXPECT_EQ(hamming(compute_phash(flat(40, 40, 100)), compute_phash(flat(40, 40, 100))), 0);
}

TEST(PHash, FlatImageSurvivesOnePixelEdit) {
  auto a = flat(64, 64, 128);
  auto b = a;
  b.rgb[0] = b.rgb[1] = b.rgb[2] = 130;
  EXPECT_LE(hamming(compute_phash(a), compute_phash(b)), 1);
}

TEST(PHash, UpscaledCopyIsNear) {
  const auto small = gradient(64, 64, 1);
  RgbImage big(128, 128);
  for (int y = 0; y < 128; ++y) {
    for (int x = 0; x < 128; ++x) std::copy_n(small.px(x / 2, y / 2), 3, big.px(x, y));
  }
  EXPECT_LE(hamming(compute_phash(big), compute_phash(small)), 1);
}

TEST(PHash, DistinctContentIsFar) {
  EXPECT_GT(hamming(compute_phash(gradient(64, 64, 1)), compute_phash(gradient(64, 64, 3))), 4);
}

TEST(PHash, ZeroSizedImageIsInvalid) {
  try {
    compute_phash(RgbImage(0, 0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInvalidImage);
  }
}

TEST(PHash, HexRoundTrip) {
  for (std::uint64_t v : {std::uint64_t{0}, std::uint64_t{1}, ~std::uint64_t{0}, std::uint64_t{0x0123456789abcdef}}) {
    EXPECT_EQ(from_hex(to_hex(v)), v);
    EXPECT_EQ(to_hex(v).size(), 16u);
  }
  EXPECT_EQ(to_hex(0xabc), "0000000000000abc");
  EXPECT_THROW(from_hex("xyz"), Error);
}

TEST(PHash, DctOfConstantIsDcOnly) {
  const auto c = phash_coefficients(flat(32, 32, 200));
  for (std::size_t k = 1; k < 64; ++k) EXPECT_NEAR(c[k], 0.0, 1e-9);
  EXPECT_GT(c[0], 0.0);
}

TEST(HashIndex, SegmentsAreMostSignificantFirst) {
  const std::vector<PerceptualHash> h{{0x1122334455667788ULL, "a"}};
  const HashIndex idx(h, 4);
  EXPECT_EQ(idx.segment(h[0].bits, 0), 0x1122u);
  EXPECT_EQ(idx.segment(h[0].bits, 3), 0x7788u);
  EXPECT_EQ(idx.bucket_entries(), 4u);
  EXPECT_THROW(HashIndex(h, 5), Error);
}

TEST(FindDuplicates, ThresholdTwoMeansDistanceAtMostOne) {
  const std::vector<PerceptualHash> h{{0b0000, "a"}, {0b0001, "b"}, {0b0011, "c"}, {0xf0f0, "d"}};
  const auto idx = build_index(h);
  const auto pairs = find_duplicates(idx, h, 2);
  ASSERT_EQ(pairs.size(), 2u);
  EXPECT_EQ(pairs[0].id_a, "a");
  EXPECT_EQ(pairs[0].id_b, "b");
  EXPECT_EQ(pairs[1].id_a, "b");
  EXPECT_EQ(pairs[1].id_b, "c");
}

TEST(FindDuplicates, DisjointInputsGiveNothing) {
  const std::vector<PerceptualHash> h{{0, "a"}, {~std::uint64_t{0}, "b"}};
  EXPECT_TRUE(find_duplicates(build_index(h), h).empty());
}

TEST(FindDuplicates, RejectsConfigsWithoutCompletenessGuarantee) {
  const std::vector<PerceptualHash> h{{0, "a"}};
  EXPECT_THROW(find_duplicate_indices(build_index(h, 2), h, 3), Error);
  EXPECT_THROW(find_duplicate_indices(build_index(h, 4), h, 0), Error);
}

TEST(FindDuplicates, MatchesBruteForce) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (int threshold : {1, 2, 3, 4}) {
      const auto h = random_hashes(seed, 300, 40);
      const auto idx = build_index(h, 4);
      EXPECT_EQ(find_duplicate_indices(idx, h, threshold), oracle::brute_pairs(h, threshold))
          << "seed " << seed << " threshold " << threshold;
    }
  }
}

TEST(FindDuplicates, DuplicateIdsAreRejected) {
  const std::vector<PerceptualHash> h{{0, "a"}, {1, "a"}};
  EXPECT_THROW(find_duplicates(build_index(h), h), Error);
}

TEST(Decontaminate, TestOverlapThenIntraTrain) {
  const std::vector<PerceptualHash> train{{0x00, "t3"}, {0x01, "t1"}, {0xff00, "t2"}, {0xff01, "t0"}};
  const std::vector<PerceptualHash> test{{0x03, "x"}};
  const auto r = decontaminate(train, test);
  // t1 (0x01) is within 1 of x (0x03): removed. t3 (0x00) is distance 2 from x, kept.
  // t0 and t2 are mutual duplicates: t0 sorts first and survives.
  std::set<std::string> removed;
  for (const auto& rm : r.removals) removed.insert(rm.removed_id);
  EXPECT_EQ(removed, (std::set<std::string>{"t1", "t2"}));
  EXPECT_EQ(r.removals[0].reason, RemovalReason::kTestOverlap);
  EXPECT_EQ(r.removals[0].kept_or_test_id, "x");
  EXPECT_EQ(r.removals[1].kept_or_test_id, "t0");
  EXPECT_EQ(r.kept, (std::vector<std::size_t>{0, 3}));
}

TEST(Decontaminate, MatchesBruteForceOracle) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    auto all = random_hashes(seed, 200, 80);
    std::vector<PerceptualHash> test(all.begin(), all.begin() + 40);
    std::vector<PerceptualHash> train(all.begin() + 40, all.end());
    const auto got = decontaminate(train, test);
    std::map<std::string, std::string> removed;
    for (const auto& r : got.removals) removed[r.removed_id] = r.kept_or_test_id;
    EXPECT_EQ(removed, oracle::brute_removed(train, test, 2)) << "seed " << seed;
    EXPECT_EQ(got.kept.size() + got.removals.size(), train.size());
  }
}

TEST(Decontaminate, KeptSetHasNoInternalDuplicates) {
  auto all = random_hashes(3, 300, 150);
  const auto got = decontaminate(all, {});
  std::vector<PerceptualHash> kept;
  for (auto k : got.kept) kept.push_back(all[k]);
  EXPECT_TRUE(oracle::brute_pairs(kept, 2).empty());
}

TEST(ImageIo, NetpbmAndPngRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "rsalign_io_test";
  std::filesystem::create_directories(dir);
  Image8 img{5, 3, 1, {}};
  for (int i = 0; i < 15; ++i) img.pixels.push_back(static_cast<std::uint8_t>(i * 17));
  write_netpbm(dir / "a.pgm", img);
  write_png(dir / "a.png", img);
  for (const char* name : {"a.pgm", "a.png"}) {
    const auto back = read_image(dir / name);
    EXPECT_EQ(back.width, 5);
    EXPECT_EQ(back.height, 3);
    EXPECT_EQ(back.channels, 1);
    EXPECT_EQ(back.pixels, img.pixels) << name;
  }
  EXPECT_THROW(read_image(dir / "missing.png"), Error);
}
