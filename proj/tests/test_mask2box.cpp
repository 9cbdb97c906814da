#include <gtest/gtest.h>

#include "oracles/components.hpp"
#include "oracles/fixtures.hpp"
#include "rsalign/mask2box.hpp"

using namespace rsalign;

namespace {

LabelMask from_rows(const std::vector<std::string>& rows) {
  LabelMask m{static_cast<int>(rows[0].size()), static_cast<int>(rows.size()), {}, {}};
  for (const auto& r : rows) {
    for (char c : r) {
      const std::int32_t id = c == '.' ? 0 : c - '0';
      m.class_ids.push_back(id);
      if (id) m.class_names[id] = "c" + std::to_string(id);
    }
  }
  return m;
}

std::vector<Box> sorted(std::vector<Box> v) {
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

TEST(MaskToBox, SingleRectangle) {
  const auto m = from_rows({"......",
                            ".111..",
                            ".111..",
                            "......"});
  const auto boxes = mask_to_boxes(m);
  ASSERT_EQ(boxes.size(), 1u);
  EXPECT_EQ(boxes[0], (Box{1, 1, 1, 3, 2}));
}

TEST(MaskToBox, DiagonalPixelsAreOneComponent) {
  const auto m = from_rows({"1...",
                            ".1..",
                            "..1.",
                            "...1"});
  EXPECT_EQ(mask_to_boxes(m), (std::vector<Box>{{1, 0, 0, 3, 3}}));
}

TEST(MaskToBox, RingYieldsOneBoxAndIslandItsOwn) {
  const auto m = from_rows({"11111",
                            "1...1",
                            "1.1.1",
                            "1...1",
                            "11111"});
  EXPECT_EQ(sorted(mask_to_boxes(m)), (std::vector<Box>{{1, 0, 0, 4, 4}, {1, 2, 2, 2, 2}}));
}

TEST(MaskToBox, ClassesAreSeparatedAndOrdered) {
  const auto m = from_rows({"22..1",
                            "22..1",
                            "...33"});
  const auto boxes = mask_to_boxes(m);
  ASSERT_EQ(boxes.size(), 3u);
  EXPECT_EQ(boxes[0].class_id, 1);
  EXPECT_EQ(boxes[1], (Box{2, 0, 0, 1, 1}));
  EXPECT_EQ(boxes[2], (Box{3, 3, 2, 4, 2}));
}

TEST(MaskToBox, TouchingFrameAndSinglePixels) {
  const auto m = from_rows({"1.1",
                            "...",
                            "1.1"});
  EXPECT_EQ(mask_to_boxes(m).size(), 4u);
  const auto full = from_rows({"111", "111"});
  EXPECT_EQ(mask_to_boxes(full), (std::vector<Box>{{1, 0, 0, 2, 1}}));
}

TEST(MaskToBox, EmptyAndBackgroundOnly) {
  EXPECT_TRUE(mask_to_boxes(from_rows({"...", "..."})).empty());
  EXPECT_TRUE(mask_to_boxes(LabelMask{0, 0, {}, {}}).empty());
}

TEST(MaskToBox, MinAreaDropsSmallComponents) {
  const auto m = from_rows({"11..1",
                            "11...",
                            "....."});
  EXPECT_EQ(mask_to_boxes(m, 0).size(), 2u);
  EXPECT_EQ(mask_to_boxes(m, 2), (std::vector<Box>{{1, 0, 0, 1, 1}}));
  EXPECT_EQ(mask_to_boxes(m, 5).size(), 0u);
}

TEST(MaskToBox, UnnamedClassIsRejected) {
  auto m = from_rows({"1."});
  m.class_names.clear();
  EXPECT_THROW(m.validate(), Error);
  EXPECT_THROW(binarize(m, 7), Error);
}

TEST(MaskToBox, EmptyContourIsRejected) {
  try {
    contour_to_box(Contour{}, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInvalidContour);
  }
}

TEST(MaskToBox, MatchesFloodFillOnRandomMasks) {
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const auto m = fixture::random_mask(seed, 40, 30);
    EXPECT_EQ(sorted(mask_to_boxes(m)), oracle::component_boxes(m)) << "seed " << seed;
  }
}

TEST(BorderFollowing, OuterAndHoleCountsMatchOracles) {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const auto g = fixture::random_grid(seed, 24, 17, 0.3 + 0.01 * static_cast<double>(seed % 40));
    const auto contours = trace_borders(g);
    int outer = 0, holes = 0;
    for (const auto& c : contours) (c.kind == ContourKind::kOuter ? outer : holes)++;
    EXPECT_EQ(outer, oracle::count_components(g)) << "seed " << seed;
    EXPECT_EQ(holes, oracle::count_holes(g)) << "seed " << seed;
  }
}

TEST(BorderFollowing, ContoursAreClosedEightConnectedWalks) {
  const auto g = fixture::random_grid(11, 30, 30, 0.55);
  for (const auto& c : trace_borders(g)) {
    ASSERT_FALSE(c.points.empty());
    for (std::size_t k = 0; k + 1 < c.points.size(); ++k) {
      const auto a = c.points[k], b = c.points[k + 1];
      EXPECT_LE(std::abs(a.x - b.x), 1);
      EXPECT_LE(std::abs(a.y - b.y), 1);
    }
    for (const auto& p : c.points) {
      // Outer borders run on foreground pixels; hole borders too.
      EXPECT_TRUE(g.at(p.x, p.y));
    }
  }
}

TEST(BorderFollowing, HoleParentIsItsOuterBorder) {
  const auto m = from_rows({"11111",
                            "1...1",
                            "11111"});
  const auto contours = trace_borders(binarize(m, 1));
  ASSERT_EQ(contours.size(), 2u);
  EXPECT_EQ(contours[0].kind, ContourKind::kOuter);
  EXPECT_EQ(contours[0].parent, -1);
  EXPECT_EQ(contours[1].kind, ContourKind::kHole);
  EXPECT_EQ(contours[1].parent, 0);
}

TEST(BorderFollowing, ComponentAreaCountsEightConnectedPixels) {
  const auto m = from_rows({"11..",
                            "..1.",
                            "...1"});
  EXPECT_EQ(component_area(binarize(m, 1), {0, 0}), 4u);
}
