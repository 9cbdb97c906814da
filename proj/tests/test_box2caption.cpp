#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "oracles/fixtures.hpp"
#include "rsalign/box2caption.hpp"

using namespace rsalign;

namespace {

DetectionRecord record(std::vector<DetectedObject> objects, int w = 100, int h = 100) {
  return DetectionRecord{"r", w, h, std::move(objects)};
}

DetectedObject centred(const std::string& cls) { return {cls, Box{0, 45, 45, 54, 54}}; }
DetectedObject corner(const std::string& cls) { return {cls, Box{0, 0, 0, 9, 9}}; }

bool has_number_word_above_ten(const std::string& s) {
  for (const char* w : {"eleven", "twelve", "thirteen", "twenty", "hundred"}) {
    if (to_lower(s).find(w) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

TEST(Location, CentreWindowIsHalfOpen) {
  // 100 wide, fraction 0.5: window [25, 75).
  EXPECT_EQ(classify_location(Box{0, 24, 40, 25, 41}, 100, 100, 0.5), Location::kCenter);   // centre x = 25
  EXPECT_EQ(classify_location(Box{0, 74, 40, 75, 41}, 100, 100, 0.5), Location::kOffCenter);  // centre x = 75
  EXPECT_EQ(classify_location(Box{0, 0, 0, 99, 99}, 100, 100, 0.5), Location::kCenter);
  EXPECT_EQ(classify_location(Box{0, 0, 0, 99, 99}, 100, 100, 1.0), Location::kCenter);
}

TEST(CountPhrase, WordsUpToTenThenPool) {
  CaptionRuleConfig c;
  Rng rng(1);
  EXPECT_EQ(count_phrase(1, c, rng), "one");
  EXPECT_EQ(count_phrase(10, c, rng), "ten");
  for (int n : {11, 12, 50, 1000}) {
    const auto p = count_phrase(n, c, rng);
    EXPECT_TRUE(p == "many" || p == "a lot of") << p;
  }
  EXPECT_THROW(count_phrase(0, c, rng), Error);
  c.many_threshold = 3;
  EXPECT_EQ(count_phrase(3, c, rng), "three");
  EXPECT_NE(count_phrase(4, c, rng), "four");
}

TEST(CaptionRules, ConfigValidation) {
  CaptionRuleConfig c;
  c.many_threshold = 11;
  EXPECT_THROW(c.validate(), Error);
  c.many_threshold = 10;
  c.center_fraction = 0.0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Captions, SingleCentredAirplane) {
  const auto set = generate_captions(record({centred("airplane")}), {});
  ASSERT_TRUE(set.well_formed());
  EXPECT_EQ(set.captions[0], "There is an airplane in the center of the image.");
  EXPECT_EQ(set.captions[1], "All annotated objects lie in the center of the image.");
  for (std::size_t k = 2; k < 5; ++k) EXPECT_NE(to_lower(set.captions[k]).find("one airplane"), std::string::npos) << set.captions[k];
}

TEST(Captions, ThreeShipsOffCentre) {
  const auto set = generate_captions(record({corner("ship"), corner("ship"), corner("ship")}), {});
  EXPECT_EQ(set.captions[0], "There is no annotated object in the center of the image.");
  EXPECT_EQ(set.captions[1], "There are ships away from the center of the image.");
  for (std::size_t k = 2; k < 5; ++k) EXPECT_NE(to_lower(set.captions[k]).find("three ships"), std::string::npos) << set.captions[k];
}

TEST(Captions, ListingKeepsFirstAppearanceOrder) {
  const auto set =
      generate_captions(record({centred("storage tank"), centred("bus"), centred("storage tank"), centred("harbor")}), {});
  EXPECT_EQ(set.captions[0], "There are storage tanks, a bus and a harbor in the center of the image.");
}

TEST(Captions, TwelveCarsUseGeneralQuantity) {
  std::vector<DetectedObject> objs(12, corner("car"));
  const auto set = generate_captions(record(objs), {});
  for (std::size_t k = 2; k < 5; ++k) {
    const auto c = to_lower(set.captions[k]);
    EXPECT_TRUE(c.find("many cars") != std::string::npos || c.find("a lot of cars") != std::string::npos) << c;
    EXPECT_EQ(c.find("twelve"), std::string::npos);
  }
}

TEST(Captions, EmptyRecordStillHasFive) {
  const auto set = generate_captions(record({}), {});
  ASSERT_TRUE(set.well_formed());
  EXPECT_EQ(set.captions[0], "An aerial photograph of a scene.");
}

TEST(Captions, SeedAndImageIdDetermineOutput) {
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const auto r = fixture::random_record(rng, i);
    CaptionRuleConfig c;
    c.seed = 77;
    EXPECT_EQ(generate_captions(r, c).captions, generate_captions(r, c).captions);
  }
}

TEST(Captions, RandomRecordsAreWellFormed) {
  Rng rng(9);
  for (int i = 0; i < 300; ++i) {
    const auto r = fixture::random_record(rng, i, 40);
    const auto set = generate_captions(r, {});
    ASSERT_TRUE(set.well_formed());
    for (const auto& c : set.captions) {
      EXPECT_FALSE(has_number_word_above_ten(c)) << c;
      EXPECT_TRUE(std::isupper(static_cast<unsigned char>(c[0]))) << c;
    }
  }
}

TEST(Templates, DefaultMatchesShippedFile) {
  std::ifstream in(std::string(RSALIGN_SOURCE_DIR) + "/data/caption_templates_v1.txt", std::ios::binary);
  ASSERT_TRUE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(), std::string(kDefaultCaptionTemplates));
}

TEST(Templates, RejectsUnknownSlotsAndKeys) {
  const std::string base(kDefaultCaptionTemplates);
  EXPECT_NO_THROW(parse_caption_templates(base));
  EXPECT_THROW(parse_caption_templates(base + "center = {count} things\n"), Error);
  EXPECT_THROW(parse_caption_templates(base + "colour = red\n"), Error);
  try {
    parse_caption_templates("version = 1\ncount = {nope}\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kTemplate);
  }
}

TEST(Dota, QuadsBecomeClampedAxisAlignedBoxes) {
  const std::string text =
      "imagesource:GoogleEarth\n"
      "gsd:0.5\n"
      "10.2 20 30 20.5 30.9 40 10 40 plane 0\n"
      "-5 -5 8 -5 8 8 -5 8 small-vehicle 1\n"
      "90 90 120 90 120 99 90 99 ship\n";
  const auto r = parse_dota_annotation(text, "P0001", 100, 100);
  ASSERT_EQ(r.record.objects.size(), 3u);
  EXPECT_EQ(r.record.objects[0].class_name, "plane");
  EXPECT_EQ(r.record.objects[0].box, (Box{0, 10, 20, 31, 40}));
  EXPECT_EQ(r.record.objects[1].box, (Box{0, 0, 0, 8, 8}));
  EXPECT_EQ(r.record.objects[2].box, (Box{0, 90, 90, 99, 99}));
  EXPECT_EQ(r.clamped, 2u);
}

TEST(Dota, MalformedLineNamesLine) {
  try {
    parse_dota_annotation("1 2 3 4 5 6 7 8 plane\n1 2 3 plane\n", "x", 10, 10);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kParse);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(Text, PluralsArticlesAndJoins) {
  EXPECT_EQ(pluralize("storage tank"), "storage tanks");
  EXPECT_EQ(pluralize("bus"), "buses");
  EXPECT_EQ(pluralize("ferry"), "ferries");
  EXPECT_EQ(pluralize("person"), "people");
  EXPECT_EQ(pluralize("leaf"), "leaves");
  EXPECT_EQ(with_article("airplane"), "an airplane");
  EXPECT_EQ(with_article("ship"), "a ship");
  EXPECT_EQ(join_english({"a"}), "a");
  EXPECT_EQ(join_english({"a", "b"}), "a and b");
  EXPECT_EQ(join_english({"a", "b", "c"}), "a, b and c");
  EXPECT_EQ(normalize_class_name("Baseball_Diamond"), "baseball diamond");
  EXPECT_EQ(normalize_class_name("  small-vehicle "), "small vehicle");
  EXPECT_EQ(parse_number_token("Seven"), 7);
  EXPECT_EQ(parse_number_token("10"), 10);
  EXPECT_FALSE(parse_number_token("11").has_value());
  EXPECT_FALSE(parse_number_token("zero").has_value());
}
