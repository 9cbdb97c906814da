#pragma once

// Rule-based captioning of detection annotations: five captions per image,
// two from object location and three from per-class counts.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rsalign/error.hpp"
#include "rsalign/mask2box.hpp"
#include "rsalign/rng.hpp"
#include "rsalign/text.hpp"

namespace rsalign {

inline constexpr std::size_t kCaptionsPerImage = 5;

struct DetectedObject {
  std::string class_name;
  Box box;
};

struct DetectionRecord {
  std::string image_id;
  int width = 0;
  int height = 0;
  std::vector<DetectedObject> objects;

  void validate() const {
    for (const auto& o : objects) {
      const Box& b = o.box;
      if (b.x_min < 0 || b.y_min < 0 || b.x_min > b.x_max || b.y_min > b.y_max || b.x_max >= width ||
          b.y_max >= height) {
        throw Error(ErrorKind::kParse, "box for '" + o.class_name + "' in " + image_id + " is outside " +
                                           std::to_string(width) + "x" + std::to_string(height));
      }
    }
  }
};

struct CaptionSet {
  std::vector<std::string> captions;

  bool well_formed() const {
    return captions.size() == kCaptionsPerImage &&
           std::none_of(captions.begin(), captions.end(), [](const std::string& c) { return c.empty(); });
  }
};

struct CaptionRuleConfig {
  /// Side of the central window as a fraction of the image side.
  double center_fraction = 0.5;
  /// Counts above this use a general-quantity term. At most 10 (the number-word table).
  int many_threshold = 10;
  std::uint64_t seed = 0;
  std::vector<std::string> synonym_pool{"many", "a lot of"};

  void validate() const {
    if (!(center_fraction > 0.0 && center_fraction <= 1.0)) {
      throw Error(ErrorKind::kConfig, "center_fraction must be in (0, 1]");
    }
    if (many_threshold < 1 || many_threshold > 10) {
      throw Error(ErrorKind::kConfig, "many_threshold must be in [1, 10]");
    }
    if (synonym_pool.empty()) throw Error(ErrorKind::kConfig, "synonym_pool is empty");
  }
};

enum class Location { kCenter, kOffCenter };

/// Center iff the box center (continuous pixel coordinates) lies in the
/// half-open central window [w(1-f)/2, w(1+f)/2) x [h(1-f)/2, h(1+f)/2).
inline Location classify_location(const Box& box, int width, int height, double center_fraction) {
  const double cx = (box.x_min + box.x_max + 1) / 2.0;
  const double cy = (box.y_min + box.y_max + 1) / 2.0;
  const double x0 = width * (1.0 - center_fraction) / 2.0;
  const double x1 = width * (1.0 + center_fraction) / 2.0;
  const double y0 = height * (1.0 - center_fraction) / 2.0;
  const double y1 = height * (1.0 + center_fraction) / 2.0;
  return (cx >= x0 && cx < x1 && cy >= y0 && cy < y1) ? Location::kCenter : Location::kOffCenter;
}

inline std::string count_phrase(int n, const CaptionRuleConfig& config, Rng& rng) {
  if (n <= 0) throw Error(ErrorKind::kInvalidCount, "count must be positive, got " + std::to_string(n));
  if (n <= config.many_threshold) return std::string(number_word(n));
  return config.synonym_pool[rng.uniform_index(config.synonym_pool.size())];
}

/// Caption grammar. Slots: {be}, {objects}, {count}, {class}.
struct CaptionTemplates {
  int version = 0;
  std::string center;
  std::string center_none;
  std::string off_center;
  std::string off_center_none;
  std::vector<std::string> count;
  std::vector<std::string> empty;
};

inline constexpr std::string_view kDefaultCaptionTemplates = R"(# Caption grammar for box-to-caption generation.
# key = template; repeated keys (count, empty) form ordered lists.
# Slots: {be} is/are, {objects} enumerated classes, {count} quantity, {class} class noun.
version = 1
center = there {be} {objects} in the center of the image.
center.none = there is no annotated object in the center of the image.
off_center = there {be} {objects} away from the center of the image.
off_center.none = all annotated objects lie in the center of the image.
count = there {be} {count} {class} in the image.
count = the image contains {count} {class}.
count = {count} {class} can be seen in this aerial image.
empty = an aerial photograph of a scene.
empty = a remote sensing image of a scene.
empty = a satellite view of a scene.
empty = an overhead image of a landscape.
empty = a top-down view of an area with no annotated objects.
)";

namespace detail {

inline std::vector<std::string> template_slots(std::string_view tpl) {
  std::vector<std::string> slots;
  std::size_t pos = 0;
  while ((pos = tpl.find('{', pos)) != std::string_view::npos) {
    const auto end = tpl.find('}', pos);
    if (end == std::string_view::npos) throw Error(ErrorKind::kTemplate, "unterminated slot in: " + std::string(tpl));
    slots.emplace_back(tpl.substr(pos + 1, end - pos - 1));
    pos = end + 1;
  }
  return slots;
}

inline void check_slots(std::string_view key, std::string_view tpl, const std::set<std::string>& allowed) {
  for (const auto& s : template_slots(tpl)) {
    if (!allowed.contains(s)) {
      throw Error(ErrorKind::kTemplate, "slot {" + s + "} not allowed in '" + std::string(key) + "'");
    }
  }
}

inline std::string fill(std::string_view tpl, const std::map<std::string, std::string>& values) {
  std::string out;
  std::size_t pos = 0;
  while (pos < tpl.size()) {
    const auto open = tpl.find('{', pos);
    if (open == std::string_view::npos) {
      out.append(tpl.substr(pos));
      break;
    }
    out.append(tpl.substr(pos, open - pos));
    const auto close = tpl.find('}', open);
    out.append(values.at(std::string(tpl.substr(open + 1, close - open - 1))));
    pos = close + 1;
  }
  return out;
}

}  // namespace detail

inline CaptionTemplates parse_caption_templates(std::string_view text) {
  CaptionTemplates t;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::kTemplate, "line " + std::to_string(line_no) + ": expected 'key = template'");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (value.empty()) throw Error(ErrorKind::kTemplate, "line " + std::to_string(line_no) + ": empty template");
    const bool repeatable = key == "count" || key == "empty";
    if (!repeatable && !seen.insert(key).second) {
      throw Error(ErrorKind::kTemplate, "line " + std::to_string(line_no) + ": duplicate key " + key);
    }
    if (key == "version") {
      int v = 0;
      auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
      if (ec != std::errc{} || p != value.data() + value.size() || v < 1) {
        throw Error(ErrorKind::kTemplate, "line " + std::to_string(line_no) + ": bad version");
      }
      t.version = v;
    } else if (key == "center" || key == "off_center") {
      detail::check_slots(key, value, {"be", "objects"});
      (key == "center" ? t.center : t.off_center) = value;
    } else if (key == "center.none" || key == "off_center.none") {
      detail::check_slots(key, value, {});
      (key == "center.none" ? t.center_none : t.off_center_none) = value;
    } else if (key == "count") {
      detail::check_slots(key, value, {"be", "count", "class"});
      t.count.push_back(value);
    } else if (key == "empty") {
      detail::check_slots(key, value, {});
      t.empty.push_back(value);
    } else {
      throw Error(ErrorKind::kTemplate, "line " + std::to_string(line_no) + ": unknown key " + key);
    }
  }
  if (t.version == 0) throw Error(ErrorKind::kTemplate, "missing version");
  if (t.center.empty() || t.center_none.empty() || t.off_center.empty() || t.off_center_none.empty()) {
    throw Error(ErrorKind::kTemplate, "center, center.none, off_center and off_center.none are required");
  }
  if (t.count.empty() || t.empty.empty()) throw Error(ErrorKind::kTemplate, "need at least one count and one empty template");
  return t;
}

inline const CaptionTemplates& default_caption_templates() {
  static const CaptionTemplates t = parse_caption_templates(kDefaultCaptionTemplates);
  return t;
}

namespace detail {

struct ClassTally {
  std::vector<std::string> order;  // first-appearance order
  std::map<std::string, int> counts;

  void add(const std::string& name) {
    if (counts[name]++ == 0) order.push_back(name);
  }
};

inline std::string render_listing(const ClassTally& tally, const std::string& tpl) {
  std::vector<std::string> items;
  for (const auto& name : tally.order) {
    items.push_back(tally.counts.at(name) == 1 ? with_article(name) : pluralize(name));
  }
  const bool singular = tally.counts.at(tally.order.front()) == 1;
  return fill(tpl, {{"be", singular ? "is" : "are"}, {"objects", join_english(items)}});
}

}  // namespace detail

/// Five captions: (1) classes centred in the image, (2) classes away from the
/// centre, (3-5) the count of a randomly drawn object's class. Deterministic
/// in (record, config.seed); the random stream is keyed by image id.
inline CaptionSet generate_captions(const DetectionRecord& record, const CaptionRuleConfig& config,
                                    const CaptionTemplates& templates = default_caption_templates()) {
  config.validate();
  CaptionSet out;
  if (record.objects.empty()) {
    for (std::size_t k = 0; k < kCaptionsPerImage; ++k) {
      out.captions.push_back(capitalize_first(templates.empty[k % templates.empty.size()]));
    }
    return out;
  }

  Rng rng(derive_seed(config.seed, record.image_id));
  detail::ClassTally center, off_center, all;
  for (const auto& o : record.objects) {
    all.add(o.class_name);
    if (classify_location(o.box, record.width, record.height, config.center_fraction) == Location::kCenter) {
      center.add(o.class_name);
    } else {
      off_center.add(o.class_name);
    }
  }

  out.captions.push_back(capitalize_first(
      center.order.empty() ? templates.center_none : detail::render_listing(center, templates.center)));
  out.captions.push_back(capitalize_first(
      off_center.order.empty() ? templates.off_center_none : detail::render_listing(off_center, templates.off_center)));

  for (std::size_t k = 0; k < 3; ++k) {
    const auto& picked = record.objects[rng.uniform_index(record.objects.size())];
    const int n = all.counts.at(picked.class_name);
    const std::string quantity = count_phrase(n, config, rng);
    const std::string& tpl = templates.count[k % templates.count.size()];
    out.captions.push_back(capitalize_first(detail::fill(
        tpl, {{"be", n == 1 ? "is" : "are"},
              {"count", quantity},
              {"class", n == 1 ? picked.class_name : pluralize(picked.class_name)}})));
  }
  return out;
}

struct DotaParseResult {
  DetectionRecord record;
  /// Number of objects whose coordinates had to be clamped into the image.
  std::size_t clamped = 0;
};

/// Parses DOTA "x1 y1 x2 y2 x3 y3 x4 y4 class [difficulty]" lines. Each quad
/// becomes the axis-aligned box of its vertex min/max (floor/ceil), clamped to
/// the image. Class names are kept verbatim.
inline DotaParseResult parse_dota_annotation(std::string_view text, const std::string& image_id, int width,
                                             int height) {
  if (width <= 0 || height <= 0) throw Error(ErrorKind::kParse, image_id + ": image dimensions must be positive");
  DotaParseResult result;
  result.record.image_id = image_id;
  result.record.width = width;
  result.record.height = height;

  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const std::string lower = to_lower(stripped);
    if (lower.starts_with("imagesource") || lower.starts_with("gsd")) continue;

    auto fail = [&](const std::string& why) {
      throw Error(ErrorKind::kParse, image_id + " line " + std::to_string(line_no) + ": " + why);
    };
    const auto tokens = split_whitespace(stripped);
    if (tokens.size() != 9 && tokens.size() != 10) fail("expected 8 coordinates, a class and an optional difficulty");
    double xs[4], ys[4];
    for (int k = 0; k < 8; ++k) {
      const std::string& tok = tokens[static_cast<std::size_t>(k)];
      double v = 0.0;
      auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
      if (ec != std::errc{} || p != tok.data() + tok.size() || !std::isfinite(v)) fail("bad coordinate '" + tok + "'");
      (k % 2 == 0 ? xs : ys)[k / 2] = v;
    }
    if (tokens.size() == 10) {
      int difficulty = 0;
      const std::string& tok = tokens[9];
      auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), difficulty);
      if (ec != std::errc{} || p != tok.data() + tok.size()) fail("bad difficulty '" + tok + "'");
    }

    const double lo_x = *std::min_element(xs, xs + 4), hi_x = *std::max_element(xs, xs + 4);
    const double lo_y = *std::min_element(ys, ys + 4), hi_y = *std::max_element(ys, ys + 4);
    auto clamp_to = [](double v, int limit, bool& changed) {
      double c = std::clamp(v, 0.0, static_cast<double>(limit - 1));
      if (c != v) changed = true;
      return static_cast<int>(c);
    };
    bool changed = false;
    Box box;
    box.x_min = clamp_to(std::floor(lo_x), width, changed);
    box.y_min = clamp_to(std::floor(lo_y), height, changed);
    box.x_max = clamp_to(std::ceil(hi_x), width, changed);
    box.y_max = clamp_to(std::ceil(hi_y), height, changed);
    if (changed) ++result.clamped;
    result.record.objects.push_back({tokens[8], box});
  }
  return result;
}

}  // namespace rsalign
