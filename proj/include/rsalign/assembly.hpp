#pragma once

// Corpus assembly: human-captioned (ret), detection (det) and segmentation
// (seg) sources become five-caption records; train records that duplicate a
// test image or an earlier train image are removed before the corpus is written.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "rsalign/box2caption.hpp"
#include "rsalign/dedup.hpp"
#include "rsalign/error.hpp"
#include "rsalign/image_io.hpp"
#include "rsalign/jsonl.hpp"
#include "rsalign/mask2box.hpp"
#include "rsalign/parallel.hpp"
#include "rsalign/phash.hpp"
#include "rsalign/text.hpp"

namespace rsalign {

enum class Origin { kRet, kDet, kSeg };

inline const char* to_string(Origin o) {
  switch (o) {
    case Origin::kRet: return "ret";
    case Origin::kDet: return "det";
    case Origin::kSeg: return "seg";
  }
  return "?";
}

inline Origin parse_origin(const std::string& s) {
  if (s == "ret") return Origin::kRet;
  if (s == "det") return Origin::kDet;
  if (s == "seg") return Origin::kSeg;
  throw Error(ErrorKind::kParse, "unknown origin '" + s + "'");
}

inline std::string check_split(const std::string& s) {
  if (s != "train" && s != "val" && s != "test") throw Error(ErrorKind::kParse, "unknown split '" + s + "'");
  return s;
}

struct UnifiedRecord {
  std::string image_id;
  std::string source_dataset;
  std::string split = "train";
  std::string image_path;
  std::vector<std::string> captions;
  Origin origin = Origin::kRet;

  /// Key that is unique across sources.
  std::string key() const { return source_dataset + "/" + image_id; }
};

inline Json to_json(const UnifiedRecord& r) {
  Json j;
  j["image_id"] = r.image_id;
  j["source_dataset"] = r.source_dataset;
  j["split"] = r.split;
  j["image_path"] = r.image_path;
  j["captions"] = r.captions;
  j["origin"] = to_string(r.origin);
  return j;
}

inline UnifiedRecord record_from_json(const Json& j, const std::string& where) {
  UnifiedRecord r;
  r.image_id = field<std::string>(j, "image_id", where);
  r.source_dataset = field<std::string>(j, "source_dataset", where);
  r.split = check_split(field<std::string>(j, "split", where));
  r.image_path = field<std::string>(j, "image_path", where);
  r.captions = field<std::vector<std::string>>(j, "captions", where);
  r.origin = parse_origin(field<std::string>(j, "origin", where));
  if (r.captions.size() != kCaptionsPerImage) throw Error(ErrorKind::kParse, where + ": record must have 5 captions");
  return r;
}

struct IngestResult {
  std::vector<UnifiedRecord> records;
  /// Images whose caption list was padded or truncated to five.
  std::size_t caption_count_fixes = 0;
  /// Detection boxes clamped into the image.
  std::size_t clamped_boxes = 0;
};

/// Pads by cyclic repetition or truncates to exactly five captions. Returns
/// whether the list changed length.
inline bool fit_five_captions(std::vector<std::string>& captions) {
  if (captions.size() == kCaptionsPerImage) return false;
  if (captions.size() > kCaptionsPerImage) {
    captions.resize(kCaptionsPerImage);
  } else {
    const std::size_t have = captions.size();
    for (std::size_t k = have; k < kCaptionsPerImage; ++k) captions.push_back(captions[k % have]);
  }
  return true;
}

/// Human-captioned retrieval data. Accepts the common
/// {"dataset", "images": [{"filename", "split", "sentences": [{"raw"}]}]} layout
/// or entries of the form {"image_id", "image_path"?, "split"?, "captions": [...]};
/// the top level may also be a bare array of entries.
inline IngestResult ingest_ret(const std::filesystem::path& path, std::string source = {}) {
  const Json root = read_json(path);
  const Json* images = &root;
  if (root.is_object()) {
    if (!root.contains("images") || !root["images"].is_array()) {
      throw Error(ErrorKind::kIngest, path.string() + ": expected an 'images' array");
    }
    images = &root["images"];
    if (source.empty() && root.contains("dataset") && root["dataset"].is_string()) source = root["dataset"];
  } else if (!root.is_array()) {
    throw Error(ErrorKind::kIngest, path.string() + ": expected a JSON object or array");
  }
  if (source.empty()) source = path.stem().string();

  IngestResult out;
  std::size_t n = 0;
  for (const auto& entry : *images) {
    const std::string where = path.string() + " image " + std::to_string(n++);
    if (!entry.is_object()) throw Error(ErrorKind::kIngest, where + ": entry is not an object");
    UnifiedRecord r;
    r.origin = Origin::kRet;
    r.source_dataset = source;
    if (entry.contains("image_id")) {
      const auto& id = entry["image_id"];
      r.image_id = id.is_string() ? id.get<std::string>() : id.dump();
    } else {
      r.image_id = field<std::string>(entry, "filename", where);
    }
    if (entry.contains("image_path")) {
      r.image_path = field<std::string>(entry, "image_path", where);
    } else if (entry.contains("filename")) {
      r.image_path = entry.contains("filepath")
                         ? (std::filesystem::path(field<std::string>(entry, "filepath", where)) /
                            field<std::string>(entry, "filename", where)).string()
                         : field<std::string>(entry, "filename", where);
    } else {
      r.image_path = r.image_id;
    }
    r.split = entry.contains("split") ? check_split(field<std::string>(entry, "split", where)) : "train";
    if (entry.contains("captions")) {
      r.captions = field<std::vector<std::string>>(entry, "captions", where);
    } else if (entry.contains("sentences") && entry["sentences"].is_array()) {
      for (const auto& s : entry["sentences"]) r.captions.push_back(field<std::string>(s, "raw", where));
    } else {
      throw Error(ErrorKind::kIngest, where + ": no 'captions' or 'sentences'");
    }
    for (auto& c : r.captions) c = trim(c);
    std::erase_if(r.captions, [](const std::string& c) { return c.empty(); });
    if (r.captions.empty()) throw Error(ErrorKind::kIngest, where + ": image has no captions");
    if (fit_five_captions(r.captions)) ++out.caption_count_fixes;
    out.records.push_back(std::move(r));
  }
  return out;
}

struct DetectionSource {
  enum class Format { kCanonical, kDota };
  Format format = Format::kCanonical;
  std::string source;       // defaults to the file/directory stem
  std::string split = "train";
  /// DOTA only: image sizes by image id, and a fallback size.
  std::map<std::string, std::pair<int, int>> dims;
  std::optional<std::pair<int, int>> default_dims;
  std::string image_dir;    // DOTA only: image_path = image_dir/<id>.png
};

struct LoadedDetections {
  std::vector<DetectionRecord> records;
  std::vector<std::string> image_paths;
  std::vector<std::string> splits;
  std::size_t clamped = 0;
};

/// Canonical JSON Lines: {"image_id", "width", "height", "objects": [{"class",
/// "box": [x_min, y_min, x_max, y_max]}], "image_path"?, "split"?}.
inline LoadedDetections load_canonical_detections(const std::filesystem::path& path, const std::string& default_split) {
  LoadedDetections out;
  std::size_t line = 0;
  for (const auto& j : read_jsonl(path)) {
    const std::string where = path.string() + " record " + std::to_string(++line);
    DetectionRecord rec;
    rec.image_id = field<std::string>(j, "image_id", where);
    rec.width = field<int>(j, "width", where);
    rec.height = field<int>(j, "height", where);
    if (j.contains("objects")) {
      for (const auto& o : j["objects"]) {
        DetectedObject obj;
        obj.class_name = field<std::string>(o, "class", where);
        const auto b = field<std::vector<int>>(o, "box", where);
        if (b.size() != 4) throw Error(ErrorKind::kParse, where + ": box needs 4 values");
        obj.box = Box{0, b[0], b[1], b[2], b[3]};
        rec.objects.push_back(std::move(obj));
      }
    }
    try {
      rec.validate();
    } catch (const Error& e) {
      throw Error(ErrorKind::kParse, where + ": " + e.what());
    }
    out.image_paths.push_back(j.contains("image_path") ? field<std::string>(j, "image_path", where) : rec.image_id);
    out.splits.push_back(j.contains("split") ? check_split(field<std::string>(j, "split", where)) : default_split);
    out.records.push_back(std::move(rec));
  }
  return out;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIngest, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::vector<std::filesystem::path> list_files(const std::filesystem::path& dir,
                                                     const std::set<std::string>& extensions) {
  std::vector<std::filesystem::path> out;
  std::error_code ec;
  for (const auto& e : std::filesystem::directory_iterator(dir, ec)) {
    if (e.is_regular_file() && extensions.contains(to_lower(e.path().extension().string()))) out.push_back(e.path());
  }
  if (ec) throw Error(ErrorKind::kIngest, "cannot list " + dir.string() + ": " + ec.message());
  std::sort(out.begin(), out.end());
  return out;
}

/// DOTA text annotations: one file, or a directory of .txt files; the image id
/// is the file stem.
inline LoadedDetections load_dota_detections(const std::filesystem::path& path, const DetectionSource& src) {
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(path)) {
    files = list_files(path, {".txt"});
  } else {
    files.push_back(path);
  }
  LoadedDetections out;
  for (const auto& f : files) {
    const std::string id = f.stem().string();
    std::pair<int, int> wh;
    if (auto it = src.dims.find(id); it != src.dims.end()) {
      wh = it->second;
    } else if (src.default_dims) {
      wh = *src.default_dims;
    } else {
      throw Error(ErrorKind::kIngest, f.string() + ": no image dimensions known for '" + id + "'");
    }
    auto parsed = parse_dota_annotation(read_text_file(f), id, wh.first, wh.second);
    out.clamped += parsed.clamped;
    out.image_paths.push_back(src.image_dir.empty() ? id : (std::filesystem::path(src.image_dir) / (id + ".png")).string());
    out.splits.push_back(src.split);
    out.records.push_back(std::move(parsed.record));
  }
  return out;
}

inline void normalize_class_names(DetectionRecord& rec) {
  for (auto& o : rec.objects) {
    o.class_name = normalize_class_name(o.class_name);
    if (o.class_name.empty()) throw Error(ErrorKind::kParse, rec.image_id + ": empty class name");
  }
}

inline IngestResult ingest_det(const std::filesystem::path& path, const CaptionRuleConfig& config,
                               const DetectionSource& src = {},
                               const CaptionTemplates& templates = default_caption_templates()) {
  config.validate();
  LoadedDetections loaded = src.format == DetectionSource::Format::kDota ? load_dota_detections(path, src)
                                                                         : load_canonical_detections(path, src.split);
  IngestResult out;
  out.clamped_boxes = loaded.clamped;
  const std::string source = src.source.empty() ? path.stem().string() : src.source;
  for (std::size_t i = 0; i < loaded.records.size(); ++i) {
    auto& rec = loaded.records[i];
    normalize_class_names(rec);
    UnifiedRecord r;
    r.image_id = rec.image_id;
    r.source_dataset = source;
    r.split = loaded.splits[i];
    r.image_path = loaded.image_paths[i];
    r.captions = generate_captions(rec, config, templates).captions;
    r.origin = Origin::kDet;
    out.records.push_back(std::move(r));
  }
  return out;
}

/// Class sidecar: {"1": "building", ...} or {"classes": {...}, "ignore": [255]}.
struct ClassTable {
  std::map<std::int32_t, std::string> names;
  std::set<std::int32_t> ignore;
};

inline ClassTable load_class_table(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorKind::kIngest, "class sidecar not found: " + path.string());
  const Json root = read_json(path);
  const Json* classes = &root;
  ClassTable table;
  if (root.contains("classes")) {
    classes = &root["classes"];
    if (root.contains("ignore")) {
      for (const auto& v : root["ignore"]) table.ignore.insert(v.get<std::int32_t>());
    }
  }
  if (!classes->is_object()) throw Error(ErrorKind::kIngest, path.string() + ": class table must map ids to names");
  for (auto it = classes->begin(); it != classes->end(); ++it) {
    std::int32_t id = 0;
    try {
      std::size_t used = 0;
      id = std::stoi(it.key(), &used);
      if (used != it.key().size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error(ErrorKind::kIngest, path.string() + ": class key '" + it.key() + "' is not an integer");
    }
    if (!it.value().is_string()) throw Error(ErrorKind::kIngest, path.string() + ": class names must be strings");
    table.names[id] = it.value().get<std::string>();
  }
  return table;
}

/// Single-channel 8-bit mask; pixel value = class id. Ignored ids become background.
inline LabelMask load_label_mask(const std::filesystem::path& path, const ClassTable& table) {
  const Image8 img = read_image(path);
  LabelMask mask;
  mask.width = img.width;
  mask.height = img.height;
  mask.class_names = table.names;
  mask.class_ids.resize(static_cast<std::size_t>(img.width) * img.height);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      if (img.channels == 3 && (img.at(x, y, 0) != img.at(x, y, 1) || img.at(x, y, 0) != img.at(x, y, 2))) {
        throw Error(ErrorKind::kInvalidImage, path.string() + ": masks must be single-channel class ids");
      }
      std::int32_t id = img.at(x, y, 0);
      if (table.ignore.contains(id)) id = 0;
      mask.class_ids[static_cast<std::size_t>(y) * img.width + x] = id;
    }
  }
  mask.validate();
  return mask;
}

inline DetectionRecord mask_to_detections(const LabelMask& mask, const std::string& image_id, std::size_t min_area) {
  DetectionRecord rec{image_id, mask.width, mask.height, {}};
  for (const auto& box : mask_to_boxes(mask, min_area)) {
    rec.objects.push_back({normalize_class_name(mask.class_names.at(box.class_id)), box});
  }
  return rec;
}

struct SegmentationSource {
  std::filesystem::path mask_dir;
  std::filesystem::path classes_file;  // defaults to mask_dir/classes.json
  std::string source;                  // defaults to the mask directory name
  std::string split = "train";
  std::string image_dir;               // image_path = image_dir/<stem><image_ext>
  std::string image_ext = ".png";
  std::size_t min_area = 0;
  unsigned jobs = 1;
};

inline std::filesystem::path classes_path(const SegmentationSource& src) {
  return src.classes_file.empty() ? src.mask_dir / "classes.json" : src.classes_file;
}

inline IngestResult ingest_seg(const SegmentationSource& src, const CaptionRuleConfig& config,
                               const CaptionTemplates& templates = default_caption_templates()) {
  config.validate();
  const ClassTable table = load_class_table(classes_path(src));
  const auto masks = list_files(src.mask_dir, {".png", ".pgm"});
  const std::string source =
      src.source.empty() ? std::filesystem::absolute(src.mask_dir).lexically_normal().filename().string() : src.source;
  IngestResult out;
  out.records.resize(masks.size());
  parallel_for(masks.size(), src.jobs, [&](std::size_t i) {
    const std::string id = masks[i].stem().string();
    const LabelMask mask = load_label_mask(masks[i], table);
    UnifiedRecord r;
    r.image_id = id;
    r.source_dataset = source;
    r.split = src.split;
    r.image_path = src.image_dir.empty() ? masks[i].string()
                                         : (std::filesystem::path(src.image_dir) / (id + src.image_ext)).string();
    r.captions = generate_captions(mask_to_detections(mask, id, src.min_area), config, templates).captions;
    r.origin = Origin::kSeg;
    out.records[i] = std::move(r);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Statistics

inline constexpr int kStopwordsVersion = 1;
inline constexpr std::array<std::string_view, 50> kStopwords{
    "a",    "an",   "the",  "there", "is",   "are",   "was",   "were",  "be",    "been",
    "being", "of",  "in",   "on",    "at",   "to",    "from",  "by",    "with",  "and",
    "or",   "as",   "it",   "its",   "this", "that",  "these", "those", "some",  "for",
    "into", "onto", "near", "next",  "which", "who",  "has",   "have",  "had",   "can",
    "do",   "does", "not",  "no",    "so",   "than",  "then",  "very",  "while", "their"};

inline bool is_stopword(std::string_view w) {
  return std::find(kStopwords.begin(), kStopwords.end(), w) != kStopwords.end();
}

/// Lowercased whitespace tokens after removing ASCII punctuation.
inline std::vector<std::string> caption_tokens(std::string_view caption) {
  std::string cleaned;
  for (char c : caption) {
    if (std::ispunct(static_cast<unsigned char>(c))) continue;
    cleaned.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return split_whitespace(cleaned);
}

struct CorpusStats {
  std::size_t images = 0;
  std::size_t pairs = 0;
  std::map<std::string, std::size_t> per_source;
  std::map<std::string, std::size_t> per_origin;
  std::map<std::string, std::size_t> per_split;
  /// token count -> number of captions
  std::map<std::size_t, std::size_t> length_histogram;
  /// (word, count), most frequent first, ties alphabetical
  std::vector<std::pair<std::string, std::size_t>> keywords;
  std::size_t removed_duplicates = 0;
  std::size_t unhashed_images = 0;
};

inline CorpusStats corpus_stats(const std::vector<UnifiedRecord>& corpus, std::size_t top_k = 20) {
  CorpusStats s;
  std::map<std::string, std::size_t> freq;
  for (const auto& r : corpus) {
    ++s.images;
    ++s.per_source[r.source_dataset];
    ++s.per_origin[to_string(r.origin)];
    ++s.per_split[r.split];
    for (const auto& c : r.captions) {
      ++s.pairs;
      const auto tokens = caption_tokens(c);
      ++s.length_histogram[tokens.size()];
      for (const auto& t : tokens) {
        if (!is_stopword(t)) ++freq[t];
      }
    }
  }
  s.keywords.assign(freq.begin(), freq.end());
  std::stable_sort(s.keywords.begin(), s.keywords.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (s.keywords.size() > top_k) s.keywords.resize(top_k);
  return s;
}

inline Json to_json(const CorpusStats& s) {
  Json j;
  j["images"] = s.images;
  j["pairs"] = s.pairs;
  j["per_source"] = s.per_source;
  j["per_origin"] = s.per_origin;
  j["per_split"] = s.per_split;
  Json hist = Json::object();
  for (const auto& [len, n] : s.length_histogram) hist[std::to_string(len)] = n;
  j["caption_length_histogram"] = hist;
  Json kw = Json::array();
  for (const auto& [w, n] : s.keywords) kw.push_back({{"word", w}, {"count", n}});
  j["keywords"] = kw;
  j["stopwords_version"] = kStopwordsVersion;
  j["removed_duplicates"] = s.removed_duplicates;
  j["unhashed_images"] = s.unhashed_images;
  return j;
}

inline void write_length_histogram_csv(const std::filesystem::path& path, const CorpusStats& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << "tokens,captions\n";
  for (const auto& [len, n] : s.length_histogram) out << len << ',' << n << '\n';
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Assembly

struct AssembleConfig {
  bool dedup = true;
  DedupConfig dedup_config;
  /// Known hashes by record key ("source/image_id") or bare image id.
  std::map<std::string, std::uint64_t> hash_cache;
  /// Hash image files that are missing from the cache.
  bool hash_images = true;
  unsigned jobs = 1;
};

struct AssemblyResult {
  std::vector<UnifiedRecord> corpus;
  CorpusStats stats;
  std::vector<Removal> removals;
};

/// Loads a hash cache file ({"image_id", "phash_hex"} lines).
inline std::map<std::string, std::uint64_t> read_hash_cache(const std::filesystem::path& path) {
  std::map<std::string, std::uint64_t> out;
  std::size_t line = 0;
  for (const auto& j : read_jsonl(path)) {
    const std::string where = path.string() + " line " + std::to_string(++line);
    out[field<std::string>(j, "image_id", where)] = from_hex(field<std::string>(j, "phash_hex", where));
  }
  return out;
}

/// Sorts records by (source, image id), removes contaminating train records,
/// and returns the corpus with its statistics. Records without a hash are kept
/// and counted as unhashed.
inline AssemblyResult assemble_records(std::vector<UnifiedRecord> records, const AssembleConfig& config = {}) {
  std::stable_sort(records.begin(), records.end(), [](const UnifiedRecord& a, const UnifiedRecord& b) {
    if (a.source_dataset != b.source_dataset) return a.source_dataset < b.source_dataset;
    return a.image_id < b.image_id;
  });
  for (const auto& r : records) {
    if (r.captions.size() != kCaptionsPerImage) {
      throw Error(ErrorKind::kIngest, r.key() + " has " + std::to_string(r.captions.size()) + " captions");
    }
  }

  AssemblyResult result;
  std::size_t unhashed = 0;
  std::vector<char> drop(records.size(), 0);
  if (config.dedup && !records.empty()) {
    std::vector<std::optional<std::uint64_t>> hashes(records.size());
    parallel_for(records.size(), config.jobs, [&](std::size_t i) {
      const auto& r = records[i];
      if (auto it = config.hash_cache.find(r.key()); it != config.hash_cache.end()) {
        hashes[i] = it->second;
      } else if (auto it2 = config.hash_cache.find(r.image_id); it2 != config.hash_cache.end()) {
        hashes[i] = it2->second;
      } else if (config.hash_images && std::filesystem::is_regular_file(r.image_path)) {
        hashes[i] = compute_phash(to_rgb(read_image(r.image_path))).bits;
      }
    });
    std::vector<PerceptualHash> train, test;
    std::vector<std::size_t> train_rows;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (!hashes[i]) {
        ++unhashed;
        continue;
      }
      if (records[i].split == "test") {
        test.push_back({*hashes[i], records[i].key()});
      } else {
        train.push_back({*hashes[i], records[i].key()});
        train_rows.push_back(i);
      }
    }
    auto cleaned = decontaminate(train, test, config.dedup_config);
    std::vector<char> keep(train.size(), 0);
    for (auto k : cleaned.kept) keep[k] = 1;
    for (std::size_t t = 0; t < train.size(); ++t) {
      if (!keep[t]) drop[train_rows[t]] = 1;
    }
    result.removals = std::move(cleaned.removals);
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!drop[i]) result.corpus.push_back(std::move(records[i]));
  }
  result.stats = corpus_stats(result.corpus);
  result.stats.removed_duplicates = result.removals.size();
  result.stats.unhashed_images = unhashed;
  return result;
}

inline void write_corpus(const std::filesystem::path& path, const std::vector<UnifiedRecord>& corpus) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  for (const auto& r : corpus) out << to_json(r).dump() << '\n';
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

inline std::vector<UnifiedRecord> read_corpus(const std::filesystem::path& path) {
  std::vector<UnifiedRecord> out;
  std::size_t line = 0;
  for (const auto& j : read_jsonl(path)) out.push_back(record_from_json(j, path.string() + " line " + std::to_string(++line)));
  return out;
}

/// assemble_records, then writes the corpus as JSON Lines.
inline AssemblyResult assemble(std::vector<UnifiedRecord> records, const AssembleConfig& config,
                               const std::filesystem::path& output_path) {
  auto result = assemble_records(std::move(records), config);
  write_corpus(output_path, result.corpus);
  return result;
}

}  // namespace rsalign
