// rsalign: corpus assembly and embedding evaluation from the command line.

#include <cstdio>
#include <iostream>
#include <numeric>

#include "cli_support.hpp"

namespace fs = std::filesystem;
using namespace rsalign;
using namespace rsalign::cli;

namespace {

struct Common {
  std::uint64_t seed = 0;
  unsigned jobs = 1;
};

void add_common(CLI::App* app, Common& c, bool with_seed = true) {
  if (with_seed) app->add_option("--seed", c.seed, "Random seed (default: $RSALIGN_SEED or 0)")->capture_default_str();
  app->add_option("--jobs", c.jobs, "Worker threads")->capture_default_str()->check(CLI::Range(1u, 256u));
}

CaptionRuleConfig caption_config(std::uint64_t seed, double center_fraction, int many_threshold) {
  CaptionRuleConfig c;
  c.seed = seed;
  c.center_fraction = center_fraction;
  c.many_threshold = many_threshold;
  c.validate();
  return c;
}

CaptionTemplates load_templates(const std::string& path) {
  if (path.empty()) return default_caption_templates();
  return parse_caption_templates(read_text_file(path));
}

Json detection_json(const DetectionRecord& r) {
  Json objs = Json::array();
  for (const auto& o : r.objects) {
    objs.push_back({{"class", o.class_name}, {"box", {o.box.x_min, o.box.y_min, o.box.x_max, o.box.y_max}}});
  }
  return {{"image_id", r.image_id}, {"width", r.width}, {"height", r.height}, {"objects", objs}};
}

// ---------------------------------------------------------------------------
// m2b

struct M2bArgs {
  std::string masks, classes, out, image_dir, split = "train";
  std::size_t min_area = 0;
  Common common;
};

int run_m2b(const M2bArgs& a, Manifest& manifest) {
  SegmentationSource src;
  src.mask_dir = a.masks;
  src.classes_file = a.classes;
  const ClassTable table = load_class_table(classes_path(src));
  const auto masks = list_files(a.masks, {".png", ".pgm"});
  std::vector<Json> rows(masks.size());
  parallel_for(masks.size(), a.common.jobs, [&](std::size_t i) {
    const std::string id = masks[i].stem().string();
    Json j = detection_json(mask_to_detections(load_label_mask(masks[i], table), id, a.min_area));
    j["image_path"] = a.image_dir.empty() ? masks[i].string() : (fs::path(a.image_dir) / (id + ".png")).string();
    j["split"] = a.split;
    rows[i] = std::move(j);
  });
  write_jsonl(a.out, rows);
  manifest.input("masks", a.masks);
  manifest.input("classes", classes_path(src));
  std::cerr << "m2b: " << masks.size() << " masks -> " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// b2c

struct B2cArgs {
  std::string annotations, format = "canonical", out, templates, dims, default_size;
  double center_fraction = 0.5;
  int many_threshold = 10;
  Common common;
};

DetectionSource detection_source(const std::string& format, const std::string& dims, const std::string& default_size,
                                 const std::string& split) {
  DetectionSource src;
  src.split = split;
  if (format == "dota") {
    src.format = DetectionSource::Format::kDota;
    if (!dims.empty()) src.dims = read_dims(dims);
    if (!default_size.empty()) src.default_dims = parse_size(default_size);
  }
  return src;
}

int run_b2c(const B2cArgs& a, Manifest& manifest) {
  const auto cfg = caption_config(a.common.seed, a.center_fraction, a.many_threshold);
  const auto templates = load_templates(a.templates);
  const auto src = detection_source(a.format, a.dims, a.default_size, "train");
  LoadedDetections loaded = src.format == DetectionSource::Format::kDota ? load_dota_detections(a.annotations, src)
                                                                         : load_canonical_detections(a.annotations, "train");
  std::vector<Json> rows;
  for (auto& rec : loaded.records) {
    normalize_class_names(rec);
    rows.push_back({{"image_id", rec.image_id}, {"captions", generate_captions(rec, cfg, templates).captions}});
  }
  write_jsonl(a.out, rows);
  manifest.input("annotations", a.annotations);
  manifest.input("templates", a.templates);
  manifest.input("dims", a.dims);
  manifest.seed("captions", a.common.seed);
  if (loaded.clamped) std::cerr << "b2c: clamped " << loaded.clamped << " boxes into their images\n";
  std::cerr << "b2c: " << rows.size() << " caption sets -> " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// dedup

struct DedupArgs {
  std::string train, test, report, hash_cache, kept;
  int threshold = 2, segments = 4;
  Common common;
};

/// Hashes from a directory of images (id = file stem) or JSON Lines with
/// {"image_id", "phash_hex"} or {"image_id", "image_path"}.
std::vector<PerceptualHash> load_hashes(const std::string& path, unsigned jobs) {
  std::vector<PerceptualHash> out;
  if (path.empty()) return out;
  if (fs::is_directory(path)) {
    const auto files = list_files(path, {".png", ".pgm", ".ppm", ".pnm"});
    out.resize(files.size());
    parallel_for(files.size(), jobs, [&](std::size_t i) {
      out[i] = compute_phash(to_rgb(read_image(files[i])), files[i].stem().string());
    });
    return out;
  }
  const auto rows = read_jsonl(path);
  out.resize(rows.size());
  const fs::path base = fs::path(path).parent_path();
  parallel_for(rows.size(), jobs, [&](std::size_t i) {
    const std::string where = path + " line " + std::to_string(i + 1);
    const auto id = field<std::string>(rows[i], "image_id", where);
    if (rows[i].contains("phash_hex")) {
      out[i] = {from_hex(field<std::string>(rows[i], "phash_hex", where)), id};
    } else {
      fs::path img = field<std::string>(rows[i], "image_path", where);
      if (img.is_relative()) img = base / img;
      out[i] = compute_phash(to_rgb(read_image(img)), id);
    }
  });
  return out;
}

int run_dedup(const DedupArgs& a, Manifest& manifest) {
  const auto train = load_hashes(a.train, a.common.jobs);
  const auto test = load_hashes(a.test, a.common.jobs);
  const DedupConfig cfg{a.threshold, a.segments};
  const auto result = decontaminate(train, test, cfg);
  Json report;
  report["threshold"] = a.threshold;
  report["segments"] = a.segments;
  report["train_images"] = train.size();
  report["test_images"] = test.size();
  report["kept"] = result.kept.size();
  Json removals = Json::array();
  for (const auto& r : result.removals) {
    removals.push_back({{"removed_id", r.removed_id},
                        {"matched_id", r.kept_or_test_id},
                        {"distance", r.distance},
                        {"reason", to_string(r.reason)}});
  }
  report["removals"] = removals;
  write_json(a.report, report);
  if (!a.hash_cache.empty()) {
    auto all = train;
    all.insert(all.end(), test.begin(), test.end());
    write_hash_cache(a.hash_cache, all);
  }
  if (!a.kept.empty()) {
    std::vector<Json> rows;
    for (auto k : result.kept) rows.push_back({{"image_id", train[k].image_id}, {"phash_hex", to_hex(train[k].bits)}});
    write_jsonl(a.kept, rows);
  }
  manifest.input("train", a.train);
  manifest.input("test", a.test);
  std::cerr << "dedup: removed " << result.removals.size() << " of " << train.size() << " train images\n";
  return 0;
}

// ---------------------------------------------------------------------------
// assemble

struct AssembleArgs {
  std::vector<std::string> ret, det, dota, seg;
  std::string dims, default_size, det_split = "train", seg_split = "train", seg_classes;
  std::string dedup_config, hash_cache, image_root, out, stats, histogram, removals, templates;
  bool no_dedup = false, no_hash_images = false;
  double center_fraction = 0.5;
  int many_threshold = 10;
  std::size_t min_area = 0;
  Common common;
};

int run_assemble(const AssembleArgs& a, Manifest& manifest) {
  if (a.ret.empty() && a.det.empty() && a.dota.empty() && a.seg.empty()) {
    throw Error(ErrorKind::kUsage, "give at least one --ret, --det, --dota or --seg source");
  }
  const auto cfg = caption_config(a.common.seed, a.center_fraction, a.many_threshold);
  const auto templates = load_templates(a.templates);
  std::vector<UnifiedRecord> records;
  std::size_t fixes = 0, clamped = 0;
  auto take = [&](IngestResult r) {
    fixes += r.caption_count_fixes;
    clamped += r.clamped_boxes;
    for (auto& rec : r.records) records.push_back(std::move(rec));
  };
  for (const auto& arg : a.ret) {
    const auto [name, path] = split_named(arg);
    auto r = ingest_ret(path, name);
    if (!a.image_root.empty()) {
      for (auto& rec : r.records) {
        if (fs::path(rec.image_path).is_relative()) rec.image_path = (fs::path(a.image_root) / rec.image_path).string();
      }
    }
    take(std::move(r));
    manifest.input("ret", path);
  }
  for (const auto& arg : a.det) {
    const auto [name, path] = split_named(arg);
    auto src = detection_source("canonical", a.dims, a.default_size, a.det_split);
    src.source = name;
    take(ingest_det(path, cfg, src, templates));
    manifest.input("det", path);
  }
  for (const auto& arg : a.dota) {
    const auto [name, path] = split_named(arg);
    auto src = detection_source("dota", a.dims, a.default_size, a.det_split);
    src.source = name;
    take(ingest_det(path, cfg, src, templates));
    manifest.input("dota", path);
  }
  if (!a.dims.empty()) manifest.input("dims", a.dims);
  for (const auto& arg : a.seg) {
    const auto [name, path] = split_named(arg);
    SegmentationSource src;
    src.mask_dir = path;
    src.classes_file = a.seg_classes;
    src.source = name;
    src.split = a.seg_split;
    src.min_area = a.min_area;
    src.jobs = a.common.jobs;
    take(ingest_seg(src, cfg, templates));
    manifest.input("seg", path);
  }
  if (records.empty()) throw Error(ErrorKind::kIngest, "no records found in the given sources");

  AssembleConfig acfg;
  acfg.jobs = a.common.jobs;
  acfg.dedup = !a.no_dedup;
  acfg.hash_images = !a.no_hash_images;
  if (!a.dedup_config.empty()) {
    const Json j = read_json(a.dedup_config);
    const std::string where = a.dedup_config;
    if (j.contains("threshold")) acfg.dedup_config.threshold = field<int>(j, "threshold", where);
    if (j.contains("segments")) acfg.dedup_config.n_segments = field<int>(j, "segments", where);
    if (j.contains("enabled")) acfg.dedup = acfg.dedup && field<bool>(j, "enabled", where);
    manifest.input("dedup_config", a.dedup_config);
  }
  if (!a.hash_cache.empty()) {
    acfg.hash_cache = read_hash_cache(a.hash_cache);
    manifest.input("hash_cache", a.hash_cache);
  }
  const auto result = assemble(std::move(records), acfg, a.out);
  Json stats = to_json(result.stats);
  stats["caption_count_fixes"] = fixes;
  stats["clamped_boxes"] = clamped;
  stats["pairs_equal_5x_images"] = result.stats.pairs == kCaptionsPerImage * result.stats.images;
  if (!a.stats.empty()) write_json(a.stats, stats);
  if (!a.histogram.empty()) write_length_histogram_csv(a.histogram, result.stats);
  if (!a.removals.empty()) write_removal_report(a.removals, result.removals);
  manifest.seed("captions", a.common.seed);
  std::cerr << "assemble: " << result.stats.images << " images, " << result.stats.pairs << " pairs, "
            << result.removals.size() << " removed -> " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// toy-data / toy-train

struct ToyDataArgs {
  SyntheticSpec spec;
  std::string out;
  bool mismatch = false;
  Common common;
};

int run_toy_data(ToyDataArgs a, Manifest& manifest) {
  a.spec.seed = a.common.seed;
  auto data = make_synthetic_pairs(a.spec);
  if (a.mismatch) data = mismatch_pairs(data, derive_seed(a.common.seed, "mismatch"));
  Json j;
  j["grid_side"] = data.grid_side;
  Json pairs = Json::array();
  for (std::size_t i = 0; i < data.size(); ++i) {
    pairs.push_back({{"id", "pair_" + std::to_string(i)},
                     {"label", data.labels[i]},
                     {"image", std::vector<double>(data.image.row(i).begin(), data.image.row(i).end())},
                     {"text", std::vector<double>(data.text.row(i).begin(), data.text.row(i).end())}});
  }
  j["pairs"] = pairs;
  write_json(a.out, j);
  manifest.seed("data", a.common.seed);
  return 0;
}

struct LoadedPairs {
  ToyDataset data;
  std::vector<std::string> ids;
};

LoadedPairs load_pairs(const std::string& path) {
  const Json j = read_json(path);
  LoadedPairs out;
  out.data.grid_side = j.contains("grid_side") ? field<int>(j, "grid_side", path) : 0;
  const auto& pairs = j.at("pairs");
  if (!pairs.is_array() || pairs.empty()) throw Error(ErrorKind::kParse, path + ": 'pairs' must be a non-empty array");
  std::size_t di = 0, dt = 0;
  std::vector<std::vector<double>> img, txt;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const std::string where = path + " pair " + std::to_string(i);
    img.push_back(field<std::vector<double>>(pairs[i], "image", where));
    txt.push_back(field<std::vector<double>>(pairs[i], "text", where));
    if (i == 0) {
      di = img[0].size();
      dt = txt[0].size();
    }
    if (img.back().size() != di || txt.back().size() != dt || di == 0 || dt == 0) {
      throw Error(ErrorKind::kShape, where + ": vector length differs from the first pair");
    }
    out.data.labels.push_back(pairs[i].contains("label") ? field<int>(pairs[i], "label", where) : 0);
    out.ids.push_back(pairs[i].contains("id") ? field<std::string>(pairs[i], "id", where) : std::to_string(i));
  }
  out.data.image = Matrix<double>(img.size(), di);
  out.data.text = Matrix<double>(txt.size(), dt);
  for (std::size_t i = 0; i < img.size(); ++i) {
    std::copy(img[i].begin(), img[i].end(), out.data.image.row(i).begin());
    std::copy(txt[i].begin(), txt[i].end(), out.data.text.row(i).begin());
  }
  return out;
}

struct ToyTrainArgs {
  std::string pairs, out;
  TrainConfig cfg;
  Common common;
};

Json matrix_json(const Matrix<double>& m) {
  Json rows = Json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) rows.push_back(std::vector<double>(m.row(i).begin(), m.row(i).end()));
  return rows;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int run_toy_train(ToyTrainArgs a, Manifest& manifest) {
  a.cfg.seed = a.common.seed;
  const auto loaded = load_pairs(a.pairs);
  const auto result = toy_train(loaded.data, a.cfg);
  fs::create_directories(a.out);
  const fs::path out(a.out);

  Json enc;
  enc["image_encoder"] = matrix_json(result.image_encoder.weight);
  enc["text_encoder"] = matrix_json(result.text_encoder.weight);
  enc["log_tau"] = result.temperature.log_tau;
  write_json(out / "encoders.json", enc);

  std::vector<Json> log;
  for (const auto& e : result.log) {
    log.push_back({{"epoch", e.epoch}, {"loss", e.loss}, {"train_loss", e.train_loss}, {"learning_rate", e.learning_rate}, {"tau", e.tau}});
  }
  write_jsonl(out / "log.jsonl", log);

  const auto zi = result.image_encoder.encode(loaded.data.image);
  const auto zt = result.text_encoder.encode(loaded.data.text);
  write_emb(out / "image.emb", zi.cast<float>());
  write_emb(out / "text.emb", zt.cast<float>());
  std::vector<SidecarRow> img_meta, txt_meta;
  for (std::size_t i = 0; i < loaded.ids.size(); ++i) {
    img_meta.push_back({loaded.ids[i], Json(loaded.data.labels[i]), std::nullopt, Json::object()});
    txt_meta.push_back({loaded.ids[i] + "#t", Json(loaded.data.labels[i]), std::nullopt, {{"image_id", loaded.ids[i]}}});
  }
  write_sidecar(out / "image.emb.jsonl", img_meta);
  write_sidecar(out / "text.emb.jsonl", txt_meta);

  std::vector<std::size_t> t2i(loaded.ids.size());
  std::iota(t2i.begin(), t2i.end(), std::size_t{0});
  const auto rr = eval_retrieval(zi, zt, t2i);
  const auto sim = similarity_matrix(zi, zt);
  std::vector<double> paired, unpaired;
  for (std::size_t i = 0; i < sim.rows(); ++i) {
    for (std::size_t j = 0; j < sim.cols(); ++j) (i == j ? paired : unpaired).push_back(sim(i, j));
  }
  Json summary;
  summary["pairs"] = loaded.ids.size();
  summary["batch_size"] = a.cfg.batch_size;
  summary["ln_batch_size"] = std::log(static_cast<double>(a.cfg.batch_size));
  summary["initial_loss"] = result.initial_loss;
  summary["final_loss"] = result.log.empty() ? result.initial_loss : result.log.back().loss;
  summary["tau"] = result.temperature.tau();
  summary["t2i_r1"] = rr.t2i_r1;
  summary["i2t_r1"] = rr.i2t_r1;
  summary["median_paired_similarity"] = median_of(paired);
  summary["median_unpaired_similarity"] = median_of(unpaired);
  summary["smoothed_loss_nonincreasing"] = smoothed_nonincreasing(result.log, 10, 0.05);
  write_json(out / "summary.json", summary);

  manifest.input("pairs", a.pairs);
  manifest.seed("train", a.common.seed);
  std::cerr << "toy-train: final loss " << summary["final_loss"].get<double>() << ", t2i R@1 " << rr.t2i_r1
            << "% -> " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string emb_img, emb_txt, sidecar, img_sidecar, emb_test, test_sidecar, report, confusion;
  std::size_t k = 20;
  double temperature = 0.07;
  ProbeConfig probe;
  bool search = false, digits = false;
  std::size_t shots = 0;
  Common common;
};

Json recall_json(const RetrievalResult& r) {
  return {{"i2t_r1", r.i2t_r1}, {"i2t_r5", r.i2t_r5}, {"i2t_r10", r.i2t_r10}, {"t2i_r1", r.t2i_r1},
          {"t2i_r5", r.t2i_r5}, {"t2i_r10", r.t2i_r10}, {"mean_recall", r.mean_recall},
          {"image_queries", r.image_queries}, {"text_queries", r.text_queries}};
}

int eval_retrieval_cmd(const EvalArgs& a, Manifest& manifest) {
  const auto img_side = default_sidecar(a.emb_img, a.img_sidecar);
  const auto txt_side = default_sidecar(a.emb_txt, a.sidecar);
  const auto img = load_embeddings(a.emb_img, img_side);
  const auto txt = load_embeddings(a.emb_txt, txt_side);
  std::map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < img.meta.size(); ++i) {
    if (!row_of.emplace(img.meta[i].id, i).second) {
      throw Error(ErrorKind::kParse, img_side.string() + ": duplicate id '" + img.meta[i].id + "'");
    }
  }
  std::vector<std::size_t> t2i;
  for (std::size_t t = 0; t < txt.meta.size(); ++t) {
    const auto& extra = txt.meta[t].extra;
    if (!extra.contains("image_id") || !extra["image_id"].is_string()) {
      throw Error(ErrorKind::kPairing, txt_side.string() + " row " + std::to_string(t + 1) + ": missing image_id");
    }
    const auto it = row_of.find(extra["image_id"].get<std::string>());
    if (it == row_of.end()) {
      throw Error(ErrorKind::kPairing, txt_side.string() + " row " + std::to_string(t + 1) + ": image '" +
                                           extra["image_id"].get<std::string>() + "' is not in " + img_side.string());
    }
    t2i.push_back(it->second);
  }
  write_json(a.report, {{"protocol", "retrieval"}, {"result", recall_json(eval_retrieval(img.rows, txt.rows, t2i))}});
  manifest.input("emb_img", a.emb_img);
  manifest.input("emb_txt", a.emb_txt);
  manifest.input("img_sidecar", img_side);
  manifest.input("txt_sidecar", txt_side);
  return 0;
}

int eval_zeroshot_cmd(const EvalArgs& a, Manifest& manifest) {
  const auto img_side = default_sidecar(a.emb_img, a.img_sidecar);
  const auto txt_side = default_sidecar(a.emb_txt, a.sidecar);
  const auto img = load_embeddings(a.emb_img, img_side);
  const auto prompts = load_embeddings(a.emb_txt, txt_side);
  // Prompt row c is class c; its label (name or index) identifies the class.
  LabelSpace space;
  const auto prompt_labels = space.labels_of(prompts.meta, txt_side.string());
  std::vector<int> row_of_class(prompts.meta.size(), -1);
  for (std::size_t r = 0; r < prompt_labels.size(); ++r) {
    const auto c = static_cast<std::size_t>(prompt_labels[r]);
    if (c >= row_of_class.size() || row_of_class[c] != -1) {
      throw Error(ErrorKind::kLabel, txt_side.string() + ": prompt labels must be distinct classes 0..C-1");
    }
    row_of_class[c] = static_cast<int>(r);
  }
  Matrix<double> ordered(prompts.rows.rows(), prompts.rows.cols());
  for (std::size_t c = 0; c < row_of_class.size(); ++c) {
    const auto src = prompts.rows.row(static_cast<std::size_t>(row_of_class[c]));
    std::copy(src.begin(), src.end(), ordered.row(c).begin());
  }
  const auto labels = space.labels_of(img.meta, img_side.string(), false);
  const auto r = zero_shot_classify(img.rows, ordered, labels);
  write_json(a.report, {{"protocol", "zeroshot"},
                        {"accuracy", r.accuracy},
                        {"images", labels.size()},
                        {"classes", ordered.rows()},
                        {"per_class", class_report_json(r, space.names())}});
  manifest.input("emb_img", a.emb_img);
  manifest.input("emb_txt", a.emb_txt);
  manifest.input("img_sidecar", img_side);
  manifest.input("txt_sidecar", txt_side);
  return 0;
}

int eval_knn_cmd(const EvalArgs& a, Manifest& manifest) {
  const auto train_side = default_sidecar(a.emb_img, a.img_sidecar);
  const auto test_side = default_sidecar(a.emb_test, a.test_sidecar);
  const auto train = load_embeddings(a.emb_img, train_side);
  const auto test = load_embeddings(a.emb_test, test_side);
  LabelSpace space;
  const auto y_train = space.labels_of(train.meta, train_side.string());
  const auto y_test = space.labels_of(test.meta, test_side.string());
  const auto pred = knn_classify(train.rows, y_train, test.rows, {a.k, a.temperature});
  std::size_t classes = 0;
  for (int v : y_train) classes = std::max(classes, static_cast<std::size_t>(v) + 1);
  for (int v : y_test) classes = std::max(classes, static_cast<std::size_t>(v) + 1);
  const auto r = score_predictions(pred, y_test, classes);
  write_json(a.report, {{"protocol", "knn"},
                        {"k", a.k},
                        {"temperature", a.temperature},
                        {"accuracy", r.accuracy},
                        {"per_class", class_report_json(r, space.names())}});
  manifest.input("emb_train", a.emb_img);
  manifest.input("emb_test", a.emb_test);
  manifest.input("train_sidecar", train_side);
  manifest.input("test_sidecar", test_side);
  return 0;
}

int eval_probe_cmd(EvalArgs a, Manifest& manifest) {
  a.probe.seed = a.common.seed;
  const auto train_side = default_sidecar(a.emb_img, a.img_sidecar);
  const auto test_side = default_sidecar(a.emb_test, a.test_sidecar);
  const auto train = load_embeddings(a.emb_img, train_side);
  const auto test = load_embeddings(a.emb_test, test_side);
  LabelSpace space;
  auto y_train = space.labels_of(train.meta, train_side.string());
  const auto y_test = space.labels_of(test.meta, test_side.string());
  Matrix<double> x_train = train.rows;
  if (a.shots > 0) {
    const auto picked = few_shot_sample(y_train, a.shots, derive_seed(a.common.seed, "few-shot"));
    x_train = detail::take_rows(train.rows, picked);
    y_train = detail::take(y_train, picked);
  }
  const auto r = linear_probe(x_train, y_train, test.rows, y_test, a.probe, a.search);
  Json trials = Json::array();
  for (const auto& t : r.trials) {
    trials.push_back({{"learning_rate", t.learning_rate}, {"weight_decay", t.weight_decay}, {"validation_accuracy", t.validation_accuracy}});
  }
  write_json(a.report, {{"protocol", "probe"},
                        {"shots", a.shots},
                        {"train_rows", x_train.rows()},
                        {"train_accuracy", r.train_accuracy},
                        {"test_accuracy", r.test_accuracy},
                        {"learning_rate", r.learning_rate},
                        {"weight_decay", r.weight_decay},
                        {"search_trials", trials}});
  manifest.input("emb_train", a.emb_img);
  manifest.input("emb_test", a.emb_test);
  manifest.input("train_sidecar", train_side);
  manifest.input("test_sidecar", test_side);
  manifest.seed("probe", a.common.seed);
  return 0;
}

int eval_count_cmd(const EvalArgs& a, Manifest& manifest) {
  const auto img_side = default_sidecar(a.emb_img, a.img_sidecar);
  const auto txt_side = default_sidecar(a.emb_txt, a.sidecar);
  const auto img = load_embeddings(a.emb_img, img_side);
  const auto var = load_embeddings(a.emb_txt, txt_side, false);
  // True count: the sidecar label, else the number in the sidecar caption.
  std::vector<int> truth;
  for (std::size_t i = 0; i < img.meta.size(); ++i) {
    const auto& row = img.meta[i];
    if (row.label && row.label->is_number_integer()) {
      truth.push_back(row.label->get<int>());
    } else if (row.caption) {
      truth.push_back(find_number_token(*row.caption).value);
    } else {
      throw Error(ErrorKind::kLabel, img_side.string() + " row " + std::to_string(i + 1) + ": needs a count label or caption");
    }
  }
  const auto r = eval_counting(img.rows, var.rows, truth);
  Json confusion = Json::array();
  for (const auto& row : r.normalized) confusion.push_back(std::vector<double>(row.begin(), row.end()));
  write_json(a.report, {{"protocol", "count"},
                        {"images", truth.size()},
                        {"digit_mode", a.digits},
                        {"top_m_accuracy", std::vector<double>(r.top_m.begin(), r.top_m.end())},
                        {"confusion_normalized", confusion},
                        {"predictions", r.predictions}});
  if (!a.confusion.empty()) {
    std::ofstream csv(a.confusion, std::ios::binary);
    if (!csv) throw Error(ErrorKind::kIo, "cannot write " + a.confusion);
    csv << "true\\predicted";
    for (int p = 1; p <= kMaxCount; ++p) csv << ',' << p;
    csv << '\n';
    for (int t = 0; t < kMaxCount; ++t) {
      csv << t + 1;
      for (int p = 0; p < kMaxCount; ++p) csv << ',' << r.normalized[t][p];
      csv << '\n';
    }
  }
  manifest.input("emb_img", a.emb_img);
  manifest.input("emb_txt", a.emb_txt);
  manifest.input("img_sidecar", img_side);
  return 0;
}

// ---------------------------------------------------------------------------
// helpers for external encoders: prompt and counting-variant text

struct PromptArgs {
  std::string classes, tpl = std::string(kDefaultPromptTemplate), out;
};

int run_prompts(const PromptArgs& a, Manifest& manifest) {
  std::vector<std::string> names;
  if (fs::path(a.classes).extension() == ".json") {
    const auto table = load_class_table(a.classes);
    for (const auto& [id, name] : table.names) {
      if (!table.ignore.count(id)) names.push_back(name);
    }
  } else {
    std::ifstream in(a.classes);
    if (!in) throw Error(ErrorKind::kIngest, "cannot open " + a.classes);
    for (std::string line; std::getline(in, line);) {
      if (!trim(line).empty()) names.push_back(trim(line));
    }
  }
  std::vector<Json> rows;
  for (std::size_t c = 0; c < names.size(); ++c) {
    rows.push_back({{"id", "class_" + std::to_string(c)}, {"label", normalize_class_name(names[c])}, {"caption", prompt_render(a.tpl, names[c])}});
  }
  write_jsonl(a.out, rows);
  manifest.input("classes", a.classes);
  return 0;
}

struct VariantArgs {
  std::string captions, out;
  bool digits = false;
};

int run_count_variants(const VariantArgs& a, Manifest& manifest) {
  std::vector<Json> rows;
  std::size_t line = 0;
  for (const auto& j : read_jsonl(a.captions)) {
    const std::string where = a.captions + " line " + std::to_string(++line);
    const auto id = field<std::string>(j, "image_id", where);
    const auto caption = field<std::string>(j, "caption", where);
    const auto variants = count_variants(caption, a.digits);
    for (int n = 1; n <= kMaxCount; ++n) {
      rows.push_back({{"id", id + "#" + std::to_string(n)}, {"caption", variants[static_cast<std::size_t>(n - 1)]}, {"image_id", id}, {"count", n}});
    }
  }
  write_jsonl(a.out, rows);
  manifest.input("captions", a.captions);
  return 0;
}

int run(const std::vector<std::string>& args);

int run_replay(const std::string& manifest_path, bool strict) {
  const Json m = read_json(manifest_path);
  const auto argv = field<std::vector<std::string>>(m, "argv", manifest_path);
  if (!argv.empty() && argv.front() == "replay") throw Error(ErrorKind::kUsage, "refusing to replay a replay");
  if (m.contains("inputs")) {
    for (auto it = m["inputs"].begin(); it != m["inputs"].end(); ++it) {
      const std::string path = it.key().substr(it.key().find(':') + 1);
      const bool same = fs::exists(path) && digest_input(path) == it.value();
      if (!same) {
        const std::string msg = "input changed since the manifest was written: " + path;
        if (strict) throw Error(ErrorKind::kIngest, msg);
        std::cerr << "warning: " << msg << "\n";
      }
    }
  }
  return run(argv);
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"rsalign: remote-sensing image-caption corpus assembly and embedding evaluation", "rsalign"};
  app.set_version_flag("--version", std::string(RSALIGN_VERSION));
  app.require_subcommand(1);
  app.fallthrough(false);
  const std::uint64_t seed0 = default_seed();

  M2bArgs m2b;
  auto* c_m2b = app.add_subcommand("m2b", "Mask-to-box: label masks -> detection records (JSON Lines)");
  c_m2b->add_option("--masks", m2b.masks, "Directory of single-channel label masks (.png/.pgm)")->required()->check(CLI::ExistingDirectory);
  c_m2b->add_option("--classes", m2b.classes, "Class table JSON (default: <masks>/classes.json)");
  c_m2b->add_option("--min-area", m2b.min_area, "Drop components with fewer pixels")->capture_default_str();
  c_m2b->add_option("--image-dir", m2b.image_dir, "Directory of the matching images");
  c_m2b->add_option("--split", m2b.split, "Split recorded on every row")->capture_default_str()->check(CLI::IsMember({"train", "val", "test"}));
  c_m2b->add_option("--out", m2b.out, "Output JSON Lines")->required();
  add_common(c_m2b, m2b.common, false);

  B2cArgs b2c;
  b2c.common.seed = seed0;
  auto* c_b2c = app.add_subcommand("b2c", "Box-to-caption: detection records -> five captions per image");
  c_b2c->add_option("--annotations", b2c.annotations, "Canonical JSON Lines, or DOTA .txt file/directory")->required()->check(CLI::ExistingPath);
  c_b2c->add_option("--format", b2c.format, "Annotation format")->capture_default_str()->check(CLI::IsMember({"canonical", "dota"}));
  c_b2c->add_option("--center-fraction", b2c.center_fraction, "Side of the central window as a fraction of the image")->capture_default_str();
  c_b2c->add_option("--many-threshold", b2c.many_threshold, "Counts above this use a general quantity term")->capture_default_str();
  c_b2c->add_option("--templates", b2c.templates, "Caption grammar file (default: built-in v1)")->check(CLI::ExistingFile);
  c_b2c->add_option("--dims", b2c.dims, "DOTA: JSON Lines of {image_id, width, height}")->check(CLI::ExistingFile);
  c_b2c->add_option("--default-size", b2c.default_size, "DOTA: WIDTHxHEIGHT for images missing from --dims");
  c_b2c->add_option("--out", b2c.out, "Output JSON Lines")->required();
  add_common(c_b2c, b2c.common);

  DedupArgs dd;
  auto* c_dd = app.add_subcommand("dedup", "Perceptual-hash decontamination of a train set against a test set");
  c_dd->add_option("--train", dd.train, "Image directory or JSON Lines (image_id + phash_hex or image_path)")->required()->check(CLI::ExistingPath);
  c_dd->add_option("--test", dd.test, "Same formats as --train")->check(CLI::ExistingPath);
  c_dd->add_option("--threshold", dd.threshold, "Duplicate iff Hamming distance < threshold")->capture_default_str();
  c_dd->add_option("--segments", dd.segments, "Hash segments in the index (must divide 64, >= threshold)")->capture_default_str();
  c_dd->add_option("--report", dd.report, "Removal report JSON")->required();
  c_dd->add_option("--hash-cache", dd.hash_cache, "Write every computed hash (JSON Lines)");
  c_dd->add_option("--kept", dd.kept, "Write kept train ids (JSON Lines)");
  add_common(c_dd, dd.common, false);

  AssembleArgs as;
  as.common.seed = seed0;
  auto* c_as = app.add_subcommand("assemble", "Unify caption, detection and segmentation sources into one corpus");
  c_as->add_option("--ret", as.ret, "[NAME=]captions.json (repeatable)")->expected(0, -1);
  c_as->add_option("--det", as.det, "[NAME=]canonical detection JSON Lines (repeatable)")->expected(0, -1);
  c_as->add_option("--dota", as.dota, "[NAME=]DOTA .txt file or directory (repeatable)")->expected(0, -1);
  c_as->add_option("--seg", as.seg, "[NAME=]mask directory (repeatable)")->expected(0, -1);
  c_as->add_option("--dims", as.dims, "DOTA: JSON Lines of {image_id, width, height}")->check(CLI::ExistingFile);
  c_as->add_option("--default-size", as.default_size, "DOTA: WIDTHxHEIGHT fallback");
  c_as->add_option("--det-split", as.det_split, "Split for detection records without one")->capture_default_str()->check(CLI::IsMember({"train", "val", "test"}));
  c_as->add_option("--seg-split", as.seg_split, "Split for segmentation records")->capture_default_str()->check(CLI::IsMember({"train", "val", "test"}));
  c_as->add_option("--seg-classes", as.seg_classes, "Class table for all --seg inputs (default: <dir>/classes.json)");
  c_as->add_option("--min-area", as.min_area, "Mask components with fewer pixels are dropped")->capture_default_str();
  c_as->add_option("--center-fraction", as.center_fraction, "Central window fraction")->capture_default_str();
  c_as->add_option("--many-threshold", as.many_threshold, "General quantity above this count")->capture_default_str();
  c_as->add_option("--templates", as.templates, "Caption grammar file")->check(CLI::ExistingFile);
  c_as->add_option("--dedup-config", as.dedup_config, "JSON {threshold, segments, enabled}")->check(CLI::ExistingFile);
  c_as->add_flag("--no-dedup", as.no_dedup, "Skip decontamination");
  c_as->add_option("--hash-cache", as.hash_cache, "Known hashes (JSON Lines image_id, phash_hex)")->check(CLI::ExistingFile);
  c_as->add_flag("--no-hash-images", as.no_hash_images, "Only use --hash-cache, never read image files");
  c_as->add_option("--image-root", as.image_root, "Resolve relative caption-source image paths against this directory");
  c_as->add_option("--out", as.out, "Corpus JSON Lines")->required();
  c_as->add_option("--stats", as.stats, "Corpus statistics JSON");
  c_as->add_option("--histogram", as.histogram, "Caption length histogram CSV");
  c_as->add_option("--removals", as.removals, "Dedup removal report JSON Lines");
  add_common(c_as, as.common);

  ToyDataArgs td;
  td.common.seed = seed0;
  auto* c_td = app.add_subcommand("toy-data", "Generate synthetic paired vectors with latent classes");
  c_td->add_option("--n-pairs", td.spec.n_pairs, "Pairs")->capture_default_str();
  c_td->add_option("--classes", td.spec.n_classes, "Latent classes")->capture_default_str();
  c_td->add_option("--latent-dim", td.spec.latent_dim, "Shared latent dimension")->capture_default_str();
  c_td->add_option("--grid-side", td.spec.grid_side, "Image vectors are side x side grids")->capture_default_str();
  c_td->add_option("--text-dim", td.spec.text_dim, "Text vector length")->capture_default_str();
  c_td->add_option("--class-spread", td.spec.class_spread, "Scale of class centres")->capture_default_str();
  c_td->add_option("--instance-spread", td.spec.instance_spread, "Scale of per-pair offsets")->capture_default_str();
  c_td->add_option("--noise", td.spec.modality_noise, "Independent noise per modality")->capture_default_str();
  c_td->add_flag("--mismatch", td.mismatch, "Permute texts so no pair matches");
  c_td->add_option("--out", td.out, "Pairs JSON")->required();
  add_common(c_td, td.common);

  ToyTrainArgs tt;
  tt.common.seed = seed0;
  auto* c_tt = app.add_subcommand("toy-train", "Train linear two-tower encoders on the contrastive loss");
  c_tt->add_option("--pairs", tt.pairs, "Pairs JSON from toy-data")->required()->check(CLI::ExistingFile);
  c_tt->add_option("--epochs", tt.cfg.epochs, "Epochs")->capture_default_str();
  c_tt->add_option("--lr", tt.cfg.learning_rate, "Learning rate")->capture_default_str();
  c_tt->add_option("--batch", tt.cfg.batch_size, "Batch size N")->capture_default_str();
  c_tt->add_option("--embed-dim", tt.cfg.embed_dim, "Embedding dimension")->capture_default_str();
  c_tt->add_option("--tau", tt.cfg.initial_tau, "Initial temperature")->capture_default_str();
  c_tt->add_option("--min-tau", tt.cfg.min_tau, "Temperature floor")->capture_default_str();
  c_tt->add_flag("!--fixed-tau", tt.cfg.learn_temperature, "Keep the temperature fixed");
  c_tt->add_flag("--flip", tt.cfg.augment_flip, "Random horizontal flips of image grids");
  c_tt->add_flag("--rotate", tt.cfg.augment_rotate, "Random quarter-turn rotations of image grids");
  c_tt->add_option("--warmup", tt.cfg.warmup_steps, "Linear warm-up steps")->capture_default_str();
  c_tt->add_flag("--cosine", tt.cfg.cosine_schedule, "Cosine learning-rate decay after warm-up");
  c_tt->add_flag("--resample-pairs", tt.cfg.resample_pairs, "Control run: random image-text pairing every epoch");
  c_tt->add_option("--out", tt.out, "Output directory")->required();
  add_common(c_tt, tt.common);

  EvalArgs ev;
  ev.common.seed = seed0;
  auto* c_ev = app.add_subcommand("eval", "Evaluate embeddings");
  c_ev->require_subcommand(1);
  auto common_eval = [&](CLI::App* s, bool texts, bool test) {
    s->add_option("--emb-img,--emb-train", ev.emb_img, "Image (or training) embeddings, EMB1")->required()->check(CLI::ExistingFile);
    s->add_option("--img-sidecar,--train-sidecar", ev.img_sidecar, "Sidecar of --emb-img (default: <emb>.jsonl)");
    if (texts) {
      s->add_option("--emb-txt", ev.emb_txt, "Text embeddings, EMB1")->required()->check(CLI::ExistingFile);
      s->add_option("--sidecar", ev.sidecar, "Sidecar of --emb-txt (default: <emb>.jsonl)");
    }
    if (test) {
      s->add_option("--emb-test", ev.emb_test, "Test embeddings, EMB1")->required()->check(CLI::ExistingFile);
      s->add_option("--test-sidecar", ev.test_sidecar, "Sidecar of --emb-test (default: <emb>.jsonl)");
    }
    s->add_option("--report", ev.report, "Report JSON")->required();
  };
  auto* e_ret = c_ev->add_subcommand("retrieval", "Image-text recall@1/5/10 and mean recall");
  common_eval(e_ret, true, false);
  auto* e_zs = c_ev->add_subcommand("zeroshot", "Nearest class-prompt classification");
  common_eval(e_zs, true, false);
  auto* e_knn = c_ev->add_subcommand("knn", "Weighted k-nearest-neighbour classification");
  common_eval(e_knn, false, true);
  e_knn->add_option("--k", ev.k, "Neighbours")->capture_default_str();
  e_knn->add_option("--temperature", ev.temperature, "Vote weight exp(sim / T)")->capture_default_str();
  auto* e_probe = c_ev->add_subcommand("probe", "Logistic-regression linear probe");
  common_eval(e_probe, false, true);
  e_probe->add_option("--lr", ev.probe.learning_rate, "Learning rate")->capture_default_str();
  e_probe->add_option("--weight-decay", ev.probe.weight_decay, "Weight decay")->capture_default_str();
  e_probe->add_option("--epochs", ev.probe.epochs, "Epochs")->capture_default_str();
  e_probe->add_option("--batch", ev.probe.batch_size, "Minibatch size")->capture_default_str();
  e_probe->add_flag("--search", ev.search, "Random search over learning rate and weight decay");
  e_probe->add_option("--search-iters", ev.probe.random_search_iters, "Random search rounds")->capture_default_str();
  e_probe->add_option("--shots", ev.shots, "Few-shot: sample this many training rows per class (0 = all)")->capture_default_str();
  e_probe->add_option("--seed", ev.common.seed, "Random seed")->capture_default_str();
  auto* e_count = c_ev->add_subcommand("count", "Counting by number substitution (10 variant rows per image)");
  common_eval(e_count, true, false);
  e_count->add_flag("--digits", ev.digits, "Variants use digits 1-10 (recorded in the report)");
  e_count->add_option("--confusion", ev.confusion, "Normalized confusion matrix CSV");

  PromptArgs pr;
  auto* c_pr = app.add_subcommand("prompts", "Render class prompts for an external text encoder");
  c_pr->add_option("--classes", pr.classes, "Class table JSON or one name per line")->required()->check(CLI::ExistingFile);
  c_pr->add_option("--template", pr.tpl, "Prompt template with a {class name} slot")->capture_default_str();
  c_pr->add_option("--out", pr.out, "Sidecar-style JSON Lines")->required();

  VariantArgs va;
  auto* c_va = app.add_subcommand("count-variants", "Expand captions into the ten counting variants");
  c_va->add_option("--captions", va.captions, "JSON Lines {image_id, caption}")->required()->check(CLI::ExistingFile);
  c_va->add_flag("--digits", va.digits, "Use digits 1-10 instead of words");
  c_va->add_option("--out", va.out, "JSON Lines, ten rows per image")->required();

  std::string replay_manifest;
  bool replay_strict = false;
  auto* c_rp = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  c_rp->add_option("--manifest", replay_manifest, "Manifest JSON")->required()->check(CLI::ExistingFile);
  c_rp->add_flag("--strict", replay_strict, "Fail if any recorded input digest changed");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return exit_code(ErrorKind::kUsage);
  }

  if (c_rp->parsed()) return run_replay(replay_manifest, replay_strict);

  CLI::App* leaf = nullptr;
  std::string name;
  for (auto* s : app.get_subcommands()) {
    leaf = s;
    name = s->get_name();
  }
  if (name == "eval") {
    leaf = leaf->get_subcommands().front();
    name = "eval " + leaf->get_name();
  }
  Manifest manifest(name, args);
  manifest.capture(*leaf);

  int rc = 0;
  fs::path out;
  bool out_is_dir = false;
  if (c_m2b->parsed()) {
    rc = run_m2b(m2b, manifest);
    out = m2b.out;
  } else if (c_b2c->parsed()) {
    rc = run_b2c(b2c, manifest);
    out = b2c.out;
  } else if (c_dd->parsed()) {
    rc = run_dedup(dd, manifest);
    out = dd.report;
  } else if (c_as->parsed()) {
    rc = run_assemble(as, manifest);
    out = as.out;
  } else if (c_td->parsed()) {
    rc = run_toy_data(td, manifest);
    out = td.out;
  } else if (c_tt->parsed()) {
    rc = run_toy_train(tt, manifest);
    out = tt.out;
    out_is_dir = true;
  } else if (e_ret->parsed()) {
    rc = eval_retrieval_cmd(ev, manifest);
    out = ev.report;
  } else if (e_zs->parsed()) {
    rc = eval_zeroshot_cmd(ev, manifest);
    out = ev.report;
  } else if (e_knn->parsed()) {
    rc = eval_knn_cmd(ev, manifest);
    out = ev.report;
  } else if (e_probe->parsed()) {
    rc = eval_probe_cmd(ev, manifest);
    out = ev.report;
  } else if (e_count->parsed()) {
    rc = eval_count_cmd(ev, manifest);
    out = ev.report;
  } else if (c_pr->parsed()) {
    rc = run_prompts(pr, manifest);
    out = pr.out;
  } else if (c_va->parsed()) {
    rc = run_count_variants(va, manifest);
    out = va.out;
  }
  if (rc == 0 && !out.empty()) manifest.write(manifest_path_for(out, out_is_dir));
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  try {
    return run(args);
  } catch (const Error& e) {
    std::cerr << "rsalign: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "rsalign: parse error: " << e.what() << "\n";
    return exit_code(ErrorKind::kParse);
  } catch (const fs::filesystem_error& e) {
    std::cerr << "rsalign: io error: " << e.what() << "\n";
    return exit_code(ErrorKind::kIo);
  } catch (const std::exception& e) {
    std::cerr << "rsalign: internal error: " << e.what() << "\n";
    return 1;
  }
}
