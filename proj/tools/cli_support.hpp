#pragma once

// Shared plumbing for the rsalign tool: run manifests, input digests and
// embedding/sidecar loading.

#include <openssl/evp.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rsalign/rsalign.hpp"

namespace rsalign::cli {

namespace fs = std::filesystem;

#ifndef RSALIGN_VERSION
#define RSALIGN_VERSION "0.0.0"
#endif

/// Seed used when --seed is absent: $RSALIGN_SEED, else 0.
inline std::uint64_t default_seed() {
  const char* env = std::getenv("RSALIGN_SEED");
  if (!env || !*env) return 0;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(env, &used);
    if (used != std::string(env).size()) throw std::invalid_argument(env);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::kConfig, std::string("RSALIGN_SEED is not an unsigned integer: ") + env);
  }
}

inline std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIngest, "cannot open " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(ctx);
    throw Error(ErrorKind::kIo, "sha256 unavailable");
  }
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

/// Digest of a file, or of every regular file under a directory (sorted).
inline Json digest_input(const fs::path& path) {
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(path)) {
      if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    Json j = Json::object();
    for (const auto& f : files) j[fs::relative(f, path).generic_string()] = sha256_file(f);
    return j;
  }
  return sha256_file(path);
}

/// Tracks inputs, seeds and the resolved configuration of one run.
class Manifest {
 public:
  Manifest(std::string subcommand, std::vector<std::string> argv)
      : subcommand_(std::move(subcommand)), argv_(std::move(argv)) {}

  void input(const std::string& role, const fs::path& path) {
    if (!path.empty()) inputs_[role + ":" + path.string()] = digest_input(path);
  }
  void seed(const std::string& name, std::uint64_t value) { seeds_[name] = value; }

  /// Every option of `app` with its resolved value (given or default).
  void capture(const CLI::App& app) {
    for (const CLI::Option* opt : app.get_options()) {
      const std::string name = opt->get_name(false, true);
      std::string key = opt->get_lnames().empty() ? name : opt->get_lnames().front();
      if (name.empty() || key == "help") continue;
      if (opt->count() > 0) {
        const auto res = opt->results();
        if (opt->get_expected_max() > 1 || res.size() > 1) {
          config_[key] = res;
        } else {
          config_[key] = res.empty() ? "" : res.front();
        }
      } else {
        config_[key] = opt->get_default_str();
      }
    }
  }

  Json to_json() const {
    Json j;
    j["tool"] = "rsalign";
    j["version"] = RSALIGN_VERSION;
    j["subcommand"] = subcommand_;
    j["argv"] = argv_;
    j["config"] = config_;
    j["seeds"] = seeds_;
    j["inputs"] = inputs_;
    return j;
  }

  void write(const fs::path& path) const { write_json(path, to_json()); }

 private:
  std::string subcommand_;
  std::vector<std::string> argv_;
  Json config_ = Json::object();
  Json seeds_ = Json::object();
  Json inputs_ = Json::object();
};

/// `<file>.manifest.json` for file outputs, `<dir>/manifest.json` for directories.
inline fs::path manifest_path_for(const fs::path& output, bool is_directory) {
  return is_directory ? output / "manifest.json" : fs::path(output.string() + ".manifest.json");
}

inline fs::path default_sidecar(const fs::path& emb, const std::string& given) {
  return given.empty() ? fs::path(emb.string() + ".jsonl") : fs::path(given);
}

struct LoadedEmbeddings {
  Matrix<double> rows;  // L2-normalized
  std::vector<SidecarRow> meta;
};

inline LoadedEmbeddings load_embeddings(const fs::path& emb, const fs::path& sidecar, bool need_sidecar = true) {
  const auto m = read_emb(emb);
  LoadedEmbeddings out{l2_normalize(m.cast<double>()), {}};
  if (need_sidecar || fs::exists(sidecar)) {
    out.meta = read_sidecar(sidecar);
    if (out.meta.size() != m.rows()) {
      throw Error(ErrorKind::kParse, sidecar.string() + " has " + std::to_string(out.meta.size()) + " rows for " +
                                         std::to_string(m.rows()) + " embeddings in " + emb.string());
    }
  }
  return out;
}

/// Maps sidecar labels (integers, or class-name strings) to class indices.
/// String names are normalized and indexed in the order of `names` (extended
/// in first-seen order when `grow`).
class LabelSpace {
 public:
  int index_of(const Json& label, const std::string& where, bool grow = true) {
    if (label.is_number_integer()) {
      const auto v = label.get<long long>();
      if (v < 0) throw Error(ErrorKind::kLabel, where + ": negative label");
      numeric_ = true;
      return static_cast<int>(v);
    }
    if (!label.is_string()) throw Error(ErrorKind::kLabel, where + ": label must be an integer or a class name");
    named_ = true;
    const std::string name = normalize_class_name(label.get<std::string>());
    if (auto it = index_.find(name); it != index_.end()) return it->second;
    if (!grow) throw Error(ErrorKind::kLabel, where + ": unknown class '" + name + "'");
    index_[name] = static_cast<int>(names_.size());
    names_.push_back(name);
    return index_[name];
  }

  std::vector<int> labels_of(const std::vector<SidecarRow>& rows, const std::string& file, bool grow = true) {
    std::vector<int> out;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::string where = file + " row " + std::to_string(i + 1);
      if (!rows[i].label) throw Error(ErrorKind::kLabel, where + ": missing label");
      out.push_back(index_of(*rows[i].label, where, grow));
    }
    if (numeric_ && named_) throw Error(ErrorKind::kLabel, file + ": mixes integer and named labels");
    return out;
  }

  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::map<std::string, int> index_;
  bool numeric_ = false;
  bool named_ = false;
};

inline Json class_report_json(const ClassificationResult& r, const std::vector<std::string>& names) {
  Json per = Json::array();
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    Json j;
    j["class"] = c < names.size() ? Json(names[c]) : Json(c);
    j["support"] = r.per_class[c].support;
    j["correct"] = r.per_class[c].correct;
    j["accuracy"] = r.per_class[c].accuracy();
    per.push_back(j);
  }
  return per;
}

/// "name=path" or "path"; the name defaults to empty.
inline std::pair<std::string, std::string> split_named(const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq == std::string::npos || eq == 0) return {"", arg};
  return {arg.substr(0, eq), arg.substr(eq + 1)};
}

inline std::pair<int, int> parse_size(const std::string& s) {
  const auto x = s.find_first_of("xX");
  try {
    if (x == std::string::npos) throw std::invalid_argument(s);
    const int w = std::stoi(s.substr(0, x)), h = std::stoi(s.substr(x + 1));
    if (w <= 0 || h <= 0) throw std::invalid_argument(s);
    return {w, h};
  } catch (const std::exception&) {
    throw Error(ErrorKind::kUsage, "size must look like WIDTHxHEIGHT, got '" + s + "'");
  }
}

/// Image sizes from JSON Lines {"image_id", "width", "height"}.
inline std::map<std::string, std::pair<int, int>> read_dims(const fs::path& path) {
  std::map<std::string, std::pair<int, int>> out;
  std::size_t line = 0;
  for (const auto& j : read_jsonl(path)) {
    const std::string where = path.string() + " line " + std::to_string(++line);
    out[field<std::string>(j, "image_id", where)] = {field<int>(j, "width", where), field<int>(j, "height", where)};
  }
  return out;
}

}  // namespace rsalign::cli
