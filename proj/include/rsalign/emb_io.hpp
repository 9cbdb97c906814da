#pragma once

// EMB1 embedding files: "EMB1", u32 n, u32 d, then n*d float32 row-major, all
// little-endian. Row metadata lives in a JSON Lines sidecar, one
// {"id", "label"?, "caption"?, ...} object per row in file order.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include "rsalign/error.hpp"
#include "rsalign/jsonl.hpp"
#include "rsalign/matrix.hpp"

namespace rsalign {

inline constexpr std::array<char, 4> kEmbMagic{'E', 'M', 'B', '1'};

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(const unsigned char* b) {
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace detail

inline void write_emb(const std::filesystem::path& path, const EmbeddingMatrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out.write(kEmbMagic.data(), 4);
  detail::put_u32(out, static_cast<std::uint32_t>(m.rows()));
  detail::put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (float f : m.values()) detail::put_u32(out, std::bit_cast<std::uint32_t>(f));
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

inline EmbeddingMatrix read_emb(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIngest, "cannot open " + path.string());
  std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kEmbMagic.data(), 4) != 0) {
    throw Error(ErrorKind::kParse, path.string() + ": not an EMB1 file");
  }
  const std::uint64_t n = detail::get_u32(bytes.data() + 4);
  const std::uint64_t d = detail::get_u32(bytes.data() + 8);
  if (bytes.size() != 12 + 4 * n * d) {
    throw Error(ErrorKind::kParse, path.string() + ": payload size does not match " + std::to_string(n) + " x " +
                                       std::to_string(d));
  }
  EmbeddingMatrix m(n, d);
  for (std::size_t k = 0; k < n * d; ++k) {
    const float f = std::bit_cast<float>(detail::get_u32(bytes.data() + 12 + 4 * k));
    if (!std::isfinite(f)) throw Error(ErrorKind::kParse, path.string() + ": non-finite value at index " + std::to_string(k));
    m.values()[k] = f;
  }
  return m;
}

struct SidecarRow {
  std::string id;
  std::optional<Json> label;
  std::optional<std::string> caption;
  Json extra = Json::object();  // remaining fields, e.g. image_id for captions
};

inline std::vector<SidecarRow> read_sidecar(const std::filesystem::path& path) {
  std::vector<SidecarRow> rows;
  int line = 0;
  for (auto& j : read_jsonl(path)) {
    ++line;
    const std::string where = path.string() + " row " + std::to_string(line);
    SidecarRow r;
    r.id = field<std::string>(j, "id", where);
    if (j.contains("label") && !j["label"].is_null()) r.label = j["label"];
    if (j.contains("caption") && !j["caption"].is_null()) r.caption = field<std::string>(j, "caption", where);
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it.key() != "id" && it.key() != "label" && it.key() != "caption") r.extra[it.key()] = it.value();
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

inline void write_sidecar(const std::filesystem::path& path, const std::vector<SidecarRow>& rows) {
  std::vector<Json> out;
  for (const auto& r : rows) {
    Json j;
    j["id"] = r.id;
    if (r.label) j["label"] = *r.label;
    if (r.caption) j["caption"] = *r.caption;
    for (auto it = r.extra.begin(); it != r.extra.end(); ++it) j[it.key()] = it.value();
    out.push_back(std::move(j));
  }
  write_jsonl(path, out);
}

}  // namespace rsalign
