#pragma once

// Small English helpers shared by caption generation, prompts and statistics.

#include <array>
#include <cctype>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rsalign {

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split_whitespace(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

/// Lowercase; underscores and hyphens become spaces; runs of spaces collapse.
inline std::string normalize_class_name(std::string_view name) {
  std::string out;
  bool pending_space = false;
  for (char c : name) {
    if (c == '_' || c == '-' || std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

inline constexpr std::array<std::string_view, 10> kNumberWords{
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten"};

/// "one".."ten" for 1..10, empty otherwise.
inline std::string_view number_word(int n) {
  if (n < 1 || n > 10) return {};
  return kNumberWords[static_cast<std::size_t>(n - 1)];
}

/// Parses "one".."ten" (any case) or "1".."10".
inline std::optional<int> parse_number_token(std::string_view token) {
  const std::string t = to_lower(token);
  for (std::size_t i = 0; i < kNumberWords.size(); ++i) {
    if (t == kNumberWords[i]) return static_cast<int>(i + 1);
  }
  if (t.size() == 1 && t[0] >= '1' && t[0] <= '9') return t[0] - '0';
  if (t == "10") return 10;
  return std::nullopt;
}

namespace detail {

inline bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

inline bool is_vowel(char c) {
  switch (std::tolower(static_cast<unsigned char>(c))) {
    case 'a': case 'e': case 'i': case 'o': case 'u': return true;
    default: return false;
  }
}

}  // namespace detail

/// Plural of a (possibly multi-word) noun phrase; only the last word changes.
inline std::string pluralize(std::string_view phrase) {
  static const std::map<std::string, std::string, std::less<>> kIrregular{
      {"person", "people"}, {"man", "men"},     {"woman", "women"}, {"child", "children"},
      {"foot", "feet"},     {"mouse", "mice"},  {"sheep", "sheep"}, {"deer", "deer"},
      {"fish", "fish"},     {"aircraft", "aircraft"}, {"leaf", "leaves"},
  };
  const auto cut = phrase.rfind(' ');
  const std::string head(cut == std::string_view::npos ? "" : phrase.substr(0, cut + 1));
  const std::string word(cut == std::string_view::npos ? phrase : phrase.substr(cut + 1));
  if (word.empty()) return std::string(phrase);
  if (auto it = kIrregular.find(word); it != kIrregular.end()) return head + it->second;
  using detail::ends_with;
  if (ends_with(word, "s") || ends_with(word, "x") || ends_with(word, "z") || ends_with(word, "ch") ||
      ends_with(word, "sh")) {
    return head + word + "es";
  }
  if (word.size() >= 2 && word.back() == 'y' && !detail::is_vowel(word[word.size() - 2])) {
    return head + word.substr(0, word.size() - 1) + "ies";
  }
  return head + word + "s";
}

inline std::string with_article(std::string_view noun) {
  if (noun.empty()) return {};
  return std::string(detail::is_vowel(noun[0]) ? "an " : "a ") + std::string(noun);
}

/// "a", "a and b", "a, b and c".
inline std::string join_english(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += (i + 1 == items.size()) ? " and " : ", ";
    out += items[i];
  }
  return out;
}

inline std::string capitalize_first(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

}  // namespace rsalign
