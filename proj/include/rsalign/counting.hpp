#pragma once

// Zero-shot counting: a base caption's number is replaced by each of 1..10,
// and the variant most similar to the image gives the predicted count.

#include <array>
#include <cctype>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "rsalign/contrastive.hpp"
#include "rsalign/error.hpp"
#include "rsalign/matrix.hpp"
#include "rsalign/text.hpp"

namespace rsalign {

inline constexpr int kMaxCount = 10;

struct NumberToken {
  std::size_t begin = 0;
  std::size_t length = 0;
  int value = 0;
};

/// The unique number token ("one".."ten" or "1".."10", whole word) in a caption.
inline NumberToken find_number_token(std::string_view caption) {
  std::vector<NumberToken> found;
  std::size_t i = 0;
  while (i < caption.size()) {
    if (!std::isalnum(static_cast<unsigned char>(caption[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < caption.size() && std::isalnum(static_cast<unsigned char>(caption[j]))) ++j;
    if (auto v = parse_number_token(caption.substr(i, j - i))) found.push_back({i, j - i, *v});
    i = j;
  }
  if (found.size() != 1) {
    throw Error(ErrorKind::kCaptionFormat, "expected exactly one number token (one..ten or 1..10), found " +
                                               std::to_string(found.size()) + " in: " + std::string(caption));
  }
  return found.front();
}

/// Ten captions with the number replaced by 1..10, as words or digits. A
/// capitalized number word stays capitalized.
inline std::array<std::string, kMaxCount> count_variants(std::string_view caption, bool digit_mode) {
  const NumberToken tok = find_number_token(caption);
  const bool capital = std::isupper(static_cast<unsigned char>(caption[tok.begin]));
  std::array<std::string, kMaxCount> out;
  for (int n = 1; n <= kMaxCount; ++n) {
    std::string num = digit_mode ? std::to_string(n) : std::string(number_word(n));
    if (capital && !digit_mode) num = capitalize_first(num);
    out[static_cast<std::size_t>(n - 1)] =
        std::string(caption.substr(0, tok.begin)) + num + std::string(caption.substr(tok.begin + tok.length));
  }
  return out;
}

struct CountingResult {
  /// Rows = true count 1..10, columns = predicted count 1..10.
  std::array<std::array<double, kMaxCount>, kMaxCount> counts{};
  std::array<std::array<double, kMaxCount>, kMaxCount> normalized{};
  /// top_m[m-1] = share of images whose true count ranks within the best m.
  std::array<double, kMaxCount> top_m{};
  std::vector<int> predictions;
};

/// `variants` holds 10 rows per image, in image order, for counts 1..10.
/// Prediction is the argmax (lowest count on ties); the rank of the true count
/// uses the same tie order.
template <class T>
CountingResult eval_counting(const Matrix<T>& images, const Matrix<T>& variants, const std::vector<int>& true_counts) {
  if (variants.rows() != images.rows() * kMaxCount) {
    throw Error(ErrorKind::kShape, "expected 10 variant embeddings per image");
  }
  if (true_counts.size() != images.rows()) throw Error(ErrorKind::kLabel, "one true count per image required");
  if (images.cols() != variants.cols()) throw Error(ErrorKind::kShape, "embedding dimensions differ");

  CountingResult r;
  std::array<std::size_t, kMaxCount> within{};
  for (std::size_t i = 0; i < images.rows(); ++i) {
    const int truth = true_counts[i];
    if (truth < 1 || truth > kMaxCount) {
      throw Error(ErrorKind::kLabel, "true count " + std::to_string(truth) + " outside 1..10 at image " +
                                         std::to_string(i));
    }
    std::array<double, kMaxCount> sim{};
    for (int n = 0; n < kMaxCount; ++n) sim[n] = dot(images.row(i), variants.row(i * kMaxCount + n));
    int best = 0;
    for (int n = 1; n < kMaxCount; ++n) {
      if (sim[n] > sim[best]) best = n;
    }
    const int t = truth - 1;
    int rank = 0;
    for (int n = 0; n < kMaxCount; ++n) {
      if (sim[n] > sim[t] || (sim[n] == sim[t] && n < t)) ++rank;
    }
    r.predictions.push_back(best + 1);
    r.counts[t][best] += 1.0;
    for (int m = rank; m < kMaxCount; ++m) ++within[m];
  }
  for (int t = 0; t < kMaxCount; ++t) {
    double total = 0.0;
    for (double v : r.counts[t]) total += v;
    for (int p = 0; p < kMaxCount; ++p) r.normalized[t][p] = total > 0 ? r.counts[t][p] / total : 0.0;
  }
  const double n = static_cast<double>(images.rows());
  for (int m = 0; m < kMaxCount; ++m) r.top_m[m] = images.rows() == 0 ? 0.0 : within[m] / n;
  return r;
}

/// Counting from base captions and an embedding callback; the true count of
/// each image is the number in its caption.
template <class T>
CountingResult eval_counting(const Matrix<T>& images, const std::vector<std::string>& base_captions,
                             const std::function<std::vector<T>(const std::string&)>& embed_text, bool digit_mode) {
  if (base_captions.size() != images.rows()) throw Error(ErrorKind::kLabel, "one caption per image required");
  Matrix<T> variants(images.rows() * kMaxCount, images.cols());
  std::vector<int> truth;
  for (std::size_t i = 0; i < base_captions.size(); ++i) {
    truth.push_back(find_number_token(base_captions[i]).value);
    const auto texts = count_variants(base_captions[i], digit_mode);
    for (int n = 0; n < kMaxCount; ++n) {
      const auto e = embed_text(texts[static_cast<std::size_t>(n)]);
      if (e.size() != images.cols()) throw Error(ErrorKind::kShape, "embedder returned wrong dimension");
      std::copy(e.begin(), e.end(), variants.row(i * kMaxCount + n).begin());
    }
  }
  return eval_counting(images, variants, truth);
}

}  // namespace rsalign
