#pragma once

#include <array>
#include <numeric>
#include <string>
#include <vector>

#include "rsalign/contrastive.hpp"
#include "rsalign/error.hpp"
#include "rsalign/matrix.hpp"

namespace rsalign {

/// Recalls in percent.
struct RetrievalResult {
  double i2t_r1 = 0, i2t_r5 = 0, i2t_r10 = 0;
  double t2i_r1 = 0, t2i_r5 = 0, t2i_r10 = 0;
  double mean_recall = 0;
  std::size_t image_queries = 0;
  std::size_t text_queries = 0;
};

inline double mean_recall(const std::array<double, 6>& recalls) {
  return std::accumulate(recalls.begin(), recalls.end(), 0.0) / 6.0;
}

namespace detail {

/// 0-based rank of candidate `target` in row `q` of `sim`: the number of
/// candidates ranked ahead of it, where ties go to the lower index.
inline std::size_t rank_of(const Matrix<double>& sim, std::size_t q, std::size_t target) {
  const double s = sim(q, target);
  std::size_t rank = 0;
  for (std::size_t j = 0; j < sim.cols(); ++j) {
    const double v = sim(q, j);
    if (v > s || (v == s && j < target)) ++rank;
  }
  return rank;
}

}  // namespace detail

/// Cross-modal recall@{1,5,10}. `text_to_image[t]` is the image row of caption
/// t. Text-to-image: each caption is a query, hit iff its image ranks in the
/// top k. Image-to-text: each image with at least one caption is a query, hit
/// iff any of its captions ranks in the top k.
template <class T>
RetrievalResult eval_retrieval(const Matrix<T>& images, const Matrix<T>& texts,
                               const std::vector<std::size_t>& text_to_image) {
  if (text_to_image.size() != texts.rows()) {
    throw Error(ErrorKind::kPairing, "pairing has " + std::to_string(text_to_image.size()) + " entries for " +
                                         std::to_string(texts.rows()) + " texts");
  }
  std::vector<std::vector<std::size_t>> captions_of(images.rows());
  for (std::size_t t = 0; t < text_to_image.size(); ++t) {
    if (text_to_image[t] >= images.rows()) {
      throw Error(ErrorKind::kPairing, "text " + std::to_string(t) + " maps to missing image " +
                                           std::to_string(text_to_image[t]));
    }
    captions_of[text_to_image[t]].push_back(t);
  }
  const Matrix<double> sim = similarity_matrix(images, texts);  // images x texts

  RetrievalResult r;
  std::array<std::size_t, 3> i2t_hits{}, t2i_hits{};
  constexpr std::array<std::size_t, 3> ks{1, 5, 10};

  for (std::size_t i = 0; i < images.rows(); ++i) {
    if (captions_of[i].empty()) continue;
    ++r.image_queries;
    std::size_t best = sim.cols();
    for (auto t : captions_of[i]) best = std::min(best, detail::rank_of(sim, i, t));
    for (std::size_t k = 0; k < ks.size(); ++k) i2t_hits[k] += best < ks[k];
  }

  const Matrix<double> sim_t = detail::transpose(sim);  // texts x images
  for (std::size_t t = 0; t < texts.rows(); ++t) {
    ++r.text_queries;
    const std::size_t rank = detail::rank_of(sim_t, t, text_to_image[t]);
    for (std::size_t k = 0; k < ks.size(); ++k) t2i_hits[k] += rank < ks[k];
  }

  auto pct = [](std::size_t hits, std::size_t total) {
    return total == 0 ? 0.0 : 100.0 * static_cast<double>(hits) / static_cast<double>(total);
  };
  r.i2t_r1 = pct(i2t_hits[0], r.image_queries);
  r.i2t_r5 = pct(i2t_hits[1], r.image_queries);
  r.i2t_r10 = pct(i2t_hits[2], r.image_queries);
  r.t2i_r1 = pct(t2i_hits[0], r.text_queries);
  r.t2i_r5 = pct(t2i_hits[1], r.text_queries);
  r.t2i_r10 = pct(t2i_hits[2], r.text_queries);
  r.mean_recall = mean_recall({r.i2t_r1, r.i2t_r5, r.i2t_r10, r.t2i_r1, r.t2i_r5, r.t2i_r10});
  return r;
}

}  // namespace rsalign
