#pragma once

// Training-free classifiers over embeddings: prompt-based zero-shot and
// temperature-weighted k-nearest-neighbour voting.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "rsalign/contrastive.hpp"
#include "rsalign/error.hpp"
#include "rsalign/matrix.hpp"
#include "rsalign/text.hpp"

namespace rsalign {

inline constexpr std::string_view kClassSlot = "{class name}";
inline constexpr std::string_view kDefaultPromptTemplate = "a satellite photo of {class name}.";

/// Substitutes every "{class name}" slot with the normalized class name.
inline std::string prompt_render(std::string_view tpl, std::string_view class_name) {
  if (tpl.find(kClassSlot) == std::string_view::npos) {
    throw Error(ErrorKind::kTemplate, "prompt template has no {class name} slot: " + std::string(tpl));
  }
  const std::string name = normalize_class_name(class_name);
  if (name.empty()) throw Error(ErrorKind::kTemplate, "empty class name");
  std::string out;
  std::size_t pos = 0;
  while (true) {
    const auto hit = tpl.find(kClassSlot, pos);
    if (hit == std::string_view::npos) break;
    out.append(tpl.substr(pos, hit - pos));
    out.append(name);
    pos = hit + kClassSlot.size();
  }
  out.append(tpl.substr(pos));
  return out;
}

struct ClassReport {
  std::size_t support = 0;
  std::size_t correct = 0;
  double accuracy() const { return support == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(support); }
};

struct ClassificationResult {
  std::vector<int> predictions;
  double accuracy = 0.0;
  std::vector<ClassReport> per_class;
};

inline ClassificationResult score_predictions(std::vector<int> predictions, const std::vector<int>& labels,
                                              std::size_t n_classes) {
  ClassificationResult r;
  r.per_class.resize(n_classes);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& c = r.per_class[static_cast<std::size_t>(labels[i])];
    ++c.support;
    if (predictions[i] == labels[i]) {
      ++c.correct;
      ++correct;
    }
  }
  r.accuracy = labels.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(labels.size());
  r.predictions = std::move(predictions);
  return r;
}

inline void check_labels(const std::vector<int>& labels, std::size_t n_classes, std::size_t rows) {
  if (labels.size() != rows) {
    throw Error(ErrorKind::kLabel, std::to_string(labels.size()) + " labels for " + std::to_string(rows) + " rows");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= n_classes) {
      throw Error(ErrorKind::kLabel, "label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                                         " is outside [0, " + std::to_string(n_classes) + ")");
    }
  }
}

/// Predicts argmax over class-prompt similarity; lowest class index wins ties.
template <class T>
ClassificationResult zero_shot_classify(const Matrix<T>& images, const Matrix<T>& class_prompts,
                                        const std::vector<int>& labels) {
  check_labels(labels, class_prompts.rows(), images.rows());
  const auto sim = similarity_matrix(images, class_prompts);
  std::vector<int> pred(images.rows(), 0);
  for (std::size_t i = 0; i < images.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < sim.cols(); ++c) {
      if (sim(i, c) > sim(i, best)) best = c;
    }
    pred[i] = static_cast<int>(best);
  }
  return score_predictions(std::move(pred), labels, class_prompts.rows());
}

struct KnnConfig {
  std::size_t k = 20;
  double temperature = 0.07;

  void validate() const {
    if (k < 1) throw Error(ErrorKind::kConfig, "k must be >= 1");
    if (!(temperature > 0.0)) throw Error(ErrorKind::kConfig, "temperature must be > 0");
  }
};

/// For each query: the k most similar training rows (ties to the lower row),
/// each voting for its label with weight exp(sim / T); the heaviest class wins,
/// lowest class index on ties.
template <class T>
std::vector<int> knn_classify(const Matrix<T>& train, const std::vector<int>& train_labels, const Matrix<T>& queries,
                              const KnnConfig& config = {}) {
  config.validate();
  if (config.k > train.rows()) {
    throw Error(ErrorKind::kConfig, "k = " + std::to_string(config.k) + " exceeds " + std::to_string(train.rows()) +
                                        " training rows");
  }
  if (train_labels.size() != train.rows()) throw Error(ErrorKind::kLabel, "one label per training row required");
  int max_label = 0;
  for (int l : train_labels) {
    if (l < 0) throw Error(ErrorKind::kLabel, "negative label");
    max_label = std::max(max_label, l);
  }
  const auto sim = similarity_matrix(queries, train);
  std::vector<int> pred(queries.rows(), 0);
  std::vector<std::size_t> order(train.rows());
  std::vector<double> votes(static_cast<std::size_t>(max_label) + 1);
  for (std::size_t q = 0; q < queries.rows(); ++q) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(config.k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                        if (sim(q, a) != sim(q, b)) return sim(q, a) > sim(q, b);
                        return a < b;
                      });
    // exp((s - s_max)/T) keeps relative weights and avoids overflow.
    const double top = sim(q, order[0]);
    std::fill(votes.begin(), votes.end(), 0.0);
    for (std::size_t r = 0; r < config.k; ++r) {
      const auto j = order[r];
      votes[static_cast<std::size_t>(train_labels[j])] += std::exp((sim(q, j) - top) / config.temperature);
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < votes.size(); ++c) {
      if (votes[c] > votes[best]) best = c;
    }
    pred[q] = static_cast<int>(best);
  }
  return pred;
}

}  // namespace rsalign
