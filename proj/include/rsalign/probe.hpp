#pragma once

// Linear probing on frozen embeddings: multinomial logistic regression trained
// by minibatch SGD with cosine-annealed learning rate and weight decay, plus
// seeded few-shot subsampling and a small random hyperparameter search.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "rsalign/error.hpp"
#include "rsalign/matrix.hpp"
#include "rsalign/rng.hpp"

namespace rsalign {

struct ProbeConfig {
  double learning_rate = 0.8;
  double weight_decay = 4e-5;
  int epochs = 1000;
  std::size_t batch_size = 10000;
  bool cosine_annealing = true;
  /// Rounds of random search over (learning_rate, weight_decay); 0 disables it.
  int random_search_iters = 5;
  /// Share of each class held out for validation during the search.
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate >= 0.0) || !(weight_decay >= 0.0) || epochs < 0 || batch_size == 0 ||
        random_search_iters < 0 || !(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
      throw Error(ErrorKind::kConfig, "invalid probe configuration");
    }
  }
};

struct LinearClassifier {
  Matrix<double> weight;  // classes x dim
  std::vector<double> bias;

  std::size_t classes() const { return weight.rows(); }

  template <class T>
  std::vector<int> predict(const Matrix<T>& x) const {
    std::vector<int> out(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      std::size_t best = 0;
      double best_score = 0.0;
      for (std::size_t c = 0; c < classes(); ++c) {
        const double s = bias[c] + dot(weight.row(c), x.row(i));
        if (c == 0 || s > best_score) {
          best = c;
          best_score = s;
        }
      }
      out[i] = static_cast<int>(best);
    }
    return out;
  }
};

struct ProbeTrial {
  double learning_rate = 0.0;
  double weight_decay = 0.0;
  double validation_accuracy = 0.0;
};

struct ProbeResult {
  LinearClassifier classifier;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double learning_rate = 0.0;
  double weight_decay = 0.0;
  std::vector<ProbeTrial> trials;
};

inline double accuracy(const std::vector<int>& pred, const std::vector<int>& labels) {
  if (labels.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hit += pred[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(labels.size());
}

/// Exactly `shots` rows of every class present in `labels`, drawn uniformly
/// without replacement. Returned indices are ascending.
inline std::vector<std::size_t> few_shot_sample(const std::vector<int>& labels, std::size_t shots, std::uint64_t seed) {
  if (shots == 0) throw Error(ErrorKind::kSampling, "shots must be >= 1");
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  std::vector<std::size_t> picked;
  for (auto& [label, rows] : by_class) {
    if (rows.size() < shots) {
      throw Error(ErrorKind::kSampling, "class " + std::to_string(label) + " has " + std::to_string(rows.size()) +
                                            " rows, fewer than " + std::to_string(shots) + " shots");
    }
    Rng rng(derive_seed(seed, "class:" + std::to_string(label)));
    // Partial Fisher-Yates.
    for (std::size_t k = 0; k < shots; ++k) {
      const auto j = k + rng.uniform_index(rows.size() - k);
      std::swap(rows[k], rows[j]);
      picked.push_back(rows[k]);
    }
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

namespace detail {

template <class T>
LinearClassifier train_logistic(const Matrix<T>& x, const std::vector<int>& y, std::size_t n_classes, double lr,
                                double wd, const ProbeConfig& config) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  LinearClassifier clf{Matrix<double>(n_classes, d, 0.0), std::vector<double>(n_classes, 0.0)};
  Rng rng(config.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Matrix<double> grad_w(n_classes, d);
  std::vector<double> grad_b(n_classes), prob(n_classes);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double step =
        config.cosine_annealing ? lr * 0.5 * (1.0 + std::cos(std::numbers::pi * epoch / config.epochs)) : lr;
    if (n > config.batch_size) rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      const double inv_b = 1.0 / static_cast<double>(stop - start);
      std::fill(grad_w.values().begin(), grad_w.values().end(), 0.0);
      std::fill(grad_b.begin(), grad_b.end(), 0.0);
      for (std::size_t s = start; s < stop; ++s) {
        const auto i = order[s];
        const auto xi = x.row(i);
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < n_classes; ++c) {
          prob[c] = clf.bias[c] + dot(clf.weight.row(c), xi);
          mx = std::max(mx, prob[c]);
        }
        double sum = 0.0;
        for (auto& p : prob) sum += (p = std::exp(p - mx));
        for (std::size_t c = 0; c < n_classes; ++c) {
          const double g = (prob[c] / sum - (static_cast<int>(c) == y[i] ? 1.0 : 0.0)) * inv_b;
          grad_b[c] += g;
          auto gw = grad_w.row(c);
          for (std::size_t k = 0; k < d; ++k) gw[k] += g * static_cast<double>(xi[k]);
        }
      }
      // SGD-style weight decay on every parameter, biases included.
      for (std::size_t c = 0; c < n_classes; ++c) {
        auto w = clf.weight.row(c);
        const auto gw = grad_w.row(c);
        for (std::size_t k = 0; k < d; ++k) w[k] -= step * (gw[k] + wd * w[k]);
        clf.bias[c] -= step * (grad_b[c] + wd * clf.bias[c]);
      }
    }
  }
  for (double v : clf.weight.values()) {
    if (!std::isfinite(v)) throw Error(ErrorKind::kTrainingFailure, "linear probe diverged (non-finite weights)");
  }
  return clf;
}

template <class T>
Matrix<T> take_rows(const Matrix<T>& m, const std::vector<std::size_t>& rows) {
  Matrix<T> out(rows.size(), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) std::copy(m.row(rows[r]).begin(), m.row(rows[r]).end(), out.row(r).begin());
  return out;
}

inline std::vector<int> take(const std::vector<int>& v, const std::vector<std::size_t>& rows) {
  std::vector<int> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(v[r]);
  return out;
}

}  // namespace detail

/// Trains a linear softmax classifier on `train` and scores it on both sets.
/// Weights and biases start at zero, so zero epochs predicts class 0 everywhere.
/// With `search`, random_search_iters (learning rate, weight decay) pairs are
/// scored on a stratified holdout of `train` (first pair = the configured one,
/// the rest log-uniform within x10 / x100 of it); the best pair is refit on all
/// of `train`.
template <class T>
ProbeResult linear_probe(const Matrix<T>& train, const std::vector<int>& train_labels, const Matrix<T>& test,
                         const std::vector<int>& test_labels, const ProbeConfig& config = {}, bool search = false) {
  config.validate();
  if (train_labels.size() != train.rows() || test_labels.size() != test.rows()) {
    throw Error(ErrorKind::kLabel, "one label per row required");
  }
  int max_label = -1;
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < train_labels.size(); ++i) {
    if (train_labels[i] < 0) throw Error(ErrorKind::kLabel, "negative label");
    max_label = std::max(max_label, train_labels[i]);
    by_class[train_labels[i]].push_back(i);
  }
  for (int l : test_labels) {
    if (l < 0) throw Error(ErrorKind::kLabel, "negative label");
    max_label = std::max(max_label, l);
  }
  if (by_class.size() < 2) throw Error(ErrorKind::kDegenerateLabel, "linear probe needs at least two classes");
  const auto n_classes = static_cast<std::size_t>(max_label + 1);

  ProbeResult result;
  result.learning_rate = config.learning_rate;
  result.weight_decay = config.weight_decay;

  if (search && config.random_search_iters > 0) {
    std::vector<std::size_t> fit, val;
    Rng split_rng(derive_seed(config.seed, "holdout"));
    for (auto& [label, rows] : by_class) {
      split_rng.shuffle(rows.begin(), rows.end());
      std::size_t held = 0;
      if (rows.size() >= 2) {
        held = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(config.validation_fraction * rows.size())));
        held = std::min(held, rows.size() - 1);
      }
      val.insert(val.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(held));
      fit.insert(fit.end(), rows.begin() + static_cast<std::ptrdiff_t>(held), rows.end());
    }
    std::sort(fit.begin(), fit.end());
    std::sort(val.begin(), val.end());
    if (val.empty()) val = fit;  // one shot per class: select on training accuracy
    const auto x_fit = detail::take_rows(train, fit);
    const auto y_fit = detail::take(train_labels, fit);
    const auto x_val = detail::take_rows(train, val);
    const auto y_val = detail::take(train_labels, val);

    Rng search_rng(derive_seed(config.seed, "search"));
    double best = -1.0;
    for (int t = 0; t < config.random_search_iters; ++t) {
      double lr = config.learning_rate;
      double wd = config.weight_decay;
      if (t > 0) {
        lr = config.learning_rate * std::pow(10.0, search_rng.uniform(-1.0, 1.0));
        wd = config.weight_decay * std::pow(10.0, search_rng.uniform(-2.0, 2.0));
      }
      const auto clf = detail::train_logistic(x_fit, y_fit, n_classes, lr, wd, config);
      const double acc = accuracy(clf.predict(x_val), y_val);
      result.trials.push_back({lr, wd, acc});
      if (acc > best) {
        best = acc;
        result.learning_rate = lr;
        result.weight_decay = wd;
      }
    }
  }

  result.classifier =
      detail::train_logistic(train, train_labels, n_classes, result.learning_rate, result.weight_decay, config);
  result.train_accuracy = accuracy(result.classifier.predict(train), train_labels);
  result.test_accuracy = accuracy(result.classifier.predict(test), test_labels);
  return result;
}

}  // namespace rsalign
