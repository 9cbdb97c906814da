#pragma once

// Desk-scale two-tower contrastive training: linear image and text towers with
// L2-normalized outputs, optimized on the symmetric InfoNCE loss by minibatch
// gradient descent with a learnable temperature.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "rsalign/contrastive.hpp"
#include "rsalign/error.hpp"
#include "rsalign/matrix.hpp"
#include "rsalign/rng.hpp"

namespace rsalign {

/// Paired raw vectors. Image rows are grid_side x grid_side grids (row-major).
struct ToyDataset {
  Matrix<double> image;
  Matrix<double> text;
  std::vector<int> labels;
  int grid_side = 0;

  std::size_t size() const { return image.rows(); }
};

struct SyntheticSpec {
  std::size_t n_pairs = 200;
  int n_classes = 10;
  std::size_t latent_dim = 16;
  int grid_side = 8;
  std::size_t text_dim = 32;
  double class_spread = 1.0;
  double instance_spread = 1.0;
  double modality_noise = 0.1;
  std::uint64_t seed = 0;
};

/// Each pair shares one latent vector u = class centre + instance offset; the
/// image and text views are fixed random projections of u plus independent noise.
inline ToyDataset make_synthetic_pairs(const SyntheticSpec& spec) {
  if (spec.n_pairs == 0 || spec.n_classes < 1 || spec.latent_dim == 0 || spec.grid_side < 1 || spec.text_dim == 0) {
    throw Error(ErrorKind::kConfig, "invalid synthetic dataset spec");
  }
  Rng rng(spec.seed);
  const std::size_t img_dim = static_cast<std::size_t>(spec.grid_side) * static_cast<std::size_t>(spec.grid_side);
  const double proj_scale = 1.0 / std::sqrt(static_cast<double>(spec.latent_dim));

  Matrix<double> centers(static_cast<std::size_t>(spec.n_classes), spec.latent_dim);
  for (auto& v : centers.values()) v = spec.class_spread * rng.normal();
  Matrix<double> proj_image(img_dim, spec.latent_dim), proj_text(spec.text_dim, spec.latent_dim);
  for (auto& v : proj_image.values()) v = proj_scale * rng.normal();
  for (auto& v : proj_text.values()) v = proj_scale * rng.normal();

  ToyDataset data{Matrix<double>(spec.n_pairs, img_dim), Matrix<double>(spec.n_pairs, spec.text_dim), {},
                  spec.grid_side};
  std::vector<double> u(spec.latent_dim);
  for (std::size_t i = 0; i < spec.n_pairs; ++i) {
    const int label = static_cast<int>(i % static_cast<std::size_t>(spec.n_classes));
    data.labels.push_back(label);
    for (std::size_t k = 0; k < spec.latent_dim; ++k) {
      u[k] = centers(static_cast<std::size_t>(label), k) + spec.instance_spread * rng.normal();
    }
    for (std::size_t r = 0; r < img_dim; ++r) {
      data.image(i, r) = dot(proj_image.row(r), std::span<const double>(u)) + spec.modality_noise * rng.normal();
    }
    for (std::size_t r = 0; r < spec.text_dim; ++r) {
      data.text(i, r) = dot(proj_text.row(r), std::span<const double>(u)) + spec.modality_noise * rng.normal();
    }
  }
  return data;
}

/// Same data with text rows permuted by a seeded derangement, so no text is
/// paired with its own image.
inline ToyDataset mismatch_pairs(const ToyDataset& data, std::uint64_t seed) {
  const std::size_t n = data.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  if (n >= 2) {
    Rng rng(seed);
    bool fixed_point = true;
    while (fixed_point) {
      rng.shuffle(perm.begin(), perm.end());
      fixed_point = false;
      for (std::size_t i = 0; i < n; ++i) fixed_point = fixed_point || perm[i] == i;
    }
  }
  ToyDataset out = data;
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(data.text.row(perm[i]).begin(), data.text.row(perm[i]).end(), out.text.row(i).begin());
  }
  return out;
}

/// Horizontal flip and/or a quarter-turn rotation of a square grid.
inline void augment_grid(std::span<double> grid, int side, bool flip, int quarter_turns) {
  std::vector<double> src(grid.begin(), grid.end());
  auto at = [&](int x, int y) { return src[static_cast<std::size_t>(y * side + x)]; };
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      // Output (x, y) pulls from the inverse transform.
      int sx = x, sy = y;
      for (int t = 0; t < quarter_turns; ++t) {
        const int nx = sy, ny = side - 1 - sx;  // inverse of a clockwise quarter turn
        sx = nx;
        sy = ny;
      }
      if (flip) sx = side - 1 - sx;
      grid[static_cast<std::size_t>(y * side + x)] = at(sx, sy);
    }
  }
}

struct TrainConfig {
  std::size_t batch_size = 50;
  std::size_t epochs = 300;
  double learning_rate = 1.0;
  std::uint64_t seed = 0;
  std::size_t embed_dim = 32;
  bool augment_flip = false;
  bool augment_rotate = false;
  /// Linear warm-up steps, then constant or cosine-decayed learning rate.
  std::size_t warmup_steps = 0;
  bool cosine_schedule = false;
  double initial_tau = 0.07;
  double min_tau = 0.01;
  bool learn_temperature = true;
  /// Control mode: every epoch pairs each image with a freshly drawn random
  /// text, so the data carries no pairing signal.
  bool resample_pairs = false;

  void validate(std::size_t dataset_size) const {
    if (batch_size == 0 || batch_size > dataset_size) {
      throw Error(ErrorKind::kConfig, "batch size must be in [1, dataset size]");
    }
    if (!(learning_rate >= 0.0)) throw Error(ErrorKind::kConfig, "learning rate must be >= 0");
    if (embed_dim == 0) throw Error(ErrorKind::kConfig, "embed_dim must be positive");
    if (!(initial_tau > 0.0) || !(min_tau > 0.0)) throw Error(ErrorKind::kConfig, "temperatures must be positive");
  }
};

struct ToyEncoder {
  Matrix<double> weight;  // d_in x d_out

  /// Normalized embeddings of the rows of x; `norms` receives the pre-norm lengths.
  Matrix<double> encode(const Matrix<double>& x, std::vector<double>* norms = nullptr) const {
    Matrix<double> y(x.rows(), weight.cols(), 0.0);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      auto yi = y.row(i);
      for (std::size_t k = 0; k < x.cols(); ++k) {
        const double xv = x(i, k);
        const auto wk = weight.row(k);
        for (std::size_t c = 0; c < yi.size(); ++c) yi[c] += xv * wk[c];
      }
    }
    if (norms) {
      norms->resize(x.rows());
      for (std::size_t i = 0; i < x.rows(); ++i) (*norms)[i] = std::sqrt(dot(y.row(i), y.row(i)));
    }
    return l2_normalize(y);
  }
};

struct EpochLog {
  std::size_t epoch = 0;
  /// Loss over the fixed partition of the data into consecutive batches, after the epoch.
  double loss = 0.0;
  /// Mean minibatch loss seen during the epoch.
  double train_loss = 0.0;
  double learning_rate = 0.0;
  double tau = 0.0;
};

struct ToyTrainResult {
  ToyEncoder image_encoder;
  ToyEncoder text_encoder;
  Temperature temperature;
  double initial_loss = 0.0;
  std::vector<EpochLog> log;
};

inline double scheduled_lr(const TrainConfig& c, std::size_t step, std::size_t total_steps) {
  if (c.warmup_steps > 0 && step < c.warmup_steps) {
    return c.learning_rate * static_cast<double>(step + 1) / static_cast<double>(c.warmup_steps);
  }
  if (!c.cosine_schedule) return c.learning_rate;
  const std::size_t decay_steps = total_steps > c.warmup_steps ? total_steps - c.warmup_steps : 1;
  const double progress = static_cast<double>(step - c.warmup_steps) / static_cast<double>(decay_steps);
  return c.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

namespace detail {

inline Matrix<double> rows_of(const Matrix<double>& m, std::span<const std::size_t> idx) {
  Matrix<double> out(idx.size(), m.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) std::copy(m.row(idx[r]).begin(), m.row(idx[r]).end(), out.row(r).begin());
  return out;
}

/// Backprop through y = x W and z = y / |y|: dW += x^T ((dz - z (z . dz)) / |y|).
inline void accumulate_tower_grad(const Matrix<double>& x, const Matrix<double>& z, const std::vector<double>& norms,
                                  const Matrix<double>& dz, Matrix<double>& dw) {
  std::vector<double> dy(z.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double proj = dot(z.row(i), dz.row(i));
    for (std::size_t c = 0; c < z.cols(); ++c) dy[c] = (dz(i, c) - z(i, c) * proj) / norms[i];
    for (std::size_t k = 0; k < x.cols(); ++k) {
      const double xv = x(i, k);
      auto row = dw.row(k);
      for (std::size_t c = 0; c < dy.size(); ++c) row[c] += xv * dy[c];
    }
  }
}

}  // namespace detail

/// InfoNCE over the data in consecutive batches of `batch_size`, weighted by batch size.
inline double partition_loss(const ToyDataset& data, const ToyEncoder& image, const ToyEncoder& text,
                             Temperature temperature, std::size_t batch_size) {
  const auto zi = image.encode(data.image);
  const auto zt = text.encode(data.text);
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  double total = 0.0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    const std::size_t stop = std::min(data.size(), start + batch_size);
    const std::span<const std::size_t> part(idx.data() + start, stop - start);
    total += info_nce(detail::rows_of(zi, part), detail::rows_of(zt, part), temperature, RowCheck::kNone) *
             static_cast<double>(part.size());
  }
  return total / static_cast<double>(data.size());
}

inline ToyTrainResult toy_train(const ToyDataset& data, const TrainConfig& config) {
  config.validate(data.size());
  if (data.text.rows() != data.size()) throw Error(ErrorKind::kShape, "image and text row counts differ");
  const bool augment = config.augment_flip || config.augment_rotate;
  if (augment && static_cast<std::size_t>(data.grid_side) * static_cast<std::size_t>(data.grid_side) != data.image.cols()) {
    throw Error(ErrorKind::kConfig, "augmentation needs image rows shaped as square grids");
  }

  Rng rng(config.seed);
  ToyTrainResult result;
  result.image_encoder.weight = Matrix<double>(data.image.cols(), config.embed_dim);
  result.text_encoder.weight = Matrix<double>(data.text.cols(), config.embed_dim);
  for (auto* enc : {&result.image_encoder, &result.text_encoder}) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(enc->weight.rows()));
    for (auto& v : enc->weight.values()) v = scale * rng.normal();
  }
  result.temperature = Temperature::from_tau(config.initial_tau);
  const double min_log_tau = std::log(config.min_tau);
  result.initial_loss =
      partition_loss(data, result.image_encoder, result.text_encoder, result.temperature, config.batch_size);

  const std::size_t m = data.size();
  const std::size_t batches_per_epoch = (m + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = batches_per_epoch * config.epochs;
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::size_t> partner = order;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    if (config.resample_pairs) rng.shuffle(partner.begin(), partner.end());
    double seen_loss = 0.0;
    double lr = 0.0;
    for (std::size_t start = 0; start < m; start += config.batch_size, ++step) {
      const std::size_t stop = std::min(m, start + config.batch_size);
      const std::span<const std::size_t> part(order.data() + start, stop - start);
      Matrix<double> xi = detail::rows_of(data.image, part);
      std::vector<std::size_t> text_rows(part.size());
      for (std::size_t r = 0; r < part.size(); ++r) text_rows[r] = partner[part[r]];
      const Matrix<double> xt = detail::rows_of(data.text, text_rows);
      if (augment) {
        for (std::size_t r = 0; r < xi.rows(); ++r) {
          const bool flip = config.augment_flip && rng.uniform_index(2) == 1;
          const int turns = config.augment_rotate ? static_cast<int>(rng.uniform_index(4)) : 0;
          augment_grid(xi.row(r), data.grid_side, flip, turns);
        }
      }
      std::vector<double> ni, nt;
      const auto zi = result.image_encoder.encode(xi, &ni);
      const auto zt = result.text_encoder.encode(xt, &nt);
      const auto g = info_nce_grad(zi, zt, result.temperature, RowCheck::kNone);
      if (!std::isfinite(g.loss)) {
        throw Error(ErrorKind::kTrainingFailure, "loss became non-finite at step " + std::to_string(step) +
                                                     " (epoch " + std::to_string(epoch) + ")");
      }
      seen_loss += g.loss * static_cast<double>(part.size());

      Matrix<double> dwi(result.image_encoder.weight.rows(), config.embed_dim, 0.0);
      Matrix<double> dwt(result.text_encoder.weight.rows(), config.embed_dim, 0.0);
      detail::accumulate_tower_grad(xi, zi, ni, g.d_image, dwi);
      detail::accumulate_tower_grad(xt, zt, nt, g.d_text, dwt);
      lr = scheduled_lr(config, step, total_steps);
      auto& wi = result.image_encoder.weight.values();
      auto& wt = result.text_encoder.weight.values();
      for (std::size_t k = 0; k < wi.size(); ++k) wi[k] -= lr * dwi.values()[k];
      for (std::size_t k = 0; k < wt.size(); ++k) wt[k] -= lr * dwt.values()[k];
      if (config.learn_temperature) {
        result.temperature.log_tau = std::max(min_log_tau, result.temperature.log_tau - lr * g.d_log_tau);
      }
    }
    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = seen_loss / static_cast<double>(m);
    entry.loss = partition_loss(data, result.image_encoder, result.text_encoder, result.temperature, config.batch_size);
    entry.learning_rate = lr;
    entry.tau = result.temperature.tau();
    if (!std::isfinite(entry.loss)) {
      throw Error(ErrorKind::kTrainingFailure, "loss became non-finite after epoch " + std::to_string(epoch));
    }
    result.log.push_back(entry);
  }
  return result;
}

/// Moving average over `window` epochs of the logged loss.
inline std::vector<double> smoothed_losses(const std::vector<EpochLog>& log, std::size_t window) {
  std::vector<double> out;
  if (window == 0 || log.size() < window) return out;
  double acc = 0.0;
  for (std::size_t i = 0; i < log.size(); ++i) {
    acc += log[i].loss;
    if (i >= window) acc -= log[i - window].loss;
    if (i + 1 >= window) out.push_back(acc / static_cast<double>(window));
  }
  return out;
}

/// True when the smoothed loss never rises by more than `tolerance` between
/// consecutive windows.
inline bool smoothed_nonincreasing(const std::vector<EpochLog>& log, std::size_t window, double tolerance) {
  const auto s = smoothed_losses(log, window);
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (s[i] > s[i - 1] + tolerance) return false;
  }
  return true;
}

}  // namespace rsalign
