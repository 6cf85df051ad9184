#pragma once

#include <cstdint>

#include "vildistill/common.hpp"
#include "vildistill/rng.hpp"

namespace vildistill::nn {

// Minimal dense-layer toolkit: explicit forward caches, hand-written
// backward passes, SGD-with-momentum updates. Batches are n x dim.

/// v = mu * v + g; p -= lr * v
void sgd_update(Mat& param, const Mat& grad, Mat& velocity, double lr, double momentum);
void sgd_update(Vec& param, const Vec& grad, Vec& velocity, double lr, double momentum);

/// FNV-1a over the raw bytes of a double range; used for frozen-parameter
/// checks and bit-level determinism assertions.
uint64_t hash_doubles(const double* data, size_t count, uint64_t h = 0xcbf29ce484222325ULL);

struct Dense {
  Mat W;  // out x in
  Vec b;
  Mat dW;
  Vec db;
  Mat mW;
  Vec mb;

  Dense() = default;
  /// Kaiming-style init: W ~ N(0, sqrt(2/in)), b = 0.
  Dense(int in_dim, int out_dim, Rng& rng);

  Mat forward(const Mat& x, bool cache);
  /// Accumulates dW/db from the cached input; returns grad w.r.t. x.
  Mat backward(const Mat& grad_y);
  void step(double lr, double momentum);
  void zero_grad();
  uint64_t hash(uint64_t h) const;

 private:
  Mat x_cache_;
};

struct Relu {
  Mat forward(const Mat& x, bool cache);
  Mat backward(const Mat& grad_y) const;

 private:
  Mat mask_;
};

/// Per-sample L2 normalization: y = x / max(||x||, eps).
struct RowNormalize {
  double eps = 1e-12;

  Mat forward(const Mat& x, bool cache);
  Mat backward(const Mat& grad_y) const;

 private:
  Mat y_cache_;
  Vec norms_;
};

struct BatchNorm1d {
  Vec gamma, beta;
  Vec running_mean, running_var;
  Vec dgamma, dbeta;
  Vec mgamma, mbeta;
  double stat_momentum = 0.1;
  double eps = 1e-5;

  BatchNorm1d() = default;
  explicit BatchNorm1d(int dim);

  /// Training mode normalizes by batch statistics and folds them into the
  /// running estimates; eval mode uses the running estimates only.
  Mat forward(const Mat& x, bool training, bool cache);
  Mat backward(const Mat& grad_y);
  void step(double lr, double momentum);
  void zero_grad();
  uint64_t hash(uint64_t h) const;  // includes running statistics

 private:
  Mat xhat_cache_;
  Vec invstd_cache_;
};

/// Fully connected layer with weight normalization: row c of the effective
/// weight is g_c * v_c / ||v_c||, so rescaling a direction row v_c leaves
/// the mapping unchanged. The magnitude vector and bias can be frozen
/// (cosine-classifier style), which caps |logit| at g * ||x|| no matter
/// how training pushes the directions.
struct WeightNormDense {
  Mat V;  // out x in, direction rows
  Vec g;  // out, magnitudes
  Vec b;
  Mat dV;
  Vec dg, db;
  Mat mV;
  Vec mg, mb;
  bool train_magnitude = true;
  bool train_bias = true;

  WeightNormDense() = default;
  WeightNormDense(int in_dim, int out_dim, Rng& rng);

  Mat effective_weight() const;
  Mat forward(const Mat& x, bool cache);
  Mat backward(const Mat& grad_y);
  void step(double lr, double momentum);
  void zero_grad();
  uint64_t hash(uint64_t h) const;

 private:
  Mat x_cache_;
};

}  // namespace vildistill::nn
