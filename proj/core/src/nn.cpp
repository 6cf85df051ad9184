#include "vildistill/nn.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace vildistill::nn {

void sgd_update(Mat& param, const Mat& grad, Mat& velocity, double lr, double momentum) {
  velocity = momentum * velocity + grad;
  param -= lr * velocity;
}

void sgd_update(Vec& param, const Vec& grad, Vec& velocity, double lr, double momentum) {
  velocity = momentum * velocity + grad;
  param -= lr * velocity;
}

uint64_t hash_doubles(const double* data, size_t count, uint64_t h) {
  const auto* bytes = reinterpret_cast<const unsigned char*>(data);
  for (size_t i = 0; i < count * sizeof(double); ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {
uint64_t hash_mat(const Mat& m, uint64_t h) {
  return hash_doubles(m.data(), static_cast<size_t>(m.size()), h);
}
uint64_t hash_vec(const Vec& v, uint64_t h) {
  return hash_doubles(v.data(), static_cast<size_t>(v.size()), h);
}
}  // namespace

Dense::Dense(int in_dim, int out_dim, Rng& rng) {
  const double scale = std::sqrt(2.0 / static_cast<double>(in_dim));
  W.resize(out_dim, in_dim);
  for (Eigen::Index r = 0; r < W.rows(); ++r) {
    for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = scale * rng.gaussian();
  }
  b = Vec::Zero(out_dim);
  dW = Mat::Zero(out_dim, in_dim);
  db = Vec::Zero(out_dim);
  mW = Mat::Zero(out_dim, in_dim);
  mb = Vec::Zero(out_dim);
}

Mat Dense::forward(const Mat& x, bool cache) {
  if (x.cols() != W.cols()) throw std::invalid_argument("Dense: input dim mismatch");
  if (cache) x_cache_ = x;
  return (x * W.transpose()).rowwise() + b.transpose();
}

Mat Dense::backward(const Mat& grad_y) {
  dW += grad_y.transpose() * x_cache_;
  db += grad_y.colwise().sum().transpose();
  return grad_y * W;
}

void Dense::step(double lr, double momentum) {
  sgd_update(W, dW, mW, lr, momentum);
  sgd_update(b, db, mb, lr, momentum);
}

void Dense::zero_grad() {
  dW.setZero();
  db.setZero();
}

uint64_t Dense::hash(uint64_t h) const { return hash_vec(b, hash_mat(W, h)); }

Mat Relu::forward(const Mat& x, bool cache) {
  Mat y = x.cwiseMax(0.0);
  if (cache) mask_ = (x.array() > 0.0).cast<double>();
  return y;
}

Mat Relu::backward(const Mat& grad_y) const { return grad_y.cwiseProduct(mask_); }

Mat RowNormalize::forward(const Mat& x, bool cache) {
  Mat y(x.rows(), x.cols());
  Vec norms(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    norms[r] = std::max(x.row(r).norm(), eps);
    y.row(r) = x.row(r) / norms[r];
  }
  if (cache) {
    y_cache_ = y;
    norms_ = norms;
  }
  return y;
}

Mat RowNormalize::backward(const Mat& grad_y) const {
  // dx = (g - (g . y) y) / ||x||
  Mat dx(grad_y.rows(), grad_y.cols());
  for (Eigen::Index r = 0; r < grad_y.rows(); ++r) {
    const double along = grad_y.row(r).dot(y_cache_.row(r));
    dx.row(r) = (grad_y.row(r) - along * y_cache_.row(r)) / norms_[r];
  }
  return dx;
}

BatchNorm1d::BatchNorm1d(int dim) {
  gamma = Vec::Ones(dim);
  beta = Vec::Zero(dim);
  running_mean = Vec::Zero(dim);
  running_var = Vec::Ones(dim);
  dgamma = Vec::Zero(dim);
  dbeta = Vec::Zero(dim);
  mgamma = Vec::Zero(dim);
  mbeta = Vec::Zero(dim);
}

namespace {
Mat scale_cols(const Mat& m, const Vec& s) {  // per-column scaling, broadcast over rows
  return m * s.asDiagonal();
}
}  // namespace

Mat BatchNorm1d::forward(const Mat& x, bool training, bool cache) {
  if (x.cols() != gamma.size()) throw std::invalid_argument("BatchNorm1d: dim mismatch");
  if (!training) {
    const Vec invstd = (running_var.array() + eps).rsqrt();
    const Mat xhat = scale_cols(x.rowwise() - running_mean.transpose(), invstd);
    return scale_cols(xhat, gamma).rowwise() + beta.transpose();
  }
  const auto n = static_cast<double>(x.rows());
  const Vec mean = x.colwise().mean().transpose();
  const Mat centered = x.rowwise() - mean.transpose();
  const Vec var = centered.array().square().colwise().mean().transpose();  // biased
  const Vec invstd = (var.array() + eps).rsqrt();
  const Mat xhat = scale_cols(centered, invstd);

  // Running stats use the unbiased variance when the batch allows it.
  const double unbias = x.rows() > 1 ? n / (n - 1.0) : 1.0;
  running_mean = (1.0 - stat_momentum) * running_mean + stat_momentum * mean;
  running_var = (1.0 - stat_momentum) * running_var + stat_momentum * (unbias * var);

  if (cache) {
    xhat_cache_ = xhat;
    invstd_cache_ = invstd;
  }
  return scale_cols(xhat, gamma).rowwise() + beta.transpose();
}

Mat BatchNorm1d::backward(const Mat& grad_y) {
  const auto n = static_cast<double>(xhat_cache_.rows());
  dgamma += grad_y.cwiseProduct(xhat_cache_).colwise().sum().transpose();
  dbeta += grad_y.colwise().sum().transpose();

  // Standard batch-stat backward:
  // dx = invstd/n * (n*dxhat - sum(dxhat) - xhat * sum(dxhat*xhat))
  const Mat dxhat = scale_cols(grad_y, gamma);
  const Vec sum_dxhat = dxhat.colwise().sum().transpose();
  const Vec sum_dxhat_xhat = dxhat.cwiseProduct(xhat_cache_).colwise().sum().transpose();
  Mat dx = n * dxhat;
  dx.rowwise() -= sum_dxhat.transpose();
  dx -= scale_cols(xhat_cache_, sum_dxhat_xhat);
  return scale_cols(dx, invstd_cache_ / n);
}

void BatchNorm1d::step(double lr, double momentum) {
  sgd_update(gamma, dgamma, mgamma, lr, momentum);
  sgd_update(beta, dbeta, mbeta, lr, momentum);
}

void BatchNorm1d::zero_grad() {
  dgamma.setZero();
  dbeta.setZero();
}

uint64_t BatchNorm1d::hash(uint64_t h) const {
  h = hash_vec(gamma, h);
  h = hash_vec(beta, h);
  h = hash_vec(running_mean, h);
  return hash_vec(running_var, h);
}

WeightNormDense::WeightNormDense(int in_dim, int out_dim, Rng& rng) {
  const double scale = std::sqrt(1.0 / static_cast<double>(in_dim));
  V.resize(out_dim, in_dim);
  for (Eigen::Index r = 0; r < V.rows(); ++r) {
    for (Eigen::Index c = 0; c < V.cols(); ++c) V(r, c) = scale * rng.gaussian();
  }
  g = V.rowwise().norm();  // effective weight starts equal to V
  b = Vec::Zero(out_dim);
  dV = Mat::Zero(out_dim, in_dim);
  dg = Vec::Zero(out_dim);
  db = Vec::Zero(out_dim);
  mV = Mat::Zero(out_dim, in_dim);
  mg = Vec::Zero(out_dim);
  mb = Vec::Zero(out_dim);
}

Mat WeightNormDense::effective_weight() const {
  const Vec norms = V.rowwise().norm().cwiseMax(1e-12);
  const Vec row_scale = g.cwiseQuotient(norms);
  return row_scale.asDiagonal() * V;
}

Mat WeightNormDense::forward(const Mat& x, bool cache) {
  if (x.cols() != V.cols()) throw std::invalid_argument("WeightNormDense: input dim mismatch");
  if (cache) x_cache_ = x;
  return (x * effective_weight().transpose()).rowwise() + b.transpose();
}

Mat WeightNormDense::backward(const Mat& grad_y) {
  const Mat dW = grad_y.transpose() * x_cache_;  // out x in
  const Vec norms = V.rowwise().norm().cwiseMax(1e-12);
  for (Eigen::Index c = 0; c < V.rows(); ++c) {
    const Vec unit = V.row(c).transpose() / norms[c];
    const Vec dw_row = dW.row(c).transpose();
    const double along = dw_row.dot(unit);
    dg[c] += along;
    dV.row(c) += (g[c] / norms[c]) * (dw_row - along * unit).transpose();
  }
  db += grad_y.colwise().sum().transpose();
  return grad_y * effective_weight();
}

void WeightNormDense::step(double lr, double momentum) {
  sgd_update(V, dV, mV, lr, momentum);
  if (train_magnitude) sgd_update(g, dg, mg, lr, momentum);
  if (train_bias) sgd_update(b, db, mb, lr, momentum);
}

void WeightNormDense::zero_grad() {
  dV.setZero();
  dg.setZero();
  db.setZero();
}

uint64_t WeightNormDense::hash(uint64_t h) const {
  h = hash_mat(V, h);
  h = hash_vec(g, h);
  return hash_vec(b, h);
}

}  // namespace vildistill::nn
