#pragma once

#include <cmath>
#include <functional>

#include "vildistill/common.hpp"
#include "vildistill/info_losses.hpp"
#include "vildistill/rng.hpp"

namespace testutil {

using vildistill::Mat;
using vildistill::Vec;

/// Full-support probability vector: normalized exponentials of uniforms.
inline Vec random_prob_vector(int classes, vildistill::Rng& rng) {
  Vec v(classes);
  for (int i = 0; i < classes; ++i) v[i] = -std::log(1.0 - rng.uniform());
  return v / v.sum();
}

inline Mat random_prob_batch(int batch, int classes, vildistill::Rng& rng) {
  Mat m(batch, classes);
  for (int b = 0; b < batch; ++b) m.row(b) = random_prob_vector(classes, rng).transpose();
  return m;
}

inline Mat random_logits(int batch, int classes, vildistill::Rng& rng, double scale = 1.5) {
  Mat m(batch, classes);
  for (int b = 0; b < batch; ++b) {
    for (int c = 0; c < classes; ++c) m(b, c) = scale * rng.gaussian();
  }
  return m;
}

/// Central finite difference of a scalar function of a matrix entry.
inline double central_difference(const std::function<double(const Mat&)>& f, Mat point,
                                 Eigen::Index r, Eigen::Index c, double h = 1e-5) {
  const double saved = point(r, c);
  point(r, c) = saved + h;
  const double up = f(point);
  point(r, c) = saved - h;
  const double down = f(point);
  point(r, c) = saved;
  return (up - down) / (2.0 * h);
}

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

/// Max relative error between an analytic gradient matrix and central
/// finite differences of `f` at `point`.
inline double max_gradient_error(const std::function<double(const Mat&)>& f, const Mat& point,
                                 const Mat& analytic, double h = 1e-5) {
  double worst = 0.0;
  for (Eigen::Index r = 0; r < point.rows(); ++r) {
    for (Eigen::Index c = 0; c < point.cols(); ++c) {
      const double fd = central_difference(f, point, r, c, h);
      worst = std::max(worst, relative_error(analytic(r, c), fd));
    }
  }
  return worst;
}

}  // namespace testutil
