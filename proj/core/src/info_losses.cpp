#include "vildistill/info_losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vildistill {

namespace {

double floored_log(double x) { return std::log(std::max(x, kProbFloor)); }

void require_matched_batches(const Mat& a, const Mat& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(what) + ": batch shapes differ (" +
                                std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                                " vs " + std::to_string(b.rows()) + "x" +
                                std::to_string(b.cols()) + ")");
  }
  if (a.rows() < 1) throw std::invalid_argument(std::string(what) + ": empty batch");
}

}  // namespace

bool is_prob_vector(const Vec& p, double tol) {
  if (p.size() == 0) return false;
  if (!(p.array() >= 0.0).all()) return false;
  return std::abs(p.sum() - 1.0) <= tol;
}

void require_prob_rows(const Mat& p, const char* what) {
  for (Eigen::Index b = 0; b < p.rows(); ++b) {
    if (!is_prob_vector(p.row(b))) {
      throw std::invalid_argument(std::string(what) + ": row " + std::to_string(b) +
                                  " is not a probability vector");
    }
  }
}

Vec softmax(const Vec& logits, double temperature) {
  if (temperature <= 0.0) throw std::invalid_argument("softmax: temperature must be > 0");
  if (!logits.allFinite()) throw std::invalid_argument("softmax: non-finite logits");
  const Vec scaled = logits / temperature;
  const double m = scaled.maxCoeff();
  Vec e = (scaled.array() - m).exp();
  return e / e.sum();
}

Mat softmax_rows(const Mat& logits, double temperature) {
  Mat out(logits.rows(), logits.cols());
  for (Eigen::Index b = 0; b < logits.rows(); ++b) {
    out.row(b) = softmax(logits.row(b), temperature).transpose();
  }
  return out;
}

Vec softmax_backward(const Vec& p, const Vec& grad_p, double temperature) {
  // dl_j = (p_j (g_j - sum_i g_i p_i)) / tau
  const double dot = grad_p.dot(p);
  return (p.array() * (grad_p.array() - dot) / temperature).matrix();
}

Mat softmax_rows_backward(const Mat& p, const Mat& grad_p, double temperature) {
  Mat out(p.rows(), p.cols());
  for (Eigen::Index b = 0; b < p.rows(); ++b) {
    out.row(b) = softmax_backward(p.row(b), grad_p.row(b), temperature).transpose();
  }
  return out;
}

double kl_divergence(const Vec& p, const Vec& q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: size mismatch");
  if (!is_prob_vector(p) || !is_prob_vector(q)) {
    throw std::invalid_argument("kl_divergence: inputs must be probability vectors");
  }
  double sum = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) {
      throw std::domain_error("kl_divergence: p has mass where q is zero (class " +
                              std::to_string(i) + "); smooth q before calling");
    }
    sum += p[i] * (floored_log(p[i]) - floored_log(q[i]));
  }
  return sum;
}

Vec kl_divergence_grad_p(const Vec& p, const Vec& q) {
  Vec g(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    g[i] = floored_log(std::max(p[i], 0.0)) - floored_log(std::max(q[i], 0.0)) + 1.0;
  }
  return g;
}

JointDistribution batch_joint(const Mat& preds_a, const Mat& preds_b, bool symmetrize) {
  require_matched_batches(preds_a, preds_b, "batch_joint");
  require_prob_rows(preds_a, "batch_joint(preds_a)");
  require_prob_rows(preds_b, "batch_joint(preds_b)");
  const double inv_batch = 1.0 / static_cast<double>(preds_a.rows());
  Mat j = inv_batch * (preds_a.transpose() * preds_b);
  if (symmetrize) j = 0.5 * (j + j.transpose()).eval();
  JointDistribution out;
  out.matrix = std::move(j);
  out.row_marginal = out.matrix.rowwise().sum();
  out.col_marginal = out.matrix.colwise().sum().transpose();
  return out;
}

double mutual_information(const JointDistribution& j) {
  double sum = 0.0;
  for (Eigen::Index r = 0; r < j.matrix.rows(); ++r) {
    for (Eigen::Index c = 0; c < j.matrix.cols(); ++c) {
      const double v = j.matrix(r, c);
      if (v <= 0.0) continue;
      sum += v * (floored_log(v) - floored_log(j.row_marginal[r]) - floored_log(j.col_marginal[c]));
    }
  }
  return std::max(sum, 0.0);
}

Mat mutual_information_grad(const JointDistribution& j) {
  Mat g(j.matrix.rows(), j.matrix.cols());
  for (Eigen::Index r = 0; r < j.matrix.rows(); ++r) {
    for (Eigen::Index c = 0; c < j.matrix.cols(); ++c) {
      g(r, c) = floored_log(std::max(j.matrix(r, c), 0.0)) - floored_log(j.row_marginal[r]) -
                floored_log(j.col_marginal[c]) - 1.0;
    }
  }
  return g;
}

double tsc_loss(const Mat& preds_t, const Mat& preds_v, bool symmetrize) {
  return -mutual_information(batch_joint(preds_t, preds_v, symmetrize));
}

TscGradients tsc_loss_with_grad(const Mat& preds_t, const Mat& preds_v, bool symmetrize) {
  const JointDistribution j = batch_joint(preds_t, preds_v, symmetrize);
  Mat d_joint = mutual_information_grad(j);
  if (symmetrize) {
    // J = (A + A^T)/2, so dI/dA = (G + G^T)/2.
    d_joint = 0.5 * (d_joint + d_joint.transpose()).eval();
  }
  const double inv_batch = 1.0 / static_cast<double>(preds_t.rows());
  TscGradients out;
  out.value = -mutual_information(j);
  // A_kl = inv_batch * sum_b p_t[b,k] p_v[b,l]
  out.d_preds_t = -inv_batch * (preds_v * d_joint.transpose());
  out.d_preds_v = -inv_batch * (preds_t * d_joint);
  return out;
}

double balance_loss(const Mat& preds) {
  require_prob_rows(preds, "balance_loss");
  const Vec mean = preds.colwise().mean().transpose();
  const double log_c = std::log(static_cast<double>(preds.cols()));
  double sum = 0.0;
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    if (mean[i] <= 0.0) continue;
    sum += mean[i] * (floored_log(mean[i]) + log_c);
  }
  return std::max(sum, 0.0);
}

Mat balance_loss_grad(const Mat& preds) {
  const Vec mean = preds.colwise().mean().transpose();
  const double log_c = std::log(static_cast<double>(preds.cols()));
  const double inv_batch = 1.0 / static_cast<double>(preds.rows());
  Vec g(mean.size());
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    g[i] = inv_batch * (floored_log(std::max(mean[i], 0.0)) + log_c + 1.0);
  }
  return g.transpose().replicate(preds.rows(), 1);
}

double pc_loss(const Mat& preds_t, const Mat& preds_v, double alpha, bool symmetrize) {
  if (alpha < 0.0) throw std::invalid_argument("pc_loss: alpha must be >= 0");
  return tsc_loss(preds_t, preds_v, symmetrize) + alpha * balance_loss(preds_t);
}

PcGradients pc_loss_with_grad(const Mat& preds_t, const Mat& preds_v, double alpha,
                              bool symmetrize) {
  if (alpha < 0.0) throw std::invalid_argument("pc_loss: alpha must be >= 0");
  const TscGradients tsc = tsc_loss_with_grad(preds_t, preds_v, symmetrize);
  PcGradients out;
  out.value = tsc.value;
  out.d_preds_t = tsc.d_preds_t;
  out.d_preds_v = tsc.d_preds_v;
  if (alpha > 0.0) {
    out.value += alpha * balance_loss(preds_t);
    out.d_preds_t += alpha * balance_loss_grad(preds_t);
  }
  return out;
}

namespace {

void validate_likely_set(const LikelySet& likely, Eigen::Index class_count) {
  const auto n = static_cast<Eigen::Index>(likely.size());
  if (n < 1 || n >= class_count) {
    throw std::invalid_argument("mce_loss: likely set size must satisfy 1 <= N < C");
  }
  for (size_t a = 0; a < likely.size(); ++a) {
    if (likely[a] < 0 || likely[a] >= class_count) {
      throw std::invalid_argument("mce_loss: likely index out of range");
    }
    for (size_t b = a + 1; b < likely.size(); ++b) {
      if (likely[a] == likely[b]) {
        throw std::invalid_argument("mce_loss: duplicate index in likely set");
      }
    }
  }
}

struct MceSampleTerms {
  double product = 1.0;     // a
  double sum = 0.0;         // b
  double lse = 0.0;         // logsumexp over the complement of b*l_j/tau
  double max_arg = 0.0;     // max of the complement arguments
  std::vector<char> in_set;
};

MceSampleTerms mce_sample_terms(const Vec& logits, const LikelySet& likely, double tau) {
  MceSampleTerms t;
  t.in_set.assign(static_cast<size_t>(logits.size()), 0);
  for (const int m : likely) {
    t.in_set[static_cast<size_t>(m)] = 1;
    t.product *= logits[m];
    t.sum += logits[m];
  }
  // Max-subtracted logsumexp over j not in the likely set.
  t.max_arg = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < logits.size(); ++j) {
    if (t.in_set[static_cast<size_t>(j)]) continue;
    t.max_arg = std::max(t.max_arg, t.sum * logits[j] / tau);
  }
  double acc = 0.0;
  for (Eigen::Index j = 0; j < logits.size(); ++j) {
    if (t.in_set[static_cast<size_t>(j)]) continue;
    acc += std::exp(t.sum * logits[j] / tau - t.max_arg);
  }
  t.lse = t.max_arg + std::log(acc);
  return t;
}

}  // namespace

double mce_log_ratio(const Vec& logits, const LikelySet& likely, double temperature) {
  if (temperature <= 0.0) throw std::invalid_argument("mce_loss: temperature must be > 0");
  if (!logits.allFinite()) throw std::invalid_argument("mce_loss: non-finite logits");
  validate_likely_set(likely, logits.size());
  const MceSampleTerms t = mce_sample_terms(logits, likely, temperature);
  return t.product / temperature - t.lse;
}

double mce_loss(const Mat& logits, const std::vector<LikelySet>& likely_sets, double temperature) {
  if (static_cast<Eigen::Index>(likely_sets.size()) != logits.rows()) {
    throw std::invalid_argument("mce_loss: one likely set per sample required");
  }
  double acc = 0.0;
  for (Eigen::Index b = 0; b < logits.rows(); ++b) {
    acc += mce_log_ratio(logits.row(b), likely_sets[static_cast<size_t>(b)], temperature);
  }
  return -acc / static_cast<double>(logits.rows());
}

MceGradients mce_loss_with_grad(const Mat& logits, const std::vector<LikelySet>& likely_sets,
                                double temperature) {
  if (static_cast<Eigen::Index>(likely_sets.size()) != logits.rows()) {
    throw std::invalid_argument("mce_loss: one likely set per sample required");
  }
  if (temperature <= 0.0) throw std::invalid_argument("mce_loss: temperature must be > 0");
  MceGradients out;
  out.d_logits = Mat::Zero(logits.rows(), logits.cols());
  double acc = 0.0;
  for (Eigen::Index b = 0; b < logits.rows(); ++b) {
    const Vec l = logits.row(b);
    const LikelySet& likely = likely_sets[static_cast<size_t>(b)];
    if (!l.allFinite()) throw std::invalid_argument("mce_loss: non-finite logits");
    validate_likely_set(likely, l.size());
    const MceSampleTerms t = mce_sample_terms(l, likely, temperature);
    const double ratio = t.product / temperature - t.lse;
    acc += ratio;

    // Softmax weights of the complement inside the logsumexp.
    Vec s = Vec::Zero(l.size());
    double weighted_logit_sum = 0.0;  // sum_j s_j l_j
    for (Eigen::Index j = 0; j < l.size(); ++j) {
      if (t.in_set[static_cast<size_t>(j)]) continue;
      s[j] = std::exp(t.sum * l[j] / temperature - t.lse);
      weighted_logit_sum += s[j] * l[j];
    }

    // d ratio / d l_{m_k} = (prod_{k' != k} l_{m_k'} - sum_j s_j l_j) / tau
    for (const int m : likely) {
      double prod_except = 1.0;
      for (const int other : likely) {
        if (other != m) prod_except *= l[other];
      }
      out.d_logits(b, m) = -(prod_except - weighted_logit_sum) / temperature;
    }
    // d ratio / d l_j = -s_j * b / tau for complement entries
    for (Eigen::Index j = 0; j < l.size(); ++j) {
      if (t.in_set[static_cast<size_t>(j)]) continue;
      out.d_logits(b, j) = s[j] * t.sum / temperature;
    }
  }
  const double inv_batch = 1.0 / static_cast<double>(logits.rows());
  out.value = -acc * inv_batch;
  out.d_logits *= inv_batch;
  return out;
}

double kl_alignment(const Mat& preds_t, const Mat& preds_v) {
  require_matched_batches(preds_t, preds_v, "kl_alignment");
  double acc = 0.0;
  for (Eigen::Index b = 0; b < preds_t.rows(); ++b) {
    acc += kl_divergence(preds_t.row(b), preds_v.row(b));
  }
  return acc / static_cast<double>(preds_t.rows());
}

KlAlignmentGradients kl_alignment_with_grad(const Mat& preds_t, const Mat& preds_v) {
  require_matched_batches(preds_t, preds_v, "kl_alignment");
  KlAlignmentGradients out;
  out.d_preds_t = Mat::Zero(preds_t.rows(), preds_t.cols());
  double acc = 0.0;
  for (Eigen::Index b = 0; b < preds_t.rows(); ++b) {
    acc += kl_divergence(preds_t.row(b), preds_v.row(b));
    out.d_preds_t.row(b) = kl_divergence_grad_p(preds_t.row(b), preds_v.row(b)).transpose();
  }
  const double inv_batch = 1.0 / static_cast<double>(preds_t.rows());
  out.value = acc * inv_batch;
  out.d_preds_t *= inv_batch;
  return out;
}

}  // namespace vildistill
