#pragma once

#include <vector>

#include "vildistill/common.hpp"

namespace vildistill {

// Information-theoretic quantities and the training losses built from them.
// Every function here is pure; batches carry one probability/logit vector
// per row. Gradient variants return the loss value together with the
// gradient w.r.t. the stated inputs; gradients treat probability inputs as
// free variables in R^C — composing with softmax_backward yields the
// correct simplex-constrained gradient w.r.t. logits.

bool is_prob_vector(const Vec& p, double tol = kProbSumTol);

/// Throws std::invalid_argument unless every row of `p` is a valid
/// probability vector (entries >= 0, sum within kProbSumTol of 1).
void require_prob_rows(const Mat& p, const char* what);

/// Temperature softmax. Throws std::invalid_argument on non-finite input
/// or non-positive temperature. Argmax of the result equals argmax of `l`.
Vec softmax(const Vec& logits, double temperature = 1.0);
Mat softmax_rows(const Mat& logits, double temperature = 1.0);

/// Given p = softmax(l, temperature) and dL/dp, returns dL/dl.
Vec softmax_backward(const Vec& p, const Vec& grad_p, double temperature = 1.0);
Mat softmax_rows_backward(const Mat& p, const Mat& grad_p, double temperature = 1.0);

/// KL(p || q). Terms with p_i = 0 contribute 0. Mass of p on a class where
/// q is exactly zero is a support mismatch and throws std::domain_error
/// (callers are expected to smooth rather than receive infinity).
double kl_divergence(const Vec& p, const Vec& q);

/// d KL(p||q) / dp (free gradient; constant offsets vanish under
/// softmax_backward).
Vec kl_divergence_grad_p(const Vec& p, const Vec& q);

/// Discrete joint distribution over class pairs with cached marginals.
struct JointDistribution {
  Mat matrix;        // C x C, nonnegative, sums to 1
  Vec row_marginal;  // C
  Vec col_marginal;  // C
};

/// Batch mean of outer products preds_a[b] (x) preds_b[b]; when
/// `symmetrize` is set the result is averaged with its transpose.
JointDistribution batch_joint(const Mat& preds_a, const Mat& preds_b, bool symmetrize = true);

/// I = sum_ij J_ij log(J_ij / (r_i c_j)). Terms with J_ij = 0 contribute 0.
/// Result is clamped into [0, +inf) to absorb floating-point dust; the
/// mathematical quantity is nonnegative.
double mutual_information(const JointDistribution& j);

/// dI/dJ for the unclamped sum, accounting for the marginals' dependence
/// on J: dI/dJ_kl = log J_kl - log r_k - log c_l - 1.
Mat mutual_information_grad(const JointDistribution& j);

/// L_TSC = -I(batch_joint(preds_t, preds_v)). Minimizing it raises the
/// mutual information between the two prediction sets.
double tsc_loss(const Mat& preds_t, const Mat& preds_v, bool symmetrize = true);

struct TscGradients {
  double value = 0.0;
  Mat d_preds_t;
  Mat d_preds_v;
};
TscGradients tsc_loss_with_grad(const Mat& preds_t, const Mat& preds_v, bool symmetrize = true);

/// L_B = KL(batch mean prediction || uniform). Zero iff the empirical
/// class distribution is uniform.
double balance_loss(const Mat& preds);
Mat balance_loss_grad(const Mat& preds);

/// L_PC = L_TSC + alpha * L_B(preds_t).
double pc_loss(const Mat& preds_t, const Mat& preds_v, double alpha, bool symmetrize = true);

struct PcGradients {
  double value = 0.0;
  Mat d_preds_t;
  Mat d_preds_v;
};
PcGradients pc_loss_with_grad(const Mat& preds_t, const Mat& preds_v, double alpha,
                              bool symmetrize = true);

/// Indices of a sample's most-likely categories (product/sum groups of the
/// category-attention regularizer).
using LikelySet = std::vector<int>;

/// Per-sample log ratio: a/tau - logsumexp_{j not in M}(b * l_j / tau),
/// with a = prod_k l[m_k] and b = sum_k l[m_k]. Exposed raw for
/// inspection; the loss is its negated batch mean.
double mce_log_ratio(const Vec& logits, const LikelySet& likely, double temperature);

/// L_MCE = -mean_i mce_log_ratio(l_i, M_i, tau). Minimizing it amplifies
/// the logits at each sample's most-likely categories while suppressing
/// the complement. Throws std::invalid_argument on duplicate indices,
/// out-of-range indices, N >= C, or non-positive temperature.
double mce_loss(const Mat& logits, const std::vector<LikelySet>& likely_sets, double temperature);

struct MceGradients {
  double value = 0.0;
  Mat d_logits;
};
MceGradients mce_loss_with_grad(const Mat& logits, const std::vector<LikelySet>& likely_sets,
                                double temperature);

/// Batch-mean KL(preds_t[b] || preds_v[b]) with gradient w.r.t. preds_t.
/// Alignment drop-in used by the divergence-based ablation.
double kl_alignment(const Mat& preds_t, const Mat& preds_v);
struct KlAlignmentGradients {
  double value = 0.0;
  Mat d_preds_t;
};
KlAlignmentGradients kl_alignment_with_grad(const Mat& preds_t, const Mat& preds_v);

}  // namespace vildistill
