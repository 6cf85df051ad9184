#include "vildistill/info_losses.hpp"

#include <doctest.h>

#include <cmath>

#include "test_helpers.hpp"
#include "vildistill/rng.hpp"

using namespace vildistill;
using testutil::max_gradient_error;
using testutil::random_logits;
using testutil::random_prob_batch;
using testutil::random_prob_vector;

namespace {
Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}
Vec vec3(double a, double b, double c) {
  Vec v(3);
  v << a, b, c;
  return v;
}
}  // namespace

TEST_CASE("softmax basics") {
  const Vec uniform = softmax(vec3(0, 0, 0), 1.0);
  CHECK(uniform[0] == doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK(uniform[1] == doctest::Approx(1.0 / 3).epsilon(1e-12));

  // Argmax is preserved even at a sharp temperature.
  const Vec sharp = softmax(vec3(2, 3, 1), 0.1);
  int argmax = 0;
  sharp.maxCoeff(&argmax);
  CHECK(argmax == 1);

  // Direct arithmetic oracle for a two-class case.
  const double e = std::exp(1.0);
  const Vec two = softmax(vec2(1, 0), 1.0);
  CHECK(two[0] == doctest::Approx(e / (e + 1.0)).epsilon(1e-12));
  CHECK(two[1] == doctest::Approx(1.0 / (e + 1.0)).epsilon(1e-12));
  CHECK(is_prob_vector(two));

  Vec bad = vec2(1, 0);
  bad[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(softmax(bad, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(softmax(vec2(1, 0), 0.0), std::invalid_argument);
}

TEST_CASE("kl_divergence examples and contract") {
  CHECK(kl_divergence(vec2(0.5, 0.5), vec2(0.5, 0.5)) == 0.0);  // identical inputs: exact zero

  // p=[1,0], q=[0.5,0.5] -> log 2 by direct arithmetic.
  CHECK(kl_divergence(vec2(1, 0), vec2(0.5, 0.5)) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // p=[0.3,0.7], q=[0.7,0.3] -> 0.4*log(7/3).
  const double expected = 0.3 * std::log(0.3 / 0.7) + 0.7 * std::log(0.7 / 0.3);
  CHECK(kl_divergence(vec2(0.3, 0.7), vec2(0.7, 0.3)) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(expected == doctest::Approx(0.4 * std::log(7.0 / 3.0)).epsilon(1e-12));

  // Support mismatch is an error, not infinity.
  CHECK_THROWS_AS(kl_divergence(vec2(0.5, 0.5), vec2(1, 0)), std::domain_error);
  // Zero mass in p where q is zero is fine.
  CHECK(kl_divergence(vec2(0, 1), vec2(0, 1)) == 0.0);
}

TEST_CASE("batch_joint examples") {
  // Single uniform pair: all entries 1/4.
  Mat u(1, 2);
  u << 0.5, 0.5;
  const JointDistribution j1 = batch_joint(u, u, true);
  CHECK(j1.matrix(0, 0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(j1.matrix(1, 0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(j1.matrix.sum() == doctest::Approx(1.0).epsilon(1e-9));

  // One-hot batch spanning both classes against itself: diag(0.5, 0.5).
  Mat onehots(2, 2);
  onehots << 1, 0, 0, 1;
  const JointDistribution j2 = batch_joint(onehots, onehots, true);
  CHECK(j2.matrix(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(j2.matrix(1, 1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(j2.matrix(0, 1) == 0.0);

  // Single one-hot e_0 with C=3: all mass at (0,0).
  Mat e0(1, 3);
  e0 << 1, 0, 0;
  const JointDistribution j3 = batch_joint(e0, e0, false);
  CHECK(j3.matrix(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(j3.matrix.sum() == doctest::Approx(1.0).epsilon(1e-12));

  Mat mismatched(2, 3);
  mismatched << 1, 0, 0, 0, 1, 0;
  CHECK_THROWS_AS(batch_joint(e0, mismatched, true), std::invalid_argument);
}

TEST_CASE("mutual_information examples") {
  // Independent uniform joint, C=4: exactly zero.
  JointDistribution ind;
  ind.matrix = Mat::Constant(4, 4, 1.0 / 16.0);
  ind.row_marginal = Vec::Constant(4, 0.25);
  ind.col_marginal = Vec::Constant(4, 0.25);
  CHECK(mutual_information(ind) == doctest::Approx(0.0).epsilon(1e-12));

  // Perfectly correlated uniform C=2: log 2.
  JointDistribution diag;
  diag.matrix = Mat::Zero(2, 2);
  diag.matrix(0, 0) = 0.5;
  diag.matrix(1, 1) = 0.5;
  diag.row_marginal = Vec::Constant(2, 0.5);
  diag.col_marginal = Vec::Constant(2, 0.5);
  CHECK(mutual_information(diag) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // Direct arithmetic oracle for [[0.4,0.1],[0.1,0.4]].
  JointDistribution mixed;
  mixed.matrix.resize(2, 2);
  mixed.matrix << 0.4, 0.1, 0.1, 0.4;
  mixed.row_marginal = Vec::Constant(2, 0.5);
  mixed.col_marginal = Vec::Constant(2, 0.5);
  const double expected = 0.8 * std::log(1.6) + 0.2 * std::log(0.4);
  CHECK(mutual_information(mixed) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("tsc_loss examples") {
  // Identical one-hot batches spanning both classes: -log 2 via the MI oracle.
  Mat onehots(2, 2);
  onehots << 1, 0, 0, 1;
  CHECK(tsc_loss(onehots, onehots, true) ==
        doctest::Approx(-std::log(2.0)).epsilon(1e-12));

  // All-uniform batches: zero.
  Mat uniform = Mat::Constant(3, 4, 0.25);
  CHECK(tsc_loss(uniform, uniform, true) == doctest::Approx(0.0).epsilon(1e-12));

  // Single-sample one-hot: joint is rank one with matching marginals.
  Mat e0(1, 3);
  e0 << 1, 0, 0;
  CHECK(tsc_loss(e0, e0, true) == doctest::Approx(0.0).epsilon(1e-12));

  // Nonpositive everywhere.
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const Mat a = random_prob_batch(4, 3, rng);
    const Mat b = random_prob_batch(4, 3, rng);
    CHECK(tsc_loss(a, b, true) <= 1e-15);
  }
}

TEST_CASE("balance_loss examples") {
  Mat balanced(2, 2);
  balanced << 1, 0, 0, 1;  // batch mean uniform
  CHECK(balance_loss(balanced) == doctest::Approx(0.0).epsilon(1e-12));

  Mat collapsed(2, 2);
  collapsed << 1, 0, 1, 0;  // mean [1, 0]
  CHECK(balance_loss(collapsed) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  Mat skewed(2, 2);
  skewed << 0.25, 0.75, 0.25, 0.75;  // mean [0.25, 0.75]
  const double expected = kl_divergence(vec2(0.25, 0.75), vec2(0.5, 0.5));
  CHECK(balance_loss(skewed) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(expected == doctest::Approx(0.1308).epsilon(1e-3));
}

TEST_CASE("pc_loss composition") {
  Rng rng(11);
  const Mat a = random_prob_batch(5, 4, rng);
  const Mat b = random_prob_batch(5, 4, rng);
  CHECK(pc_loss(a, b, 0.0) == doctest::Approx(tsc_loss(a, b)).epsilon(1e-12));

  Mat uniform = Mat::Constant(4, 4, 0.25);
  CHECK(pc_loss(uniform, uniform, 1.0) == doctest::Approx(0.0).epsilon(1e-12));

  // Identical one-hot class-balanced batches, C=2, alpha=1: -log 2 + 0.
  Mat onehots(2, 2);
  onehots << 1, 0, 0, 1;
  CHECK(pc_loss(onehots, onehots, 1.0) == doctest::Approx(-std::log(2.0)).epsilon(1e-12));

  // Composition oracle on random inputs.
  CHECK(pc_loss(a, b, 0.7) ==
        doctest::Approx(tsc_loss(a, b) + 0.7 * balance_loss(a)).epsilon(1e-12));
}

TEST_CASE("mce_loss hand example and edge cases") {
  // l=[2,3,1], M={0,1}, tau=0.1: a=6, b=5, term = -(60 - 50) = -10.
  Mat logits(1, 3);
  logits << 2, 3, 1;
  const std::vector<LikelySet> sets{{0, 1}};
  CHECK(mce_loss(logits, sets, 0.1) == doctest::Approx(-10.0).epsilon(1e-12));
  CHECK(mce_log_ratio(logits.row(0), {0, 1}, 0.1) == doctest::Approx(10.0).epsilon(1e-12));

  // All-zero logits: a=0, b=0, single complement term exp(0) -> ratio 0.
  Mat zeros = Mat::Zero(1, 3);
  CHECK(mce_loss(zeros, sets, 1.0) == doctest::Approx(0.0).epsilon(1e-12));

  // Permutation invariance of the likely set.
  Rng rng(3);
  const Mat l = random_logits(4, 5, rng);
  const std::vector<LikelySet> fwd{{1, 3}, {0, 2}, {2, 4}, {0, 4}};
  const std::vector<LikelySet> rev{{3, 1}, {2, 0}, {4, 2}, {4, 0}};
  CHECK(mce_loss(l, fwd, 0.5) == doctest::Approx(mce_loss(l, rev, 0.5)).epsilon(1e-14));

  CHECK_THROWS_AS(mce_loss(logits, {{0, 0}}, 0.1), std::invalid_argument);   // duplicates
  CHECK_THROWS_AS(mce_loss(logits, {{0, 1, 2}}, 0.1), std::invalid_argument);  // N >= C
  CHECK_THROWS_AS(mce_loss(logits, {{0, 3}}, 0.1), std::invalid_argument);   // out of range
  CHECK_THROWS_AS(mce_loss(logits, sets, 0.0), std::invalid_argument);       // temperature
}

TEST_CASE("mce numerator product is more change-sensitive than the sum") {
  // At l=[2,3,1] with M={0,1}: da/dl[m_0] = l[m_1] = 3 while db/dl[m_0] = 1.
  const Vec l = vec3(2, 3, 1);
  const LikelySet likely{0, 1};
  const auto product_term = [&](double l0) { return l0 * l[1]; };
  const auto sum_term = [&](double l0) { return l0 + l[1]; };
  const double h = 1e-6;
  const double da = (product_term(l[0] + h) - product_term(l[0] - h)) / (2 * h);
  const double db = (sum_term(l[0] + h) - sum_term(l[0] - h)) / (2 * h);
  CHECK(da == doctest::Approx(l[1]).epsilon(1e-9));
  CHECK(db == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(std::abs(da) > std::abs(db));
  (void)likely;
}

TEST_CASE("theorem bound: -I <= 0 <= KL over random full-support pairs") {
  Rng rng(2024);
  int checked = 0;
  for (int classes = 2; classes <= 10; ++classes) {
    for (int trial = 0; trial < 250; ++trial) {
      const Vec p = random_prob_vector(classes, rng);
      const Vec q = random_prob_vector(classes, rng);
      Mat bp(1, classes), bq(1, classes);
      bp.row(0) = p.transpose();
      bq.row(0) = q.transpose();
      const double mi = mutual_information(batch_joint(bp, bq, true));
      const double kl = kl_divergence(p, q);
      REQUIRE(-mi <= 0.0);
      REQUIRE(0.0 <= kl);
      ++checked;
    }
  }
  CHECK(checked == 9 * 250);
}

TEST_CASE("MI range and transpose symmetry") {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const int classes = 2 + static_cast<int>(rng.raw() % 7);
    const int batch = 1 + static_cast<int>(rng.raw() % 6);
    const Mat a = random_prob_batch(batch, classes, rng);
    const Mat b = random_prob_batch(batch, classes, rng);
    const JointDistribution j = batch_joint(a, b, trial % 2 == 0);
    const double mi = mutual_information(j);
    REQUIRE(mi >= 0.0);
    REQUIRE(mi <= std::log(static_cast<double>(classes)) + 1e-9);

    JointDistribution t;
    t.matrix = j.matrix.transpose();
    t.row_marginal = j.col_marginal;
    t.col_marginal = j.row_marginal;
    REQUIRE(mutual_information(t) == doctest::Approx(mi).epsilon(1e-12));
  }
}

TEST_CASE("gradient fidelity against central finite differences") {
  Rng rng(42);
  const double tol = 1e-4;

  SUBCASE("tsc_loss w.r.t. both logit sides") {
    for (const bool symmetrize : {true, false}) {
      const Mat logits_t = random_logits(6, 4, rng);
      const Mat logits_v = random_logits(6, 4, rng);
      const Mat pt = softmax_rows(logits_t, 1.0);
      const Mat pv = softmax_rows(logits_v, 1.0);

      const TscGradients g = tsc_loss_with_grad(pt, pv, symmetrize);
      const Mat d_logits_t = softmax_rows_backward(pt, g.d_preds_t, 1.0);
      const Mat d_logits_v = softmax_rows_backward(pv, g.d_preds_v, 1.0);

      const auto f_t = [&](const Mat& l) {
        return tsc_loss(softmax_rows(l, 1.0), pv, symmetrize);
      };
      const auto f_v = [&](const Mat& l) {
        return tsc_loss(pt, softmax_rows(l, 1.0), symmetrize);
      };
      CHECK(max_gradient_error(f_t, logits_t, d_logits_t) < tol);
      CHECK(max_gradient_error(f_v, logits_v, d_logits_v) < tol);
    }
  }

  SUBCASE("pc_loss w.r.t. target logits") {
    const Mat logits_t = random_logits(5, 5, rng);
    const Mat logits_v = random_logits(5, 5, rng);
    const Mat pt = softmax_rows(logits_t, 1.0);
    const Mat pv = softmax_rows(logits_v, 1.0);
    const double alpha = 1.0;

    const PcGradients g = pc_loss_with_grad(pt, pv, alpha);
    const Mat d_logits = softmax_rows_backward(pt, g.d_preds_t, 1.0);
    const auto f = [&](const Mat& l) { return pc_loss(softmax_rows(l, 1.0), pv, alpha); };
    CHECK(max_gradient_error(f, logits_t, d_logits) < tol);
  }

  SUBCASE("mce_loss w.r.t. logits") {
    const Mat logits = random_logits(6, 5, rng, 1.0);
    std::vector<LikelySet> sets;
    for (int b = 0; b < 6; ++b) {
      const int first = static_cast<int>(rng.raw() % 5);
      const int second = (first + 1 + static_cast<int>(rng.raw() % 4)) % 5;
      sets.push_back({first, second});
    }
    const MceGradients g = mce_loss_with_grad(logits, sets, 0.4);
    CHECK(g.value == doctest::Approx(mce_loss(logits, sets, 0.4)).epsilon(1e-12));
    const auto f = [&](const Mat& l) { return mce_loss(l, sets, 0.4); };
    CHECK(max_gradient_error(f, logits, g.d_logits) < tol);
  }

  SUBCASE("kl alignment w.r.t. target logits") {
    const Mat logits_t = random_logits(4, 4, rng);
    const Mat logits_v = random_logits(4, 4, rng);
    const Mat pt = softmax_rows(logits_t, 1.0);
    const Mat pv = softmax_rows(logits_v, 1.0);
    const KlAlignmentGradients g = kl_alignment_with_grad(pt, pv);
    const Mat d_logits = softmax_rows_backward(pt, g.d_preds_t, 1.0);
    const auto f = [&](const Mat& l) { return kl_alignment(softmax_rows(l, 1.0), pv); };
    CHECK(max_gradient_error(f, logits_t, d_logits) < tol);
  }
}
