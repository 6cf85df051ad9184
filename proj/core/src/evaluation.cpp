#include "vildistill/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vildistill {

int argmax_row(const Mat& preds, Eigen::Index row) {
  int best = 0;
  for (Eigen::Index c = 1; c < preds.cols(); ++c) {
    if (preds(row, c) > preds(row, best)) best = static_cast<int>(c);
  }
  return best;
}

double accuracy(const Mat& preds, const std::vector<int>& labels) {
  if (preds.rows() != static_cast<Eigen::Index>(labels.size())) {
    throw std::invalid_argument("accuracy: prediction/label count mismatch");
  }
  if (labels.empty()) throw std::invalid_argument("accuracy: empty input");
  int correct = 0;
  for (Eigen::Index i = 0; i < preds.rows(); ++i) {
    if (argmax_row(preds, i) == labels[static_cast<size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

Vec per_class_accuracy(const Mat& preds, const std::vector<int>& labels, int class_count) {
  if (preds.rows() != static_cast<Eigen::Index>(labels.size())) {
    throw std::invalid_argument("per_class_accuracy: prediction/label count mismatch");
  }
  if (labels.empty()) throw std::invalid_argument("per_class_accuracy: empty input");
  Vec correct = Vec::Zero(class_count);
  Vec total = Vec::Zero(class_count);
  for (Eigen::Index i = 0; i < preds.rows(); ++i) {
    const int y = labels[static_cast<size_t>(i)];
    if (y < 0 || y >= class_count) {
      throw std::invalid_argument("per_class_accuracy: label out of range");
    }
    total[y] += 1.0;
    if (argmax_row(preds, i) == y) correct[y] += 1.0;
  }
  Vec rates = Vec::Zero(class_count);
  for (int c = 0; c < class_count; ++c) {
    if (total[c] > 0.0) rates[c] = correct[c] / total[c];
  }
  return rates;
}

Eigen::MatrixXi confusion_matrix(const Mat& preds, const std::vector<int>& labels,
                                 int class_count) {
  if (preds.rows() != static_cast<Eigen::Index>(labels.size())) {
    throw std::invalid_argument("confusion_matrix: prediction/label count mismatch");
  }
  Eigen::MatrixXi m = Eigen::MatrixXi::Zero(class_count, class_count);
  for (Eigen::Index i = 0; i < preds.rows(); ++i) {
    const int y = labels[static_cast<size_t>(i)];
    if (y < 0 || y >= class_count) {
      throw std::invalid_argument("confusion_matrix: label out of range");
    }
    m(y, argmax_row(preds, i)) += 1;
  }
  return m;
}

namespace {

double kernel_mean(const Mat& a, const Mat& b, double gamma) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      acc += std::exp(-gamma * (a.row(i) - b.row(j)).squaredNorm());
    }
  }
  return acc / (static_cast<double>(a.rows()) * static_cast<double>(b.rows()));
}

}  // namespace

double mmd(const Mat& x, const Mat& y, double bandwidth) {
  if (x.rows() < 1 || y.rows() < 1) throw std::invalid_argument("mmd: empty sample set");
  if (x.cols() != y.cols()) throw std::invalid_argument("mmd: dimension mismatch");
  if (bandwidth <= 0.0) throw std::invalid_argument("mmd: bandwidth must be > 0");
  const double gamma = 1.0 / (2.0 * bandwidth * bandwidth);
  const double value =
      kernel_mean(x, x, gamma) + kernel_mean(y, y, gamma) - 2.0 * kernel_mean(x, y, gamma);
  return std::max(value, 0.0);
}

double median_pairwise_distance(const Mat& x) {
  const Eigen::Index n = x.rows();
  if (n < 2) return 0.0;
  std::vector<double> dists;
  dists.reserve(static_cast<size_t>(n) * static_cast<size_t>(n - 1) / 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      dists.push_back((x.row(i) - x.row(j)).norm());
    }
  }
  const size_t mid = (dists.size() - 1) / 2;  // lower median
  std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(mid), dists.end());
  return dists[mid];
}

double median_heuristic_bandwidth(const Mat& x, const Mat& y) {
  if (x.cols() != y.cols()) throw std::invalid_argument("median_heuristic: dimension mismatch");
  Mat pooled(x.rows() + y.rows(), x.cols());
  pooled.topRows(x.rows()) = x;
  pooled.bottomRows(y.rows()) = y;
  return median_pairwise_distance(pooled);
}

std::vector<double> mmd_trajectory(const std::vector<Mat>& epoch_logit_spaces,
                                   const Mat& oracle_logits) {
  double bandwidth = median_pairwise_distance(oracle_logits);
  if (bandwidth <= 0.0) bandwidth = 1.0;
  std::vector<double> series;
  series.reserve(epoch_logit_spaces.size());
  for (const Mat& space : epoch_logit_spaces) {
    series.push_back(mmd(space, oracle_logits, bandwidth));
  }
  return series;
}

std::vector<double> weight_sweep(TargetModel& source_model, const VilBackend& vil,
                                 const PromptContext& prompt, const DomainDataset& target,
                                 const std::vector<double>& grid) {
  for (const double w : grid) {
    if (w < 0.0 || w > 1.0) throw std::invalid_argument("weight_sweep: weights must be in [0,1]");
  }
  const bool was_training = source_model.training();
  source_model.set_training(false);
  const Mat source_preds = source_model.predict(target.inputs);
  source_model.set_training(was_training);
  const Mat vil_preds = vil_predict(vil, prompt, target.inputs);

  std::vector<double> accuracies;
  accuracies.reserve(grid.size());
  for (const double w : grid) {
    const Mat mixed = w * vil_preds + (1.0 - w) * source_preds;
    accuracies.push_back(accuracy(mixed, target.labels));
  }
  return accuracies;
}

double prediction_entropy(const Vec& p) {
  double h = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) h -= p[i] * std::log(std::max(p[i], kProbFloor));
  }
  return h;
}

OpenSetScore open_set_score(const Mat& preds, const std::vector<int>& labels, int known_classes,
                            std::optional<double> entropy_threshold) {
  if (preds.rows() != static_cast<Eigen::Index>(labels.size())) {
    throw std::invalid_argument("open_set_score: prediction/label count mismatch");
  }
  if (labels.empty()) throw std::invalid_argument("open_set_score: empty input");
  if (known_classes < 1) throw std::invalid_argument("open_set_score: known_classes must be >= 1");

  std::vector<double> entropies(labels.size());
  for (Eigen::Index i = 0; i < preds.rows(); ++i) {
    entropies[static_cast<size_t>(i)] = prediction_entropy(preds.row(i));
  }
  OpenSetScore out;
  if (entropy_threshold) {
    out.threshold = *entropy_threshold;
  } else {
    std::vector<double> sorted = entropies;
    const size_t mid = (sorted.size() - 1) / 2;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(mid),
                     sorted.end());
    out.threshold = sorted[mid];
  }

  int known_total = 0, known_correct = 0, unknown_total = 0, unknown_rejected = 0;
  for (Eigen::Index i = 0; i < preds.rows(); ++i) {
    const int y = labels[static_cast<size_t>(i)];
    const bool rejected = entropies[static_cast<size_t>(i)] >= out.threshold;
    if (y < known_classes) {
      ++known_total;
      if (!rejected && argmax_row(preds, i) == y) ++known_correct;
    } else {
      ++unknown_total;
      if (rejected) ++unknown_rejected;
    }
  }
  out.known_accuracy =
      known_total > 0 ? static_cast<double>(known_correct) / known_total : 0.0;
  out.unknown_recall =
      unknown_total > 0 ? static_cast<double>(unknown_rejected) / unknown_total : 0.0;
  out.score = 0.5 * (out.known_accuracy + out.unknown_recall);
  return out;
}

}  // namespace vildistill
