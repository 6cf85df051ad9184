#pragma once

#include <optional>
#include <vector>

#include "vildistill/common.hpp"
#include "vildistill/data.hpp"
#include "vildistill/target_model.hpp"
#include "vildistill/vil_backend.hpp"

namespace vildistill {

/// First index holding the row maximum (ties resolve to the lower index).
int argmax_row(const Mat& preds, Eigen::Index row);

/// Fraction of samples whose argmax matches the label.
double accuracy(const Mat& preds, const std::vector<int>& labels);

/// Class-wise accuracy rates; classes absent from `labels` report 0.
Vec per_class_accuracy(const Mat& preds, const std::vector<int>& labels, int class_count);

/// Entry (true, predicted) counts; row sums equal class counts.
Eigen::MatrixXi confusion_matrix(const Mat& preds, const std::vector<int>& labels,
                                 int class_count);

/// Squared maximum mean discrepancy with the Gaussian kernel
/// exp(-||x-y||^2 / (2 sigma^2)), biased estimator, clamped at zero.
double mmd(const Mat& x, const Mat& y, double bandwidth);

/// Lower median of the pairwise distances within one sample set.
double median_pairwise_distance(const Mat& x);

/// Median heuristic over the pooled sample (lower median of pairwise
/// distances of rows of x stacked with rows of y).
double median_heuristic_bandwidth(const Mat& x, const Mat& y);

/// MMD of each epoch's logit space to the oracle logit space, with a
/// single bandwidth fixed from the oracle space so the series is
/// comparable across epochs.
std::vector<double> mmd_trajectory(const std::vector<Mat>& epoch_logit_spaces,
                                   const Mat& oracle_logits);

/// Accuracy of argmax over w * p_vil + (1-w) * p_source for each w in the
/// grid; w=0 and w=1 reproduce the pure baselines exactly.
std::vector<double> weight_sweep(TargetModel& source_model, const VilBackend& vil,
                                 const PromptContext& prompt, const DomainDataset& target,
                                 const std::vector<double>& grid);

/// Shannon entropy of one prediction row.
double prediction_entropy(const Vec& p);

struct OpenSetScore {
  double known_accuracy = 0.0;    // correct, unrejected known samples
  double unknown_recall = 0.0;    // unknown samples rejected
  double score = 0.0;             // mean of the two
  double threshold = 0.0;         // entropy threshold actually used
};

/// Open-set scoring with entropy-threshold rejection: predictions with
/// entropy >= threshold are treated as "unknown" (label id =
/// known_classes). Default threshold is the median prediction entropy.
OpenSetScore open_set_score(const Mat& preds, const std::vector<int>& labels, int known_classes,
                            std::optional<double> entropy_threshold = std::nullopt);

}  // namespace vildistill
