#pragma once

#include <filesystem>
#include <vector>

#include "vildistill/common.hpp"
#include "vildistill/rng.hpp"
#include "vildistill/target_model.hpp"
#include "vildistill/vil_backend.hpp"

namespace vildistill {

/// Per-sample history of target-model and ViL predictions over the whole
/// target domain. Target rows change iteratively (just-processed batch),
/// ViL rows collectively at epoch boundaries; the stamps record both
/// cadences.
class PredictionBank {
 public:
  PredictionBank(Mat target_preds, Mat vil_preds);

  /// Fills both tables with a full eval-mode pass of each model.
  static PredictionBank init(TargetModel& target, const VilBackend& vil,
                             const PromptContext& prompt, const Mat& inputs);

  int size() const { return static_cast<int>(target_preds_.rows()); }
  int class_count() const { return static_cast<int>(target_preds_.cols()); }
  int epoch_stamp() const { return epoch_stamp_; }
  int iteration_stamp() const { return iteration_stamp_; }

  const Mat& target_preds() const { return target_preds_; }
  const Mat& vil_preds() const { return vil_preds_; }

  /// Replaces exactly the given rows of the target table and bumps the
  /// iteration stamp. Indices must be unique and in range.
  void update_target(const std::vector<int>& indices, const Mat& preds);

  /// Replaces the whole ViL table and bumps the epoch stamp.
  void update_vil_all(const Mat& preds_all);

  /// omega * p_i + (1 - omega) * p'_i
  Vec fuse(int index, double omega) const;

  void save(const std::filesystem::path& dir) const;
  static PredictionBank load(const std::filesystem::path& dir);

 private:
  Mat target_preds_;
  Mat vil_preds_;
  int epoch_stamp_ = 0;
  int iteration_stamp_ = 0;
};

/// Fusion weight: min(Exp(lambda) draw, 1).
double sample_weight(double lambda, Rng& rng);

/// Indices of the N largest entries, ties broken toward the lower index;
/// returned in ascending index order.
std::vector<int> most_likely(const Vec& fused, int top_n);

}  // namespace vildistill
