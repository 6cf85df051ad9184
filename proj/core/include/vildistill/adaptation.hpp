#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vildistill/common.hpp"
#include "vildistill/data.hpp"
#include "vildistill/info_losses.hpp"
#include "vildistill/prediction_bank.hpp"
#include "vildistill/target_model.hpp"
#include "vildistill/vil_backend.hpp"

namespace vildistill {

struct AdaptationConfig {
  double alpha = 1.0;    // balance-term weight inside L_PC
  double beta = 0.4;     // L_MCE weight inside L_MKA
  double lambda = 10.0;  // fusion-weight exponential rate
  double tau = 0.1;      // MCE temperature
  int top_n = 2;         // most-likely category count N
  int epochs = 15;       // T
  int batch_size = 64;
  double lr_target = 1e-3;
  double lr_prompt = 1e-2;
  double momentum = 0.9;
  uint64_t seed = 0;
  bool symmetrize_joint = true;

  // Ablation switches (effective weights only; the config values above stay
  // at their defaults so the same record can drive every variant).
  bool ablate_mce = false;        // effective beta = 0
  bool ablate_customize = false;  // keep the template prompt all epochs
  bool ablate_balance = false;    // effective alpha = 0 (alignment-only arm)
  bool use_kl_alignment = false;  // KL(p_t || p_v) instead of -I in L_TSC/L_PC

  // Instrumentation.
  bool check_invariants = false;    // per-epoch hash/stamp assertions
  bool record_logit_spaces = false;

  double effective_alpha() const { return ablate_balance ? 0.0 : alpha; }
  double effective_beta() const { return ablate_mce ? 0.0 : beta; }

  void validate(int class_count) const;
};

struct EpochRecord {
  int epoch = 0;
  double tsc_loss_mean = 0.0;
  double mka_loss_mean = 0.0;
  double target_accuracy = 0.0;
  std::optional<double> mmd_to_oracle;
};

/// One line of the epoch log: a flat JSON object with a fixed key order,
/// doubles printed with %.17g so identical runs produce identical bytes.
std::string epoch_record_line(const EpochRecord& rec);
EpochRecord parse_epoch_record_line(const std::string& line);

struct AdaptResult {
  TargetModel model;
  PromptContext prompt;
  PredictionBank bank;
  std::vector<EpochRecord> records;
  std::vector<Mat> target_logit_spaces;  // one per epoch when recorded
  std::vector<Mat> vil_logit_spaces;
};

/// Step-2 objective: L_MKA = L_PC + beta * L_MCE, with L_PC evaluated on
/// softmax(logits_t) against the live ViL predictions. Ablation flags in
/// `cfg` select the effective weights and the alignment divergence.
double mka_objective(const Mat& logits_t, const Mat& preds_v,
                     const std::vector<LikelySet>& likely_sets, const AdaptationConfig& cfg);

struct MkaGradients {
  double value = 0.0;
  Mat d_logits;
};
MkaGradients mka_objective_with_grad(const Mat& logits_t, const Mat& preds_v,
                                     const std::vector<LikelySet>& likely_sets,
                                     const AdaptationConfig& cfg);

/// The alternating two-step training driver. Per epoch: refresh the ViL
/// bank rows with the prompt as customized up to the previous epoch, run M
/// prompt-learning iterations (target frozen), then M target-model
/// iterations under L_MKA with per-sample fusion and most-likely category
/// extraction, updating the target bank rows each iteration.
/// M = ceil(n / batch_size). Labels in `target` are used for per-epoch
/// accuracy reporting only. When `oracle_logits` is provided each record
/// carries the MMD from the epoch's target logit space to it.
AdaptResult adapt(const TargetModel& source_model, const VilBackend& vil,
                  const PromptContext& initial_prompt, const DomainDataset& target,
                  const AdaptationConfig& cfg, const Mat* oracle_logits = nullptr);

}  // namespace vildistill
