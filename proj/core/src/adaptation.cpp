#include "vildistill/adaptation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "vildistill/evaluation.hpp"

namespace vildistill {

void AdaptationConfig::validate(int class_count) const {
  if (alpha <= 0.0 || beta <= 0.0 || lambda <= 0.0 || tau <= 0.0) {
    throw ConfigError("adaptation: alpha, beta, lambda, tau must be > 0");
  }
  if (top_n < 1 || top_n >= class_count) {
    throw ConfigError("adaptation: need 1 <= top_n < class_count");
  }
  if (epochs < 0) throw ConfigError("adaptation: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("adaptation: batch_size must be >= 1");
  if (lr_target < 0.0 || lr_prompt < 0.0) throw ConfigError("adaptation: learning rates must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("adaptation: momentum must be in [0, 1)");
}

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double mean_of(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) /
         static_cast<double>(values.size());
}

}  // namespace

std::string epoch_record_line(const EpochRecord& rec) {
  std::string line = "{\"epoch\":" + std::to_string(rec.epoch);
  line += ",\"tsc_loss_mean\":" + format_double(rec.tsc_loss_mean);
  line += ",\"mka_loss_mean\":" + format_double(rec.mka_loss_mean);
  line += ",\"target_accuracy\":" + format_double(rec.target_accuracy);
  line += ",\"mmd_to_oracle\":";
  line += rec.mmd_to_oracle ? format_double(*rec.mmd_to_oracle) : "null";
  line += "}";
  return line;
}

EpochRecord parse_epoch_record_line(const std::string& line) {
  EpochRecord rec;
  const auto grab = [&line](const char* key) -> std::string {
    const std::string tag = std::string("\"") + key + "\":";
    const auto pos = line.find(tag);
    if (pos == std::string::npos) {
      throw std::invalid_argument("epoch record line missing key " + std::string(key));
    }
    auto start = pos + tag.size();
    auto end = line.find_first_of(",}", start);
    return line.substr(start, end - start);
  };
  rec.epoch = std::stoi(grab("epoch"));
  rec.tsc_loss_mean = std::stod(grab("tsc_loss_mean"));
  rec.mka_loss_mean = std::stod(grab("mka_loss_mean"));
  rec.target_accuracy = std::stod(grab("target_accuracy"));
  const std::string mmd = grab("mmd_to_oracle");
  if (mmd != "null") rec.mmd_to_oracle = std::stod(mmd);
  return rec;
}

double mka_objective(const Mat& logits_t, const Mat& preds_v,
                     const std::vector<LikelySet>& likely_sets, const AdaptationConfig& cfg) {
  const Mat preds_t = softmax_rows(logits_t, 1.0);
  double value;
  if (cfg.use_kl_alignment) {
    value = kl_alignment(preds_t, preds_v) + cfg.effective_alpha() * balance_loss(preds_t);
  } else {
    value = pc_loss(preds_t, preds_v, cfg.effective_alpha(), cfg.symmetrize_joint);
  }
  if (cfg.effective_beta() > 0.0) {
    value += cfg.effective_beta() * mce_loss(logits_t, likely_sets, cfg.tau);
  }
  return value;
}

MkaGradients mka_objective_with_grad(const Mat& logits_t, const Mat& preds_v,
                                     const std::vector<LikelySet>& likely_sets,
                                     const AdaptationConfig& cfg) {
  const Mat preds_t = softmax_rows(logits_t, 1.0);
  MkaGradients out;
  Mat d_preds;
  if (cfg.use_kl_alignment) {
    const KlAlignmentGradients kl = kl_alignment_with_grad(preds_t, preds_v);
    out.value = kl.value;
    d_preds = kl.d_preds_t;
    if (cfg.effective_alpha() > 0.0) {
      out.value += cfg.effective_alpha() * balance_loss(preds_t);
      d_preds += cfg.effective_alpha() * balance_loss_grad(preds_t);
    }
  } else {
    const PcGradients pc =
        pc_loss_with_grad(preds_t, preds_v, cfg.effective_alpha(), cfg.symmetrize_joint);
    out.value = pc.value;
    d_preds = pc.d_preds_t;
  }
  out.d_logits = softmax_rows_backward(preds_t, d_preds, 1.0);
  if (cfg.effective_beta() > 0.0) {
    const MceGradients mce = mce_loss_with_grad(logits_t, likely_sets, cfg.tau);
    out.value += cfg.effective_beta() * mce.value;
    out.d_logits += cfg.effective_beta() * mce.d_logits;
  }
  return out;
}

namespace {

/// TSC objective over the full dataset in batches without touching any
/// state; used to keep the epoch record populated when customization is
/// ablated.
double evaluate_tsc_mean(const VilBackend& vil, const PromptContext& prompt, TargetModel& model,
                         const Mat& inputs, int batch_size, bool symmetrize) {
  const bool was_training = model.training();
  model.set_training(false);
  const int n = static_cast<int>(inputs.rows());
  std::vector<double> losses;
  for (int start = 0; start < n; start += batch_size) {
    const int bsz = std::min(batch_size, n - start);
    const Mat batch = inputs.middleRows(start, bsz);
    const Mat preds_t = model.predict(batch);
    const Mat preds_v = vil_predict(vil, prompt, batch);
    losses.push_back(tsc_loss(preds_t, preds_v, symmetrize));
  }
  model.set_training(was_training);
  return mean_of(losses);
}

}  // namespace

AdaptResult adapt(const TargetModel& source_model, const VilBackend& vil,
                  const PromptContext& initial_prompt, const DomainDataset& target,
                  const AdaptationConfig& cfg, const Mat* oracle_logits) {
  const int class_count = source_model.config().class_count;
  cfg.validate(class_count);
  target.validate();
  const Mat& inputs = target.inputs;
  const int n = static_cast<int>(inputs.rows());
  if (n < 1) throw std::invalid_argument("adapt: empty target dataset");
  const int iters_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;

  TargetModel model = source_model;  // Algorithm line 1: theta_t starts as theta_s
  model.set_training(false);
  PromptContext prompt = initial_prompt;
  const uint64_t vil_hash = vil.parameter_hash();

  PredictionBank bank = PredictionBank::init(model, vil, prompt, inputs);

  Rng step1_rng(mix_seed(cfg.seed, 50));
  Rng step2_rng(mix_seed(cfg.seed, 51));
  Rng omega_rng(mix_seed(cfg.seed, 52));

  // Fixed reference bandwidth keeps the MMD series comparable across epochs.
  double oracle_bandwidth = 0.0;
  if (oracle_logits != nullptr) {
    oracle_bandwidth = median_pairwise_distance(*oracle_logits);
    if (oracle_bandwidth <= 0.0) oracle_bandwidth = 1.0;
  }

  std::vector<EpochRecord> records;
  std::vector<Mat> target_spaces;
  std::vector<Mat> vil_spaces;

  // A zero target learning rate cannot change the model, so Step 2 keeps
  // eval mode then; this also keeps batch-norm running statistics frozen
  // and makes zero-lr runs exact no-ops.
  const bool step2_training = cfg.lr_target > 0.0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    // Algorithm line 3: the ViL rows are refreshed with the prompt as it
    // stood at the end of the previous epoch.
    bank.update_vil_all(vil_predict(vil, prompt, inputs));
    const int iteration_stamp_before = bank.iteration_stamp();

    // ---- Step 1: task-specific customization of the prompt ----
    const uint64_t model_hash_before = cfg.check_invariants ? model.parameter_hash() : 0;
    double tsc_mean;
    if (!cfg.ablate_customize) {
      CustomizeResult res = customize(vil, prompt, model, inputs, iters_per_epoch, cfg.lr_prompt,
                                      cfg.momentum, cfg.batch_size, step1_rng,
                                      cfg.symmetrize_joint);
      prompt = std::move(res.prompt);
      tsc_mean = mean_of(res.iteration_losses);
    } else {
      tsc_mean = evaluate_tsc_mean(vil, prompt, model, inputs, cfg.batch_size,
                                   cfg.symmetrize_joint);
    }
    if (cfg.check_invariants && model.parameter_hash() != model_hash_before) {
      throw std::logic_error("adapt: target model changed during Step 1");
    }

    // ---- Step 2: memory-aware knowledge adaptation of the target ----
    const uint64_t prompt_hash_before = cfg.check_invariants ? prompt.hash() : 0;
    model.set_training(step2_training);
    const std::vector<int> order = step2_rng.permutation(n);
    std::vector<double> mka_losses;
    int cursor = 0;
    for (int it = 0; it < iters_per_epoch; ++it) {
      const int bsz = std::min(cfg.batch_size, n - cursor);
      std::vector<int> indices(order.begin() + cursor, order.begin() + cursor + bsz);
      cursor += bsz;
      Mat batch(bsz, inputs.cols());
      for (int i = 0; i < bsz; ++i) batch.row(i) = inputs.row(indices[static_cast<size_t>(i)]);

      const VilEval vil_eval = vil.forward(prompt, batch);
      const Mat logits = model.forward(batch);
      const Mat preds_t = softmax_rows(logits, 1.0);

      std::vector<LikelySet> likely_sets;
      likely_sets.reserve(indices.size());
      for (const int sample : indices) {
        const double omega = sample_weight(cfg.lambda, omega_rng);
        likely_sets.push_back(most_likely(bank.fuse(sample, omega), cfg.top_n));
      }

      const MkaGradients grads = mka_objective_with_grad(logits, vil_eval.preds, likely_sets, cfg);
      if (!std::isfinite(grads.value)) {
        throw NumericalError("adapt: non-finite L_MKA at epoch " + std::to_string(epoch) +
                             " iteration " + std::to_string(it + 1));
      }
      mka_losses.push_back(grads.value);

      if (step2_training) {
        model.zero_grad();
        model.backward_from_logits(grads.d_logits);
        model.sgd_step(cfg.lr_target, cfg.momentum);
      }
      bank.update_target(indices, preds_t);
    }
    model.set_training(false);

    if (cfg.check_invariants) {
      if (prompt.hash() != prompt_hash_before) {
        throw std::logic_error("adapt: prompt changed during Step 2");
      }
      if (vil.parameter_hash() != vil_hash) {
        throw std::logic_error("adapt: frozen ViL encoders changed");
      }
      if (bank.iteration_stamp() != iteration_stamp_before + iters_per_epoch) {
        throw std::logic_error("adapt: target bank update count deviates from M");
      }
      if (bank.epoch_stamp() != epoch) {
        throw std::logic_error("adapt: ViL bank refresh count deviates from one per epoch");
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.tsc_loss_mean = tsc_mean;
    rec.mka_loss_mean = mean_of(mka_losses);
    rec.target_accuracy = accuracy(model.predict(inputs), target.labels);

    const bool want_spaces = cfg.record_logit_spaces || oracle_logits != nullptr;
    if (want_spaces) {
      Mat target_logits = model.forward(inputs);
      Mat vil_logits = vil.forward(prompt, inputs).logits;
      if (oracle_logits != nullptr) {
        rec.mmd_to_oracle = mmd(target_logits, *oracle_logits, oracle_bandwidth);
      }
      if (cfg.record_logit_spaces) {
        target_spaces.push_back(std::move(target_logits));
        vil_spaces.push_back(std::move(vil_logits));
      }
    }
    records.push_back(rec);
  }

  return AdaptResult{std::move(model),   std::move(prompt),        std::move(bank),
                     std::move(records), std::move(target_spaces), std::move(vil_spaces)};
}

}  // namespace vildistill
