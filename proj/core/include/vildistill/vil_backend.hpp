#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "vildistill/common.hpp"
#include "vildistill/data.hpp"
#include "vildistill/rng.hpp"
#include "vildistill/target_model.hpp"

namespace vildistill {

/// Learnable prompt state. Only context_tokens receive gradient updates;
/// class_tokens are frozen prototype embeddings owned by the backend.
struct PromptContext {
  Mat context_tokens;  // L x D
  Mat class_tokens;    // C x D

  int context_length() const { return static_cast<int>(context_tokens.rows()); }
  int embed_dim() const { return static_cast<int>(context_tokens.cols()); }
  int class_count() const { return static_cast<int>(class_tokens.rows()); }
  uint64_t hash() const;
};

void save_prompt(const PromptContext& prompt, const std::filesystem::path& dir);
PromptContext load_prompt(const std::filesystem::path& dir);

/// One forward evaluation of the ViL branch with an opaque cache for the
/// context backward pass.
struct VilEval {
  Mat logits;  // n x C
  Mat preds;   // n x C, softmax rows
  std::shared_ptr<const void> cache;
};

/// The frozen vision-language branch. Any implementation exposing the
/// prediction forward plus the prompt-context gradient qualifies as a
/// backend; encoders never change after construction.
class VilBackend {
 public:
  virtual ~VilBackend() = default;
  virtual int class_count() const = 0;
  virtual int embed_dim() const = 0;
  virtual int input_dim() const = 0;
  virtual const Mat& class_tokens() const = 0;
  virtual VilEval forward(const PromptContext& prompt, const Mat& batch) const = 0;
  /// dL/d context_tokens (L x D) given dL/d preds from `eval`'s forward.
  virtual Mat backward_context(const PromptContext& prompt, const VilEval& eval,
                               const Mat& grad_preds) const = 0;
  /// Hash over every frozen encoder parameter.
  virtual uint64_t parameter_hash() const = 0;
};

struct ToyVilConfig {
  int context_length = 4;     // mirrors the four-word init template
  double encoder_noise = 0.05;
  double token_noise = 0.4;
  double ctx_gain = 1.0;
  double cls_mix_noise = 0.05;
  double logit_scale = 12.0;
  uint64_t seed = 0;

  void validate() const;
};

/// Two frozen encoders over the synthetic benchmark's latent space. The
/// image encoder is a noisy pseudo-inverse of the target-domain map (the
/// stand-in for broad pretraining), the text encoder a frozen random
/// affine map over (context tokens ‖ class token), followed by L2
/// normalization and cosine scoring on both sides.
class ToyViLModel final : public VilBackend {
 public:
  ToyViLModel(const Mat& prototypes, const Mat& target_map, const ToyVilConfig& cfg);
  /// Direct construction from frozen pieces (tests).
  ToyViLModel(Mat image_map, Mat text_map, Vec text_bias, Mat class_tokens, double logit_scale);

  int class_count() const override { return static_cast<int>(class_tokens_.rows()); }
  int embed_dim() const override { return static_cast<int>(class_tokens_.cols()); }
  int input_dim() const override { return static_cast<int>(image_map_.cols()); }
  const Mat& class_tokens() const override { return class_tokens_; }

  VilEval forward(const PromptContext& prompt, const Mat& batch) const override;
  Mat backward_context(const PromptContext& prompt, const VilEval& eval,
                       const Mat& grad_preds) const override;
  uint64_t parameter_hash() const override;

 private:
  Mat image_map_;     // D x d_in
  Mat text_map_;      // D x ((L+1) * D)
  Vec text_bias_;     // D
  Mat class_tokens_;  // C x D
  double logit_scale_ = 12.0;
};

/// Seeded prompt initialization: context ~ N(0, 0.02^2), class tokens
/// copied from the backend's frozen prototypes.
PromptContext init_prompt(const VilBackend& backend, int context_length, uint64_t seed);

/// Class probabilities for a batch under the given prompt.
Mat vil_predict(const VilBackend& backend, const PromptContext& prompt, const Mat& batch);

struct CustomizeResult {
  PromptContext prompt;
  std::vector<double> iteration_losses;  // TSC objective per iteration
};

/// Step 1 of the adaptation loop: `iters` SGD-with-momentum steps on the
/// context tokens minimizing L_TSC against the frozen target model's
/// predictions. The target model is forced into eval mode for the
/// duration; neither it nor the backend encoders change.
CustomizeResult customize(const VilBackend& vil, const PromptContext& prompt, TargetModel& target,
                          const Mat& inputs, int iters, double lr, double momentum, int batch_size,
                          Rng& shuffle_rng, bool symmetrize_joint = true);

/// Backend registry keyed by the config-file name. "toy" is built in;
/// "clip" is a reserved slot for a real CLIP adapter and reports itself as
/// unimplemented; other names are configuration errors.
std::unique_ptr<VilBackend> make_backend(const std::string& name, const ShiftPair& world,
                                         const ToyVilConfig& cfg);

}  // namespace vildistill
