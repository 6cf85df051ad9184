#include "vildistill/vil_backend.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "vildistill/info_losses.hpp"
#include "vildistill/io.hpp"

namespace vildistill {

uint64_t PromptContext::hash() const {
  uint64_t h = nn::hash_doubles(context_tokens.data(),
                                static_cast<size_t>(context_tokens.size()));
  return nn::hash_doubles(class_tokens.data(), static_cast<size_t>(class_tokens.size()), h);
}

void save_prompt(const PromptContext& prompt, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  io::Manifest m;
  m["kind"] = "prompt";
  m["format_version"] = "1";
  m["context_length"] = std::to_string(prompt.context_length());
  m["embed_dim"] = std::to_string(prompt.embed_dim());
  m["class_count"] = std::to_string(prompt.class_count());
  io::write_manifest(dir / "manifest.txt", m);
  io::write_matrix(dir / "context_tokens.bin", prompt.context_tokens);
  io::write_matrix(dir / "class_tokens.bin", prompt.class_tokens);
}

PromptContext load_prompt(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.txt";
  const auto m = io::read_manifest(manifest_path);
  if (io::manifest_get(m, "kind", manifest_path) != "prompt") {
    throw MissingArtifact(dir.string() + ": not a prompt checkpoint");
  }
  const auto length = io::manifest_get_int(m, "context_length", manifest_path);
  const auto dim = io::manifest_get_int(m, "embed_dim", manifest_path);
  const auto classes = io::manifest_get_int(m, "class_count", manifest_path);
  PromptContext prompt;
  prompt.context_tokens = io::read_matrix(dir / "context_tokens.bin", length, dim);
  prompt.class_tokens = io::read_matrix(dir / "class_tokens.bin", classes, dim);
  return prompt;
}

void ToyVilConfig::validate() const {
  if (context_length < 1) throw std::invalid_argument("ToyVilConfig: context_length must be >= 1");
  if (logit_scale <= 0.0) throw std::invalid_argument("ToyVilConfig: logit_scale must be > 0");
  if (encoder_noise < 0.0 || token_noise < 0.0 || cls_mix_noise < 0.0) {
    throw std::invalid_argument("ToyVilConfig: noise scales must be >= 0");
  }
  if (ctx_gain <= 0.0) throw std::invalid_argument("ToyVilConfig: ctx_gain must be > 0");
}

namespace {

Mat gaussian_mat(int rows, int cols, double scale, Rng& rng) {
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = scale * rng.gaussian();
  }
  return m;
}

struct ToyVilCache {
  Mat image_embeds;   // n x D, normalized
  Mat text_raw;       // C x D, pre-normalization
  Vec text_norms;     // C
  Mat text_embeds;    // C x D, normalized
};

}  // namespace

ToyViLModel::ToyViLModel(const Mat& prototypes, const Mat& target_map, const ToyVilConfig& cfg) {
  cfg.validate();
  if (prototypes.cols() != target_map.cols()) {
    throw std::invalid_argument("ToyViLModel: prototype/map latent dims differ");
  }
  const auto embed = static_cast<int>(prototypes.cols());
  const auto d_in = static_cast<int>(target_map.rows());
  Rng rng(mix_seed(cfg.seed, 30));

  // The encoder approximately inverts the target-domain map; noise keeps
  // it generic rather than oracle-exact.
  Eigen::JacobiSVD<Mat> svd(target_map, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Vec inv_singular = svd.singularValues();
  for (Eigen::Index i = 0; i < inv_singular.size(); ++i) {
    inv_singular[i] = inv_singular[i] > 1e-10 ? 1.0 / inv_singular[i] : 0.0;
  }
  const Mat pinv = svd.matrixV() * inv_singular.asDiagonal() * svd.matrixU().transpose();
  image_map_ = pinv + gaussian_mat(embed, d_in, cfg.encoder_noise / std::sqrt(d_in), rng);

  class_tokens_ = prototypes + gaussian_mat(static_cast<int>(prototypes.rows()), embed,
                                            cfg.token_noise, rng);

  const int ctx_width = cfg.context_length * embed;
  text_map_.resize(embed, ctx_width + embed);
  text_map_.leftCols(ctx_width) =
      gaussian_mat(embed, ctx_width, cfg.ctx_gain / std::sqrt(static_cast<double>(ctx_width)), rng);
  text_map_.rightCols(embed) =
      Mat::Identity(embed, embed) + gaussian_mat(embed, embed, cfg.cls_mix_noise, rng);
  text_bias_ = Vec::Zero(embed);
  logit_scale_ = cfg.logit_scale;
}

ToyViLModel::ToyViLModel(Mat image_map, Mat text_map, Vec text_bias, Mat class_tokens,
                         double logit_scale)
    : image_map_(std::move(image_map)),
      text_map_(std::move(text_map)),
      text_bias_(std::move(text_bias)),
      class_tokens_(std::move(class_tokens)),
      logit_scale_(logit_scale) {
  if (logit_scale_ <= 0.0) throw std::invalid_argument("ToyViLModel: logit_scale must be > 0");
}

VilEval ToyViLModel::forward(const PromptContext& prompt, const Mat& batch) const {
  if (batch.cols() != image_map_.cols()) {
    throw std::invalid_argument("ToyViLModel: batch input dim mismatch");
  }
  const int embed = embed_dim();
  const int length = prompt.context_length();
  if (prompt.embed_dim() != embed || prompt.class_count() != class_count()) {
    throw std::invalid_argument("ToyViLModel: prompt shape mismatch");
  }
  if (length * embed + embed != text_map_.cols()) {
    throw std::invalid_argument("ToyViLModel: prompt length does not match text encoder");
  }

  auto cache = std::make_shared<ToyVilCache>();

  Mat img = batch * image_map_.transpose();
  for (Eigen::Index b = 0; b < img.rows(); ++b) {
    const double norm = std::max(img.row(b).norm(), 1e-12);
    img.row(b) /= norm;
  }
  cache->image_embeds = img;

  // Token sequence (context ‖ class token) flattened token-major.
  Vec ctx_part(length * embed);
  for (int l = 0; l < length; ++l) {
    ctx_part.segment(l * embed, embed) = prompt.context_tokens.row(l).transpose();
  }
  const Vec ctx_contrib = text_map_.leftCols(length * embed) * ctx_part + text_bias_;

  cache->text_raw.resize(class_count(), embed);
  cache->text_norms.resize(class_count());
  cache->text_embeds.resize(class_count(), embed);
  for (int c = 0; c < class_count(); ++c) {
    const Vec raw =
        ctx_contrib + text_map_.rightCols(embed) * prompt.class_tokens.row(c).transpose();
    const double norm = std::max(raw.norm(), 1e-12);
    cache->text_raw.row(c) = raw.transpose();
    cache->text_norms[c] = norm;
    cache->text_embeds.row(c) = (raw / norm).transpose();
  }

  VilEval eval;
  eval.logits = logit_scale_ * (cache->image_embeds * cache->text_embeds.transpose());
  eval.preds = softmax_rows(eval.logits, 1.0);
  eval.cache = std::move(cache);
  return eval;
}

Mat ToyViLModel::backward_context(const PromptContext& prompt, const VilEval& eval,
                                  const Mat& grad_preds) const {
  const auto* cache = static_cast<const ToyVilCache*>(eval.cache.get());
  if (cache == nullptr) throw std::invalid_argument("backward_context: eval carries no cache");
  const int embed = embed_dim();
  const int length = prompt.context_length();

  const Mat grad_logits = softmax_rows_backward(eval.preds, grad_preds, 1.0);

  // logits[b,c] = s * z_b . g_c with g_c = t_c/||t_c||; the context enters
  // every class embedding through the same affine slice.
  Vec grad_ctx_part = Vec::Zero(length * embed);
  for (int c = 0; c < class_count(); ++c) {
    const Vec d_gc =
        logit_scale_ * (cache->image_embeds.transpose() * grad_logits.col(c));
    const Vec unit = cache->text_embeds.row(c).transpose();
    const Vec d_tc = (d_gc - d_gc.dot(unit) * unit) / cache->text_norms[c];
    grad_ctx_part += text_map_.leftCols(length * embed).transpose() * d_tc;
  }

  Mat grad_context(length, embed);
  for (int l = 0; l < length; ++l) {
    grad_context.row(l) = grad_ctx_part.segment(l * embed, embed).transpose();
  }
  return grad_context;
}

uint64_t ToyViLModel::parameter_hash() const {
  uint64_t h = nn::hash_doubles(image_map_.data(), static_cast<size_t>(image_map_.size()));
  h = nn::hash_doubles(text_map_.data(), static_cast<size_t>(text_map_.size()), h);
  h = nn::hash_doubles(text_bias_.data(), static_cast<size_t>(text_bias_.size()), h);
  h = nn::hash_doubles(class_tokens_.data(), static_cast<size_t>(class_tokens_.size()), h);
  return nn::hash_doubles(&logit_scale_, 1, h);
}

PromptContext init_prompt(const VilBackend& backend, int context_length, uint64_t seed) {
  if (context_length < 1) throw std::invalid_argument("init_prompt: context_length must be >= 1");
  Rng rng(mix_seed(seed, 40));
  PromptContext prompt;
  prompt.context_tokens = gaussian_mat(context_length, backend.embed_dim(), 0.02, rng);
  prompt.class_tokens = backend.class_tokens();
  return prompt;
}

Mat vil_predict(const VilBackend& backend, const PromptContext& prompt, const Mat& batch) {
  return backend.forward(prompt, batch).preds;
}

CustomizeResult customize(const VilBackend& vil, const PromptContext& prompt, TargetModel& target,
                          const Mat& inputs, int iters, double lr, double momentum, int batch_size,
                          Rng& shuffle_rng, bool symmetrize_joint) {
  if (iters < 1) throw std::invalid_argument("customize: iters must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("customize: batch_size must be >= 1");
  const int n = static_cast<int>(inputs.rows());
  if (n < 1) throw std::invalid_argument("customize: empty data");

  const bool was_training = target.training();
  target.set_training(false);

  CustomizeResult result;
  result.prompt = prompt;
  Mat velocity = Mat::Zero(prompt.context_tokens.rows(), prompt.context_tokens.cols());

  std::vector<int> order;
  int cursor = 0;
  for (int it = 0; it < iters; ++it) {
    if (cursor == 0) order = shuffle_rng.permutation(n);
    const int bsz = std::min(batch_size, n - cursor);
    Mat batch(bsz, inputs.cols());
    for (int i = 0; i < bsz; ++i) {
      batch.row(i) = inputs.row(order[static_cast<size_t>(cursor + i)]);
    }
    cursor += bsz;
    if (cursor >= n) cursor = 0;

    const Mat preds_t = target.predict(batch);
    const VilEval eval = vil.forward(result.prompt, batch);
    const TscGradients tsc = tsc_loss_with_grad(preds_t, eval.preds, symmetrize_joint);
    result.iteration_losses.push_back(tsc.value);

    const Mat grad_context = vil.backward_context(result.prompt, eval, tsc.d_preds_v);
    nn::sgd_update(result.prompt.context_tokens, grad_context, velocity, lr, momentum);
  }

  target.set_training(was_training);
  return result;
}

std::unique_ptr<VilBackend> make_backend(const std::string& name, const ShiftPair& world,
                                         const ToyVilConfig& cfg) {
  if (name == "toy") {
    return std::make_unique<ToyViLModel>(world.prototypes, world.target_map, cfg);
  }
  if (name == "clip") {
    throw ConfigError("vil backend 'clip' is a reserved adapter slot and is not implemented");
  }
  throw ConfigError("unknown vil backend '" + name + "' (available: toy)");
}

}  // namespace vildistill
