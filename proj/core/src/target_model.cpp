#include "vildistill/target_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "vildistill/info_losses.hpp"
#include "vildistill/rng.hpp"

namespace vildistill {

void TargetModelConfig::validate() const {
  if (input_dim < 1 || feature_dim < 1 || bottleneck_dim < 1) {
    throw std::invalid_argument("TargetModelConfig: dims must be >= 1");
  }
  if (class_count < 2) throw std::invalid_argument("TargetModelConfig: class_count must be >= 2");
  if (classifier_scale <= 0.0) {
    throw std::invalid_argument("TargetModelConfig: classifier_scale must be > 0");
  }
}

TargetModel::TargetModel(const TargetModelConfig& cfg) : cfg_(cfg) {
  cfg.validate();
  Rng rng(mix_seed(cfg.init_seed, 10));
  fc1_ = nn::Dense(cfg.input_dim, cfg.feature_dim, rng);
  fc2_ = nn::Dense(cfg.feature_dim, cfg.feature_dim, rng);
  bottleneck_ = nn::Dense(cfg.feature_dim, cfg.bottleneck_dim, rng);
  bn_ = nn::BatchNorm1d(cfg.bottleneck_dim);
  classifier_ = nn::WeightNormDense(cfg.bottleneck_dim, cfg.class_count, rng);
  classifier_.g = Vec::Constant(cfg.class_count, cfg.classifier_scale);
  classifier_.train_magnitude = false;
  classifier_.train_bias = false;
}

Mat TargetModel::forward(const Mat& x) {
  if (x.cols() != cfg_.input_dim) throw std::invalid_argument("TargetModel: input dim mismatch");
  const bool cache = training_;
  Mat h = relu1_.forward(fc1_.forward(x, cache), cache);
  h = relu2_.forward(fc2_.forward(h, cache), cache);
  h = bn_.forward(bottleneck_.forward(h, cache), training_, cache);
  h = feature_norm_.forward(h, cache);
  return classifier_.forward(h, cache);
}

Mat TargetModel::predict(const Mat& x) { return softmax_rows(forward(x), 1.0); }

void TargetModel::backward_from_logits(const Mat& grad_logits) {
  Mat g = classifier_.backward(grad_logits);
  g = feature_norm_.backward(g);
  g = bn_.backward(g);
  g = bottleneck_.backward(g);
  g = fc2_.backward(relu2_.backward(g));
  fc1_.backward(relu1_.backward(g));
}

void TargetModel::sgd_step(double lr, double momentum) {
  fc1_.step(lr, momentum);
  fc2_.step(lr, momentum);
  bottleneck_.step(lr, momentum);
  bn_.step(lr, momentum);
  classifier_.step(lr, momentum);
}

void TargetModel::zero_grad() {
  fc1_.zero_grad();
  fc2_.zero_grad();
  bottleneck_.zero_grad();
  bn_.zero_grad();
  classifier_.zero_grad();
}

uint64_t TargetModel::parameter_hash() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  h = fc1_.hash(h);
  h = fc2_.hash(h);
  h = bottleneck_.hash(h);
  h = bn_.hash(h);
  return classifier_.hash(h);
}

void TargetModel::save(const std::filesystem::path& dir, const io::Manifest& extra) const {
  std::filesystem::create_directories(dir);
  io::Manifest m = extra;
  m["kind"] = "target_model";
  m["format_version"] = "1";
  m["input_dim"] = std::to_string(cfg_.input_dim);
  m["feature_dim"] = std::to_string(cfg_.feature_dim);
  m["bottleneck_dim"] = std::to_string(cfg_.bottleneck_dim);
  m["class_count"] = std::to_string(cfg_.class_count);
  {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", cfg_.classifier_scale);
    m["classifier_scale"] = buf;
  }
  m["seed"] = std::to_string(cfg_.init_seed);
  if (!m.count("epoch")) m["epoch"] = "0";
  io::write_manifest(dir / "manifest.txt", m);
  io::write_matrix(dir / "fc1_w.bin", fc1_.W);
  io::write_vector(dir / "fc1_b.bin", fc1_.b);
  io::write_matrix(dir / "fc2_w.bin", fc2_.W);
  io::write_vector(dir / "fc2_b.bin", fc2_.b);
  io::write_matrix(dir / "bottleneck_w.bin", bottleneck_.W);
  io::write_vector(dir / "bottleneck_b.bin", bottleneck_.b);
  io::write_vector(dir / "bn_gamma.bin", bn_.gamma);
  io::write_vector(dir / "bn_beta.bin", bn_.beta);
  io::write_vector(dir / "bn_running_mean.bin", bn_.running_mean);
  io::write_vector(dir / "bn_running_var.bin", bn_.running_var);
  io::write_matrix(dir / "cls_v.bin", classifier_.V);
  io::write_vector(dir / "cls_g.bin", classifier_.g);
  io::write_vector(dir / "cls_b.bin", classifier_.b);
}

TargetModel TargetModel::load(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.txt";
  const auto m = io::read_manifest(manifest_path);
  if (io::manifest_get(m, "kind", manifest_path) != "target_model") {
    throw MissingArtifact(dir.string() + ": not a target-model checkpoint");
  }
  TargetModelConfig cfg;
  cfg.input_dim = static_cast<int>(io::manifest_get_int(m, "input_dim", manifest_path));
  cfg.feature_dim = static_cast<int>(io::manifest_get_int(m, "feature_dim", manifest_path));
  cfg.bottleneck_dim = static_cast<int>(io::manifest_get_int(m, "bottleneck_dim", manifest_path));
  cfg.class_count = static_cast<int>(io::manifest_get_int(m, "class_count", manifest_path));
  cfg.classifier_scale = std::stod(io::manifest_get(m, "classifier_scale", manifest_path));
  cfg.init_seed = static_cast<uint64_t>(io::manifest_get_int(m, "seed", manifest_path));
  TargetModel model(cfg);
  model.fc1_.W = io::read_matrix(dir / "fc1_w.bin", cfg.feature_dim, cfg.input_dim);
  model.fc1_.b = io::read_vector(dir / "fc1_b.bin", cfg.feature_dim);
  model.fc2_.W = io::read_matrix(dir / "fc2_w.bin", cfg.feature_dim, cfg.feature_dim);
  model.fc2_.b = io::read_vector(dir / "fc2_b.bin", cfg.feature_dim);
  model.bottleneck_.W = io::read_matrix(dir / "bottleneck_w.bin", cfg.bottleneck_dim, cfg.feature_dim);
  model.bottleneck_.b = io::read_vector(dir / "bottleneck_b.bin", cfg.bottleneck_dim);
  model.bn_.gamma = io::read_vector(dir / "bn_gamma.bin", cfg.bottleneck_dim);
  model.bn_.beta = io::read_vector(dir / "bn_beta.bin", cfg.bottleneck_dim);
  model.bn_.running_mean = io::read_vector(dir / "bn_running_mean.bin", cfg.bottleneck_dim);
  model.bn_.running_var = io::read_vector(dir / "bn_running_var.bin", cfg.bottleneck_dim);
  model.classifier_.V = io::read_matrix(dir / "cls_v.bin", cfg.class_count, cfg.bottleneck_dim);
  model.classifier_.g = io::read_vector(dir / "cls_g.bin", cfg.class_count);
  model.classifier_.b = io::read_vector(dir / "cls_b.bin", cfg.class_count);
  return model;
}

Vec smooth_labels(int y, int class_count, double sigma) {
  if (y < 0 || y >= class_count) throw std::invalid_argument("smooth_labels: label out of range");
  if (sigma < 0.0 || sigma >= 1.0) {
    throw std::invalid_argument("smooth_labels: sigma must be in [0, 1)");
  }
  Vec v = Vec::Constant(class_count, sigma / static_cast<double>(class_count));
  v[y] += 1.0 - sigma;
  return v;
}

void SourcePretrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("SourcePretrainConfig: epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("SourcePretrainConfig: batch_size must be >= 1");
  if (lr < 0.0) throw std::invalid_argument("SourcePretrainConfig: lr must be >= 0");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0) {
    throw std::invalid_argument("SourcePretrainConfig: label_smoothing must be in [0, 1)");
  }
  if (holdout_fraction < 0.0 || holdout_fraction >= 1.0) {
    throw std::invalid_argument("SourcePretrainConfig: holdout_fraction must be in [0, 1)");
  }
}

PretrainResult pretrain_source(const DomainDataset& source, const TargetModelConfig& arch,
                               const SourcePretrainConfig& cfg) {
  cfg.validate();
  source.validate();
  if (source.input_dim() != arch.input_dim || source.class_count() != arch.class_count) {
    throw std::invalid_argument("pretrain_source: dataset does not match architecture");
  }
  std::vector<int> per_class(static_cast<size_t>(source.class_count()), 0);
  for (const int y : source.labels) ++per_class[static_cast<size_t>(y)];
  for (size_t c = 0; c < per_class.size(); ++c) {
    if (per_class[c] < 2) {
      throw std::invalid_argument("pretrain_source: class " + std::to_string(c) +
                                  " has fewer than 2 samples");
    }
  }

  Rng split_rng(mix_seed(cfg.seed, 20));
  Rng shuffle_rng(mix_seed(cfg.seed, 21));
  const std::vector<int> order = split_rng.permutation(source.size());
  const int holdout = static_cast<int>(std::floor(cfg.holdout_fraction * source.size()));
  const int train_count = source.size() - holdout;
  if (train_count < 1) throw std::invalid_argument("pretrain_source: empty training split");

  std::vector<int> train_idx(order.begin(), order.begin() + train_count);
  std::vector<int> hold_idx(order.begin() + train_count, order.end());

  PretrainResult result{TargetModel(arch), 0.0, {}};
  TargetModel& model = result.model;
  const int classes = arch.class_count;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    model.set_training(true);
    const std::vector<int> perm = shuffle_rng.permutation(train_count);
    double loss_sum = 0.0;
    int batches = 0;
    for (int start = 0; start < train_count; start += cfg.batch_size) {
      const int bsz = std::min(cfg.batch_size, train_count - start);
      Mat x(bsz, arch.input_dim);
      Mat targets(bsz, classes);
      for (int i = 0; i < bsz; ++i) {
        const int idx = train_idx[static_cast<size_t>(perm[static_cast<size_t>(start + i)])];
        x.row(i) = source.inputs.row(idx);
        targets.row(i) =
            smooth_labels(source.labels[static_cast<size_t>(idx)], classes, cfg.label_smoothing)
                .transpose();
      }
      const Mat logits = model.forward(x);
      const Mat preds = softmax_rows(logits, 1.0);
      double batch_loss = 0.0;
      for (int i = 0; i < bsz; ++i) {
        for (int c = 0; c < classes; ++c) {
          batch_loss -= targets(i, c) * std::log(std::max(preds(i, c), kProbFloor));
        }
      }
      batch_loss /= bsz;
      loss_sum += batch_loss;
      ++batches;
      // d(CE)/dlogits = (p - target) / batch
      const Mat grad_logits = (preds - targets) / static_cast<double>(bsz);
      model.zero_grad();
      model.backward_from_logits(grad_logits);
      model.sgd_step(cfg.lr, cfg.momentum);
    }
    result.epoch_losses.push_back(batches > 0 ? loss_sum / batches : 0.0);
  }

  model.set_training(false);
  if (!hold_idx.empty()) {
    Mat x(static_cast<Eigen::Index>(hold_idx.size()), arch.input_dim);
    for (size_t i = 0; i < hold_idx.size(); ++i) {
      x.row(static_cast<Eigen::Index>(i)) = source.inputs.row(hold_idx[i]);
    }
    const Mat preds = model.predict(x);
    int correct = 0;
    for (size_t i = 0; i < hold_idx.size(); ++i) {
      Eigen::Index argmax;
      preds.row(static_cast<Eigen::Index>(i)).maxCoeff(&argmax);
      if (static_cast<int>(argmax) == source.labels[static_cast<size_t>(hold_idx[i])]) ++correct;
    }
    result.holdout_accuracy = static_cast<double>(correct) / static_cast<double>(hold_idx.size());
  }
  return result;
}

}  // namespace vildistill
