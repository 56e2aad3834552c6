#pragma once

#include <string>
#include <vector>

#include "cgn/autodiff.hpp"
#include "cgn/image.hpp"
#include "cgn/rng.hpp"
#include "cgn/serialize.hpp"

namespace cgn::models {

struct ModelConfig {
  enum class Backbone { kSmallConv, kAlexNetLike, kResNetLike };

  Backbone backbone = Backbone::kSmallConv;
  int feature_channels = 64;
  /// Output resolution of the small-conv backbone (7 or 14); the
  /// alexnet-like and resnet-like backbones always emit 14x14.
  int feature_hw = 14;
  int generator_blocks = 9;
  double alpha = 0.5;  // interpolation weight between H_T and AdaIN(H_T, H_R)
  int discriminator_depth = 2;
  bool patch_discriminator = false;

  void validate() const;
  std::string backbone_name() const;
  static Backbone backbone_from_name(const std::string& name);
};

/// Batched image -> (N,1,224,224) tensor scaled to [0,1].
Tensor images_to_tensor(const std::vector<const ImageU8*>& images);
Tensor image_to_tensor(const ImageU8& image);

/// Adaptive instance normalization: re-statistics `content` per channel
/// to the spatial mean/std of `style`. Population standard deviation
/// with a 1e-5 floor on constant channels.
ad::Var adain(const ad::Var& content, const ad::Var& style);

/// Weight-shared convolutional feature extractor. The same instance (and
/// therefore literally the same parameters) processes target and
/// mirrored reference images; features come from the last convolution
/// layer, post-activation.
class FeatureExtractor {
public:
  FeatureExtractor(const ModelConfig& cfg, Rng& rng);

  /// (N,1,224,224) -> (N, feature_channels, hw, hw).
  ad::Var forward(const ad::Var& images) const;
  ad::Var forward(const Tensor& images) const { return forward(ad::constant(images)); }

  ad::ParamSet& params() { return params_; }
  const ad::ParamSet& params() const { return params_; }
  int out_channels() const { return cfg_.feature_channels; }
  int out_hw() const;

private:
  struct Layer {
    ad::Var w, b;
    int stride = 1, pad = 1;
    bool residual_skip = false;  // adds the layer input back (resnet-like)
  };
  ModelConfig cfg_;
  ad::ParamSet params_;
  std::vector<Layer> layers_;
};

/// Residual-block generator producing counterfactual features from the
/// interpolated AdaIN input.
class CounterfactualGenerator {
public:
  CounterfactualGenerator(const ModelConfig& cfg, Rng& rng);

  /// G((1-alpha) * h_t + alpha * AdaIN(h_t, h_r)).
  ad::Var generate(const ad::Var& h_t, const ad::Var& h_r, double alpha) const;
  /// Runs the residual blocks on an arbitrary input of feature shape.
  ad::Var forward(const ad::Var& mixed) const;

  ad::ParamSet& params() { return params_; }
  const ad::ParamSet& params() const { return params_; }

private:
  struct Block {
    ad::Var w1, b1, w2, b2;
  };
  ModelConfig cfg_;
  ad::ParamSet params_;
  std::vector<Block> blocks_;
};

/// Scalar probability that a feature map is a real reference map.
class Discriminator {
public:
  Discriminator(const ModelConfig& cfg, Rng& rng);

  /// (N,C,h,w) -> (N) probabilities in (0,1).
  ad::Var forward(const ad::Var& features) const;

  ad::ParamSet& params() { return params_; }
  const ad::ParamSet& params() const { return params_; }

private:
  struct Layer {
    ad::Var w, b;
    int stride = 1, pad = 1;
  };
  ModelConfig cfg_;
  ad::ParamSet params_;
  std::vector<Layer> layers_;
  ad::Var head_w_, head_b_;  // linear head (global mode)
  ad::Var patch_w_, patch_b_;  // 1x1 conv head (patch mode)
};

struct ClassifierOut {
  ad::Var probs;           // (N,2) class probabilities
  ad::Var prob_malignant;  // (N)
  ad::Var fusion;          // (N, C, h, w) FusionLayer output, CAM basis
};

/// Fusion classifier: concat(residual, target features) -> one 3x3
/// convolution block -> global average pooling -> 2-class linear head.
class FusionClassifier {
public:
  FusionClassifier(const ModelConfig& cfg, Rng& rng);

  ClassifierOut classify(const ad::Var& residual, const ad::Var& h_t) const;

  /// Class activation map: head-weighted channel sum of the fusion
  /// output for one sample, unnormalized. fusion_value is (N,C,h,w).
  Tensor cam(const Tensor& fusion_value, int sample, int class_idx) const;

  ad::ParamSet& params() { return params_; }
  const ad::ParamSet& params() const { return params_; }

private:
  ModelConfig cfg_;
  ad::ParamSet params_;
  ad::Var fusion_w_, fusion_b_;
  ad::Var head_w_, head_b_;
};

/// The four networks of one run, sharing a ModelConfig.
struct ModelBundle {
  ModelConfig config;
  FeatureExtractor extractor;
  CounterfactualGenerator generator;
  Discriminator discriminator;
  FusionClassifier classifier;

  ModelBundle(const ModelConfig& cfg, Rng& rng);

  /// Checkpoint archive keyed by module name.
  TensorArchive to_archive() const;
  void load_archive(const TensorArchive& archive);
  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);

  std::vector<ad::Var> generator_side_params() const;  // extractor+generator+classifier
  std::vector<ad::Var> discriminator_params() const;
};

}  // namespace cgn::models
