#include "cgn/models.hpp"

#include <cmath>
#include <stdexcept>

namespace cgn::models {

using ad::Var;

void ModelConfig::validate() const {
  if (feature_channels < 2) throw std::invalid_argument("feature_channels must be >= 2");
  if (generator_blocks < 1) throw std::invalid_argument("generator_blocks must be >= 1");
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("alpha must be in [0,1]");
  if (discriminator_depth < 1) throw std::invalid_argument("discriminator_depth must be >= 1");
  if (backbone == Backbone::kSmallConv) {
    if (feature_hw != 7 && feature_hw != 14)
      throw std::invalid_argument("small-conv feature_hw must be 7 or 14");
  } else if (feature_hw != 14) {
    throw std::invalid_argument("feature_hw is fixed at 14 for this backbone");
  }
}

std::string ModelConfig::backbone_name() const {
  switch (backbone) {
    case Backbone::kSmallConv: return "small-conv";
    case Backbone::kAlexNetLike: return "alexnet-like";
    case Backbone::kResNetLike: return "resnet-like";
  }
  return "small-conv";
}

ModelConfig::Backbone ModelConfig::backbone_from_name(const std::string& name) {
  if (name == "small-conv") return Backbone::kSmallConv;
  if (name == "alexnet-like") return Backbone::kAlexNetLike;
  if (name == "resnet-like") return Backbone::kResNetLike;
  throw std::invalid_argument("unknown backbone: " + name);
}

Tensor images_to_tensor(const std::vector<const ImageU8*>& images) {
  if (images.empty()) throw std::invalid_argument("images_to_tensor: empty batch");
  const int rows = images[0]->rows, cols = images[0]->cols;
  Tensor out({static_cast<int>(images.size()), 1, rows, cols});
  std::int64_t k = 0;
  for (const ImageU8* img : images) {
    if (img->rows != rows || img->cols != cols)
      throw std::invalid_argument("images_to_tensor: inconsistent image sizes");
    for (std::uint8_t v : img->px) out[k++] = v / 255.0;
  }
  return out;
}

Tensor image_to_tensor(const ImageU8& image) { return images_to_tensor({&image}); }

namespace {

Tensor he_init(Rng& rng, std::vector<int> shape, int fan_in) {
  Tensor t(std::move(shape));
  const double std = std::sqrt(2.0 / fan_in);
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, std);
  return t;
}

Tensor small_init(Rng& rng, std::vector<int> shape, double std) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, std);
  return t;
}

}  // namespace

Var adain(const Var& content, const Var& style) {
  if (!content->value.same_shape(style->value))
    throw std::invalid_argument("adain: content/style shape mismatch");
  const int h = content->value.dim(2), w = content->value.dim(3);
  const Var mu_c = ad::channel_mean(content);
  const Var centered = ad::sub(content, ad::broadcast_spatial(mu_c, h, w));
  const Var sigma_c = ad::sqrt_floor(ad::channel_mean(ad::mul(centered, centered)), 1e-5);
  const Var mu_s = ad::channel_mean(style);
  const Var centered_s = ad::sub(style, ad::broadcast_spatial(mu_s, h, w));
  const Var sigma_s = ad::sqrt_floor(ad::channel_mean(ad::mul(centered_s, centered_s)), 1e-5);
  const Var ratio = ad::divide(sigma_s, sigma_c);
  return ad::add(ad::mul(centered, ad::broadcast_spatial(ratio, h, w)),
                 ad::broadcast_spatial(mu_s, h, w));
}

// --- FeatureExtractor -------------------------------------------------------

FeatureExtractor::FeatureExtractor(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const int f = cfg_.feature_channels;
  const auto width = [f](int steps_from_end) {
    return std::max(4, f >> steps_from_end);
  };
  const auto add_conv = [&](int idx, int cin, int cout, int k, int stride, int pad,
                            bool skip = false) {
    Layer l;
    l.w = params_.add("conv" + std::to_string(idx) + ".w",
                      he_init(rng, {cout, cin, k, k}, cin * k * k));
    l.b = params_.add("conv" + std::to_string(idx) + ".b", Tensor({cout}));
    l.stride = stride;
    l.pad = pad;
    l.residual_skip = skip;
    layers_.push_back(l);
  };

  switch (cfg_.backbone) {
    case ModelConfig::Backbone::kSmallConv: {
      // 2x2 average-pool stem (224 -> 112), then stride-2 3x3 blocks down
      // to the configured resolution with a geometric channel ramp.
      const int n_layers = cfg_.feature_hw == 14 ? 3 : 4;
      int cin = 1;
      for (int i = 0; i < n_layers; ++i) {
        const int cout = i + 1 == n_layers ? f : width(n_layers - 1 - i);
        add_conv(i, cin, cout, 3, 2, 1);
        cin = cout;
      }
      break;
    }
    case ModelConfig::Backbone::kAlexNetLike: {
      // Five convolutions mirroring the classic stage layout at reduced
      // width: 7x7/4, 5x5/2, then three 3x3.
      add_conv(0, 1, width(2), 7, 4, 3);
      add_conv(1, width(2), width(1), 5, 2, 2);
      add_conv(2, width(1), f, 3, 2, 1);
      add_conv(3, f, f, 3, 1, 1);
      add_conv(4, f, f, 3, 1, 1);
      break;
    }
    case ModelConfig::Backbone::kResNetLike: {
      add_conv(0, 1, width(3), 3, 2, 1);            // 224 -> 112
      add_conv(1, width(3), width(2), 3, 2, 1);     // -> 56
      add_conv(2, width(2), width(2), 3, 1, 1, true);
      add_conv(3, width(2), width(1), 3, 2, 1);     // -> 28
      add_conv(4, width(1), width(1), 3, 1, 1, true);
      add_conv(5, width(1), f, 3, 2, 1);            // -> 14
      add_conv(6, f, f, 3, 1, 1, true);
      break;
    }
  }
}

int FeatureExtractor::out_hw() const {
  return cfg_.backbone == ModelConfig::Backbone::kSmallConv ? cfg_.feature_hw : 14;
}

Var FeatureExtractor::forward(const Var& images) const {
  if (images->value.rank() != 4 || images->value.dim(1) != 1)
    throw std::invalid_argument("extractor expects (N,1,H,W) input, got " +
                                images->value.shape_str());
  Var x = images;
  if (cfg_.backbone == ModelConfig::Backbone::kSmallConv) x = ad::avg_pool2(x);
  for (const Layer& l : layers_) {
    Var y = ad::conv2d(x, l.w, l.b, l.stride, l.pad);
    y = ad::relu(y);
    x = l.residual_skip ? ad::add(y, x) : y;
  }
  return x;
}

// --- CounterfactualGenerator ------------------------------------------------

CounterfactualGenerator::CounterfactualGenerator(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const int f = cfg_.feature_channels;
  for (int i = 0; i < cfg_.generator_blocks; ++i) {
    Block blk;
    const std::string base = "block" + std::to_string(i);
    blk.w1 = params_.add(base + ".w1", he_init(rng, {f, f, 3, 3}, f * 9));
    blk.b1 = params_.add(base + ".b1", Tensor({f}));
    // Zero-init second convolution: every block starts as the identity,
    // so an untrained generator passes its input through unchanged.
    blk.w2 = params_.add(base + ".w2", Tensor({f, f, 3, 3}));
    blk.b2 = params_.add(base + ".b2", Tensor({f}));
    blocks_.push_back(blk);
  }
}

Var CounterfactualGenerator::forward(const Var& mixed) const {
  Var x = mixed;
  for (const Block& blk : blocks_) {
    Var y = ad::relu(ad::conv2d(x, blk.w1, blk.b1, 1, 1));
    y = ad::conv2d(y, blk.w2, blk.b2, 1, 1);
    x = ad::add(x, y);
  }
  return x;
}

Var CounterfactualGenerator::generate(const Var& h_t, const Var& h_r, double alpha) const {
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("alpha must be in [0,1]");
  if (!h_t->value.same_shape(h_r->value))
    throw std::invalid_argument("generate: feature shape mismatch");
  Var mixed;
  if (alpha == 0.0) {
    mixed = h_t;
  } else if (alpha == 1.0) {
    mixed = adain(h_t, h_r);
  } else {
    mixed = ad::add(ad::scale(h_t, 1.0 - alpha), ad::scale(adain(h_t, h_r), alpha));
  }
  return forward(mixed);
}

// --- Discriminator ------------------------------------------------------------

Discriminator::Discriminator(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const int f = cfg_.feature_channels;
  int cin = f;
  for (int i = 0; i < cfg_.discriminator_depth; ++i) {
    Layer l;
    const int cout = std::max(4, f >> (i + 1));
    l.w = params_.add("conv" + std::to_string(i) + ".w", he_init(rng, {cout, cin, 3, 3}, cin * 9));
    l.b = params_.add("conv" + std::to_string(i) + ".b", Tensor({cout}));
    l.stride = i == 0 ? 2 : 1;
    l.pad = 1;
    layers_.push_back(l);
    cin = cout;
  }
  head_w_ = params_.add("head.w", small_init(rng, {1, cin}, 0.05));
  head_b_ = params_.add("head.b", Tensor({1}));
  patch_w_ = params_.add("patch.w", small_init(rng, {1, cin, 1, 1}, 0.05));
  patch_b_ = params_.add("patch.b", Tensor({1}));
}

Var Discriminator::forward(const Var& features) const {
  Var x = features;
  for (const Layer& l : layers_) x = ad::leaky_relu(ad::conv2d(x, l.w, l.b, l.stride, l.pad), 0.2);
  if (cfg_.patch_discriminator) {
    // Per-position decisions averaged to one probability.
    Var logits = ad::conv2d(x, patch_w_, patch_b_, 1, 0);  // (N,1,h,w)
    Var probs = ad::sigmoid(logits);
    const int hw = probs->value.dim(2) * probs->value.dim(3);
    return ad::scale(ad::reshape(ad::sum_spatial(probs), {probs->value.dim(0)}),
                     1.0 / hw);
  }
  Var pooled = ad::global_avg_pool(x);  // (N,C)
  Var logit = ad::linear(pooled, head_w_, head_b_);
  return ad::reshape(ad::sigmoid(logit), {features->value.dim(0)});
}

// --- FusionClassifier -----------------------------------------------------------

FusionClassifier::FusionClassifier(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  const int f = cfg_.feature_channels;
  fusion_w_ = params_.add("fusion.w", he_init(rng, {f, 2 * f, 3, 3}, 2 * f * 9));
  fusion_b_ = params_.add("fusion.b", Tensor({f}));
  head_w_ = params_.add("head.w", small_init(rng, {2, f}, 0.05));
  head_b_ = params_.add("head.b", Tensor({2}));
}

ClassifierOut FusionClassifier::classify(const ad::Var& residual, const ad::Var& h_t) const {
  if (!residual->value.same_shape(h_t->value))
    throw std::invalid_argument("classify: residual/feature shape mismatch");
  ClassifierOut out;
  const Var fused = ad::concat_channels(residual, h_t);
  out.fusion = ad::relu(ad::conv2d(fused, fusion_w_, fusion_b_, 1, 1));
  const Var pooled = ad::global_avg_pool(out.fusion);
  const Var logits = ad::linear(pooled, head_w_, head_b_);
  out.probs = ad::softmax_rows(logits);
  out.prob_malignant = ad::column(out.probs, 1);
  return out;
}

Tensor FusionClassifier::cam(const Tensor& fusion_value, int sample, int class_idx) const {
  if (fusion_value.rank() != 4) throw std::invalid_argument("cam: fusion must be (N,C,h,w)");
  const int c = fusion_value.dim(1), h = fusion_value.dim(2), w = fusion_value.dim(3);
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  Tensor m({h, w});
  const Tensor& wt = head_w_->value;  // (2, C)
  for (int ch = 0; ch < c; ++ch) {
    const double weight = wt[static_cast<std::int64_t>(class_idx) * c + ch];
    const double* src =
        fusion_value.data() + (static_cast<std::int64_t>(sample) * c + ch) * hw;
    for (std::int64_t p = 0; p < hw; ++p) m[p] += weight * src[p];
  }
  return m;
}

// --- ModelBundle ------------------------------------------------------------------

ModelBundle::ModelBundle(const ModelConfig& cfg, Rng& rng)
    : config(cfg),
      extractor(cfg, rng),
      generator(cfg, rng),
      discriminator(cfg, rng),
      classifier(cfg, rng) {}

namespace {

void append_params(TensorArchive& archive, const std::string& prefix, const ad::ParamSet& set) {
  for (const auto& [name, v] : set.items()) archive.emplace_back(prefix + "/" + name, v->value);
}

void load_params(const TensorArchive& archive, const std::string& prefix, ad::ParamSet& set) {
  for (const auto& [name, v] : set.items()) {
    const Tensor& t = archive_get(archive, prefix + "/" + name);
    if (!t.same_shape(v->value))
      throw std::runtime_error("checkpoint shape mismatch for " + prefix + "/" + name);
    v->value = t;
  }
}

}  // namespace

TensorArchive ModelBundle::to_archive() const {
  TensorArchive archive;
  append_params(archive, "extractor", extractor.params());
  append_params(archive, "generator", generator.params());
  append_params(archive, "discriminator", discriminator.params());
  append_params(archive, "classifier", classifier.params());
  return archive;
}

void ModelBundle::load_archive(const TensorArchive& archive) {
  load_params(archive, "extractor", extractor.params());
  load_params(archive, "generator", generator.params());
  load_params(archive, "discriminator", discriminator.params());
  load_params(archive, "classifier", classifier.params());
}

void ModelBundle::save(const std::filesystem::path& path) const {
  write_tensor_archive(path, to_archive());
}

void ModelBundle::load(const std::filesystem::path& path) {
  load_archive(read_tensor_archive(path));
}

std::vector<ad::Var> ModelBundle::generator_side_params() const {
  std::vector<ad::Var> out = extractor.params().vars();
  for (const auto& v : generator.params().vars()) out.push_back(v);
  for (const auto& v : classifier.params().vars()) out.push_back(v);
  return out;
}

std::vector<ad::Var> ModelBundle::discriminator_params() const {
  return discriminator.params().vars();
}

}  // namespace cgn::models
