#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cgn/models.hpp"
#include "cgn/rng.hpp"
#include "gradcheck.hpp"

using namespace cgn;
using namespace cgn::models;

namespace {

ModelConfig toy_config() {
  ModelConfig cfg;
  cfg.feature_channels = 8;
  cfg.feature_hw = 7;
  cfg.generator_blocks = 2;
  return cfg;
}

Tensor rand_features(Rng& rng, int n, int c, int h, int w, double mean = 0.0) {
  Tensor t({n, c, h, w});
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(mean, 1.0);
  return t;
}

ImageU8 rand_image(Rng& rng) {
  ImageU8 img(224, 224);
  for (auto& v : img.px) v = static_cast<std::uint8_t>(rng.uniform_int(256));
  return img;
}

}  // namespace

TEST_CASE("adain is the identity on itself and matches style moments") {
  Rng rng(1);
  const Tensor h = rand_features(rng, 2, 4, 6, 6, 0.5);
  const Tensor s = rand_features(rng, 2, 4, 6, 6, -1.0);
  const ad::Var same = adain(ad::constant(h), ad::constant(h));
  CHECK(allclose(same->value, h, 1e-5));

  const ad::Var out = adain(ad::constant(h), ad::constant(s));
  // Per-channel spatial mean and population sigma must match the style's.
  const int hw = 36;
  for (int nc = 0; nc < 8; ++nc) {
    double mo = 0, ms = 0;
    for (int p = 0; p < hw; ++p) {
      mo += out->value[nc * hw + p];
      ms += s[nc * hw + p];
    }
    mo /= hw;
    ms /= hw;
    double vo = 0, vs = 0;
    for (int p = 0; p < hw; ++p) {
      vo += (out->value[nc * hw + p] - mo) * (out->value[nc * hw + p] - mo);
      vs += (s[nc * hw + p] - ms) * (s[nc * hw + p] - ms);
    }
    CHECK(mo == doctest::Approx(ms).epsilon(1e-5));
    CHECK(std::sqrt(vo / hw) == doctest::Approx(std::sqrt(vs / hw)).epsilon(1e-4));
  }
}

TEST_CASE("adain hand fixture: 1-channel 2x2") {
  const Tensor content({1, 1, 2, 2}, {0, 2, 0, 2});  // mean 1, population sigma 1
  const Tensor style({1, 1, 2, 2}, {4, 6, 4, 6});    // mean 5, population sigma 1
  const ad::Var out = adain(ad::constant(content), ad::constant(style));
  CHECK(out->value[0] == doctest::Approx(4.0));
  CHECK(out->value[1] == doctest::Approx(6.0));
  CHECK(out->value[2] == doctest::Approx(4.0));
  CHECK(out->value[3] == doctest::Approx(6.0));
}

TEST_CASE("adain moment matching holds across random pairs") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor h = rand_features(rng, 1, 3, 5, 5, rng.uniform(-2, 2));
    const Tensor s = rand_features(rng, 1, 3, 5, 5, rng.uniform(-2, 2));
    const ad::Var out = adain(ad::constant(h), ad::constant(s));
    const int hw = 25;
    for (int c = 0; c < 3; ++c) {
      double ms = 0, mo = 0;
      for (int p = 0; p < hw; ++p) {
        ms += s[c * hw + p];
        mo += out->value[c * hw + p];
      }
      CHECK(mo / hw == doctest::Approx(ms / hw).epsilon(1e-4));
    }
  }
}

TEST_CASE("extractor: weight sharing gives identical features on identical inputs") {
  Rng rng(3);
  const ModelConfig cfg = toy_config();
  Rng init(7);
  FeatureExtractor extractor(cfg, init);
  const ImageU8 img = rand_image(rng);
  const Tensor batch = images_to_tensor({&img, &img});
  const ad::Var out = extractor.forward(batch);
  CHECK(out->value.shape() == std::vector<int>{2, 8, 7, 7});
  // Identical inputs in one batch agree to blocked-GEMM rounding.
  const std::int64_t chw = 8 * 49;
  for (std::int64_t i = 0; i < chw; ++i)
    CHECK(out->value[i] == doctest::Approx(out->value[chw + i]).epsilon(1e-12));

  // The same call twice is bit-identical, and a single-image batch
  // reproduces itself exactly: one parameter set, one computation.
  const ad::Var again = extractor.forward(batch);
  CHECK(allclose(again->value, out->value, 0.0));
  const ad::Var solo_a = extractor.forward(images_to_tensor({&img}));
  const ad::Var solo_b = extractor.forward(images_to_tensor({&img}));
  CHECK(allclose(solo_a->value, solo_b->value, 0.0));
}

TEST_CASE("extractor output shape follows the config for every backbone") {
  Rng rng(5);
  const ImageU8 img = rand_image(rng);
  for (const auto& [backbone, hw] :
       std::vector<std::pair<ModelConfig::Backbone, int>>{
           {ModelConfig::Backbone::kSmallConv, 14},
           {ModelConfig::Backbone::kAlexNetLike, 14},
           {ModelConfig::Backbone::kResNetLike, 14}}) {
    ModelConfig cfg;
    cfg.backbone = backbone;
    cfg.feature_channels = 16;
    cfg.feature_hw = hw;
    Rng init(11);
    FeatureExtractor fx(cfg, init);
    const ad::Var out = fx.forward(images_to_tensor({&img}));
    CHECK(out->value.shape() == std::vector<int>{1, 16, hw, hw});
  }
}

TEST_CASE("extractor distinguishes zero and saturated images") {
  const ModelConfig cfg = toy_config();
  Rng init(13);
  FeatureExtractor fx(cfg, init);
  ImageU8 dark(224, 224), bright(224, 224);
  for (auto& v : bright.px) v = 255;
  const ad::Var fd = fx.forward(images_to_tensor({&dark}));
  const ad::Var fb = fx.forward(images_to_tensor({&bright}));
  CHECK_FALSE(allclose(fd->value, fb->value, 1e-6));
}

TEST_CASE("generator: zero-initialized residual blocks start as the identity") {
  const ModelConfig cfg = toy_config();
  Rng init(17);
  CounterfactualGenerator gen(cfg, init);
  Rng rng(19);
  const Tensor mixed = rand_features(rng, 2, 8, 7, 7);
  const ad::Var out = gen.forward(ad::constant(mixed));
  CHECK(allclose(out->value, mixed, 0.0));
}

TEST_CASE("generator input interpolation honors alpha endpoints") {
  const ModelConfig cfg = toy_config();
  Rng init(23);
  CounterfactualGenerator gen(cfg, init);
  Rng rng(29);
  const Tensor t = rand_features(rng, 1, 8, 7, 7, 1.0);
  const Tensor r = rand_features(rng, 1, 8, 7, 7, -1.0);
  const ad::Var ht = ad::constant(t), hr = ad::constant(r);

  // Identity generator at init: output equals the mixed input exactly.
  const ad::Var at0 = gen.generate(ht, hr, 0.0);
  CHECK(allclose(at0->value, t, 0.0));
  const ad::Var at1 = gen.generate(ht, hr, 1.0);
  CHECK(allclose(at1->value, adain(ht, hr)->value, 0.0));
}

TEST_CASE("discriminator outputs calibrated probabilities at init") {
  const ModelConfig cfg = toy_config();
  Rng init(31);
  Discriminator d(cfg, init);
  Rng rng(37);
  for (int trial = 0; trial < 5; ++trial) {
    const ad::Var p = d.forward(ad::constant(rand_features(rng, 3, 8, 7, 7)));
    for (std::int64_t i = 0; i < p->value.numel(); ++i) {
      CHECK(p->value[i] > 0.01);
      CHECK(p->value[i] < 0.99);
    }
  }
}

TEST_CASE("gradient of log D with respect to its input matches finite differences") {
  ModelConfig cfg = toy_config();
  cfg.feature_channels = 4;
  Rng init(41);
  Discriminator d(cfg, init);
  Rng rng(43);
  ad::Var input = ad::leaf(rand_features(rng, 1, 4, 6, 6), true);
  const auto r = gradcheck::check(
      [&] { return ad::sum_all(ad::log_(d.forward(input))); }, {input}, 1e-5);
  CHECK(r.max_rel_error < 1e-3);
}

TEST_CASE("classifier contracts: shapes, probability simplex, CAM linearity") {
  ModelConfig cfg = toy_config();
  Rng init(47);
  FusionClassifier cls(cfg, init);
  Rng rng(53);
  const Tensor res = rand_features(rng, 2, 8, 7, 7);
  const Tensor ht = rand_features(rng, 2, 8, 7, 7);
  const auto out = cls.classify(ad::constant(res), ad::constant(ht));
  CHECK(out.fusion->value.shape() == std::vector<int>{2, 8, 7, 7});
  CHECK(out.probs->value.shape() == std::vector<int>{2, 2});
  for (int n = 0; n < 2; ++n) {
    const double p0 = out.probs->value[n * 2], p1 = out.probs->value[n * 2 + 1];
    CHECK(p0 + p1 == doctest::Approx(1.0));
    CHECK(p1 > 0.0);
    CHECK(p1 < 1.0);
    CHECK(out.prob_malignant->value[n] == doctest::Approx(p1));
  }

  const Tensor cam_mal = cls.cam(out.fusion->value, 0, 1);
  const Tensor cam_ben = cls.cam(out.fusion->value, 0, 0);
  CHECK(cam_mal.shape() == std::vector<int>{7, 7});

  // Swapping the head's class weights swaps the maps and negates the
  // logit difference.
  auto& head = *cls.params().items().back().second;  // head.b added last; find head.w
  (void)head;
  for (auto& [name, var] : cls.params().items()) {
    if (name != "head.w") continue;
    Tensor& w = var->value;
    const int c = w.dim(1);
    for (int k = 0; k < c; ++k) std::swap(w[k], w[c + k]);
  }
  const auto swapped = cls.classify(ad::constant(res), ad::constant(ht));
  CHECK(swapped.prob_malignant->value[0] ==
        doctest::Approx(1.0 - out.prob_malignant->value[0]).epsilon(1e-9));
  const Tensor cam_after = cls.cam(swapped.fusion->value, 0, 0);
  CHECK(allclose(cam_after, cam_mal, 1e-12));
}

TEST_CASE("checkpoint round trip restores every parameter") {
  const ModelConfig cfg = toy_config();
  Rng init_a(59), init_b(61);
  ModelBundle a(cfg, init_a), b(cfg, init_b);
  const auto path = std::filesystem::temp_directory_path() / "cgn_ckpt.cgnt";
  a.save(path);
  b.load(path);
  const auto archive_a = a.to_archive(), archive_b = b.to_archive();
  REQUIRE(archive_a.size() == archive_b.size());
  for (size_t i = 0; i < archive_a.size(); ++i) {
    CHECK(archive_a[i].first == archive_b[i].first);
    CHECK(allclose(archive_a[i].second, archive_b[i].second, 0.0));
  }
}

TEST_CASE("patch discriminator option still yields (N) probabilities") {
  ModelConfig cfg = toy_config();
  cfg.patch_discriminator = true;
  Rng init(67);
  Discriminator d(cfg, init);
  Rng rng(71);
  const ad::Var p = d.forward(ad::constant(rand_features(rng, 2, 8, 7, 7)));
  CHECK(p->value.shape() == std::vector<int>{2});
  for (std::int64_t i = 0; i < 2; ++i) {
    CHECK(p->value[i] > 0.0);
    CHECK(p->value[i] < 1.0);
  }
}
