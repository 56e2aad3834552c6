#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cgn/preprocess.hpp"
#include "cgn/rng.hpp"
#include "cgn/synth.hpp"
#include "oracles.hpp"

using namespace cgn;
using namespace cgn::preprocess;

TEST_CASE("14-bit mapping endpoints and midpoint") {
  ImageU16 px(1, 3);
  px.at(0, 0) = 0;
  px.at(0, 1) = 16383;
  px.at(0, 2) = 8191;
  const ImageU8 out = map_14bit_to_8bit({px, 14});
  CHECK(out.at(0, 0) == 0);
  CHECK(out.at(0, 1) == 255);
  CHECK(out.at(0, 2) == 127);  // floor(8191 * 255 / 16383)
}

TEST_CASE("14-bit mapping is monotone and constant-preserving") {
  ImageU16 ramp(1, 128);
  Rng rng(2);
  for (auto& v : ramp.px) v = static_cast<std::uint16_t>(rng.uniform_int(16384));
  std::sort(ramp.px.begin(), ramp.px.end());
  const ImageU8 out = map_14bit_to_8bit({ramp, 14});
  for (int c = 1; c < out.cols; ++c) CHECK(out.at(0, c) >= out.at(0, c - 1));

  ImageU16 flat(4, 4);
  for (auto& v : flat.px) v = 9000;
  const ImageU8 f = map_14bit_to_8bit({flat, 14});
  for (auto v : f.px) CHECK(v == 9000 * 255 / 16383);
}

TEST_CASE("14-bit mapping rejects other bit depths") {
  CHECK_THROWS_AS(map_14bit_to_8bit({ImageU16(2, 2), 8}), std::invalid_argument);
}

TEST_CASE("otsu: bimodal 0/255 returns smallest tied threshold") {
  ImageU8 img(2, 8);
  for (int c = 0; c < 8; ++c) {
    img.at(0, c) = 0;
    img.at(1, c) = 255;
  }
  CHECK(otsu_threshold(img) == 0);
}

TEST_CASE("otsu: two tight modes give a separating threshold") {
  ImageU8 img(4, 8);
  Rng rng(3);
  for (int i = 0; i < 16; ++i)
    img.px[static_cast<size_t>(i)] = static_cast<std::uint8_t>(30 + rng.uniform_int(3) - 1);
  for (int i = 16; i < 32; ++i)
    img.px[static_cast<size_t>(i)] = static_cast<std::uint8_t>(200 + rng.uniform_int(3) - 1);
  const int t = otsu_threshold(img);
  CHECK(t >= 30);
  CHECK(t < 200);
}

TEST_CASE("otsu: constant image is degenerate") {
  ImageU8 img(8, 8);
  for (auto& v : img.px) v = 77;
  CHECK_THROWS_WITH_AS(otsu_threshold(img), doctest::Contains("degenerate"),
                       std::invalid_argument);
}

TEST_CASE("otsu matches the brute-force argmax on random histograms") {
  Rng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    ImageU8 img(16, 16);
    // Mixture of two random value clusters plus outliers.
    const int m0 = rng.uniform_int(256), m1 = rng.uniform_int(256);
    for (auto& v : img.px) {
      const int base = rng.bernoulli(0.5) ? m0 : m1;
      v = static_cast<std::uint8_t>(std::clamp(base + rng.uniform_int(21) - 10, 0, 255));
    }
    if (img.px == std::vector<std::uint8_t>(img.px.size(), img.px[0])) continue;
    CHECK(otsu_threshold(img) == oracle::otsu_bruteforce(img));
  }
}

TEST_CASE("segment_breast keeps the largest component only") {
  ImageU8 img(40, 40);
  for (int r = 5; r < 30; ++r)
    for (int c = 5; c < 30; ++c) img.at(r, c) = 200;  // 625 px component
  for (int r = 35; r < 38; ++r)
    for (int c = 35; c < 38; ++c) img.at(r, c) = 220;  // 9 px component
  const Segmented seg = segment_breast(img);
  CHECK(seg.image.rows == 25);
  CHECK(seg.image.cols == 25);
  for (auto v : seg.mask.px) CHECK(v == 1);
}

TEST_CASE("segment_breast on an all-foreground-ish image is the identity crop") {
  ImageU8 img(10, 10);
  for (int r = 0; r < 10; ++r)
    for (int c = 0; c < 10; ++c) img.at(r, c) = static_cast<std::uint8_t>(150 + (r + c) % 4);
  img.at(0, 0) = 1;  // one dark pixel creates the second histogram class
  const Segmented seg = segment_breast(img);
  CHECK(seg.image.rows == 10);
  CHECK(seg.image.cols == 10);
}

TEST_CASE("segment_breast recovers the generator's breast support") {
  synth::SynthConfig cfg;
  cfg.n_samples = 3;
  cfg.seed = 9;
  for (int i = 0; i < 3; ++i) {
    const auto sample = synth::generate_sample(cfg, i);
    const int t = otsu_threshold(sample.x_T);
    ImageU8 fg(sample.x_T.rows, sample.x_T.cols);
    for (size_t k = 0; k < fg.px.size(); ++k) fg.px[k] = sample.x_T.px[k] > t ? 1 : 0;
    const ImageU8 comp = largest_component(fg);
    std::int64_t disagree = 0, total = static_cast<std::int64_t>(comp.px.size());
    for (size_t k = 0; k < comp.px.size(); ++k)
      if (comp.px[k] != sample.foreground_T.px[k]) ++disagree;
    CHECK(static_cast<double>(disagree) / static_cast<double>(total) < 0.02);
  }
}

TEST_CASE("resize: identity at 224 and constant preservation") {
  ImageU8 img(224, 224);
  Rng rng(5);
  for (auto& v : img.px) v = static_cast<std::uint8_t>(rng.uniform_int(256));
  CHECK(resize_to_224(img) == img);

  ImageU8 flat(100, 60);
  for (auto& v : flat.px) v = 99;
  const ImageU8 out = resize_to_224(flat);
  CHECK(out.rows == 224);
  CHECK(out.cols == 224);
  for (auto v : out.px) CHECK(v == 99);
}

TEST_CASE("resize: 448 checkerboard of 2x2 blocks averages to block values") {
  ImageU8 img(448, 448);
  for (int r = 0; r < 448; ++r)
    for (int c = 0; c < 448; ++c) img.at(r, c) = (((r / 2) + (c / 2)) % 2) ? 200 : 40;
  const ImageU8 out = resize_bilinear(img, 224, 224);
  for (int r = 0; r < 224; ++r)
    for (int c = 0; c < 224; ++c) CHECK(out.at(r, c) == ((r + c) % 2 ? 200 : 40));
}

TEST_CASE("mirror: involution, symmetry fixpoint, pixel motion") {
  ImageU8 img(8, 8);
  Rng rng(6);
  for (auto& v : img.px) v = static_cast<std::uint8_t>(rng.uniform_int(256));
  CHECK(mirror_reference(mirror_reference(img)) == img);

  ImageU8 sym(4, 5);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 5; ++c) sym.at(r, c) = static_cast<std::uint8_t>(10 * std::min(c, 4 - c));
  CHECK(mirror_reference(sym) == sym);

  ImageU8 dot(3, 7);
  dot.at(1, 2) = 255;
  CHECK(mirror_reference(dot).at(1, 4) == 255);
}

TEST_CASE("pipeline is idempotent on synthetic breasts") {
  synth::SynthConfig cfg;
  cfg.n_samples = 2;
  cfg.seed = 33;
  for (int i = 0; i < 2; ++i) {
    const auto sample = synth::generate_sample(cfg, i);
    const ImageU8 once = pipeline(sample.x_T);
    const ImageU8 twice = pipeline(once);
    CHECK(once == twice);
  }
}
