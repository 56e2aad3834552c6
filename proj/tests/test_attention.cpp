#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cgn/attention.hpp"
#include "cgn/rng.hpp"

using namespace cgn;
using namespace cgn::attention;

TEST_CASE("cam_to_omega softmax sums to one and is uniform on constant maps") {
  Rng rng(1);
  Tensor cam({5, 5});
  for (std::int64_t i = 0; i < cam.numel(); ++i) cam[i] = rng.normal(0, 3);
  const auto om = cam_to_omega(cam, OmegaVariant::kSoftmax);
  CHECK(om.values.sum() == doctest::Approx(1.0).epsilon(1e-9));

  const auto uniform = cam_to_omega(Tensor::full({4, 4}, 2.5), OmegaVariant::kSoftmax);
  for (std::int64_t i = 0; i < 16; ++i)
    CHECK(uniform.values[i] == doctest::Approx(1.0 / 16.0));
}

TEST_CASE("cam_to_omega minmax fixture and constant-map convention") {
  const Tensor cam({2, 2}, {0, 1, 2, 3});
  const auto om = cam_to_omega(cam, OmegaVariant::kMinMax);
  CHECK(om.values[0] == doctest::Approx(0.0));
  CHECK(om.values[1] == doctest::Approx(1.0 / 3.0));
  CHECK(om.values[2] == doctest::Approx(2.0 / 3.0));
  CHECK(om.values[3] == doctest::Approx(1.0));

  const auto flat = cam_to_omega(Tensor::full({3, 3}, 7.0), OmegaVariant::kMinMax);
  for (std::int64_t i = 0; i < 9; ++i) CHECK(flat.values[i] == 0.0);
}

TEST_CASE("minmax omega spans [0,1] for non-constant maps") {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor cam({4, 6});
    for (std::int64_t i = 0; i < cam.numel(); ++i) cam[i] = rng.normal(1, 2);
    const auto om = cam_to_omega(cam, OmegaVariant::kMinMax);
    CHECK(om.values.min() == doctest::Approx(0.0));
    CHECK(om.values.max() == doctest::Approx(1.0));
  }
}

TEST_CASE("cam_to_bbox: single hot cell maps to the upscaled cell box") {
  Tensor cam({7, 7});
  cam.at({2, 3}) = 1.0;
  const BBox box = cam_to_bbox(cam, 224);
  CHECK(box == BBox{64, 96, 32, 32});
}

TEST_CASE("cam_to_bbox: uniform positive map covers the whole image") {
  const BBox box = cam_to_bbox(Tensor::full({7, 7}, 3.0), 224);
  CHECK(box == BBox{0, 0, 224, 224});
}

TEST_CASE("cam_to_bbox keeps the largest component above threshold") {
  Tensor cam({6, 6});
  // 5-cell component.
  cam.at({1, 1}) = 1.0;
  cam.at({1, 2}) = 0.9;
  cam.at({2, 1}) = 0.8;
  cam.at({2, 2}) = 0.9;
  cam.at({3, 1}) = 0.7;
  // 2-cell component, also above 20% of max.
  cam.at({5, 4}) = 0.9;
  cam.at({5, 5}) = 0.9;
  const BBox box = cam_to_bbox(cam, 6);  // identity scale
  CHECK(box == BBox{1, 1, 3, 2});
}

TEST_CASE("cam_to_bbox is invariant to positive rescaling of nonnegative maps") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor cam({7, 7});
    for (std::int64_t i = 0; i < cam.numel(); ++i) cam[i] = rng.uniform();
    const BBox a = cam_to_bbox(cam, 224);
    Tensor scaled(cam.shape());
    const double k = rng.uniform(0.1, 10.0);
    for (std::int64_t i = 0; i < cam.numel(); ++i) scaled[i] = cam[i] * k;
    CHECK(cam_to_bbox(scaled, 224) == a);
  }
}

TEST_CASE("cam_to_bbox min-shifts signed maps") {
  Tensor cam({3, 3});
  for (std::int64_t i = 0; i < 9; ++i) cam[i] = -5.0;
  cam.at({1, 1}) = -1.0;  // the only cell above 20% of the shifted max
  const BBox box = cam_to_bbox(cam, 3);
  CHECK(box == BBox{1, 1, 1, 1});
}

TEST_CASE("top-1 localization error endpoints") {
  std::vector<LabeledBox> truths = {{1, {10, 10, 20, 20}}, {0, {50, 50, 30, 30}}};
  std::vector<LabeledBox> wrong_labels = {{0, {10, 10, 20, 20}}, {1, {50, 50, 30, 30}}};
  CHECK(top1_localization_error(wrong_labels, truths) == doctest::Approx(1.0));
  CHECK(top1_localization_error(truths, truths) == doctest::Approx(0.0));
}

TEST_CASE("top-1 localization: half-box overlap counts at IOU 0.5 > 0.1") {
  const std::vector<LabeledBox> truths = {{1, {0, 0, 20, 40}}};
  const std::vector<LabeledBox> preds = {{1, {0, 0, 20, 20}}};  // left half, IOU 0.5
  CHECK(top1_localization_error(preds, truths) == doctest::Approx(0.0));

  // Same overlap, wrong label: misses.
  const std::vector<LabeledBox> mislabeled = {{0, {0, 0, 20, 20}}};
  CHECK(top1_localization_error(mislabeled, truths) == doctest::Approx(1.0));
}

TEST_CASE("top-1 localization rejects mismatched lists") {
  const std::vector<LabeledBox> one = {{1, {0, 0, 2, 2}}};
  const std::vector<LabeledBox> two = {{1, {0, 0, 2, 2}}, {0, {1, 1, 2, 2}}};
  CHECK_THROWS_AS(top1_localization_error(one, two), std::invalid_argument);
}

TEST_CASE("iou properties: symmetric, bounded, identity") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const BBox a{rng.uniform_int(50), rng.uniform_int(50), 1 + rng.uniform_int(30),
                 1 + rng.uniform_int(30)};
    const BBox b{rng.uniform_int(50), rng.uniform_int(50), 1 + rng.uniform_int(30),
                 1 + rng.uniform_int(30)};
    const double ab = iou(a, b);
    CHECK(ab == iou(b, a));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    CHECK(iou(a, a) == doctest::Approx(1.0));
    if (ab == 1.0) CHECK(a == b);
  }
}
