#include "cgn/attention.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cgn::attention {

OmegaVariant omega_variant_from_name(const std::string& name) {
  if (name == "minmax") return OmegaVariant::kMinMax;
  if (name == "softmax") return OmegaVariant::kSoftmax;
  throw std::invalid_argument("unknown omega variant: " + name);
}

std::string omega_variant_name(OmegaVariant v) {
  return v == OmegaVariant::kMinMax ? "minmax" : "softmax";
}

OmegaMap cam_to_omega(const Tensor& cam, OmegaVariant variant) {
  if (cam.rank() != 2) throw std::invalid_argument("cam_to_omega: cam must be (h,w)");
  if (!cam.all_finite()) throw std::invalid_argument("cam_to_omega: cam has non-finite values");
  OmegaMap out;
  out.variant = variant;
  out.values = Tensor(cam.shape());
  if (variant == OmegaVariant::kMinMax) {
    const double lo = cam.min(), hi = cam.max();
    if (hi > lo)
      for (std::int64_t i = 0; i < cam.numel(); ++i) out.values[i] = (cam[i] - lo) / (hi - lo);
    // constant map stays all zeros
  } else {
    const double hi = cam.max();
    double sum = 0.0;
    for (std::int64_t i = 0; i < cam.numel(); ++i) {
      out.values[i] = std::exp(cam[i] - hi);
      sum += out.values[i];
    }
    for (std::int64_t i = 0; i < cam.numel(); ++i) out.values[i] /= sum;
  }
  return out;
}

BBox cam_to_bbox(const Tensor& cam, int image_size) {
  if (cam.rank() != 2) throw std::invalid_argument("cam_to_bbox: cam must be (h,w)");
  const int h = cam.dim(0), w = cam.dim(1);
  const double lo = cam.min();
  const double shift = lo < 0.0 ? -lo : 0.0;
  const double mx = cam.max() + shift;
  if (mx <= 0.0) throw std::invalid_argument("cam_to_bbox: cam has no positive values");
  const double threshold = 0.2 * mx;

  ImageU8 mask(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      mask.at(r, c) = (cam.at({r, c}) + shift) > threshold ? 1 : 0;

  const BBox cell_box = tight_bbox(largest_component(mask));
  const double sr = static_cast<double>(image_size) / h;
  const double sc = static_cast<double>(image_size) / w;
  const int r0 = static_cast<int>(std::floor(cell_box.row * sr));
  const int c0 = static_cast<int>(std::floor(cell_box.col * sc));
  const int r1 = static_cast<int>(std::ceil((cell_box.row + cell_box.height) * sr));
  const int c1 = static_cast<int>(std::ceil((cell_box.col + cell_box.width) * sc));
  return BBox{r0, c0, std::min(r1, image_size) - r0, std::min(c1, image_size) - c0};
}

double top1_localization_error(const std::vector<LabeledBox>& predictions,
                               const std::vector<LabeledBox>& truths, double iou_threshold) {
  if (predictions.size() != truths.size())
    throw std::invalid_argument("top1_localization_error: list length mismatch");
  if (predictions.empty())
    throw std::invalid_argument("top1_localization_error: empty lists");
  int correct = 0;
  for (size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].label == truths[i].label &&
        iou(predictions[i].box, truths[i].box) > iou_threshold)
      ++correct;
  }
  return 1.0 - static_cast<double>(correct) / static_cast<double>(predictions.size());
}

}  // namespace cgn::attention
