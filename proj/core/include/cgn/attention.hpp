#pragma once

#include <utility>
#include <vector>

#include "cgn/image.hpp"
#include "cgn/tensor.hpp"

namespace cgn::attention {

enum class OmegaVariant { kMinMax, kSoftmax };

/// Per-position lesion weighting derived from a CAM.
struct OmegaMap {
  Tensor values;  // (h, w), minmax in [0,1] or softmax summing to 1
  OmegaVariant variant = OmegaVariant::kMinMax;
};

OmegaVariant omega_variant_from_name(const std::string& name);
std::string omega_variant_name(OmegaVariant v);

/// minmax: (cam - min) / (max - min), all zeros for a constant map.
/// softmax: exp over all h*w positions, normalized to sum 1.
OmegaMap cam_to_omega(const Tensor& cam, OmegaVariant variant);

/// Localization protocol box: shift signed maps so the minimum is zero,
/// keep cells strictly above 20% of the maximum, take the largest
/// 4-connected component's tight box, and scale coordinates up to the
/// image resolution. Requires a positive maximum after the shift.
BBox cam_to_bbox(const Tensor& cam, int image_size);

struct LabeledBox {
  int label = 0;
  BBox box;
};

/// Top-1 localization error: a sample is correct iff the predicted label
/// matches and IOU(predicted box, truth box) exceeds the threshold.
double top1_localization_error(const std::vector<LabeledBox>& predictions,
                               const std::vector<LabeledBox>& truths,
                               double iou_threshold = 0.1);

}  // namespace cgn::attention
