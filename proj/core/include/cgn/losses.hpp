#pragma once

#include <functional>
#include <span>
#include <string>
#include <utility>

#include "cgn/autodiff.hpp"
#include "cgn/tensor.hpp"

namespace cgn::losses {

/// Probabilities are clamped to this band before any logarithm.
inline constexpr double kProbFloor = 1e-7;

/// Eq. (10) divides by h*w - 1 as written; the lesion-free-mass
/// normalization is available behind this switch.
enum class DtcDenominator { kHwMinus1, kOmegaMass };
DtcDenominator dtc_denominator_from_name(const std::string& name);
std::string dtc_denominator_name(DtcDenominator d);

/// Binary cross-entropy on the malignant probability; (N) in, (N) out.
ad::Var cls_loss(const ad::Var& p_malignant, const Tensor& y_gt);

struct AdvPair {
  ad::Var l_d;  // -log D(real) - log(1 - D(fake))
  ad::Var l_g;  // -log D(fake), non-saturating generator form
};
AdvPair adversarial_losses(const ad::Var& d_on_real, const ad::Var& d_on_fake);

/// Lesion-free weighted squared error between target and counterfactual
/// features. omega is a constant (N,1,h,w) map in [0,1]; the weight on
/// each position is (1 - omega). Throws on h*w == 1 under the verbatim
/// denominator.
ad::Var d_tc(const ad::Var& h_t, const ad::Var& h_c, const Tensor& omega,
             DtcDenominator denom = DtcDenominator::kHwMinus1);

/// Symmetric chamfer distance between reference and counterfactual
/// feature maps, alignment-tolerant; (N) out.
ad::Var d_rc(const ad::Var& h_r, const ad::Var& h_c);

/// max{0, d_tc + beta - d_rc}, per sample.
ad::Var feedback_triplet(const ad::Var& dtc, const ad::Var& drc, double beta);

/// -log(1 - p_m(H_C)): the counterfactual must read as benign.
ad::Var negative_embedding(const ad::Var& p_m_of_hc);

/// Masked adversarial pair: features are multiplied by omega before the
/// discriminator. `discriminate` maps (N,C,h,w) features to (N)
/// probabilities. With omega identically 1 this reduces to
/// adversarial_losses on the unmasked features.
AdvPair region_masked_adversarial_losses(
    const ad::Var& h_c, const ad::Var& h_r, const Tensor& omega,
    const std::function<ad::Var(const ad::Var&)>& discriminate);

/// The feedback-loss replacement of the second ablation: exactly d_tc.
ad::Var variant2_fc_loss(const ad::Var& h_t, const ad::Var& h_c, const Tensor& omega,
                         DtcDenominator denom = DtcDenominator::kHwMinus1);

/// Per-sample loss values for logging and totals accounting.
struct LossBundle {
  double l_cls = 0.0;
  double l_ad_g = 0.0;
  double l_ad_d = 0.0;
  double l_ft = 0.0;
  double l_ne = 0.0;
  double d_tc = 0.0;
  double d_rc = 0.0;
  double total_g = 0.0;
  double total_d = 0.0;

  /// total_g = l_ad_g + l_ne + l_ft + l_cls; total_d = l_ad_d.
  void compute_totals();
};

/// Sums bundles over the sample index. Throws naming the offending term
/// when any entry is non-finite.
std::pair<double, double> joint_losses(std::span<const LossBundle> bundles);

}  // namespace cgn::losses
