#include "cgn/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace cgn::losses {

using ad::Var;

DtcDenominator dtc_denominator_from_name(const std::string& name) {
  if (name == "hw_minus_1") return DtcDenominator::kHwMinus1;
  if (name == "omega_mass") return DtcDenominator::kOmegaMass;
  throw std::invalid_argument("unknown d_tc denominator: " + name);
}

std::string dtc_denominator_name(DtcDenominator d) {
  return d == DtcDenominator::kHwMinus1 ? "hw_minus_1" : "omega_mass";
}

namespace {

Var clamp_prob(const Var& p) { return ad::clamp(p, kProbFloor, 1.0 - kProbFloor); }

}  // namespace

Var cls_loss(const Var& p_malignant, const Tensor& y_gt) {
  if (!p_malignant->value.same_shape(y_gt))
    throw std::invalid_argument("cls_loss: probability/label shape mismatch");
  Tensor y_bar(y_gt.shape());
  for (std::int64_t i = 0; i < y_gt.numel(); ++i) {
    if (y_gt[i] != 0.0 && y_gt[i] != 1.0)
      throw std::invalid_argument("cls_loss: labels must be 0 or 1");
    y_bar[i] = 1.0 - y_gt[i];
  }
  const Var p = clamp_prob(p_malignant);
  const Var pos = ad::mul_const(ad::log_(p), y_gt);
  const Var neg = ad::mul_const(ad::log_(ad::sub_from(1.0, p)), y_bar);
  return ad::scale(ad::add(pos, neg), -1.0);
}

AdvPair adversarial_losses(const Var& d_on_real, const Var& d_on_fake) {
  if (!d_on_real->value.same_shape(d_on_fake->value))
    throw std::invalid_argument("adversarial_losses: shape mismatch");
  const Var pr = clamp_prob(d_on_real);
  const Var pf = clamp_prob(d_on_fake);
  AdvPair out;
  out.l_d = ad::scale(ad::add(ad::log_(pr), ad::log_(ad::sub_from(1.0, pf))), -1.0);
  out.l_g = ad::scale(ad::log_(pf), -1.0);
  return out;
}

Var d_tc(const Var& h_t, const Var& h_c, const Tensor& omega, DtcDenominator denom) {
  if (!h_t->value.same_shape(h_c->value))
    throw std::invalid_argument("d_tc: feature shape mismatch");
  if (h_t->value.rank() != 4) throw std::invalid_argument("d_tc: features must be (N,C,h,w)");
  const int n = h_t->value.dim(0), h = h_t->value.dim(2), w = h_t->value.dim(3);
  if (omega.rank() != 4 || omega.dim(0) != n || omega.dim(1) != 1 || omega.dim(2) != h ||
      omega.dim(3) != w)
    throw std::invalid_argument("d_tc: omega must be (N,1,h,w)");
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  if (denom == DtcDenominator::kHwMinus1 && hw == 1)
    throw std::invalid_argument("d_tc: degenerate denominator (h*w == 1)");

  Tensor weight(omega.shape());
  for (std::int64_t i = 0; i < omega.numel(); ++i) weight[i] = 1.0 - omega[i];

  const Var diff = ad::sub(h_t, h_c);
  const Var sq = ad::sum_channels(ad::mul(diff, diff));          // (N,1,h,w)
  const Var weighted = ad::mul_const(sq, weight);
  Var per_sample = ad::reshape(ad::sum_spatial(weighted), {n});  // (N)

  if (denom == DtcDenominator::kHwMinus1)
    return ad::scale(per_sample, 1.0 / static_cast<double>(hw - 1));

  Tensor inv_mass({n});
  for (int i = 0; i < n; ++i) {
    double mass = 0.0;
    for (std::int64_t p = 0; p < hw; ++p) mass += weight[i * hw + p];
    inv_mass[i] = mass > 0.0 ? 1.0 / mass : 0.0;
  }
  return ad::mul_const(per_sample, inv_mass);
}

Var d_rc(const Var& h_r, const Var& h_c) { return ad::chamfer(h_r, h_c); }

Var feedback_triplet(const Var& dtc, const Var& drc, double beta) {
  if (!dtc->value.same_shape(drc->value))
    throw std::invalid_argument("feedback_triplet: shape mismatch");
  return ad::relu(ad::add_scalar(ad::sub(dtc, drc), beta));
}

Var negative_embedding(const Var& p_m_of_hc) {
  return ad::scale(ad::log_(ad::sub_from(1.0, clamp_prob(p_m_of_hc))), -1.0);
}

AdvPair region_masked_adversarial_losses(
    const Var& h_c, const Var& h_r, const Tensor& omega,
    const std::function<ad::Var(const ad::Var&)>& discriminate) {
  if (!h_c->value.same_shape(h_r->value))
    throw std::invalid_argument("region_masked_adversarial_losses: shape mismatch");
  const Var masked_c = ad::mul_bcast_map(h_c, omega);
  const Var masked_r = ad::mul_bcast_map(h_r, omega);
  return adversarial_losses(discriminate(masked_r), discriminate(masked_c));
}

Var variant2_fc_loss(const Var& h_t, const Var& h_c, const Tensor& omega,
                     DtcDenominator denom) {
  return d_tc(h_t, h_c, omega, denom);
}

void LossBundle::compute_totals() {
  total_g = l_ad_g + l_ne + l_ft + l_cls;
  total_d = l_ad_d;
}

std::pair<double, double> joint_losses(std::span<const LossBundle> bundles) {
  double total_g = 0.0, total_d = 0.0;
  const auto check = [](double v, const char* term) {
    if (!std::isfinite(v))
      throw std::runtime_error(std::string("joint_losses: non-finite value in term ") + term);
    return v;
  };
  for (const LossBundle& b : bundles) {
    total_g += check(b.l_ad_g, "l_ad_g") + check(b.l_ne, "l_ne") + check(b.l_ft, "l_ft") +
               check(b.l_cls, "l_cls");
    total_d += check(b.l_ad_d, "l_ad_d");
  }
  return {total_g, total_d};
}

}  // namespace cgn::losses
