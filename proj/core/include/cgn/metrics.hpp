#pragma once

#include <limits>
#include <string>
#include <vector>

#include "cgn/tensor.hpp"

namespace cgn::metrics {

/// Mann-Whitney AUC with tie handling:
/// P(score_pos > score_neg) + 0.5 * P(tie). Throws unless both classes
/// are present.
double auc(const std::vector<double>& scores, const std::vector<int>& labels);

/// Population of pooled feature vectors, one row per sample.
struct FeatureSet {
  std::vector<std::vector<double>> vectors;  // N x d
  std::string origin;

  int dim() const { return vectors.empty() ? 0 : static_cast<int>(vectors[0].size()); }
  int count() const { return static_cast<int>(vectors.size()); }
};

/// Frechet distance between Gaussian fits:
/// ||mu_a - mu_b||^2 + Tr(Sa + Sb - 2 (Sa Sb)^{1/2}).
/// The matrix square root comes from the eigendecomposition of the
/// symmetrized product with negative eigenvalues clipped at zero;
/// covariance is shrunk (+1e-6 I) whenever N <= d.
double fid(const FeatureSet& a, const FeatureSet& b);

struct FidQuartet {
  double target_reference = 0.0;
  double counterfactual_reference = 0.0;
  double target_counterfactual = 0.0;
  double target_counterfactual_masked = 0.0;
  bool masked_available = false;
};

/// The four feature-distribution distances: (i) target vs reference,
/// (ii) counterfactual vs reference, (iii) target vs counterfactual,
/// (iv) target vs counterfactual restricted to lesion-free positions.
/// Pass empty masked sets when ground-truth masks are unavailable; (iv)
/// is then skipped.
FidQuartet fid_quartet(const FeatureSet& target, const FeatureSet& reference,
                       const FeatureSet& counterfactual, const FeatureSet& target_masked,
                       const FeatureSet& counterfactual_masked);

/// One-sided Welch two-sample t-test of H0: mean(healthy) >= mean(unhealthy)
/// against H1: mean(healthy) < mean(unhealthy); returns the p-value.
/// Throws when the variance is degenerate in both groups.
double symmetric_prior_test(const std::vector<double>& healthy_fids,
                            const std::vector<double>& unhealthy_fids);

/// One evaluation run's headline numbers.
struct MetricsReport {
  double auc = 0.0;
  double localization_error = 0.0;
  FidQuartet fids;
  double p_value = std::numeric_limits<double>::quiet_NaN();  // set when couples are given
  std::string to_json() const;
};

}  // namespace cgn::metrics
