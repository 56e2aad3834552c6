#include "cgn/metrics.hpp"

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>
#include <stdexcept>

namespace cgn::metrics {

double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("auc: scores/labels length mismatch");
  std::int64_t n_pos = 0, n_neg = 0;
  for (int y : labels) {
    if (y == 1) ++n_pos;
    else if (y == 0) ++n_neg;
    else throw std::invalid_argument("auc: labels must be 0 or 1");
  }
  if (n_pos == 0 || n_neg == 0)
    throw std::invalid_argument("auc: both classes must be present");

  // Average ranks with tie correction; AUC = (R_pos - n_pos(n_pos+1)/2) / (n_pos n_neg).
  std::vector<size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&scores](size_t a, size_t b) { return scores[a] < scores[b]; });
  double rank_pos_sum = 0.0;
  size_t i = 0;
  while (i < idx.size()) {
    size_t j = i;
    while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
    for (size_t k = i; k <= j; ++k)
      if (labels[idx[k]] == 1) rank_pos_sum += avg_rank;
    i = j + 1;
  }
  const double u = rank_pos_sum - 0.5 * static_cast<double>(n_pos) * (n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

void fit_gaussian(const FeatureSet& s, Vec& mu, Mat& cov) {
  const int n = s.count(), d = s.dim();
  if (n == 0) throw std::invalid_argument("fid: empty feature set");
  Mat x(n, d);
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(s.vectors[static_cast<size_t>(i)].size()) != d)
      throw std::invalid_argument("fid: ragged feature set");
    for (int j = 0; j < d; ++j) x(i, j) = s.vectors[static_cast<size_t>(i)][static_cast<size_t>(j)];
  }
  mu = x.colwise().mean();
  const Mat centered = x.rowwise() - mu.transpose();
  cov = n > 1 ? Mat((centered.transpose() * centered) / static_cast<double>(n - 1))
              : Mat(Mat::Zero(d, d));
  if (n <= d) cov += 1e-6 * Mat::Identity(d, d);
}

Mat psd_sqrt(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (m + m.transpose()));
  Vec vals = eig.eigenvalues();
  for (int i = 0; i < vals.size(); ++i) vals[i] = std::sqrt(std::max(vals[i], 0.0));
  return eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

double fid(const FeatureSet& a, const FeatureSet& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("fid: dimension mismatch");
  Vec mu_a, mu_b;
  Mat cov_a, cov_b;
  fit_gaussian(a, mu_a, cov_a);
  fit_gaussian(b, mu_b, cov_b);

  const Mat root_a = psd_sqrt(cov_a);
  const Mat inner = root_a * cov_b * root_a;
  Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (inner + inner.transpose()));
  double trace_sqrt = 0.0;
  for (int i = 0; i < eig.eigenvalues().size(); ++i)
    trace_sqrt += std::sqrt(std::max(eig.eigenvalues()[i], 0.0));

  const double value = (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() -
                       2.0 * trace_sqrt;
  return std::max(value, 0.0);
}

FidQuartet fid_quartet(const FeatureSet& target, const FeatureSet& reference,
                       const FeatureSet& counterfactual, const FeatureSet& target_masked,
                       const FeatureSet& counterfactual_masked) {
  FidQuartet q;
  q.target_reference = fid(target, reference);
  q.counterfactual_reference = fid(counterfactual, reference);
  q.target_counterfactual = fid(target, counterfactual);
  if (target_masked.count() > 0 && counterfactual_masked.count() > 0) {
    q.target_counterfactual_masked = fid(target_masked, counterfactual_masked);
    q.masked_available = true;
  }
  return q;
}

double symmetric_prior_test(const std::vector<double>& healthy_fids,
                            const std::vector<double>& unhealthy_fids) {
  const auto moments = [](const std::vector<double>& v) {
    if (v.size() < 2)
      throw std::invalid_argument("symmetric_prior_test: need >= 2 entries per group");
    const double n = static_cast<double>(v.size());
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= (n - 1.0);
    return std::pair{mean, var};
  };
  const auto [mh, vh] = moments(healthy_fids);
  const auto [mu, vu] = moments(unhealthy_fids);
  const double nh = static_cast<double>(healthy_fids.size());
  const double nu = static_cast<double>(unhealthy_fids.size());
  const double se2 = vh / nh + vu / nu;
  if (se2 <= 0.0)
    throw std::invalid_argument("symmetric_prior_test: degenerate variance in both groups");

  const double t = (mh - mu) / std::sqrt(se2);
  const double df = se2 * se2 /
                    ((vh / nh) * (vh / nh) / (nh - 1.0) + (vu / nu) * (vu / nu) / (nu - 1.0));
  boost::math::students_t dist(df);
  return boost::math::cdf(dist, t);
}

std::string MetricsReport::to_json() const {
  nlohmann::json j;
  j["auc"] = auc;
  j["localization_error"] = localization_error;
  j["fid"]["target_reference"] = fids.target_reference;
  j["fid"]["counterfactual_reference"] = fids.counterfactual_reference;
  j["fid"]["target_counterfactual"] = fids.target_counterfactual;
  if (fids.masked_available)
    j["fid"]["target_counterfactual_masked"] = fids.target_counterfactual_masked;
  if (std::isfinite(p_value)) j["p_value"] = p_value;
  return j.dump();
}

}  // namespace cgn::metrics
