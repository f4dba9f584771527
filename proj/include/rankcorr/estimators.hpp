#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rankcorr/dataset.hpp"
#include "rankcorr/errors.hpp"
#include "rankcorr/midcdf.hpp"
#include "rankcorr/psr.hpp"
#include "rankcorr/rank_stats.hpp"
#include "rankcorr/weights.hpp"

namespace rankcorr {

enum class EstimatorKind {
  Total,
  WithinPsr,
  BetweenMedian,
  BetweenApprox,
  NaiveBetween,
  NaiveWithin
};

inline const char* to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::Total: return "gamma_t";
    case EstimatorKind::WithinPsr: return "gamma_w";
    case EstimatorKind::BetweenMedian: return "gamma_b_m";
    case EstimatorKind::BetweenApprox: return "gamma_b_a";
    case EstimatorKind::NaiveBetween: return "naive_between";
    case EstimatorKind::NaiveWithin: return "naive_within";
  }
  return "?";
}

struct ConfidenceInterval {
  double lo = 0.0, hi = 0.0;
  double level = 0.95;
};

struct CorrelationEstimate {
  EstimatorKind method = EstimatorKind::Total;
  double value = 0.0;
  std::optional<double> se;
  std::optional<ConfidenceInterval> ci;
  bool clipped = false;           // BetweenApprox truncated to [-1, 1]
  WeightScheme scheme = WeightScheme::EqualCluster;
};

inline CorrelationEstimate gamma_t(const ClusteredDataset& ds, const WeightVector& wv) {
  CorrelationEstimate e;
  e.method = EstimatorKind::Total;
  e.scheme = wv.scheme;
  e.value = total_spearman(ds, wv);
  return e;
}

// Within-cluster Spearman rank correlation: weighted Pearson correlation of
// the two PSR vectors.
inline CorrelationEstimate gamma_w(std::span<const double> psr_x,
                                   std::span<const double> psr_y,
                                   const WeightVector& wv) {
  if (psr_x.size() != wv.w.size() || psr_y.size() != wv.w.size())
    throw data_error("gamma_w: residual/weight length mismatch");
  CorrelationEstimate e;
  e.method = EstimatorKind::WithinPsr;
  e.scheme = wv.scheme;
  e.value = weighted_corr(psr_x, psr_y, wv.w);
  return e;
}

// Between-cluster Spearman rank correlation over estimated cluster medians:
// weighted correlation of the cluster-weighted mid-CDF values of the two
// coefficient vectors (reference zeros included).
inline CorrelationEstimate gamma_b_median(std::span<const double> beta_x,
                                          std::span<const double> beta_y,
                                          std::span<const double> cluster_weights,
                                          WeightScheme scheme = WeightScheme::EqualCluster) {
  if (beta_x.size() != beta_y.size() || beta_x.size() != cluster_weights.size())
    throw data_error("gamma_b_median: length mismatch");
  if (beta_x.size() < 2)
    throw data_error("gamma_b_median: need at least 2 clusters");
  const auto fx = midcdf_scores(beta_x, cluster_weights);
  const auto fy = midcdf_scores(beta_y, cluster_weights);
  CorrelationEstimate e;
  e.method = EstimatorKind::BetweenMedian;
  e.scheme = scheme;
  e.value = weighted_corr(fx, fy, cluster_weights);
  return e;
}

// Inputs to the decomposition-based between-cluster estimator. Bundled so
// that every piece is guaranteed to come from the same weight scheme.
struct DecompositionInputs {
  CorrelationEstimate total;    // gamma_t
  CorrelationEstimate within;   // gamma_w
  RankIccEstimate icc_x, icc_y; // carry gamma_i and d_hat
};

inline CorrelationEstimate gamma_b_approx(const DecompositionInputs& in) {
  const WeightScheme scheme = in.total.scheme;
  if (in.within.scheme != scheme || in.icc_x.scheme != scheme ||
      in.icc_y.scheme != scheme)
    throw data_error("gamma_b_approx: mixed weight schemes across inputs");
  const double gx = in.icc_x.gamma_i - in.icc_x.d_hat;
  const double gy = in.icc_y.gamma_i - in.icc_y.d_hat;
  const double rad_b = gx * gy;
  const double rad_w = (1.0 - in.icc_x.gamma_i + in.icc_x.d_hat) *
                       (1.0 - in.icc_y.gamma_i + in.icc_y.d_hat);
  if (gx <= 0.0 || gy <= 0.0 || rad_b <= 0.0)
    throw numeric_error(
        "gamma_b_approx: unstable (rank ICC minus D correction not positive)");
  if (rad_w < 0.0)
    throw numeric_error("gamma_b_approx: negative within-weight radicand");
  CorrelationEstimate e;
  e.method = EstimatorKind::BetweenApprox;
  e.scheme = scheme;
  const double raw =
      (in.total.value - std::sqrt(rad_w) * in.within.value) / std::sqrt(rad_b);
  e.value = std::clamp(raw, -1.0, 1.0);
  e.clipped = raw != e.value;
  return e;
}

namespace detail {

inline double midpoint_median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t k = v.size();
  return k % 2 == 1 ? v[k / 2] : 0.5 * (v[k / 2 - 1] + v[k / 2]);
}

}  // namespace detail

// Naive between-cluster estimator: tie-corrected Spearman correlation of the
// sample cluster medians.
inline CorrelationEstimate naive_between(const ClusteredDataset& ds) {
  if (ds.n_clusters() < 3)
    throw data_error("naive_between: fewer than 3 clusters");
  std::vector<double> mx, my;
  for (std::size_t i = 0; i < ds.n_clusters(); ++i) {
    const auto xs = ds.x_in(i);
    const auto ys = ds.y_in(i);
    mx.push_back(detail::midpoint_median({xs.begin(), xs.end()}));
    my.push_back(detail::midpoint_median({ys.begin(), ys.end()}));
  }
  CorrelationEstimate e;
  e.method = EstimatorKind::NaiveBetween;
  e.value = pooled_spearman(mx, my);
  return e;
}

// Naive within-cluster estimator: tie-corrected Spearman correlation of the
// deviations from sample cluster medians. Requires numeric data.
inline CorrelationEstimate naive_within(const ClusteredDataset& ds) {
  if (ds.x_spec().ordinal() || ds.y_spec().ordinal())
    throw data_error("naive_within: undefined for ordinal data (needs subtraction)");
  ds.require_estimable();
  std::vector<double> dx, dy;
  dx.reserve(ds.n_total());
  dy.reserve(ds.n_total());
  for (std::size_t i = 0; i < ds.n_clusters(); ++i) {
    const auto xs = ds.x_in(i);
    const auto ys = ds.y_in(i);
    const double medx = detail::midpoint_median({xs.begin(), xs.end()});
    const double medy = detail::midpoint_median({ys.begin(), ys.end()});
    for (std::size_t j = 0; j < xs.size(); ++j) {
      dx.push_back(xs[j] - medx);
      dy.push_back(ys[j] - medy);
    }
  }
  CorrelationEstimate e;
  e.method = EstimatorKind::NaiveWithin;
  e.value = pooled_spearman(dx, dy);
  return e;
}

}  // namespace rankcorr
