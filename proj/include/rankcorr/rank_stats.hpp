#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "rankcorr/dataset.hpp"
#include "rankcorr/errors.hpp"
#include "rankcorr/midcdf.hpp"
#include "rankcorr/weights.hpp"

namespace rankcorr {

enum class Axis { X, Y };

inline std::span<const double> axis_values(const ClusteredDataset& ds, Axis a) {
  return a == Axis::X ? std::span<const double>(ds.x()) : std::span<const double>(ds.y());
}

// Weighted Pearson correlation with weighted centering.
inline double weighted_corr(std::span<const double> a, std::span<const double> b,
                            std::span<const double> w) {
  if (a.size() != b.size() || a.size() != w.size())
    throw data_error("weighted_corr: length mismatch");
  double sw = 0.0, ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sw += w[i];
    ma += w[i] * a[i];
    mb += w[i] * b[i];
  }
  if (sw <= 0.0) throw data_error("weighted_corr: nonpositive weight total");
  ma /= sw;
  mb /= sw;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += w[i] * da * db;
    saa += w[i] * da * da;
    sbb += w[i] * db * db;
  }
  if (saa <= 0.0 || sbb <= 0.0)
    throw numeric_error("correlation undefined: a variable is constant");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

// Plug-in total Spearman rank correlation: weighted Pearson correlation of
// the weighted mid-CDF values of x and y.
inline double total_spearman(const ClusteredDataset& ds, const WeightVector& wv) {
  ds.require_estimable();
  const auto sx = midcdf_scores(ds.x(), wv.w);
  const auto sy = midcdf_scores(ds.y(), wv.w);
  return weighted_corr(sx, sy, wv.w);
}

// Rank intraclass correlation estimate together with the finite-cluster
// D correction and the shared denominator, for diagnostics.
struct RankIccEstimate {
  double gamma_i = 0.0;
  double d_hat = 0.0;
  double pair_numerator = 0.0;    // grand-mean centered pair sum
  double within_numerator = 0.0;  // cluster-mean centered pair sum (D)
  double denominator = 0.0;
  WeightScheme scheme = WeightScheme::EqualCluster;
};

namespace detail {

// Shared sums for rank_icc and d_correction over a flat value array with
// CSR cluster offsets. Clusters of size 1 contribute only to the denominator.
inline RankIccEstimate icc_sums(std::span<const double> values,
                                const std::vector<std::size_t>& offsets,
                                const WeightVector& wv) {
  const std::size_t n = offsets.size() - 1;
  const auto s = midcdf_scores(values, wv.w);
  double grand = 0.0;
  for (std::size_t j = 0; j < s.size(); ++j) grand += wv.w[j] * s[j];

  RankIccEstimate out;
  out.scheme = wv.scheme;
  bool any_pair = false;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t b = offsets[i], e = offsets[i + 1];
    const double k = static_cast<double>(e - b);
    double dsum = 0.0, dsq = 0.0;    // grand-centered
    double csum = 0.0;               // cluster mean of scores
    for (std::size_t j = b; j < e; ++j) {
      const double d = s[j] - grand;
      dsum += d;
      dsq += d * d;
      csum += s[j];
      out.denominator += wv.w[j] * d * d;
    }
    if (e - b < 2) continue;
    any_pair = true;
    const double pair_scale = wv.cluster_w[i] * 2.0 / (k * (k - 1.0));
    out.pair_numerator += pair_scale * 0.5 * (dsum * dsum - dsq);
    const double cmean = csum / k;
    double wsum = 0.0, wsq = 0.0;    // cluster-mean centered
    for (std::size_t j = b; j < e; ++j) {
      const double d = s[j] - cmean;
      wsum += d;
      wsq += d * d;
    }
    out.within_numerator += pair_scale * 0.5 * (wsum * wsum - wsq);
  }
  if (out.denominator <= 0.0)
    throw numeric_error("rank ICC undefined: variable is constant");
  out.gamma_i = any_pair ? out.pair_numerator / out.denominator : 0.0;
  out.d_hat = out.within_numerator / out.denominator;
  if (!any_pair) out.d_hat = 0.0;  // all singleton clusters, by convention
  return out;
}

}  // namespace detail

inline RankIccEstimate rank_icc(std::span<const double> values,
                                const std::vector<std::size_t>& offsets,
                                const WeightVector& wv) {
  bool any_pair = false;
  for (std::size_t i = 0; i + 1 < offsets.size(); ++i)
    if (offsets[i + 1] - offsets[i] >= 2) any_pair = true;
  if (!any_pair)
    throw numeric_error("rank ICC needs at least one cluster with 2+ observations");
  return detail::icc_sums(values, offsets, wv);
}

inline double d_correction(std::span<const double> values,
                           const std::vector<std::size_t>& offsets,
                           const WeightVector& wv) {
  return detail::icc_sums(values, offsets, wv).d_hat;
}

inline std::vector<std::size_t> cluster_offsets(const ClusteredDataset& ds) {
  std::vector<std::size_t> offsets(ds.n_clusters() + 1);
  offsets[0] = 0;
  for (std::size_t i = 0; i < ds.n_clusters(); ++i)
    offsets[i + 1] = offsets[i] + ds.cluster_size(i);
  return offsets;
}

inline RankIccEstimate rank_icc(const ClusteredDataset& ds, Axis axis,
                                const WeightVector& wv) {
  return rank_icc(axis_values(ds, axis), cluster_offsets(ds), wv);
}

inline double d_correction(const ClusteredDataset& ds, Axis axis,
                           const WeightVector& wv) {
  return d_correction(axis_values(ds, axis), cluster_offsets(ds), wv);
}

// Classical tie-corrected Spearman correlation of two pooled samples
// (Pearson correlation of midranks).
inline double pooled_spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw data_error("pooled_spearman: length mismatch");
  if (a.size() < 2) throw data_error("pooled_spearman: need >= 2 observations");
  std::vector<double> w(a.size(), 1.0 / static_cast<double>(a.size()));
  const auto ra = midcdf_scores(a, w);
  const auto rb = midcdf_scores(b, w);
  return weighted_corr(ra, rb, w);
}

}  // namespace rankcorr
