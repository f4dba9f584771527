#pragma once

#include <span>
#include <string>
#include <vector>

#include "rankcorr/cpm.hpp"
#include "rankcorr/dataset.hpp"
#include "rankcorr/errors.hpp"
#include "rankcorr/midcdf.hpp"
#include "rankcorr/rank_stats.hpp"

namespace rankcorr {

enum class PsrMode { Cpm, Nonparametric };

inline const char* to_string(PsrMode m) {
  return m == PsrMode::Cpm ? "cpm" : "nonparametric";
}

// Probability-scale residual under the fitted conditional distribution:
// r = F(x|i) + F(x-|i) - 1, in (-1, 1). Single-observation clusters fall
// back to the nonparametric residual, which is exactly 0.
inline double psr_from_cpm(const CpmFit& fit, int cluster_idx, double value) {
  if (cluster_idx < 0 || static_cast<std::size_t>(cluster_idx) >= fit.n_clusters)
    throw data_error("psr_from_cpm: unknown cluster index");
  if (fit.cluster_count[static_cast<std::size_t>(cluster_idx)] == 1) return 0.0;
  const int c = fit.category_of(value);
  return fit.cond_cdf(c, cluster_idx) + fit.cond_cdf(c - 1, cluster_idx) - 1.0;
}

inline double psr_from_cpm(const CpmFit& fit, const ClusteredDataset& ds,
                           const std::string& cluster_id, double value) {
  return psr_from_cpm(fit, static_cast<int>(ds.index_of_cluster(cluster_id)), value);
}

// Residuals for every observation used in the fit, in fit input order.
inline std::vector<double> psr_all_from_cpm(const CpmFit& fit) {
  std::vector<double> r(fit.category.size());
  for (std::size_t o = 0; o < fit.category.size(); ++o) {
    const int i = fit.cluster[o];
    if (fit.cluster_count[static_cast<std::size_t>(i)] == 1) {
      r[o] = 0.0;
      continue;
    }
    const int c = fit.category[o];
    r[o] = fit.cond_cdf(c, i) + fit.cond_cdf(c - 1, i) - 1.0;
  }
  return r;
}

// Nonparametric residuals r = 2 F*_i(x) - 1 from the unweighted
// within-cluster empirical mid-CDF. Sums to zero within each cluster.
inline std::vector<double> psr_nonparametric(const ClusteredDataset& ds, Axis axis) {
  const auto vals = axis_values(ds, axis);
  std::vector<double> r(ds.n_total());
  for (std::size_t i = 0; i < ds.n_clusters(); ++i) {
    const std::size_t b = ds.cluster_begin(i);
    const std::size_t k = ds.cluster_size(i);
    std::vector<double> w(k, 1.0 / static_cast<double>(k));
    const auto scores = midcdf_scores(vals.subspan(b, k), w);
    for (std::size_t j = 0; j < k; ++j) r[b + j] = 2.0 * scores[j] - 1.0;
  }
  return r;
}

// Cluster medians on the latent scale: (0, beta_2, ..., beta_n). The median
// identity g(1/2) = 0 needs a symmetric link; asymmetric links are flagged.
struct MedianCoeffs {
  std::vector<double> values;  // length n, reference first
  bool median_identity = true; // false under loglog/cloglog
};

inline MedianCoeffs cluster_median_coeffs(const CpmFit& fit) {
  MedianCoeffs out;
  out.values.reserve(fit.n_clusters);
  out.values.push_back(0.0);
  out.values.insert(out.values.end(), fit.beta.begin(), fit.beta.end());
  out.median_identity = fit.link.symmetric();
  return out;
}

}  // namespace rankcorr
