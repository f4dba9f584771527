#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "rankcorr/dataset.hpp"
#include "rankcorr/errors.hpp"

namespace rankcorr {

enum class WeightScheme { EqualObservation, EqualCluster };

inline const char* to_string(WeightScheme s) {
  return s == WeightScheme::EqualObservation ? "obs" : "cluster";
}

// Per-observation sampling weights summing to one, with per-cluster totals.
// EqualObservation: w_ij = 1/N. EqualCluster: w_ij = 1/(n*k_i).
struct WeightVector {
  WeightScheme scheme = WeightScheme::EqualCluster;
  std::vector<double> w;          // per observation, flat layout
  std::vector<double> cluster_w;  // w_i. = sum_j w_ij

  double total() const {
    double s = 0.0;
    for (double v : w) s += v;
    return s;
  }
};

inline WeightVector compute_weights(const ClusteredDataset& ds, WeightScheme scheme) {
  WeightVector out;
  out.scheme = scheme;
  out.w.resize(ds.n_total());
  out.cluster_w.resize(ds.n_clusters());
  const double n = static_cast<double>(ds.n_clusters());
  const double N = static_cast<double>(ds.n_total());
  for (std::size_t i = 0; i < ds.n_clusters(); ++i) {
    const double k = static_cast<double>(ds.cluster_size(i));
    const double wij = scheme == WeightScheme::EqualObservation ? 1.0 / N : 1.0 / (n * k);
    double acc = 0.0;
    for (std::size_t j = ds.cluster_begin(i); j < ds.cluster_begin(i) + ds.cluster_size(i); ++j) {
      out.w[j] = wij;
      acc += wij;
    }
    out.cluster_w[i] = acc;
  }
  return out;
}

// True when every cluster carries weight 1/n (the requirement for the
// analytic sandwich paths).
inline bool equal_cluster_weights(const WeightVector& wv) {
  if (wv.cluster_w.empty()) return false;
  const double target = 1.0 / static_cast<double>(wv.cluster_w.size());
  for (double v : wv.cluster_w)
    if (std::fabs(v - target) > 1e-12) return false;
  return true;
}

}  // namespace rankcorr
