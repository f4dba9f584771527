// Shared helpers for building small datasets in tests.
#pragma once

#include <string>
#include <vector>

#include "rankcorr/dataset.hpp"
#include "rankcorr/rng.hpp"

namespace testutil {

inline rankcorr::ClusteredDataset make_dataset(
    const std::vector<std::vector<double>>& x,
    const std::vector<std::vector<double>>& y,
    rankcorr::VariableSpec x_spec = {}, rankcorr::VariableSpec y_spec = {}) {
  rankcorr::DatasetBuilder b(x_spec, y_spec);
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < x[i].size(); ++j)
      b.add("c" + std::to_string(i), x[i][j], y[i][j]);
  return b.build();
}

// Random clustered dataset with ties (values on a coarse grid).
inline rankcorr::ClusteredDataset random_tied_dataset(rankcorr::Rng& rng,
                                                      std::size_t n_clusters,
                                                      std::size_t max_k) {
  std::vector<std::vector<double>> x(n_clusters), y(n_clusters);
  for (std::size_t i = 0; i < n_clusters; ++i) {
    const std::size_t k = 1 + rng.uniform_int(0, max_k - 1);
    for (std::size_t j = 0; j < k; ++j) {
      x[i].push_back(std::floor(rng.normal() * 3.0));
      y[i].push_back(std::floor(rng.normal() * 3.0));
    }
  }
  return make_dataset(x, y);
}

// Strictly increasing value remap: each distinct value goes to an arbitrary
// but order-preserving target, so rank structure is untouched exactly.
inline std::vector<double> monotone_remap(const std::vector<double>& v) {
  std::vector<double> sorted(v);
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const std::size_t r = static_cast<std::size_t>(
        std::lower_bound(sorted.begin(), sorted.end(), v[i]) - sorted.begin());
    out[i] = -4.0 + 1.75 * static_cast<double>(r) * static_cast<double>(r + 3);
  }
  return out;
}

inline rankcorr::ClusteredDataset remap_xy(const rankcorr::ClusteredDataset& ds,
                                           bool remap_x, bool remap_y) {
  std::vector<double> x = ds.x(), y = ds.y();
  if (remap_x) x = monotone_remap(x);
  if (remap_y) y = monotone_remap(y);
  std::vector<std::size_t> offsets(ds.n_clusters() + 1, 0);
  for (std::size_t i = 0; i < ds.n_clusters(); ++i)
    offsets[i + 1] = offsets[i] + ds.cluster_size(i);
  return rankcorr::ClusteredDataset(ds.cluster_ids(), offsets, x, y, ds.x_spec(),
                                    ds.y_spec());
}

}  // namespace testutil
