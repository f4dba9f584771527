#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "rankcorr/errors.hpp"

namespace rankcorr {

enum class ValueKind { Numeric, Ordinal };

// Variable description for one axis. Ordinal variables carry the declared
// level list; observed values are stored as level codes 0..L-1.
struct VariableSpec {
  ValueKind kind = ValueKind::Numeric;
  std::vector<std::string> levels;  // ordered, ordinal only

  bool ordinal() const { return kind == ValueKind::Ordinal; }
};

// Two-level clustered paired observations in CSR layout: clusters are
// contiguous ranges of the flat x/y arrays, in first-appearance order.
// Immutable after construction; safe to share across threads.
class ClusteredDataset {
public:
  ClusteredDataset(std::vector<std::string> cluster_ids,
                   std::vector<std::size_t> offsets, std::vector<double> x,
                   std::vector<double> y, VariableSpec x_spec,
                   VariableSpec y_spec)
      : cluster_ids_(std::move(cluster_ids)),
        offsets_(std::move(offsets)),
        x_(std::move(x)),
        y_(std::move(y)),
        x_spec_(std::move(x_spec)),
        y_spec_(std::move(y_spec)) {
    validate();
  }

  std::size_t n_clusters() const { return cluster_ids_.size(); }
  std::size_t n_total() const { return x_.size(); }
  std::size_t cluster_size(std::size_t i) const {
    return offsets_[i + 1] - offsets_[i];
  }
  std::size_t cluster_begin(std::size_t i) const { return offsets_[i]; }

  const std::vector<std::string>& cluster_ids() const { return cluster_ids_; }
  const std::vector<double>& x() const { return x_; }
  const std::vector<double>& y() const { return y_; }
  const VariableSpec& x_spec() const { return x_spec_; }
  const VariableSpec& y_spec() const { return y_spec_; }

  std::span<const double> x_in(std::size_t i) const {
    return {x_.data() + offsets_[i], cluster_size(i)};
  }
  std::span<const double> y_in(std::size_t i) const {
    return {y_.data() + offsets_[i], cluster_size(i)};
  }

  // Per-observation cluster index, aligned with the flat arrays.
  std::vector<int> cluster_index() const {
    std::vector<int> idx(n_total());
    for (std::size_t i = 0; i < n_clusters(); ++i)
      for (std::size_t j = offsets_[i]; j < offsets_[i + 1]; ++j)
        idx[j] = static_cast<int>(i);
    return idx;
  }

  std::size_t index_of_cluster(const std::string& id) const {
    for (std::size_t i = 0; i < cluster_ids_.size(); ++i)
      if (cluster_ids_[i] == id) return i;
    throw data_error("unknown cluster id '" + id + "'");
  }

  // Minimum shape for any correlation estimate: n >= 2 and N >= 2.
  void require_estimable() const {
    if (n_clusters() < 2)
      throw data_error("need at least 2 clusters, got " +
                       std::to_string(n_clusters()));
    if (n_total() < 2)
      throw data_error("need at least 2 observations, got " +
                       std::to_string(n_total()));
  }

private:
  void validate() const {
    if (offsets_.size() != cluster_ids_.size() + 1 || offsets_.front() != 0 ||
        offsets_.back() != x_.size() || x_.size() != y_.size())
      throw data_error("dataset: inconsistent cluster layout");
    if (cluster_ids_.empty()) throw data_error("dataset: no clusters");
    for (std::size_t i = 0; i < cluster_ids_.size(); ++i) {
      if (offsets_[i + 1] <= offsets_[i])
        throw data_error("dataset: empty cluster '" + cluster_ids_[i] + "'");
    }
    std::unordered_map<std::string, int> seen;
    for (const auto& id : cluster_ids_)
      if (++seen[id] > 1) throw data_error("dataset: duplicate cluster id '" + id + "'");
    check_axis(x_, x_spec_, "x");
    check_axis(y_, y_spec_, "y");
  }

  static void check_axis(const std::vector<double>& v, const VariableSpec& spec,
                         const char* name) {
    if (spec.ordinal()) {
      const double L = static_cast<double>(spec.levels.size());
      if (spec.levels.size() < 2)
        throw data_error(std::string(name) + ": ordinal axis needs >= 2 levels");
      for (double d : v) {
        if (!(d >= 0.0 && d < L) || d != std::floor(d))
          throw data_error(std::string(name) + ": ordinal code out of range");
      }
    } else {
      for (double d : v)
        if (!std::isfinite(d))
          throw data_error(std::string(name) + ": non-finite numeric value");
    }
  }

  std::vector<std::string> cluster_ids_;
  std::vector<std::size_t> offsets_;
  std::vector<double> x_, y_;
  VariableSpec x_spec_, y_spec_;
};

// Groups (cluster_id, x, y) rows into a dataset, clusters ordered by first
// appearance and rows kept in input order within each cluster.
class DatasetBuilder {
public:
  DatasetBuilder(VariableSpec x_spec, VariableSpec y_spec)
      : x_spec_(std::move(x_spec)), y_spec_(std::move(y_spec)) {}

  void add(const std::string& cluster_id, double x, double y) {
    auto it = index_.find(cluster_id);
    std::size_t i;
    if (it == index_.end()) {
      i = rows_.size();
      index_.emplace(cluster_id, i);
      rows_.push_back({cluster_id, {}, {}});
    } else {
      i = it->second;
    }
    rows_[i].x.push_back(x);
    rows_[i].y.push_back(y);
  }

  ClusteredDataset build() const {
    if (rows_.empty()) throw data_error("no data rows");
    std::vector<std::string> ids;
    std::vector<std::size_t> offsets{0};
    std::vector<double> x, y;
    for (const auto& r : rows_) {
      ids.push_back(r.id);
      x.insert(x.end(), r.x.begin(), r.x.end());
      y.insert(y.end(), r.y.begin(), r.y.end());
      offsets.push_back(x.size());
    }
    return ClusteredDataset(std::move(ids), std::move(offsets), std::move(x),
                            std::move(y), x_spec_, y_spec_);
  }

private:
  struct Group {
    std::string id;
    std::vector<double> x, y;
  };
  VariableSpec x_spec_, y_spec_;
  std::vector<Group> rows_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace rankcorr
