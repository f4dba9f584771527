#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "rankcorr/errors.hpp"

namespace rankcorr {

struct MidCdfPoint {
  double cdf = 0.0;       // F(v)
  double cdf_left = 0.0;  // F(v-)
  double mid = 0.0;       // F*(v) = (F(v) + F(v-)) / 2
};

// Weighted empirical step-function CDF with left limits and mid-CDF.
// F(x) = sum w_ij I(value_ij <= x), F(x-) = sum w_ij I(value_ij < x).
class MidCdf {
public:
  static MidCdf build(std::span<const double> values, std::span<const double> weights) {
    if (values.empty()) throw data_error("mid-CDF of empty value list");
    if (values.size() != weights.size())
      throw data_error("mid-CDF: values/weights length mismatch");
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    MidCdf out;
    double acc = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
      const double v = values[order[i]];
      double mass = 0.0;
      while (i < order.size() && values[order[i]] == v) {
        mass += weights[order[i]];
        ++i;
      }
      out.support_.push_back(v);
      out.cdf_left_.push_back(acc);
      acc += mass;
      out.cdf_.push_back(acc);
    }
    return out;
  }

  MidCdfPoint eval(double v) const {
    auto it = std::upper_bound(support_.begin(), support_.end(), v);
    if (it == support_.begin()) return {0.0, 0.0, 0.0};
    const std::size_t idx = static_cast<std::size_t>(it - support_.begin()) - 1;
    MidCdfPoint p;
    if (support_[idx] == v) {
      p.cdf = cdf_[idx];
      p.cdf_left = cdf_left_[idx];
    } else {
      p.cdf = p.cdf_left = cdf_[idx];  // between support points
    }
    p.mid = 0.5 * (p.cdf + p.cdf_left);
    return p;
  }

  const std::vector<double>& support() const { return support_; }
  const std::vector<double>& cdf() const { return cdf_; }
  const std::vector<double>& cdf_left() const { return cdf_left_; }

private:
  std::vector<double> support_, cdf_, cdf_left_;
};

// Mid-CDF of the weighted sample evaluated back at every sample point,
// in input order. One sort; ties share a value.
inline std::vector<double> midcdf_scores(std::span<const double> values,
                                         std::span<const double> weights) {
  if (values.empty()) throw data_error("mid-CDF scores of empty value list");
  if (values.size() != weights.size())
    throw data_error("mid-CDF scores: values/weights length mismatch");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> scores(values.size());
  double below = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double v = values[order[i]];
    double mass = 0.0;
    std::size_t j = i;
    while (j < order.size() && values[order[j]] == v) {
      mass += weights[order[j]];
      ++j;
    }
    const double mid = below + 0.5 * mass;
    for (std::size_t t = i; t < j; ++t) scores[order[t]] = mid;
    below += mass;
    i = j;
  }
  return scores;
}

}  // namespace rankcorr
