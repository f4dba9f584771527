// Test-only reference implementations, kept deliberately independent of the
// library's computation paths: direct counting, explicit pair loops, dense
// matrices, and finite differences.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

namespace oracle {

// Midrank of each element by direct counting (O(N^2)).
inline std::vector<double> midranks(std::span<const double> v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double below = 0.0, equal = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (v[j] < v[i]) below += 1.0;
      if (v[j] == v[i]) equal += 1.0;
    }
    r[i] = below + 0.5 * (equal + 1.0);
  }
  return r;
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// Tie-corrected Spearman correlation: Pearson correlation of midranks.
inline double spearman_midrank(std::span<const double> x, std::span<const double> y) {
  const auto rx = midranks(x);
  const auto ry = midranks(y);
  return pearson(rx, ry);
}

// Ridit-correlation form of the weighted total Spearman estimator, computed
// by direct indicator double loops.
inline double ridit_correlation(std::span<const double> x, std::span<const double> y,
                                std::span<const double> w) {
  const std::size_t N = x.size();
  std::vector<double> fx(N), fy(N);
  for (std::size_t i = 0; i < N; ++i) {
    double ax = 0.0, ay = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
      ax += w[j] * ((x[j] < x[i]) + 0.5 * (x[j] == x[i]));
      ay += w[j] * ((y[j] < y[i]) + 0.5 * (y[j] == y[i]));
    }
    fx[i] = ax;
    fy[i] = ay;
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    mx += w[i] * fx[i];
    my += w[i] * fy[i];
  }
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    sab += w[i] * (fx[i] - mx) * (fy[i] - my);
    saa += w[i] * (fx[i] - mx) * (fx[i] - mx);
    sbb += w[i] * (fy[i] - my) * (fy[i] - my);
  }
  return sab / std::sqrt(saa * sbb);
}

// Rank ICC and D correction evaluated with explicit j < j' pair loops over
// per-cluster value lists.
struct IccOracle {
  double gamma_i, d_hat;
};

inline IccOracle icc_pairloops(const std::vector<std::vector<double>>& clusters,
                               const std::vector<std::vector<double>>& weights) {
  std::vector<double> flat, wflat;
  for (std::size_t i = 0; i < clusters.size(); ++i)
    for (std::size_t j = 0; j < clusters[i].size(); ++j) {
      flat.push_back(clusters[i][j]);
      wflat.push_back(weights[i][j]);
    }
  // weighted mid-CDF values by direct counting
  std::vector<double> f(flat.size());
  for (std::size_t i = 0; i < flat.size(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < flat.size(); ++j)
      acc += wflat[j] * ((flat[j] < flat[i]) + 0.5 * (flat[j] == flat[i]));
    f[i] = acc;
  }
  double grand = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) grand += wflat[i] * f[i];
  double denom = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i)
    denom += wflat[i] * (f[i] - grand) * (f[i] - grand);

  double num_icc = 0.0, num_d = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    const std::size_t k = clusters[i].size();
    double wi = 0.0;
    for (double wv : weights[i]) wi += wv;
    if (k >= 2) {
      const double scale = wi * 2.0 / (static_cast<double>(k) * (static_cast<double>(k) - 1.0));
      double cmean = 0.0;
      for (std::size_t j = 0; j < k; ++j) cmean += f[pos + j];
      cmean /= static_cast<double>(k);
      for (std::size_t j = 0; j < k; ++j)
        for (std::size_t jp = j + 1; jp < k; ++jp) {
          num_icc += scale * (f[pos + j] - grand) * (f[pos + jp] - grand);
          num_d += scale * (f[pos + j] - cmean) * (f[pos + jp] - cmean);
        }
    }
    pos += k;
  }
  return {num_icc / denom, num_d / denom};
}

// Central finite-difference gradient of a scalar function.
inline std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> theta, double h = 1e-6) {
  std::vector<double> g(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double orig = theta[i];
    theta[i] = orig + h;
    const double up = f(theta);
    theta[i] = orig - h;
    const double dn = f(theta);
    theta[i] = orig;
    g[i] = (up - dn) / (2.0 * h);
  }
  return g;
}

}  // namespace oracle
