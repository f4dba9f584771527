#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "rankcorr/rank_stats.hpp"
#include "rankcorr/rng.hpp"
#include "rankcorr/weights.hpp"
#include "util.hpp"

using namespace rankcorr;
using testutil::make_dataset;

TEST_CASE("total Spearman is 1 under perfect concordance") {
  const auto ds = make_dataset({{1, 2}, {3, 4, 5}}, {{10, 20}, {30, 40, 50}});
  const auto w = compute_weights(ds, WeightScheme::EqualObservation);
  REQUIRE(total_spearman(ds, w) == Catch::Approx(1.0).margin(1e-14));
}

TEST_CASE("equal-observation total Spearman equals tie-corrected Spearman") {
  Rng rng(101);
  for (int rep = 0; rep < 100; ++rep) {
    const auto ds = testutil::random_tied_dataset(rng, 2 + rng.uniform_int(0, 8), 6);
    if (ds.n_total() < 2) continue;
    const auto w = compute_weights(ds, WeightScheme::EqualObservation);
    double ours;
    try {
      ours = total_spearman(ds, w);
    } catch (const numeric_error&) {
      continue;  // constant draw, skip
    }
    const double ref = oracle::spearman_midrank(ds.x(), ds.y());
    REQUIRE(std::fabs(ours - ref) < 1e-12);
  }
}

TEST_CASE("equal-cluster total Spearman equals the direct ridit correlation") {
  Rng rng(202);
  for (int rep = 0; rep < 40; ++rep) {
    const auto ds = testutil::random_tied_dataset(rng, 2 + rng.uniform_int(0, 6), 5);
    const auto w = compute_weights(ds, WeightScheme::EqualCluster);
    double ours;
    try {
      ours = total_spearman(ds, w);
    } catch (const numeric_error&) {
      continue;
    }
    const double ref = oracle::ridit_correlation(ds.x(), ds.y(), w.w);
    REQUIRE(std::fabs(ours - ref) < 1e-10);
  }
}

TEST_CASE("total Spearman rejects a constant variable") {
  const auto ds = make_dataset({{1, 1}, {1}}, {{1, 2}, {3}});
  const auto w = compute_weights(ds, WeightScheme::EqualCluster);
  REQUIRE_THROWS_AS(total_spearman(ds, w), numeric_error);
}

TEST_CASE("rank ICC and D on the single cluster (1,2,3)") {
  const std::vector<double> values{1, 2, 3};
  const std::vector<std::size_t> offsets{0, 3};
  WeightVector wv;
  wv.scheme = WeightScheme::EqualCluster;
  wv.w = {1.0 / 3, 1.0 / 3, 1.0 / 3};
  wv.cluster_w = {1.0};
  const auto est = rank_icc(values, offsets, wv);
  // hand-enumerable: F* = (1/6, 1/2, 5/6), both numerators = -1/9, denom = 2/27
  REQUIRE(est.gamma_i == Catch::Approx(-0.5).margin(1e-12));
  REQUIRE(est.d_hat == Catch::Approx(-0.5).margin(1e-12));
  const auto ref = oracle::icc_pairloops({{1, 2, 3}}, {{wv.w[0], wv.w[1], wv.w[2]}});
  REQUIRE(est.gamma_i == Catch::Approx(ref.gamma_i).margin(1e-12));
  REQUIRE(est.d_hat == Catch::Approx(ref.d_hat).margin(1e-12));
}

TEST_CASE("rank ICC matches the pair-loop oracle on random data") {
  Rng rng(33);
  for (int rep = 0; rep < 30; ++rep) {
    const auto ds = testutil::random_tied_dataset(rng, 3 + rng.uniform_int(0, 5), 5);
    const auto scheme = rep % 2 == 0 ? WeightScheme::EqualCluster
                                     : WeightScheme::EqualObservation;
    const auto w = compute_weights(ds, scheme);
    RankIccEstimate est;
    try {
      est = rank_icc(ds, Axis::X, w);
    } catch (const numeric_error&) {
      continue;
    }
    std::vector<std::vector<double>> cl, wl;
    for (std::size_t i = 0; i < ds.n_clusters(); ++i) {
      cl.emplace_back(ds.x_in(i).begin(), ds.x_in(i).end());
      wl.emplace_back(w.w.begin() + ds.cluster_begin(i),
                      w.w.begin() + ds.cluster_begin(i) + ds.cluster_size(i));
    }
    const auto ref = oracle::icc_pairloops(cl, wl);
    REQUIRE(est.gamma_i == Catch::Approx(ref.gamma_i).margin(1e-12));
    REQUIRE(est.d_hat == Catch::Approx(ref.d_hat).margin(1e-12));
    REQUIRE(est.gamma_i <= 1.0 + 1e-12);
  }
}

TEST_CASE("rank ICC near 1 when clusters are internally constant") {
  std::vector<std::vector<double>> x;
  for (int i = 0; i < 30; ++i) x.push_back(std::vector<double>(4, i));
  const auto ds = make_dataset(x, x);
  const auto w = compute_weights(ds, WeightScheme::EqualCluster);
  REQUIRE(rank_icc(ds, Axis::X, w).gamma_i > 0.95);
}

TEST_CASE("rank ICC near 0 for randomly pooled iid observations") {
  Rng rng(404);
  const std::size_t n = 60, k = 5;
  double worst = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<std::vector<double>> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        x[i].push_back(rng.normal());
        y[i].push_back(rng.normal());
      }
    const auto ds = make_dataset(x, y);
    const auto w = compute_weights(ds, WeightScheme::EqualCluster);
    worst = std::max(worst, std::fabs(rank_icc(ds, Axis::X, w).gamma_i));
  }
  REQUIRE(worst < 3.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("D correction is near 0 for large clusters and negative for paired +/-") {
  Rng rng(55);
  // large clusters from a hierarchical model
  std::vector<std::vector<double>> big(40);
  for (auto& c : big) {
    const double u = rng.normal();
    for (int j = 0; j < 200; ++j) c.push_back(u + rng.normal());
  }
  auto ds = make_dataset(big, big);
  auto w = compute_weights(ds, WeightScheme::EqualCluster);
  REQUIRE(std::fabs(d_correction(ds, Axis::X, w)) < 0.02);

  // (U+R, U-R) pairs
  std::vector<std::vector<double>> pairs(200);
  for (auto& c : pairs) {
    const double u = rng.normal(), r = rng.normal();
    c = {u + r, u - r};
  }
  ds = make_dataset(pairs, pairs);
  w = compute_weights(ds, WeightScheme::EqualCluster);
  REQUIRE(d_correction(ds, Axis::X, w) < -0.1);
}

TEST_CASE("D correction is 0 by convention when every cluster is a singleton") {
  const auto ds = make_dataset({{1}, {2}, {3}}, {{1}, {2}, {3}});
  const auto w = compute_weights(ds, WeightScheme::EqualCluster);
  REQUIRE(d_correction(ds, Axis::X, w) == 0.0);
  REQUIRE_THROWS_AS(rank_icc(ds, Axis::X, w), numeric_error);
}

TEST_CASE("rank statistics are exactly invariant to increasing transforms") {
  Rng rng(66);
  const auto ds = testutil::random_tied_dataset(rng, 8, 6);
  const auto tds = testutil::remap_xy(ds, true, true);
  for (auto scheme : {WeightScheme::EqualCluster, WeightScheme::EqualObservation}) {
    const auto w = compute_weights(ds, scheme);
    REQUIRE(total_spearman(ds, w) == total_spearman(tds, w));
    REQUIRE(rank_icc(ds, Axis::X, w).gamma_i == rank_icc(tds, Axis::X, w).gamma_i);
    REQUIRE(d_correction(ds, Axis::Y, w) == d_correction(tds, Axis::Y, w));
  }
}

TEST_CASE("equal cluster sizes make the two weight schemes agree") {
  Rng rng(77);
  std::vector<std::vector<double>> x(10), y(10);
  for (std::size_t i = 0; i < 10; ++i)
    for (int j = 0; j < 4; ++j) {
      x[i].push_back(std::floor(rng.normal() * 2.0));
      y[i].push_back(std::floor(rng.normal() * 2.0));
    }
  const auto ds = make_dataset(x, y);
  const auto wc = compute_weights(ds, WeightScheme::EqualCluster);
  const auto wo = compute_weights(ds, WeightScheme::EqualObservation);
  REQUIRE(total_spearman(ds, wc) == total_spearman(ds, wo));
  REQUIRE(rank_icc(ds, Axis::X, wc).gamma_i == rank_icc(ds, Axis::X, wo).gamma_i);
  REQUIRE(d_correction(ds, Axis::X, wc) == d_correction(ds, Axis::X, wo));
}
