#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "rankcorr/midcdf.hpp"
#include "rankcorr/rng.hpp"

using namespace rankcorr;

TEST_CASE("mid-CDF of (1,2,2) with equal weights") {
  const std::vector<double> v{1, 2, 2};
  const std::vector<double> w(3, 1.0 / 3.0);
  const auto cdf = MidCdf::build(v, w);
  const auto p2 = cdf.eval(2.0);
  REQUIRE(p2.cdf == Catch::Approx(1.0));
  REQUIRE(p2.cdf_left == Catch::Approx(1.0 / 3.0));
  REQUIRE(p2.mid == Catch::Approx(2.0 / 3.0));
  const auto p1 = cdf.eval(1.0);
  REQUIRE(p1.mid == Catch::Approx(1.0 / 6.0));

  // below the minimum and between/above support points
  REQUIRE(cdf.eval(0.0).cdf == 0.0);
  REQUIRE(cdf.eval(0.0).mid == 0.0);
  REQUIRE(cdf.eval(1.5).cdf == Catch::Approx(1.0 / 3.0));
  REQUIRE(cdf.eval(9.0).cdf == Catch::Approx(1.0));
}

TEST_CASE("single point has mid-CDF one half") {
  const std::vector<double> v{5};
  const std::vector<double> w{1.0};
  REQUIRE(MidCdf::build(v, w).eval(5.0).mid == Catch::Approx(0.5));
}

TEST_CASE("equal weights reduce the mid-CDF to midranks") {
  Rng rng(42);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 3 + rng.uniform_int(0, 40);
    std::vector<double> v(n), w(n, 1.0 / static_cast<double>(n));
    for (auto& x : v) x = std::floor(rng.uniform() * 10.0);  // plenty of ties
    const auto scores = midcdf_scores(v, w);
    const auto ranks = oracle::midranks(v);
    for (std::size_t i = 0; i < n; ++i)
      REQUIRE(scores[i] ==
              Catch::Approx((ranks[i] - 0.5) / static_cast<double>(n)).margin(1e-14));
  }
}

TEST_CASE("mid-CDF invariants on weighted samples") {
  Rng rng(7);
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t n = 2 + rng.uniform_int(0, 30);
    std::vector<double> v(n), w(n);
    double tot = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      v[i] = std::floor(rng.uniform() * 6.0);
      w[i] = 0.1 + rng.uniform();
      tot += w[i];
    }
    for (auto& x : w) x /= tot;
    const auto cdf = MidCdf::build(v, w);
    REQUIRE(std::fabs(cdf.cdf().back() - 1.0) < 1e-12);
    double prev = 0.0;
    for (std::size_t i = 0; i < cdf.support().size(); ++i) {
      REQUIRE(cdf.cdf_left()[i] <= cdf.cdf()[i]);
      REQUIRE(cdf.cdf()[i] >= prev);
      prev = cdf.cdf()[i];
      const auto p = cdf.eval(cdf.support()[i]);
      REQUIRE(p.mid > 0.0);
      REQUIRE(p.mid < 1.0);
    }
  }
}

TEST_CASE("mid-CDF rejects bad input") {
  REQUIRE_THROWS_AS(MidCdf::build({}, {}), data_error);
  const std::vector<double> v{1, 2};
  const std::vector<double> w{1.0};
  REQUIRE_THROWS_AS(MidCdf::build(v, w), data_error);
  REQUIRE_THROWS_AS(midcdf_scores(v, w), data_error);
}
