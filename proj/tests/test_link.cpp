#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "rankcorr/link.hpp"
#include "rankcorr/normal.hpp"

using namespace rankcorr;

TEST_CASE("normal quantile inverts the normal CDF") {
  for (double p : {1e-10, 1e-4, 0.025, 0.2, 0.5, 0.8, 0.975, 1.0 - 1e-6}) {
    REQUIRE(norm_cdf(norm_quantile(p)) == Catch::Approx(p).epsilon(1e-12));
  }
  REQUIRE(norm_quantile(0.975) == Catch::Approx(1.9599639845).epsilon(1e-9));
  REQUIRE(z_critical(0.95) == 1.959964);
}

TEST_CASE("links invert and differentiate correctly") {
  for (auto kind : {LinkKind::Probit, LinkKind::Logit, LinkKind::Loglog,
                    LinkKind::Cloglog}) {
    const Link link{kind};
    // g(G(eta)) = eta at 1e-10 wherever G(eta) does not saturate in double
    // precision (outside these windows the identity is not representable:
    // e.g. probit G(7.5) is within 2e-14 of 1).
    double lo = -8.0, hi = 8.0;
    if (kind == LinkKind::Probit) hi = 4.5;
    if (kind == LinkKind::Loglog) lo = -2.5;
    if (kind == LinkKind::Cloglog) hi = 2.5;
    for (double eta = lo; eta <= hi; eta += 0.37) {
      REQUIRE(link.g(link.G(eta)) == Catch::Approx(eta).margin(1e-10));
      const double p = link.G(eta);
      REQUIRE(p > 0.0);
      REQUIRE(p < 1.0);
    }
    // p-side inversion across the full probability range
    for (double p : {1e-9, 1e-4, 0.01, 0.3, 0.5, 0.77, 0.99, 1.0 - 1e-6}) {
      REQUIRE(link.G(link.g(p)) == Catch::Approx(p).epsilon(1e-9));
    }
    // G strictly increasing over the representable window
    double prev = link.G(lo - 0.25);
    for (double eta = lo; eta <= hi; eta += 0.25) {
      const double cur = link.G(eta);
      REQUIRE(cur > prev);
      prev = cur;
    }
    // derivatives vs central differences
    for (double eta : {-3.1, -0.7, 0.0, 0.9, 2.8}) {
      const double h = 1e-6;
      const double d1 = (link.G(eta + h) - link.G(eta - h)) / (2 * h);
      REQUIRE(link.dG(eta) == Catch::Approx(d1).margin(1e-8));
      const double d2 = (link.dG(eta + h) - link.dG(eta - h)) / (2 * h);
      REQUIRE(link.d2G(eta) == Catch::Approx(d2).margin(1e-6));
    }
  }
}

TEST_CASE("symmetric links satisfy the median identity") {
  REQUIRE(Link{LinkKind::Probit}.symmetric());
  REQUIRE(Link{LinkKind::Logit}.symmetric());
  REQUIRE_FALSE(Link{LinkKind::Loglog}.symmetric());
  REQUIRE_FALSE(Link{LinkKind::Cloglog}.symmetric());
  REQUIRE(std::fabs(Link{LinkKind::Probit}.g(0.5)) < 1e-12);
  REQUIRE(std::fabs(Link{LinkKind::Logit}.g(0.5)) < 1e-12);
  REQUIRE(std::fabs(Link{LinkKind::Loglog}.g(0.5)) > 0.1);
}

TEST_CASE("link parsing") {
  REQUIRE(link_from_string("probit") == LinkKind::Probit);
  REQUIRE(link_from_string("cloglog") == LinkKind::Cloglog);
  REQUIRE_THROWS_AS(link_from_string("cauchit"), data_error);
}
