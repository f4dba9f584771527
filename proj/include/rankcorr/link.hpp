#pragma once

#include <cmath>
#include <string>

#include "rankcorr/errors.hpp"
#include "rankcorr/normal.hpp"

namespace rankcorr {

enum class LinkKind { Probit, Logit, Loglog, Cloglog };

inline const char* to_string(LinkKind k) {
  switch (k) {
    case LinkKind::Probit: return "probit";
    case LinkKind::Logit: return "logit";
    case LinkKind::Loglog: return "loglog";
    case LinkKind::Cloglog: return "cloglog";
  }
  return "?";
}

inline LinkKind link_from_string(const std::string& s) {
  if (s == "probit") return LinkKind::Probit;
  if (s == "logit") return LinkKind::Logit;
  if (s == "loglog") return LinkKind::Loglog;
  if (s == "cloglog") return LinkKind::Cloglog;
  throw data_error("unknown link '" + s + "'");
}

// Cumulative link: G maps the latent scale onto (0,1), g = G^-1.
// dG and d2G are the first and second derivatives of G.
struct Link {
  LinkKind kind = LinkKind::Probit;

  double G(double eta) const {
    switch (kind) {
      case LinkKind::Probit:
        return norm_cdf(eta);
      case LinkKind::Logit: {
        if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
        const double e = std::exp(eta);
        return e / (1.0 + e);
      }
      case LinkKind::Loglog:
        return std::exp(-std::exp(-eta));
      case LinkKind::Cloglog:
        return -std::expm1(-std::exp(eta));
    }
    return 0.0;
  }

  double dG(double eta) const {
    switch (kind) {
      case LinkKind::Probit:
        return norm_pdf(eta);
      case LinkKind::Logit: {
        const double p = G(eta);
        return p * (1.0 - p);
      }
      case LinkKind::Loglog:
        return std::exp(-std::exp(-eta) - eta);
      case LinkKind::Cloglog:
        return std::exp(eta - std::exp(eta));
    }
    return 0.0;
  }

  double d2G(double eta) const {
    switch (kind) {
      case LinkKind::Probit:
        return -eta * norm_pdf(eta);
      case LinkKind::Logit: {
        const double p = G(eta);
        return p * (1.0 - p) * (1.0 - 2.0 * p);
      }
      case LinkKind::Loglog:
        return dG(eta) * (std::exp(-eta) - 1.0);
      case LinkKind::Cloglog:
        return dG(eta) * (1.0 - std::exp(eta));
    }
    return 0.0;
  }

  // Quantile (link) function g(p) = G^-1(p).
  double g(double p) const {
    if (!(p > 0.0 && p < 1.0)) throw numeric_error("link g(p): p outside (0,1)");
    switch (kind) {
      case LinkKind::Probit:
        return norm_quantile(p);
      case LinkKind::Logit:
        return std::log(p / (1.0 - p));
      case LinkKind::Loglog:
        return -std::log(-std::log(p));
      case LinkKind::Cloglog:
        return std::log(-std::log1p(-p));
    }
    return 0.0;
  }

  // Median identity g(1/2) = 0 holds for symmetric links only.
  bool symmetric() const {
    return kind == LinkKind::Probit || kind == LinkKind::Logit;
  }
};

}  // namespace rankcorr
