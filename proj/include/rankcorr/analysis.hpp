#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rankcorr/cpm.hpp"
#include "rankcorr/dataset.hpp"
#include "rankcorr/errors.hpp"
#include "rankcorr/estimators.hpp"
#include "rankcorr/inference.hpp"
#include "rankcorr/psr.hpp"
#include "rankcorr/rank_stats.hpp"
#include "rankcorr/weights.hpp"

namespace rankcorr {

enum class CiMethod { None, Analytic, Bootstrap };

inline const char* to_string(CiMethod m) {
  switch (m) {
    case CiMethod::None: return "none";
    case CiMethod::Analytic: return "analytic";
    case CiMethod::Bootstrap: return "bootstrap";
  }
  return "?";
}

struct AnalysisOptions {
  WeightScheme scheme = WeightScheme::EqualCluster;
  Link link{LinkKind::Probit};
  PsrMode psr = PsrMode::Cpm;
  CiMethod ci = CiMethod::Analytic;
  int boot_reps = 1000;
  std::uint64_t seed = 1;
  double level = 0.95;
  CpmOptions cpm;
};

// Point estimate by tag, computed from scratch. This is the callable the
// cluster bootstrap resamples.
inline double estimate_value(const ClusteredDataset& ds, EstimatorKind kind,
                             const AnalysisOptions& opt) {
  const auto wv = compute_weights(ds, opt.scheme);
  switch (kind) {
    case EstimatorKind::Total:
      return total_spearman(ds, wv);
    case EstimatorKind::NaiveBetween:
      return naive_between(ds).value;
    case EstimatorKind::NaiveWithin:
      return naive_within(ds).value;
    default:
      break;
  }
  const auto fit_x = fit_cpm(ds, Axis::X, opt.link, opt.cpm);
  const auto fit_y = fit_cpm(ds, Axis::Y, opt.link, opt.cpm);
  if (kind == EstimatorKind::BetweenMedian) {
    return gamma_b_median(cluster_median_coeffs(fit_x).values,
                          cluster_median_coeffs(fit_y).values, wv.cluster_w,
                          opt.scheme)
        .value;
  }
  const auto xr = opt.psr == PsrMode::Cpm ? psr_all_from_cpm(fit_x)
                                          : psr_nonparametric(ds, Axis::X);
  const auto yr = opt.psr == PsrMode::Cpm ? psr_all_from_cpm(fit_y)
                                          : psr_nonparametric(ds, Axis::Y);
  if (kind == EstimatorKind::WithinPsr) return gamma_w(xr, yr, wv).value;

  DecompositionInputs in;
  in.total = gamma_t(ds, wv);
  in.within = gamma_w(xr, yr, wv);
  in.icc_x = rank_icc(ds, Axis::X, wv);
  in.icc_y = rank_icc(ds, Axis::Y, wv);
  return gamma_b_approx(in).value;
}

struct FullEstimates {
  std::optional<CorrelationEstimate> total, within, between_m, between_a;
  std::optional<CorrelationEstimate> naive_b, naive_w;
  std::optional<RankIccEstimate> icc_x, icc_y;
  bool median_identity = true;
  std::vector<std::string> notes;
};

namespace detail {

inline void attach_bootstrap(CorrelationEstimate& est, const ClusteredDataset& ds,
                             EstimatorKind kind, const AnalysisOptions& opt) {
  const auto res = cluster_bootstrap(
      ds, [kind, &opt](const ClusteredDataset& d) { return estimate_value(d, kind, opt); },
      opt.boot_reps, opt.seed, opt.level);
  est.se = res.se;
  est.ci = res.ci;
}

}  // namespace detail

// Full estimation pipeline: all estimators, rank ICCs and D corrections,
// with the configured confidence-interval method. Analytic-path failures
// fall back to the cluster bootstrap with an explanatory note.
inline FullEstimates estimate_all(const ClusteredDataset& ds, const AnalysisOptions& opt) {
  ds.require_estimable();
  const auto wv = compute_weights(ds, opt.scheme);

  if (opt.ci == CiMethod::Analytic && opt.scheme == WeightScheme::EqualObservation &&
      !equal_cluster_weights(wv))
    throw data_error(
        "analytic confidence intervals require equal cluster weights "
        "(--weights cluster); rerun with --ci bootstrap for observation weights");
  if (opt.ci == CiMethod::Analytic && opt.psr == PsrMode::Nonparametric)
    throw data_error(
        "analytic confidence intervals apply to CPM residuals (--psr cpm); "
        "rerun with --ci bootstrap for nonparametric residuals");

  FullEstimates out;
  auto note = [&](const std::string& s) { out.notes.push_back(s); };

  // total correlation
  try {
    auto total = gamma_t(ds, wv);
    if (opt.ci == CiMethod::Analytic) {
      const auto inf = var_gamma_t_influence(ds, wv, total.value, opt.level);
      total.se = inf.se;
      total.ci = inf.ci;
    } else if (opt.ci == CiMethod::Bootstrap) {
      detail::attach_bootstrap(total, ds, EstimatorKind::Total, opt);
    }
    out.total = total;
  } catch (const std::exception& e) {
    note(std::string("gamma_t: ") + e.what());
  }

  // rank ICCs and D corrections
  try {
    out.icc_x = rank_icc(ds, Axis::X, wv);
    out.icc_y = rank_icc(ds, Axis::Y, wv);
  } catch (const std::exception& e) {
    note(std::string("rank_icc: ") + e.what());
  }

  // CPM fits
  std::optional<CpmFit> fit_x, fit_y;
  try {
    fit_x = fit_cpm(ds, Axis::X, opt.link, opt.cpm);
    fit_y = fit_cpm(ds, Axis::Y, opt.link, opt.cpm);
  } catch (const std::exception& e) {
    note(std::string("cpm: ") + e.what());
  }

  std::optional<CpmInference> inf_x, inf_y;
  auto analytic_ready = [&]() -> bool {
    if (!fit_x || !fit_y) return false;
    if (inf_x) return true;
    try {
      inf_x.emplace(*fit_x);
      inf_y.emplace(*fit_y);
      return true;
    } catch (const std::exception& e) {
      note(std::string("analytic inference unavailable, using bootstrap: ") + e.what());
      inf_x.reset();
      inf_y.reset();
      return false;
    }
  };

  // within-cluster correlation
  if (fit_x && fit_y) {
    try {
      const auto xr = opt.psr == PsrMode::Cpm ? psr_all_from_cpm(*fit_x)
                                              : psr_nonparametric(ds, Axis::X);
      const auto yr = opt.psr == PsrMode::Cpm ? psr_all_from_cpm(*fit_y)
                                              : psr_nonparametric(ds, Axis::Y);
      auto within = gamma_w(xr, yr, wv);
      if (opt.ci == CiMethod::Analytic) {
        bool done = false;
        if (equal_cluster_weights(wv) && analytic_ready()) {
          try {
            const auto sw = sandwich_gamma_w(ds, *inf_x, *inf_y, wv, within.value, opt.level);
            within.se = sw.se;
            within.ci = sw.ci;
            done = true;
          } catch (const std::exception& e) {
            note(std::string("gamma_w sandwich failed, using bootstrap: ") + e.what());
          }
        } else if (!equal_cluster_weights(wv)) {
          note("gamma_w: unequal cluster weights, using bootstrap");
        }
        if (!done) detail::attach_bootstrap(within, ds, EstimatorKind::WithinPsr, opt);
      } else if (opt.ci == CiMethod::Bootstrap) {
        detail::attach_bootstrap(within, ds, EstimatorKind::WithinPsr, opt);
      }
      out.within = within;
    } catch (const std::exception& e) {
      note(std::string("gamma_w: ") + e.what());
    }
  }

  // between-cluster correlations
  if (fit_x && fit_y) {
    const auto med_x = cluster_median_coeffs(*fit_x);
    const auto med_y = cluster_median_coeffs(*fit_y);
    out.median_identity = med_x.median_identity && med_y.median_identity;
    if (!out.median_identity)
      note("cluster medians from an asymmetric link: the median identity g(0.5)=0 "
           "does not hold; between-cluster estimates are flagged");
    std::optional<SandwichResult> sb;
    try {
      auto bm = gamma_b_median(med_x.values, med_y.values, wv.cluster_w, opt.scheme);
      if (opt.ci == CiMethod::Analytic) {
        bool done = false;
        if (equal_cluster_weights(wv) && analytic_ready()) {
          try {
            sb = sandwich_gamma_b(ds, *inf_x, *inf_y, wv, bm.value, opt.level);
            bm.se = sb->se;
            bm.ci = sb->ci;
            done = true;
          } catch (const std::exception& e) {
            note(std::string("gamma_b_m sandwich failed, using bootstrap: ") + e.what());
          }
        } else if (!equal_cluster_weights(wv)) {
          note("gamma_b_m: unequal cluster weights, using bootstrap");
        }
        if (!done) detail::attach_bootstrap(bm, ds, EstimatorKind::BetweenMedian, opt);
      } else if (opt.ci == CiMethod::Bootstrap) {
        detail::attach_bootstrap(bm, ds, EstimatorKind::BetweenMedian, opt);
      }
      out.between_m = bm;
    } catch (const std::exception& e) {
      note(std::string("gamma_b_m: ") + e.what());
    }

    if (out.total && out.within && out.icc_x && out.icc_y) {
      try {
        DecompositionInputs in;
        in.total = *out.total;
        in.within = *out.within;
        in.icc_x = *out.icc_x;
        in.icc_y = *out.icc_y;
        auto ba = gamma_b_approx(in);
        if (opt.ci == CiMethod::Analytic) {
          if (!ba.clipped && sb) {
            // the between-cluster sandwich SE also serves gamma_b_a
            ba.se = sb->se;
            ba.ci = detail::wald_ci(ba.value, sb->se, opt.level);
          } else {
            if (ba.clipped)
              note("gamma_b_a clipped to the boundary; using bootstrap for its interval");
            detail::attach_bootstrap(ba, ds, EstimatorKind::BetweenApprox, opt);
          }
        } else if (opt.ci == CiMethod::Bootstrap) {
          detail::attach_bootstrap(ba, ds, EstimatorKind::BetweenApprox, opt);
        }
        out.between_a = ba;
      } catch (const std::exception& e) {
        note(std::string("gamma_b_a: ") + e.what());
      }
    }
  }

  // naive comparators (no analytic intervals)
  try {
    auto nb = naive_between(ds);
    if (opt.ci == CiMethod::Bootstrap)
      detail::attach_bootstrap(nb, ds, EstimatorKind::NaiveBetween, opt);
    out.naive_b = nb;
  } catch (const std::exception& e) {
    note(std::string("naive_between: ") + e.what());
  }
  try {
    auto nw = naive_within(ds);
    if (opt.ci == CiMethod::Bootstrap)
      detail::attach_bootstrap(nw, ds, EstimatorKind::NaiveWithin, opt);
    out.naive_w = nw;
  } catch (const std::exception& e) {
    note(std::string("naive_within: ") + e.what());
  }

  return out;
}

}  // namespace rankcorr
