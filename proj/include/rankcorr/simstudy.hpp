#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "rankcorr/analysis.hpp"
#include "rankcorr/dataset.hpp"
#include "rankcorr/errors.hpp"
#include "rankcorr/normal.hpp"
#include "rankcorr/rng.hpp"

namespace rankcorr {

enum class Scenario { I, II, III, NegativePairs, Ordinal };

inline const char* to_string(Scenario s) {
  switch (s) {
    case Scenario::I: return "I";
    case Scenario::II: return "II";
    case Scenario::III: return "III";
    case Scenario::NegativePairs: return "negpairs";
    case Scenario::Ordinal: return "ordinal";
  }
  return "?";
}

// Latent bivariate additive model: (U_X, U_Y) cluster means with unit
// variances and correlation rho_b; (R_X, R_Y) member deviations with unit
// variances and correlation rho_w. Scenario NegativePairs uses the paired
// +/- construction with member-deviation variance 3.
struct ScenarioConfig {
  Scenario scenario = Scenario::I;
  double rho_b = 0.0;
  double rho_w = 0.0;
  std::size_t n_clusters = 100;
  int k_min = 20, k_max = 20;  // uniform cluster sizes when k_min < k_max
  double mean_ux = 1.0, mean_uy = -1.0;
  int ordinal_levels = 5;  // Scenario::Ordinal only
  std::uint64_t seed = 1;

  void validate() const {
    if (!(std::fabs(rho_b) <= 1.0) || !(std::fabs(rho_w) <= 1.0))
      throw data_error("scenario: |rho| must be <= 1");
    if (n_clusters < 2) throw data_error("scenario: need n >= 2 clusters");
    if (k_min < 1 || k_max < k_min) throw data_error("scenario: bad cluster size range");
    if (scenario == Scenario::NegativePairs && (k_min != 2 || k_max != 2))
      throw data_error("scenario negpairs requires cluster size 2");
    if (scenario == Scenario::Ordinal && (ordinal_levels < 2 || ordinal_levels > 100))
      throw data_error("scenario ordinal: levels out of range");
  }
};

namespace detail {

// Quantile cutoffs of the continuous marginal N(mean, 2) used for ordinal
// discretization; exact normal quantiles so truths are replicate-stable.
inline std::vector<double> ordinal_cutoffs(int levels, double mean) {
  std::vector<double> cuts;
  const double sd = std::sqrt(2.0);
  for (int l = 1; l < levels; ++l)
    cuts.push_back(mean + sd * norm_quantile(static_cast<double>(l) / levels));
  return cuts;
}

inline double discretize(double v, const std::vector<double>& cuts) {
  double code = 0.0;
  for (double c : cuts)
    if (v > c) code += 1.0;
  return code;
}

}  // namespace detail

// One synthetic dataset for the given replicate index. Scenarios I/II/III
// consume identical latent draws, so e.g. Scenario II equals Scenario I with
// the y axis exponentiated elementwise.
inline ClusteredDataset generate(const ScenarioConfig& cfg, std::uint64_t replicate) {
  cfg.validate();
  Rng rng = Rng::stream(cfg.seed, replicate);

  std::vector<std::size_t> sizes(cfg.n_clusters);
  for (auto& k : sizes)
    k = cfg.k_min == cfg.k_max
            ? static_cast<std::size_t>(cfg.k_min)
            : static_cast<std::size_t>(rng.uniform_int(
                  static_cast<std::uint64_t>(cfg.k_min), static_cast<std::uint64_t>(cfg.k_max)));

  const BivariateNormal u_draw{cfg.mean_ux, cfg.mean_uy, 1.0, 1.0, cfg.rho_b};
  std::vector<std::string> ids(cfg.n_clusters);
  std::vector<std::size_t> offsets{0};
  std::vector<double> x, y;

  if (cfg.scenario == Scenario::NegativePairs) {
    const double sd_r = std::sqrt(3.0);
    const BivariateNormal r_draw{0.0, 0.0, sd_r, sd_r, cfg.rho_w};
    for (std::size_t i = 0; i < cfg.n_clusters; ++i) {
      double ux, uy, rx, ry;
      u_draw.draw(rng, ux, uy);
      r_draw.draw(rng, rx, ry);
      x.push_back(ux + rx);
      y.push_back(uy + ry);
      x.push_back(ux - rx);
      y.push_back(uy - ry);
      offsets.push_back(x.size());
    }
  } else {
    const BivariateNormal r_draw{0.0, 0.0, 1.0, 1.0, cfg.rho_w};
    for (std::size_t i = 0; i < cfg.n_clusters; ++i) {
      double ux, uy;
      u_draw.draw(rng, ux, uy);
      for (std::size_t j = 0; j < sizes[i]; ++j) {
        double rx, ry;
        r_draw.draw(rng, rx, ry);
        switch (cfg.scenario) {
          case Scenario::I:
          case Scenario::II:
          case Scenario::Ordinal:
            x.push_back(ux + rx);
            y.push_back(cfg.scenario == Scenario::II ? std::exp(uy + ry) : uy + ry);
            break;
          case Scenario::III:
            x.push_back(std::exp(ux) + rx);
            y.push_back(std::exp(std::exp(uy) + ry));
            break;
          case Scenario::NegativePairs:
            break;
        }
      }
      offsets.push_back(x.size());
    }
  }

  VariableSpec x_spec, y_spec;
  if (cfg.scenario == Scenario::Ordinal) {
    const auto cx = detail::ordinal_cutoffs(cfg.ordinal_levels, cfg.mean_ux);
    const auto cy = detail::ordinal_cutoffs(cfg.ordinal_levels, cfg.mean_uy);
    for (auto& v : x) v = detail::discretize(v, cx);
    for (auto& v : y) v = detail::discretize(v, cy);
    x_spec.kind = y_spec.kind = ValueKind::Ordinal;
    for (int l = 1; l <= cfg.ordinal_levels; ++l) {
      x_spec.levels.push_back(std::to_string(l));
      y_spec.levels.push_back(std::to_string(l));
    }
  }
  for (std::size_t i = 0; i < cfg.n_clusters; ++i) ids[i] = "c" + std::to_string(i + 1);
  return ClusteredDataset(std::move(ids), std::move(offsets), std::move(x),
                          std::move(y), x_spec, y_spec);
}

// ---------------------------------------------------------------------------
// True parameter values
// ---------------------------------------------------------------------------

struct TrueValues {
  double gamma_t = 0.0, gamma_b = 0.0, gamma_w = 0.0;
  double icc_x = 0.0, icc_y = 0.0;
  double mc_se_t = 0.0;  // 0 for closed-form scenarios
  bool monte_carlo = false;
};

// Spearman correlation of a bivariate normal pair with Pearson correlation
// rho: 6 arcsin(rho/2) / pi.
inline double arcsin_gamma(double rho) {
  return 6.0 * std::asin(rho / 2.0) / 3.14159265358979323846;
}

namespace detail {

// Pearson correlation of two equally weighted samples.
inline double plain_corr(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> w(a.size(), 1.0 / static_cast<double>(a.size()));
  return weighted_corr(a, b, w);
}

inline TrueValues true_values_iii(const ScenarioConfig& cfg, std::uint64_t mc_obs) {
  TrueValues tv;
  tv.monte_carlo = true;
  tv.gamma_b = arcsin_gamma(cfg.rho_b);
  tv.gamma_w = arcsin_gamma(cfg.rho_w);

  const std::size_t k = 100;
  const std::size_t n = std::max<std::size_t>(mc_obs / k, 1000);
  Rng rng = Rng::stream(cfg.seed, 0x74727574ull);
  const BivariateNormal u_draw{cfg.mean_ux, cfg.mean_uy, 1.0, 1.0, cfg.rho_b};
  const BivariateNormal r_draw{0.0, 0.0, 1.0, 1.0, cfg.rho_w};
  std::vector<double> x, y;
  x.reserve(n * k);
  y.reserve(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    double ux, uy;
    u_draw.draw(rng, ux, uy);
    for (std::size_t j = 0; j < k; ++j) {
      double rx, ry;
      r_draw.draw(rng, rx, ry);
      x.push_back(std::exp(ux) + rx);
      y.push_back(std::exp(std::exp(uy) + ry));
    }
  }
  const std::size_t N = x.size();
  std::vector<double> w(N, 1.0 / static_cast<double>(N));
  const auto sx = midcdf_scores(x, w);
  const auto sy = midcdf_scores(y, w);
  tv.gamma_t = weighted_corr(sx, sy, w);

  // rank ICCs from within-cluster member pairs (first two of each cluster)
  std::vector<double> x1(n), x2(n), y1(n), y2(n);
  for (std::size_t i = 0; i < n; ++i) {
    x1[i] = sx[i * k];
    x2[i] = sx[i * k + 1];
    y1[i] = sy[i * k];
    y2[i] = sy[i * k + 1];
  }
  tv.icc_x = plain_corr(x1, x2);
  tv.icc_y = plain_corr(y1, y2);
  tv.mc_se_t = (1.0 - tv.gamma_t * tv.gamma_t) / std::sqrt(static_cast<double>(n));
  return tv;
}

inline TrueValues true_values_ordinal(const ScenarioConfig& cfg, std::uint64_t mc_obs) {
  TrueValues tv;
  tv.monte_carlo = true;
  const auto cx = ordinal_cutoffs(cfg.ordinal_levels, cfg.mean_ux);
  const auto cy = ordinal_cutoffs(cfg.ordinal_levels, cfg.mean_uy);
  const int L = cfg.ordinal_levels;

  // marginal mid-CDF values are exact: cutoffs sit at exact quantiles
  std::vector<double> fstar(static_cast<std::size_t>(L));
  for (int c = 0; c < L; ++c) {
    const double qlo = static_cast<double>(c) / L;
    const double qhi = static_cast<double>(c + 1) / L;
    fstar[static_cast<std::size_t>(c)] = 0.5 * (qlo + qhi);
  }

  Rng rng = Rng::stream(cfg.seed, 0x6f726474ull);
  const BivariateNormal u_draw{cfg.mean_ux, cfg.mean_uy, 1.0, 1.0, cfg.rho_b};
  const BivariateNormal r_draw{0.0, 0.0, 1.0, 1.0, cfg.rho_w};

  // conditional CDF of the ordinal code given the cluster mean
  auto cond_cdf = [&](const std::vector<double>& cuts, double u, int c) {
    if (c < 0) return 0.0;
    if (c >= static_cast<int>(cuts.size())) return 1.0;
    return norm_cdf(cuts[static_cast<std::size_t>(c)] - u);
  };
  auto cond_median = [&](const std::vector<double>& cuts, double u, Rng& r) {
    for (int c = 0;; ++c) {
      const double F = cond_cdf(cuts, u, c);
      if (F >= 0.5) {
        // two-median rule: exactly 0.5 splits the median across c and c+1
        if (F == 0.5) return static_cast<double>(c) + (r.uniform() < 0.5 ? 0.0 : 1.0);
        return static_cast<double>(c);
      }
    }
  };

  const std::size_t m = std::max<std::uint64_t>(mc_obs, 10000);
  std::vector<double> tx(m), ty(m), wx(m), wy(m);
  std::vector<double> medx(m), medy(m);
  std::vector<double> px1(m / 2), px2(m / 2), py1(m / 2), py2(m / 2);
  for (std::size_t i = 0; i < m; ++i) {
    double ux, uy, rx, ry;
    u_draw.draw(rng, ux, uy);
    r_draw.draw(rng, rx, ry);
    const int codex = static_cast<int>(discretize(ux + rx, cx));
    const int codey = static_cast<int>(discretize(uy + ry, cy));
    tx[i] = fstar[static_cast<std::size_t>(codex)];
    ty[i] = fstar[static_cast<std::size_t>(codey)];
    wx[i] = 0.5 * (cond_cdf(cx, ux, codex) + cond_cdf(cx, ux, codex - 1));
    wy[i] = 0.5 * (cond_cdf(cy, uy, codey) + cond_cdf(cy, uy, codey - 1));
    medx[i] = cond_median(cx, ux, rng);
    medy[i] = cond_median(cy, uy, rng);
    if (i < m / 2) {
      double rx2, ry2;
      r_draw.draw(rng, rx2, ry2);
      const int cx2 = static_cast<int>(discretize(ux + rx2, cx));
      const int cy2 = static_cast<int>(discretize(uy + ry2, cy));
      px1[i] = fstar[static_cast<std::size_t>(codex)];
      px2[i] = fstar[static_cast<std::size_t>(cx2)];
      py1[i] = fstar[static_cast<std::size_t>(codey)];
      py2[i] = fstar[static_cast<std::size_t>(cy2)];
    }
  }
  tv.gamma_t = plain_corr(tx, ty);
  tv.gamma_w = plain_corr(wx, wy);
  tv.gamma_b = pooled_spearman(medx, medy);
  tv.icc_x = plain_corr(px1, px2);
  tv.icc_y = plain_corr(py1, py2);
  tv.mc_se_t = (1.0 - tv.gamma_t * tv.gamma_t) / std::sqrt(static_cast<double>(m));
  return tv;
}

}  // namespace detail

// Population values of the five parameters for a scenario. Scenarios I, II
// and NegativePairs are bivariate normal on the latent scale and use the
// arcsin identity; Scenario III and ordinal discretization use Monte Carlo.
inline TrueValues true_values(const ScenarioConfig& cfg, std::uint64_t mc_obs = 1000000) {
  cfg.validate();
  TrueValues tv;
  switch (cfg.scenario) {
    case Scenario::I:
    case Scenario::II: {
      tv.gamma_t = arcsin_gamma(0.5 * (cfg.rho_b + cfg.rho_w));
      tv.gamma_b = arcsin_gamma(cfg.rho_b);
      tv.gamma_w = arcsin_gamma(cfg.rho_w);
      tv.icc_x = tv.icc_y = arcsin_gamma(0.5);
      return tv;
    }
    case Scenario::NegativePairs: {
      // members are U +/- R with var(U) = 1, var(R) = 3: total variance 4,
      // total correlation rho_b/4 + 3 rho_w/4, member-pair correlation -1/2
      tv.gamma_t = arcsin_gamma(cfg.rho_b / 4.0 + 3.0 * cfg.rho_w / 4.0);
      tv.gamma_b = arcsin_gamma(cfg.rho_b);
      tv.gamma_w = arcsin_gamma(cfg.rho_w);
      tv.icc_x = tv.icc_y = arcsin_gamma(-0.5);
      return tv;
    }
    case Scenario::III:
      return detail::true_values_iii(cfg, mc_obs);
    case Scenario::Ordinal:
      return detail::true_values_ordinal(cfg, mc_obs);
  }
  throw data_error("unknown scenario");
}

// ---------------------------------------------------------------------------
// Study runner
// ---------------------------------------------------------------------------

struct StudyOptions {
  Link link{LinkKind::Probit};
  WeightScheme scheme = WeightScheme::EqualCluster;
  PsrMode psr = PsrMode::Cpm;
  CiMethod ci = CiMethod::Analytic;
  int boot_reps = 400;
  double level = 0.95;
  int threads = 0;                  // 0: hardware concurrency
  bool include_naive = true;
  std::optional<TrueValues> truth;  // override the computed truth
  std::uint64_t mc_truth_obs = 1000000;
  CpmOptions cpm;
};

struct EstimatorSummary {
  std::string name;
  double truth = std::numeric_limits<double>::quiet_NaN();
  double mean = std::numeric_limits<double>::quiet_NaN();
  double bias = std::numeric_limits<double>::quiet_NaN();
  double emp_se = std::numeric_limits<double>::quiet_NaN();
  double mdn_se = std::numeric_limits<double>::quiet_NaN();
  double coverage = std::numeric_limits<double>::quiet_NaN();
  int ok = 0;
  int failed = 0;
  int with_ci = 0;
};

struct SimulationReport {
  ScenarioConfig config;
  int reps = 0;
  TrueValues truth;
  std::vector<EstimatorSummary> rows;
  int failed_replicates = 0;  // replicates where the CPM fits failed

  const EstimatorSummary& row(const std::string& name) const {
    for (const auto& r : rows)
      if (r.name == name) return r;
    throw data_error("no study row named '" + name + "'");
  }
};

inline std::uint64_t splitmix_combine(std::uint64_t seed, std::uint64_t rep) {
  std::uint64_t s = seed ^ (0x9e3779b97f4a7c15ull * (rep + 0x51ull));
  return splitmix64(s);
}

namespace detail {

struct RepSlot {
  std::optional<double> value;
  std::optional<double> se;
  std::optional<bool> covered;
  bool failed = false;
};

struct RepResult {
  RepSlot slots[8];  // t, w, bm, ba, nb, nw, icc_x, icc_y
  bool fit_failed = false;
};

constexpr const char* kRowNames[8] = {"gamma_t", "gamma_w",   "gamma_b_m",
                                      "gamma_b_a", "naive_between", "naive_within",
                                      "icc_x",   "icc_y"};

inline void run_one_replicate(const ScenarioConfig& cfg, const StudyOptions& opt,
                              const TrueValues& truth, std::uint64_t rep, RepResult& out) {
  const auto ds = generate(cfg, rep);
  const auto wv = compute_weights(ds, opt.scheme);
  const double truths[8] = {truth.gamma_t, truth.gamma_w, truth.gamma_b,
                            truth.gamma_b, std::numeric_limits<double>::quiet_NaN(),
                            std::numeric_limits<double>::quiet_NaN(), truth.icc_x,
                            truth.icc_y};

  auto record_ci = [&](int slot, const ConfidenceInterval& ci, double se) {
    out.slots[slot].se = se;
    out.slots[slot].covered = ci.lo <= truths[slot] && truths[slot] <= ci.hi;
  };
  auto boot_ci = [&](int slot, EstimatorKind kind) {
    AnalysisOptions aopt;
    aopt.scheme = opt.scheme;
    aopt.link = opt.link;
    aopt.psr = opt.psr;
    aopt.boot_reps = opt.boot_reps;
    aopt.seed = splitmix_combine(cfg.seed, rep);
    aopt.level = opt.level;
    aopt.cpm = opt.cpm;
    const auto res = cluster_bootstrap(
        ds, [&](const ClusteredDataset& d) { return estimate_value(d, kind, aopt); },
        opt.boot_reps, aopt.seed, opt.level);
    record_ci(slot, res.ci, res.se);
  };

  // total
  std::optional<CorrelationEstimate> total;
  try {
    total = gamma_t(ds, wv);
    out.slots[0].value = total->value;
    if (opt.ci == CiMethod::Analytic) {
      const auto inf = var_gamma_t_influence(ds, wv, total->value, opt.level);
      record_ci(0, inf.ci, inf.se);
    } else if (opt.ci == CiMethod::Bootstrap) {
      boot_ci(0, EstimatorKind::Total);
    }
  } catch (const std::exception&) {
    out.slots[0].failed = true;
  }

  // rank ICCs
  std::optional<RankIccEstimate> icc_x, icc_y;
  try {
    icc_x = rank_icc(ds, Axis::X, wv);
    icc_y = rank_icc(ds, Axis::Y, wv);
    out.slots[6].value = icc_x->gamma_i;
    out.slots[7].value = icc_y->gamma_i;
  } catch (const std::exception&) {
    out.slots[6].failed = out.slots[7].failed = true;
  }

  // CPM-based estimators
  std::optional<CpmFit> fit_x, fit_y;
  try {
    fit_x = fit_cpm(ds, Axis::X, opt.link, opt.cpm);
    fit_y = fit_cpm(ds, Axis::Y, opt.link, opt.cpm);
  } catch (const std::exception&) {
    out.fit_failed = true;
    out.slots[1].failed = out.slots[2].failed = out.slots[3].failed = true;
  }

  std::optional<CorrelationEstimate> within;
  if (fit_x && fit_y) {
    std::optional<CpmInference> inf_x, inf_y;
    const bool analytic = opt.ci == CiMethod::Analytic;
    if (analytic) {
      try {
        inf_x.emplace(*fit_x);
        inf_y.emplace(*fit_y);
      } catch (const std::exception&) {
        inf_x.reset();
        inf_y.reset();
      }
    }
    try {
      const auto xr = opt.psr == PsrMode::Cpm ? psr_all_from_cpm(*fit_x)
                                              : psr_nonparametric(ds, Axis::X);
      const auto yr = opt.psr == PsrMode::Cpm ? psr_all_from_cpm(*fit_y)
                                              : psr_nonparametric(ds, Axis::Y);
      within = gamma_w(xr, yr, wv);
      out.slots[1].value = within->value;
      if (analytic && inf_x) {
        const auto sw = sandwich_gamma_w(ds, *inf_x, *inf_y, wv, within->value, opt.level);
        record_ci(1, sw.ci, sw.se);
      } else if (opt.ci == CiMethod::Bootstrap) {
        boot_ci(1, EstimatorKind::WithinPsr);
      }
    } catch (const std::exception&) {
      out.slots[1].failed = true;
    }

    std::optional<SandwichResult> sb;
    try {
      const auto bm = gamma_b_median(cluster_median_coeffs(*fit_x).values,
                                     cluster_median_coeffs(*fit_y).values,
                                     wv.cluster_w, opt.scheme);
      out.slots[2].value = bm.value;
      if (analytic && inf_x) {
        sb = sandwich_gamma_b(ds, *inf_x, *inf_y, wv, bm.value, opt.level);
        record_ci(2, sb->ci, sb->se);
      } else if (opt.ci == CiMethod::Bootstrap) {
        boot_ci(2, EstimatorKind::BetweenMedian);
      }
    } catch (const std::exception&) {
      out.slots[2].failed = true;
    }

    try {
      if (total && within && icc_x && icc_y) {
        DecompositionInputs in;
        in.total = *total;
        in.within = *within;
        in.icc_x = *icc_x;
        in.icc_y = *icc_y;
        const auto ba = gamma_b_approx(in);
        out.slots[3].value = ba.value;
        if (analytic && sb) {
          // the between-cluster sandwich interval, recentered at gamma_b_a
          record_ci(3, detail::wald_ci(ba.value, sb->se, opt.level), sb->se);
        } else if (opt.ci == CiMethod::Bootstrap) {
          boot_ci(3, EstimatorKind::BetweenApprox);
        }
      } else {
        out.slots[3].failed = true;
      }
    } catch (const std::exception&) {
      out.slots[3].failed = true;
    }
  }

  // naive comparators (point estimates only)
  if (opt.include_naive) {
    try {
      out.slots[4].value = naive_between(ds).value;
    } catch (const std::exception&) {
      out.slots[4].failed = true;
    }
    try {
      out.slots[5].value = naive_within(ds).value;
    } catch (const std::exception&) {
      out.slots[5].failed = true;
    }
  }
}

}  // namespace detail

// Monte Carlo study: per-replicate generation, estimation, and interval
// construction; summaries of bias, empirical SE, median analytic SE and
// coverage per estimator. Deterministic for a fixed seed at any thread count.
inline SimulationReport run_study(const ScenarioConfig& cfg, int reps,
                                  const StudyOptions& opt) {
  cfg.validate();
  if (reps < 1) throw data_error("run_study: needs reps >= 1");
  const TrueValues truth =
      opt.truth ? *opt.truth : true_values(cfg, opt.mc_truth_obs);

  std::vector<detail::RepResult> results(static_cast<std::size_t>(reps));
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const unsigned n_threads =
      std::min<unsigned>(opt.threads > 0 ? static_cast<unsigned>(opt.threads) : hw,
                         static_cast<unsigned>(reps));
  auto worker = [&](unsigned t) {
    for (std::size_t rep = t; rep < static_cast<std::size_t>(reps); rep += n_threads)
      detail::run_one_replicate(cfg, opt, truth, rep, results[rep]);
  };
  if (n_threads <= 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker, t);
    for (auto& th : pool) th.join();
  }

  SimulationReport report;
  report.config = cfg;
  report.reps = reps;
  report.truth = truth;
  const double truths[8] = {truth.gamma_t, truth.gamma_w, truth.gamma_b,
                            truth.gamma_b, std::numeric_limits<double>::quiet_NaN(),
                            std::numeric_limits<double>::quiet_NaN(), truth.icc_x,
                            truth.icc_y};
  for (int s = 0; s < 8; ++s) {
    if (!opt.include_naive && (s == 4 || s == 5)) continue;
    EstimatorSummary row;
    row.name = detail::kRowNames[s];
    row.truth = truths[s];
    std::vector<double> values, ses;
    int covered = 0, with_ci = 0;
    for (const auto& r : results) {
      const auto& slot = r.slots[s];
      if (slot.failed) ++row.failed;
      if (slot.value) values.push_back(*slot.value);
      if (slot.se) ses.push_back(*slot.se);
      if (slot.covered) {
        ++with_ci;
        if (*slot.covered) ++covered;
      }
    }
    row.ok = static_cast<int>(values.size());
    row.with_ci = with_ci;
    if (!values.empty()) {
      double mean = 0.0;
      for (double v : values) mean += v;
      mean /= static_cast<double>(values.size());
      row.mean = mean;
      if (!std::isnan(row.truth)) row.bias = mean - row.truth;
      if (values.size() >= 2) {
        double ss = 0.0;
        for (double v : values) ss += (v - mean) * (v - mean);
        row.emp_se = std::sqrt(ss / (static_cast<double>(values.size()) - 1.0));
      }
    }
    if (!ses.empty()) {
      std::sort(ses.begin(), ses.end());
      const std::size_t mid = ses.size() / 2;
      row.mdn_se = ses.size() % 2 == 1 ? ses[mid] : 0.5 * (ses[mid - 1] + ses[mid]);
    }
    if (with_ci > 0)
      row.coverage = static_cast<double>(covered) / static_cast<double>(with_ci);
    report.rows.push_back(std::move(row));
  }
  for (const auto& r : results)
    if (r.fit_failed) ++report.failed_replicates;
  if (report.failed_replicates * 10 > reps)
    throw numeric_error("run_study: more than 10% of replicates failed (" +
                        std::to_string(report.failed_replicates) + "/" +
                        std::to_string(reps) + ")");
  return report;
}

// study.csv layout: one row per estimator with the Web-Table column names.
inline std::string report_to_csv(const SimulationReport& report) {
  std::ostringstream out;
  out << "estimator,truth,mean,bias,emp_se,mdn_se,coverage,ok,failed\n";
  out.precision(10);
  auto cell = [&](double v) {
    if (std::isnan(v)) return std::string();
    std::ostringstream s;
    s.precision(10);
    s << v;
    return s.str();
  };
  for (const auto& r : report.rows) {
    out << r.name << ',' << cell(r.truth) << ',' << cell(r.mean) << ','
        << cell(r.bias) << ',' << cell(r.emp_se) << ',' << cell(r.mdn_se) << ','
        << cell(r.coverage) << ',' << r.ok << ',' << r.failed << '\n';
  }
  return out.str();
}

}  // namespace rankcorr
