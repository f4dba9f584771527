#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "rankcorr/cpm.hpp"
#include "rankcorr/dataset.hpp"
#include "rankcorr/errors.hpp"
#include "rankcorr/estimators.hpp"
#include "rankcorr/normal.hpp"
#include "rankcorr/psr.hpp"
#include "rankcorr/rng.hpp"
#include "rankcorr/weights.hpp"

namespace rankcorr {

// ---------------------------------------------------------------------------
// Per-cluster CPM scores (estimating-function contributions)
// ---------------------------------------------------------------------------

// Sparse per-cluster score U_i: alpha entries at the intercepts the cluster
// touches, plus the cluster's own beta entry (clusters >= 1).
struct ClusterScore {
  std::vector<std::pair<int, double>> alpha;
  double beta = 0.0;
};

struct CpmScores {
  std::vector<ClusterScore> per_cluster;  // one per cluster, reference first
  int clamped = 0;                        // fitted mu values pushed off 0/1

  // max-norm of the summed estimating function
  double sum_max_norm(std::size_t n_alpha) const {
    std::vector<double> acc(n_alpha, 0.0);
    double worst = 0.0;
    for (const auto& s : per_cluster) {
      for (const auto& [idx, v] : s.alpha) acc[static_cast<std::size_t>(idx)] += v;
      worst = std::max(worst, std::fabs(s.beta));
    }
    // beta entries belong to distinct coordinates, alpha entries accumulate
    for (double v : acc) worst = std::max(worst, std::fabs(v));
    return worst;
  }
};

// Scores at the fitted parameters. Identical to the per-cluster gradient
// contributions of the multinomial log-likelihood.
inline CpmScores cpm_score(const CpmFit& fit) {
  const int C = static_cast<int>(fit.n_categories());
  CpmScores out;
  out.per_cluster.resize(fit.n_clusters);
  std::vector<std::vector<double>> acc(fit.n_clusters);
  std::vector<std::vector<int>> idx(fit.n_clusters);
  for (std::size_t o = 0; o < fit.category.size(); ++o) {
    const int c = fit.category[o];
    const int i = fit.cluster[o];
    const double b = fit.beta_of(i);
    double g1 = 1.0, u = 0.0;
    if (c < C - 1) {
      const double eta = fit.alpha[static_cast<std::size_t>(c)] - b;
      g1 = fit.link.G(eta);
      u = fit.link.dG(eta);
    }
    double g0 = 0.0, l = 0.0;
    if (c > 0) {
      const double eta = fit.alpha[static_cast<std::size_t>(c) - 1] - b;
      g0 = fit.link.G(eta);
      l = fit.link.dG(eta);
    }
    if ((c < C - 1 && (g1 < 1e-12 || g1 > 1.0 - 1e-12)) ||
        (c > 0 && (g0 < 1e-12 || g0 > 1.0 - 1e-12)))
      ++out.clamped;
    g1 = std::clamp(g1, c < C - 1 ? 1e-12 : 1.0, c < C - 1 ? 1.0 - 1e-12 : 1.0);
    g0 = std::clamp(g0, 0.0, c > 0 ? 1.0 - 1e-12 : 0.0);
    if (c > 0) g0 = std::max(g0, 1e-12);
    const double inv = 1.0 / std::max(g1 - g0, 1e-12);
    auto& si = out.per_cluster[static_cast<std::size_t>(i)];
    auto push = [&](int t, double v) {
      auto& ix = idx[static_cast<std::size_t>(i)];
      auto& av = acc[static_cast<std::size_t>(i)];
      auto it = std::lower_bound(ix.begin(), ix.end(), t);
      const auto pos = it - ix.begin();
      if (it == ix.end() || *it != t) {
        ix.insert(it, t);
        av.insert(av.begin() + pos, v);
      } else {
        av[static_cast<std::size_t>(pos)] += v;
      }
    };
    if (c < C - 1) push(c, u * inv);
    if (c > 0) push(c - 1, -l * inv);
    if (i > 0) si.beta += -(u - l) * inv;
  }
  for (std::size_t i = 0; i < fit.n_clusters; ++i) {
    auto& s = out.per_cluster[i];
    s.alpha.reserve(idx[i].size());
    for (std::size_t t = 0; t < idx[i].size(); ++t)
      s.alpha.emplace_back(idx[i][t], acc[i][t]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Observed-information solver at the fit
// ---------------------------------------------------------------------------

// Factorized observed information K = -hessian(loglik) at the fitted
// parameters, exploiting the tridiagonal alpha block.
class CpmInfoSolver {
public:
  explicit CpmInfoSolver(const CpmFit& fit)
      : sys_(cpm_system_at_fit(fit)), n_alpha_(fit.alpha.size()),
        n_beta_(fit.beta.size()) {
    if (!factor_.factor(sys_.kaa_diag, sys_.kaa_off, sys_.col_idx, sys_.col_val,
                        sys_.kbb))
      throw numeric_error("information matrix not positive definite at the fit");
  }

  std::size_t dim() const { return n_alpha_ + n_beta_; }
  std::size_t n_alpha() const { return n_alpha_; }
  const CpmSystem& system() const { return sys_; }

  // K^-1 r for a packed (alpha, beta) vector
  std::vector<double> solve(std::vector<double> packed) const {
    std::vector<double> ra(packed.begin(), packed.begin() + static_cast<long>(n_alpha_));
    std::vector<double> rb(packed.begin() + static_cast<long>(n_alpha_), packed.end());
    factor_.solve(ra, rb);
    std::copy(rb.begin(), rb.end(),
              std::copy(ra.begin(), ra.end(), packed.begin()));
    return packed;
  }

private:
  CpmSystem sys_;
  std::size_t n_alpha_, n_beta_;
  CpmBlockFactor factor_;
};

// Reusable per-fit inference state: factorized information plus per-cluster
// scores. Built once, shared by the within- and between-correlation sandwiches.
struct CpmInference {
  const CpmFit* fit;
  CpmInfoSolver solver;
  CpmScores scores;

  explicit CpmInference(const CpmFit& f) : fit(&f), solver(f), scores(cpm_score(f)) {}
};

// ---------------------------------------------------------------------------
// Stacked M-estimation sandwich machinery
// ---------------------------------------------------------------------------

struct SandwichResult {
  double se = 0.0;
  ConfidenceInterval ci;
  double psi_residual = 0.0;  // max-norm of the summed moment estimating eqs
};

namespace detail {

inline double sparse_dot(const ClusterScore& s, const Eigen::MatrixXd& t, int col,
                         std::size_t n_alpha, std::size_t cluster_index) {
  double acc = 0.0;
  for (const auto& [idx, v] : s.alpha) acc += v * t(idx, col);
  if (cluster_index > 0)
    acc += s.beta * t(static_cast<Eigen::Index>(n_alpha + cluster_index - 1), col);
  return acc;
}

// gradient of (m3 - m1 m2) / sqrt((m4 - m1^2)(m5 - m2^2))
inline Eigen::Matrix<double, 5, 1> corr_moment_gradient(const Eigen::Matrix<double, 5, 1>& m) {
  const double sx2 = m[3] - m[0] * m[0];
  const double sy2 = m[4] - m[1] * m[1];
  if (sx2 <= 0.0 || sy2 <= 0.0)
    throw numeric_error("delta method: moment variance not positive");
  const double sx = std::sqrt(sx2), sy = std::sqrt(sy2);
  const double c = m[2] - m[0] * m[1];
  const double r = c / (sx * sy);
  Eigen::Matrix<double, 5, 1> g;
  g[0] = -m[1] / (sx * sy) + r * m[0] / sx2;
  g[1] = -m[0] / (sx * sy) + r * m[1] / sy2;
  g[2] = 1.0 / (sx * sy);
  g[3] = -r / (2.0 * sx2);
  g[4] = -r / (2.0 * sy2);
  return g;
}

inline ConfidenceInterval wald_ci(double center, double se, double level) {
  const double z = z_critical(level);
  ConfidenceInterval ci;
  ci.level = level;
  ci.lo = std::max(-1.0, center - z * se);
  ci.hi = std::min(1.0, center + z * se);
  return ci;
}

inline void require_equal_cluster(const WeightVector& wv, const char* who) {
  if (!equal_cluster_weights(wv))
    throw numeric_error(std::string(who) +
                        ": analytic inference requires equal cluster weights "
                        "(w_i. = 1/n); use the cluster bootstrap instead");
}

}  // namespace detail

// Sandwich SE and Wald CI for the within-cluster correlation, from the
// stacked system of both CPM scores and the five PSR moment components.
inline SandwichResult sandwich_gamma_w(const ClusteredDataset& ds, const CpmInference& ix,
                                       const CpmInference& iy, const WeightVector& wv,
                                       double gamma_w_hat, double level = 0.95) {
  detail::require_equal_cluster(wv, "sandwich_gamma_w");
  const std::size_t n = ds.n_clusters();
  if (n < 3) throw numeric_error("sandwich_gamma_w: need at least 3 clusters");
  const CpmFit& fit_x = *ix.fit;
  const CpmFit& fit_y = *iy.fit;

  const auto xr = psr_all_from_cpm(fit_x);
  const auto yr = psr_all_from_cpm(fit_y);

  // per-cluster moment statistics m_i and their mean
  Eigen::MatrixXd mi(5, static_cast<Eigen::Index>(n));
  mi.setZero();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t b = ds.cluster_begin(i), k = ds.cluster_size(i);
    for (std::size_t j = b; j < b + k; ++j) {
      mi(0, static_cast<Eigen::Index>(i)) += xr[j];
      mi(1, static_cast<Eigen::Index>(i)) += yr[j];
      mi(2, static_cast<Eigen::Index>(i)) += xr[j] * yr[j];
      mi(3, static_cast<Eigen::Index>(i)) += xr[j] * xr[j];
      mi(4, static_cast<Eigen::Index>(i)) += yr[j] * yr[j];
    }
    mi.col(static_cast<Eigen::Index>(i)) /= static_cast<double>(k);
  }
  const Eigen::Matrix<double, 5, 1> theta = mi.rowwise().mean();

  // cross-Jacobians C = (1/n) sum_i d m_i / d theta, one per CPM
  const std::size_t px = fit_x.alpha.size() + fit_x.beta.size();
  const std::size_t py = fit_y.alpha.size() + fit_y.beta.size();
  Eigen::MatrixXd cx = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(px), 5);
  Eigen::MatrixXd cy = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(py), 5);
  const double inv_n = 1.0 / static_cast<double>(n);
  auto accumulate = [&](const CpmFit& fit, const std::vector<double>& self,
                        const std::vector<double>& other, Eigen::MatrixXd& c,
                        int row_mean, int row_cross, int row_sq) {
    const int C = static_cast<int>(fit.n_categories());
    const std::size_t na = fit.alpha.size();
    for (std::size_t o = 0; o < fit.category.size(); ++o) {
      const int i = fit.cluster[o];
      if (fit.cluster_count[static_cast<std::size_t>(i)] == 1) continue;  // constant PSR
      const double k = static_cast<double>(fit.cluster_count[static_cast<std::size_t>(i)]);
      const double base = inv_n / k;
      const int cat = fit.category[o];
      const double b = fit.beta_of(i);
      double dsum = 0.0;
      auto add = [&](Eigen::Index prow, double deriv) {
        c(prow, row_mean) += base * deriv;
        c(prow, row_cross) += base * other[o] * deriv;
        c(prow, row_sq) += base * 2.0 * self[o] * deriv;
      };
      if (cat < C - 1) {
        const double d = fit.link.dG(fit.alpha[static_cast<std::size_t>(cat)] - b);
        add(cat, d);
        dsum += d;
      }
      if (cat > 0) {
        const double d = fit.link.dG(fit.alpha[static_cast<std::size_t>(cat) - 1] - b);
        add(cat - 1, d);
        dsum += d;
      }
      if (i > 0) add(static_cast<Eigen::Index>(na + static_cast<std::size_t>(i) - 1), -dsum);
    }
  };
  accumulate(fit_x, xr, yr, cx, 0, 2, 3);
  accumulate(fit_y, yr, xr, cy, 1, 2, 4);

  // t = Abar^-1 C^T = n K^-1 C^T, five solves per CPM
  Eigen::MatrixXd tx(static_cast<Eigen::Index>(px), 5), ty(static_cast<Eigen::Index>(py), 5);
  for (int q = 0; q < 5; ++q) {
    std::vector<double> rhs(px);
    for (std::size_t p = 0; p < px; ++p) rhs[p] = cx(static_cast<Eigen::Index>(p), q);
    auto sol = ix.solver.solve(std::move(rhs));
    for (std::size_t p = 0; p < px; ++p)
      tx(static_cast<Eigen::Index>(p), q) = sol[p] * static_cast<double>(n);
    std::vector<double> rhs2(py);
    for (std::size_t p = 0; p < py; ++p) rhs2[p] = cy(static_cast<Eigen::Index>(p), q);
    auto sol2 = iy.solver.solve(std::move(rhs2));
    for (std::size_t p = 0; p < py; ++p)
      ty(static_cast<Eigen::Index>(p), q) = sol2[p] * static_cast<double>(n);
  }

  const auto& ux = ix.scores;
  const auto& uy = iy.scores;

  Eigen::Matrix<double, 5, 5> vmm = Eigen::Matrix<double, 5, 5>::Zero();
  Eigen::Matrix<double, 5, 1> psi_sum = Eigen::Matrix<double, 5, 1>::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::Matrix<double, 5, 1> h = mi.col(static_cast<Eigen::Index>(i)) - theta;
    for (int q = 0; q < 5; ++q) {
      h[q] += detail::sparse_dot(ux.per_cluster[i], tx, q, fit_x.alpha.size(), i);
      h[q] += detail::sparse_dot(uy.per_cluster[i], ty, q, fit_y.alpha.size(), i);
    }
    psi_sum += mi.col(static_cast<Eigen::Index>(i)) - theta;
    vmm += h * h.transpose();
  }
  vmm /= static_cast<double>(n) * static_cast<double>(n);

  const auto grad = detail::corr_moment_gradient(theta);
  const double var = grad.dot(vmm * grad);
  SandwichResult out;
  out.se = std::sqrt(std::max(var, 0.0));
  out.ci = detail::wald_ci(gamma_w_hat, out.se, level);
  out.psi_residual = psi_sum.cwiseAbs().maxCoeff();
  return out;
}

// Sandwich SE and Wald CI for the between-cluster correlation. The stacked
// moment block carries the normal-CDF approximation of the coefficient
// distributions: (mu_x, mu_y, M_x, M_y, theta_b1..theta_b5).
inline SandwichResult sandwich_gamma_b(const ClusteredDataset& ds, const CpmInference& ix,
                                       const CpmInference& iy, const WeightVector& wv,
                                       double gamma_b_hat, double level = 0.95) {
  detail::require_equal_cluster(wv, "sandwich_gamma_b");
  const std::size_t n = ds.n_clusters();
  if (n < 3) throw numeric_error("sandwich_gamma_b: need at least 3 clusters");
  const CpmFit& fit_x = *ix.fit;
  const CpmFit& fit_y = *iy.fit;

  const auto bx = cluster_median_coeffs(fit_x).values;
  const auto by = cluster_median_coeffs(fit_y).values;
  const double inv_n = 1.0 / static_cast<double>(n);

  auto moments = [&](const std::vector<double>& b, double& mu, double& m2) {
    mu = 0.0;
    m2 = 0.0;
    for (double v : b) {
      mu += v;
      m2 += v * v;
    }
    mu *= inv_n;
    m2 *= inv_n;
  };
  double mu_x, m2_x, mu_y, m2_y;
  moments(bx, mu_x, m2_x);
  moments(by, mu_y, m2_y);
  const double var_x = m2_x - mu_x * mu_x;
  const double var_y = m2_y - mu_y * mu_y;
  if (var_x <= 0.0 || var_y <= 0.0)
    throw numeric_error("sandwich_gamma_b: degenerate coefficient variance");
  const double sd_x = std::sqrt(var_x), sd_y = std::sqrt(var_y);

  // per-cluster 9-vector m_i and the normal-CDF values
  Eigen::MatrixXd mi(9, static_cast<Eigen::Index>(n));
  std::vector<double> fx(n), fy(n), zx(n), zy(n);
  for (std::size_t i = 0; i < n; ++i) {
    zx[i] = (bx[i] - mu_x) / sd_x;
    zy[i] = (by[i] - mu_y) / sd_y;
    fx[i] = norm_cdf(zx[i]);
    fy[i] = norm_cdf(zy[i]);
    mi.col(static_cast<Eigen::Index>(i)) << bx[i], by[i], bx[i] * bx[i],
        by[i] * by[i], fx[i], fy[i], fx[i] * fy[i], fx[i] * fx[i], fy[i] * fy[i];
  }
  const Eigen::Matrix<double, 9, 1> theta = mi.rowwise().mean();

  // moment-block Jacobian A_mm: identity minus dF/d(mu, M) coupling
  Eigen::Matrix<double, 9, 9> amm = Eigen::Matrix<double, 9, 9>::Identity();
  for (std::size_t i = 0; i < n; ++i) {
    const double pdf_x = norm_pdf(zx[i]), pdf_y = norm_pdf(zy[i]);
    // z = (b - mu)/sigma with sigma^2 = M - mu^2:
    // dz/dmu = -1/sigma + z mu / sigma^2, dz/dM = -z / (2 sigma^2)
    const double dzx_dmu = -1.0 / sd_x + zx[i] * mu_x / var_x;
    const double dzx_dM = -zx[i] / (2.0 * var_x);
    const double dzy_dmu = -1.0 / sd_y + zy[i] * mu_y / var_y;
    const double dzy_dM = -zy[i] / (2.0 * var_y);
    const double dfx_dmu = pdf_x * dzx_dmu, dfx_dM = pdf_x * dzx_dM;
    const double dfy_dmu = pdf_y * dzy_dmu, dfy_dM = pdf_y * dzy_dM;
    // columns: 0 = mu_x, 1 = mu_y, 2 = M_x, 3 = M_y
    amm(4, 0) -= inv_n * dfx_dmu;
    amm(4, 2) -= inv_n * dfx_dM;
    amm(5, 1) -= inv_n * dfy_dmu;
    amm(5, 3) -= inv_n * dfy_dM;
    amm(6, 0) -= inv_n * dfx_dmu * fy[i];
    amm(6, 2) -= inv_n * dfx_dM * fy[i];
    amm(6, 1) -= inv_n * dfy_dmu * fx[i];
    amm(6, 3) -= inv_n * dfy_dM * fx[i];
    amm(7, 0) -= inv_n * 2.0 * fx[i] * dfx_dmu;
    amm(7, 2) -= inv_n * 2.0 * fx[i] * dfx_dM;
    amm(8, 1) -= inv_n * 2.0 * fy[i] * dfy_dmu;
    amm(8, 3) -= inv_n * 2.0 * fy[i] * dfy_dM;
  }

  // cross-Jacobians against the CPM parameters: only beta columns are hit
  const std::size_t px = fit_x.alpha.size() + fit_x.beta.size();
  const std::size_t py = fit_y.alpha.size() + fit_y.beta.size();
  Eigen::MatrixXd cx = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(px), 9);
  Eigen::MatrixXd cy = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(py), 9);
  for (std::size_t i = 1; i < n; ++i) {
    const Eigen::Index rx = static_cast<Eigen::Index>(fit_x.alpha.size() + i - 1);
    const Eigen::Index ry = static_cast<Eigen::Index>(fit_y.alpha.size() + i - 1);
    const double dfx_db = norm_pdf(zx[i]) / sd_x;
    const double dfy_db = norm_pdf(zy[i]) / sd_y;
    cx(rx, 0) = inv_n;
    cx(rx, 2) = inv_n * 2.0 * bx[i];
    cx(rx, 4) = inv_n * dfx_db;
    cx(rx, 6) = inv_n * dfx_db * fy[i];
    cx(rx, 7) = inv_n * 2.0 * fx[i] * dfx_db;
    cy(ry, 1) = inv_n;
    cy(ry, 3) = inv_n * 2.0 * by[i];
    cy(ry, 5) = inv_n * dfy_db;
    cy(ry, 6) = inv_n * dfy_db * fx[i];
    cy(ry, 8) = inv_n * 2.0 * fy[i] * dfy_db;
  }

  Eigen::MatrixXd tx(static_cast<Eigen::Index>(px), 9), ty(static_cast<Eigen::Index>(py), 9);
  for (int q = 0; q < 9; ++q) {
    std::vector<double> rhs(px);
    for (std::size_t p = 0; p < px; ++p) rhs[p] = cx(static_cast<Eigen::Index>(p), q);
    auto sol = ix.solver.solve(std::move(rhs));
    for (std::size_t p = 0; p < px; ++p)
      tx(static_cast<Eigen::Index>(p), q) = sol[p] * static_cast<double>(n);
    std::vector<double> rhs2(py);
    for (std::size_t p = 0; p < py; ++p) rhs2[p] = cy(static_cast<Eigen::Index>(p), q);
    auto sol2 = iy.solver.solve(std::move(rhs2));
    for (std::size_t p = 0; p < py; ++p)
      ty(static_cast<Eigen::Index>(p), q) = sol2[p] * static_cast<double>(n);
  }

  const auto& ux = ix.scores;
  const auto& uy = iy.scores;
  const Eigen::Matrix<double, 9, 9> amm_inv = amm.inverse();

  Eigen::Matrix<double, 9, 9> vmm = Eigen::Matrix<double, 9, 9>::Zero();
  Eigen::Matrix<double, 9, 1> psi_sum = Eigen::Matrix<double, 9, 1>::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::Matrix<double, 9, 1> h = mi.col(static_cast<Eigen::Index>(i)) - theta;
    for (int q = 0; q < 9; ++q) {
      h[q] += detail::sparse_dot(ux.per_cluster[i], tx, q, fit_x.alpha.size(), i);
      h[q] += detail::sparse_dot(uy.per_cluster[i], ty, q, fit_y.alpha.size(), i);
    }
    psi_sum += mi.col(static_cast<Eigen::Index>(i)) - theta;
    h = amm_inv * h;
    vmm += h * h.transpose();
  }
  vmm /= static_cast<double>(n) * static_cast<double>(n);

  Eigen::Matrix<double, 5, 1> mb;
  mb << theta[4], theta[5], theta[6], theta[7], theta[8];
  const auto grad5 = detail::corr_moment_gradient(mb);
  Eigen::Matrix<double, 9, 1> grad = Eigen::Matrix<double, 9, 1>::Zero();
  grad.tail<5>() = grad5;
  const double var = grad.dot(vmm * grad);
  SandwichResult out;
  out.se = std::sqrt(std::max(var, 0.0));
  out.ci = detail::wald_ci(gamma_b_hat, out.se, level);
  out.psi_residual = psi_sum.cwiseAbs().maxCoeff();
  return out;
}

// ---------------------------------------------------------------------------
// Influence-function variance of the total correlation
// ---------------------------------------------------------------------------

// Delta-method variance treating gamma_t as a smooth functional of the
// weighted ECDFs; per-cluster influence contributions, validated against the
// cluster bootstrap.
inline SandwichResult var_gamma_t_influence(const ClusteredDataset& ds,
                                            const WeightVector& wv,
                                            double gamma_t_hat, double level = 0.95) {
  ds.require_estimable();
  const std::size_t N = ds.n_total();
  const auto a = midcdf_scores(ds.x(), wv.w);
  const auto b = midcdf_scores(ds.y(), wv.w);

  Eigen::Matrix<double, 5, 1> m = Eigen::Matrix<double, 5, 1>::Zero();
  for (std::size_t j = 0; j < N; ++j) {
    m[0] += wv.w[j] * a[j];
    m[1] += wv.w[j] * b[j];
    m[2] += wv.w[j] * a[j] * b[j];
    m[3] += wv.w[j] * a[j] * a[j];
    m[4] += wv.w[j] * b[j] * b[j];
  }

  // g_payload(u) over axis v: sum of w*payload above u plus half the mass at u
  auto suffix_g = [&](const std::vector<double>& v, const std::vector<double>& payload) {
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t p, std::size_t q) { return v[p] < v[q]; });
    std::vector<double> g(N);
    double above = 0.0;
    std::size_t i = N;
    while (i > 0) {
      std::size_t j = i;  // [j, i) is a tie block from the top
      const double val = v[order[i - 1]];
      double at = 0.0;
      while (j > 0 && v[order[j - 1]] == val) {
        --j;
        at += wv.w[order[j]] * payload[order[j]];
      }
      const double gv = above + 0.5 * at;
      for (std::size_t t = j; t < i; ++t) g[order[t]] = gv;
      above += at;
      i = j;
    }
    return g;
  };

  const auto gb_x = suffix_g(ds.x(), b);  // E[ b(Y) (I(u<X) + I(u=X)/2) ]
  const auto ga_x = suffix_g(ds.x(), a);
  const auto ga_y = suffix_g(ds.y(), a);
  const auto gb_y = suffix_g(ds.y(), b);

  const auto grad = detail::corr_moment_gradient(m);

  double var = 0.0;
  double balance = 0.0;
  for (std::size_t i = 0; i < ds.n_clusters(); ++i) {
    const std::size_t beg = ds.cluster_begin(i), k = ds.cluster_size(i);
    const double wi = wv.cluster_w[i];
    double e_ab = 0.0, e_gbx = 0.0, e_gay = 0.0, e_aa = 0.0, e_gax = 0.0, e_bb = 0.0,
           e_gby = 0.0;
    for (std::size_t j = beg; j < beg + k; ++j) {
      const double q = wv.w[j] / wi;
      e_ab += q * a[j] * b[j];
      e_gbx += q * gb_x[j];
      e_gay += q * ga_y[j];
      e_aa += q * a[j] * a[j];
      e_gax += q * ga_x[j];
      e_bb += q * b[j] * b[j];
      e_gby += q * gb_y[j];
    }
    const double phi3 = (e_ab - m[2]) + (e_gbx - m[2]) + (e_gay - m[2]);
    const double phi4 = (e_aa - m[3]) + 2.0 * (e_gax - m[3]);
    const double phi5 = (e_bb - m[4]) + 2.0 * (e_gby - m[4]);
    const double d = grad[2] * phi3 + grad[3] * phi4 + grad[4] * phi5;
    var += wi * wi * d * d;
    balance += wi * d;
  }

  SandwichResult out;
  out.se = std::sqrt(std::max(var, 0.0));
  out.ci = detail::wald_ci(gamma_t_hat, out.se, level);
  out.psi_residual = std::fabs(balance);
  return out;
}

// ---------------------------------------------------------------------------
// Cluster bootstrap
// ---------------------------------------------------------------------------

struct BootstrapResult {
  double se = 0.0;
  ConfidenceInterval ci;
  int requested = 0;
  int failures = 0;
};

// Resamples n clusters with replacement; estimator failures are tolerated up
// to 5% of resamples. Deterministic for a fixed seed at any evaluation order.
inline BootstrapResult cluster_bootstrap(
    const ClusteredDataset& ds, const std::function<double(const ClusteredDataset&)>& estimator,
    int B, std::uint64_t seed, double level = 0.95) {
  if (ds.n_clusters() < 3)
    throw data_error("cluster_bootstrap: too few clusters to resample");
  if (B < 200) throw data_error("cluster_bootstrap: needs B >= 200");

  const std::size_t n = ds.n_clusters();
  std::vector<double> estimates;
  estimates.reserve(static_cast<std::size_t>(B));
  int failures = 0;
  std::string first_failure;
  for (int rep = 0; rep < B; ++rep) {
    Rng rng = Rng::stream(seed, 0x626f6f74ull, static_cast<std::uint64_t>(rep));
    std::vector<std::string> ids;
    std::vector<std::size_t> offsets{0};
    std::vector<double> x, y;
    for (std::size_t pick = 0; pick < n; ++pick) {
      const std::size_t i = static_cast<std::size_t>(rng.uniform_int(0, n - 1));
      const auto xs = ds.x_in(i);
      const auto ys = ds.y_in(i);
      ids.push_back("b" + std::to_string(pick));
      x.insert(x.end(), xs.begin(), xs.end());
      y.insert(y.end(), ys.begin(), ys.end());
      offsets.push_back(x.size());
    }
    try {
      const ClusteredDataset res(std::move(ids), std::move(offsets), std::move(x),
                                 std::move(y), ds.x_spec(), ds.y_spec());
      estimates.push_back(estimator(res));
    } catch (const std::exception& e) {
      ++failures;
      if (first_failure.empty()) first_failure = e.what();
    }
  }
  if (failures > B / 20)
    throw numeric_error("cluster_bootstrap: " + std::to_string(failures) + " of " +
                        std::to_string(B) + " resamples failed; first: " + first_failure);

  const double cnt = static_cast<double>(estimates.size());
  double mean = 0.0;
  for (double v : estimates) mean += v;
  mean /= cnt;
  double ss = 0.0;
  for (double v : estimates) ss += (v - mean) * (v - mean);

  BootstrapResult out;
  out.requested = B;
  out.failures = failures;
  out.se = std::sqrt(ss / (cnt - 1.0));
  std::sort(estimates.begin(), estimates.end());
  auto quantile = [&](double q) {
    const double pos = q * (cnt - 1.0);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, estimates.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return estimates[lo] * (1.0 - frac) + estimates[hi] * frac;
  };
  out.ci.level = level;
  out.ci.lo = quantile(0.5 * (1.0 - level));
  out.ci.hi = quantile(1.0 - 0.5 * (1.0 - level));
  return out;
}

}  // namespace rankcorr
