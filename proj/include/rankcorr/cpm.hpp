#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "rankcorr/dataset.hpp"
#include "rankcorr/errors.hpp"
#include "rankcorr/link.hpp"
#include "rankcorr/rank_stats.hpp"

namespace rankcorr {

struct CpmOptions {
  double grad_tol = 1e-8;        // max-norm of the (alpha, beta) gradient
  double loglik_rel_tol = 1e-12; // relative log-likelihood change
  int max_iter = 100;
  double separation_bound = 30.0;
  std::ostream* trace = nullptr; // per-iteration diagnostics when set
};

// Fitted cumulative probability model of an outcome on cluster indicators:
// g(F(x_(c) | cluster i)) = alpha_c - beta_i, reference cluster beta_1 = 0.
struct CpmFit {
  Link link;
  std::vector<double> support;  // C distinct outcome values, ascending
  std::vector<double> alpha;    // C-1 intercepts, strictly increasing
  std::vector<double> beta;     // n-1 coefficients for clusters 2..n
  double loglik = 0.0;
  bool converged = false;
  int iterations = 0;
  double grad_norm = 0.0;
  std::size_t n_clusters = 1;

  // Observation bookkeeping, aligned with the fitting input order.
  std::vector<int> category;      // 0..C-1
  std::vector<int> cluster;       // 0..n-1
  std::vector<int> cluster_count; // observations per cluster

  std::size_t n_categories() const { return support.size(); }

  int category_of(double value) const {
    auto it = std::lower_bound(support.begin(), support.end(), value);
    if (it == support.end() || *it != value)
      throw data_error("value not in the fitted support");
    return static_cast<int>(it - support.begin());
  }

  double beta_of(int cluster_idx) const {
    if (cluster_idx < 0 || static_cast<std::size_t>(cluster_idx) >= n_clusters)
      throw data_error("cluster index out of range");
    return cluster_idx == 0 ? 0.0 : beta[static_cast<std::size_t>(cluster_idx) - 1];
  }

  // Conditional CDF F(x_(c) | cluster): c = -1 gives 0, c = C-1 gives 1.
  double cond_cdf(int c, int cluster_idx) const {
    if (c < 0) return 0.0;
    if (c >= static_cast<int>(alpha.size())) return 1.0;
    return link.G(alpha[static_cast<std::size_t>(c)] - beta_of(cluster_idx));
  }
};

namespace detail {

// Symmetric tridiagonal LDL^T. Returns false on a nonpositive pivot.
struct TridiagLdl {
  std::vector<double> d, l;

  bool factor(const std::vector<double>& diag, const std::vector<double>& off) {
    const std::size_t m = diag.size();
    d.assign(m, 0.0);
    l.assign(m > 0 ? m - 1 : 0, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      double di = diag[i];
      if (i > 0) di -= l[i - 1] * l[i - 1] * d[i - 1];
      if (!(di > 0.0) || !std::isfinite(di)) return false;
      d[i] = di;
      if (i + 1 < m) l[i] = off[i] / di;
    }
    return true;
  }

  void solve_inplace(double* x) const {
    const std::size_t m = d.size();
    for (std::size_t i = 1; i < m; ++i) x[i] -= l[i - 1] * x[i - 1];
    for (std::size_t i = 0; i < m; ++i) x[i] /= d[i];
    for (std::size_t i = m - 1; i-- > 0;) x[i] -= l[i] * x[i + 1];
  }
};

}  // namespace detail

// Negative-Hessian blocks of the multinomial log-likelihood in the
// (alpha, beta) parameterization, plus the gradient. The alpha block is
// tridiagonal; beta couples only to the intercepts its cluster touches.
struct CpmSystem {
  double loglik = 0.0;
  std::vector<double> grad_alpha, grad_beta;
  std::vector<double> kaa_diag, kaa_off;       // tridiagonal alpha block
  std::vector<double> kbb;                     // diagonal beta block
  std::vector<std::vector<int>> col_idx;       // per beta column: touched alphas
  std::vector<std::vector<double>> col_val;

  double grad_max_norm() const {
    double m = 0.0;
    for (double v : grad_alpha) m = std::max(m, std::fabs(v));
    for (double v : grad_beta) m = std::max(m, std::fabs(v));
    return m;
  }
};

namespace detail {

constexpr double kPiFloor = 1e-300;

inline double cpm_loglik(std::span<const int> category, std::span<const int> cluster,
                         const std::vector<double>& alpha, const std::vector<double>& beta,
                         const Link& link, int n_cat) {
  double ll = 0.0;
  for (std::size_t o = 0; o < category.size(); ++o) {
    const int c = category[o];
    const double b = cluster[o] == 0 ? 0.0 : beta[static_cast<std::size_t>(cluster[o]) - 1];
    const double g1 = c < n_cat - 1 ? link.G(alpha[static_cast<std::size_t>(c)] - b) : 1.0;
    const double g0 = c > 0 ? link.G(alpha[static_cast<std::size_t>(c) - 1] - b) : 0.0;
    ll += std::log(std::max(g1 - g0, kPiFloor));
  }
  return ll;
}

// Builds the observation index sets each beta column touches (union of the
// lower/upper intercepts of the cluster's categories).
inline std::vector<std::vector<int>> beta_column_structure(
    std::span<const int> category, std::span<const int> cluster,
    std::size_t n_clusters, int n_cat) {
  std::vector<std::vector<int>> idx(n_clusters > 0 ? n_clusters - 1 : 0);
  for (std::size_t o = 0; o < category.size(); ++o) {
    const int i = cluster[o];
    if (i == 0) continue;
    auto& v = idx[static_cast<std::size_t>(i) - 1];
    const int c = category[o];
    if (c < n_cat - 1) v.push_back(c);
    if (c > 0) v.push_back(c - 1);
  }
  for (auto& v : idx) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  return idx;
}

inline CpmSystem cpm_build_system(std::span<const int> category,
                                  std::span<const int> cluster,
                                  const std::vector<double>& alpha,
                                  const std::vector<double>& beta,
                                  const Link& link, int n_cat,
                                  const std::vector<std::vector<int>>& structure) {
  const std::size_t n_alpha = alpha.size();
  const std::size_t n_beta = beta.size();
  CpmSystem sys;
  sys.grad_alpha.assign(n_alpha, 0.0);
  sys.grad_beta.assign(n_beta, 0.0);
  sys.kaa_diag.assign(n_alpha, 0.0);
  sys.kaa_off.assign(n_alpha > 0 ? n_alpha - 1 : 0, 0.0);
  sys.kbb.assign(n_beta, 0.0);
  sys.col_idx = structure;
  sys.col_val.resize(n_beta);
  // position lookup within each sparse column
  for (std::size_t i = 0; i < n_beta; ++i)
    sys.col_val[i].assign(sys.col_idx[i].size(), 0.0);

  auto col_slot = [&](std::size_t bi, int t) {
    const auto& v = sys.col_idx[bi];
    return static_cast<std::size_t>(
        std::lower_bound(v.begin(), v.end(), t) - v.begin());
  };

  for (std::size_t o = 0; o < category.size(); ++o) {
    const int c = category[o];
    const int i = cluster[o];
    const double b = i == 0 ? 0.0 : beta[static_cast<std::size_t>(i) - 1];
    const bool has_up = c < n_cat - 1;
    const bool has_lo = c > 0;
    double g1 = 1.0, u = 0.0, du = 0.0;
    if (has_up) {
      const double eta = alpha[static_cast<std::size_t>(c)] - b;
      g1 = link.G(eta);
      u = link.dG(eta);
      du = link.d2G(eta);
    }
    double g0 = 0.0, l = 0.0, dl = 0.0;
    if (has_lo) {
      const double eta = alpha[static_cast<std::size_t>(c) - 1] - b;
      g0 = link.G(eta);
      l = link.dG(eta);
      dl = link.d2G(eta);
    }
    const double pi = std::max(g1 - g0, kPiFloor);
    sys.loglik += std::log(pi);
    const double inv = 1.0 / pi;
    // second derivatives of log(pi) w.r.t. the two linear predictors
    const double l11 = du * inv - u * u * inv * inv;
    const double l00 = -dl * inv - l * l * inv * inv;
    const double l10 = u * l * inv * inv;

    if (has_up) {
      sys.grad_alpha[static_cast<std::size_t>(c)] += u * inv;
      sys.kaa_diag[static_cast<std::size_t>(c)] -= l11;
    }
    if (has_lo) {
      sys.grad_alpha[static_cast<std::size_t>(c) - 1] -= l * inv;
      sys.kaa_diag[static_cast<std::size_t>(c) - 1] -= l00;
    }
    if (has_up && has_lo) sys.kaa_off[static_cast<std::size_t>(c) - 1] -= l10;

    if (i > 0) {
      const std::size_t bi = static_cast<std::size_t>(i) - 1;
      sys.grad_beta[bi] -= (u - l) * inv;
      sys.kbb[bi] -= l11 + 2.0 * l10 + l00;
      if (has_up) sys.col_val[bi][col_slot(bi, c)] -= -(l11 + l10);
      if (has_lo) sys.col_val[bi][col_slot(bi, c - 1)] -= -(l00 + l10);
    }
  }
  return sys;
}

}  // namespace detail

// Factorization of [[M, K_ab], [K_ab^T, K_bb]] with tridiagonal M, using
// block elimination of the alpha block. Solves in O(C * n) after an
// O(C * n + n^3) factorization.
class CpmBlockFactor {
public:
  bool factor(const std::vector<double>& m_diag, const std::vector<double>& m_off,
              const std::vector<std::vector<int>>& col_idx,
              const std::vector<std::vector<double>>& col_val,
              const std::vector<double>& kbb) {
    n_alpha_ = m_diag.size();
    n_beta_ = kbb.size();
    col_idx_ = &col_idx;
    col_val_ = &col_val;
    if (!ldl_.factor(m_diag, m_off)) return false;
    // W = M^-1 K_ab, one tridiagonal solve per beta column
    w_.resize(static_cast<Eigen::Index>(n_alpha_), static_cast<Eigen::Index>(n_beta_));
    for (std::size_t j = 0; j < n_beta_; ++j) {
      auto col = w_.col(static_cast<Eigen::Index>(j));
      col.setZero();
      for (std::size_t t = 0; t < col_idx[j].size(); ++t)
        col[col_idx[j][t]] = col_val[j][t];
      ldl_.solve_inplace(col.data());
    }
    // Schur complement S = K_bb - K_ab^T W
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_beta_),
                                              static_cast<Eigen::Index>(n_beta_));
    for (std::size_t j = 0; j < n_beta_; ++j) {
      const auto wj = w_.col(static_cast<Eigen::Index>(j));
      for (std::size_t i = 0; i <= j; ++i) {
        double acc = 0.0;
        const auto& idx = col_idx[i];
        const auto& val = col_val[i];
        for (std::size_t t = 0; t < idx.size(); ++t) acc += val[t] * wj[idx[t]];
        s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = -acc;
      }
      s(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j)) += kbb[j];
    }
    if (n_beta_ > 0) {
      schur_llt_.compute(s.selfadjointView<Eigen::Upper>());
      if (schur_llt_.info() != Eigen::Success) return false;
    }
    return true;
  }

  // Solves the full system for (rhs_alpha, rhs_beta); results overwrite inputs.
  void solve(std::vector<double>& rhs_alpha, std::vector<double>& rhs_beta) const {
    Eigen::Map<Eigen::VectorXd> ra(rhs_alpha.data(),
                                   static_cast<Eigen::Index>(n_alpha_));
    Eigen::VectorXd minv_ra = ra;
    ldl_.solve_inplace(minv_ra.data());
    if (n_beta_ > 0) {
      Eigen::VectorXd r2(static_cast<Eigen::Index>(n_beta_));
      for (std::size_t j = 0; j < n_beta_; ++j) {
        double acc = 0.0;
        const auto& idx = (*col_idx_)[j];
        const auto& val = (*col_val_)[j];
        for (std::size_t t = 0; t < idx.size(); ++t) acc += val[t] * minv_ra[idx[t]];
        r2[static_cast<Eigen::Index>(j)] = rhs_beta[j] - acc;
      }
      Eigen::VectorXd xb = schur_llt_.solve(r2);
      for (std::size_t j = 0; j < n_beta_; ++j) rhs_beta[j] = xb[static_cast<Eigen::Index>(j)];
      // x_alpha = M^-1 (rhs_alpha - K_ab x_beta)
      Eigen::VectorXd tmp = ra;
      for (std::size_t j = 0; j < n_beta_; ++j) {
        const auto& idx = (*col_idx_)[j];
        const auto& val = (*col_val_)[j];
        for (std::size_t t = 0; t < idx.size(); ++t)
          tmp[idx[t]] -= val[t] * rhs_beta[j];
      }
      ldl_.solve_inplace(tmp.data());
      ra = tmp;
    } else {
      ra = minv_ra;
    }
  }

private:
  std::size_t n_alpha_ = 0, n_beta_ = 0;
  detail::TridiagLdl ldl_;
  Eigen::MatrixXd w_;
  Eigen::LLT<Eigen::MatrixXd> schur_llt_;
  const std::vector<std::vector<int>>* col_idx_ = nullptr;
  const std::vector<std::vector<double>>* col_val_ = nullptr;
};

// Maximum likelihood fit of the CPM by Newton's method with step-halving.
// Monotonicity of alpha is maintained by iterating in the gap
// parameterization a_1 = alpha_1, alpha_c = alpha_{c-1} + exp(a_c).
inline CpmFit fit_cpm(std::span<const double> values, std::span<const int> cluster,
                      std::size_t n_clusters, Link link, const CpmOptions& opt = {}) {
  if (values.empty()) throw data_error("fit_cpm: no observations");
  if (values.size() != cluster.size())
    throw data_error("fit_cpm: values/cluster length mismatch");
  if (n_clusters < 1) throw data_error("fit_cpm: need at least one cluster");

  CpmFit fit;
  fit.link = link;
  fit.n_clusters = n_clusters;
  fit.cluster.assign(cluster.begin(), cluster.end());
  fit.cluster_count.assign(n_clusters, 0);
  for (int i : cluster) {
    if (i < 0 || static_cast<std::size_t>(i) >= n_clusters)
      throw data_error("fit_cpm: cluster index out of range");
    ++fit.cluster_count[static_cast<std::size_t>(i)];
  }
  for (int c : fit.cluster_count)
    if (c == 0) throw data_error("fit_cpm: empty cluster index");

  // distinct support and per-observation categories
  fit.support.assign(values.begin(), values.end());
  std::sort(fit.support.begin(), fit.support.end());
  fit.support.erase(std::unique(fit.support.begin(), fit.support.end()),
                    fit.support.end());
  const int n_cat = static_cast<int>(fit.support.size());
  if (n_cat < 2) throw data_error("fit_cpm: needs >= 2 distinct outcome values");
  fit.category.resize(values.size());
  for (std::size_t o = 0; o < values.size(); ++o)
    fit.category[o] = static_cast<int>(
        std::lower_bound(fit.support.begin(), fit.support.end(), values[o]) -
        fit.support.begin());

  const std::size_t n_alpha = static_cast<std::size_t>(n_cat) - 1;
  const std::size_t n_beta = n_clusters - 1;

  // start at the pooled saturated solution, beta = 0
  std::vector<double> counts(static_cast<std::size_t>(n_cat), 0.0);
  for (int c : fit.category) counts[static_cast<std::size_t>(c)] += 1.0;
  std::vector<double> alpha(n_alpha);
  {
    double cum = 0.0;
    const double N = static_cast<double>(values.size());
    for (std::size_t c = 0; c < n_alpha; ++c) {
      cum += counts[c];
      alpha[c] = link.g(cum / N);
    }
  }
  std::vector<double> a(n_alpha);  // gap parameterization
  a[0] = alpha[0];
  for (std::size_t c = 1; c < n_alpha; ++c) a[c] = std::log(alpha[c] - alpha[c - 1]);
  std::vector<double> beta(n_beta, 0.0);

  const auto structure =
      detail::beta_column_structure(fit.category, fit.cluster, n_clusters, n_cat);

  auto rebuild_alpha = [&](const std::vector<double>& av, std::vector<double>& out) {
    out.resize(av.size());
    if (av.empty()) return;
    out[0] = av[0];
    for (std::size_t c = 1; c < av.size(); ++c) out[c] = out[c - 1] + std::exp(av[c]);
  };

  double ll = detail::cpm_loglik(fit.category, fit.cluster, alpha, beta, link, n_cat);
  bool converged = false;
  int iter = 0;
  double grad_norm = std::numeric_limits<double>::infinity();

  auto check_separation = [&](const std::vector<double>& b) {
    for (std::size_t j = 0; j < b.size(); ++j)
      if (std::fabs(b[j]) > opt.separation_bound)
        throw numeric_error(
            "fit_cpm: apparent complete separation; coefficient for cluster index " +
            std::to_string(j + 1) + " reached " + std::to_string(b[j]));
  };

  std::vector<double> m_diag, m_off, rhs_a, rhs_b, alpha_try, a_try, beta_try,
      da(n_alpha), delta(n_alpha);
  CpmBlockFactor factor;

  for (iter = 0; iter < opt.max_iter; ++iter) {
    CpmSystem sys = detail::cpm_build_system(fit.category, fit.cluster, alpha, beta,
                                             link, n_cat, structure);
    grad_norm = sys.grad_max_norm();
    ll = sys.loglik;
    if (opt.trace)
      (*opt.trace) << "iter " << iter << " loglik " << ll << " grad " << grad_norm
                   << '\n';
    if (grad_norm <= opt.grad_tol) {
      converged = true;
      break;
    }

    // curvature correction from the gap parameterization: delta_d = s_d e^{-a_d}
    delta.assign(n_alpha, 0.0);
    {
      double suffix = 0.0;
      for (std::size_t d = n_alpha; d-- > 1;) {
        suffix += sys.grad_alpha[d];
        delta[d] = suffix * std::exp(-a[d]);
      }
    }
    bool factored = false;
    for (int attempt = 0; attempt < 2 && !factored; ++attempt) {
      m_diag = sys.kaa_diag;
      m_off = sys.kaa_off;
      if (attempt == 0) {
        for (std::size_t t = 0; t < n_alpha; ++t) {
          m_diag[t] -= delta[t] + (t + 1 < n_alpha ? delta[t + 1] : 0.0);
          if (t + 1 < n_alpha) m_off[t] += delta[t + 1];
        }
      }
      factored = factor.factor(m_diag, m_off, sys.col_idx, sys.col_val, sys.kbb);
    }
    if (!factored)
      throw numeric_error("fit_cpm: Newton system not positive definite at iteration " +
                          std::to_string(iter));

    rhs_a = sys.grad_alpha;
    rhs_b = sys.grad_beta;
    factor.solve(rhs_a, rhs_b);  // alpha-scale displacement and beta step

    // map the alpha displacement back to the gap parameterization
    da[0] = rhs_a[0];
    for (std::size_t d = 1; d < n_alpha; ++d)
      da[d] = std::exp(-a[d]) * (rhs_a[d] - rhs_a[d - 1]);

    double step = 1.0;
    bool accepted = false;
    double rel_change = 0.0;
    for (int h = 0; h < 40; ++h, step *= 0.5) {
      a_try = a;
      beta_try = beta;
      for (std::size_t d = 0; d < n_alpha; ++d) a_try[d] += step * da[d];
      for (std::size_t j = 0; j < n_beta; ++j) beta_try[j] += step * rhs_b[j];
      rebuild_alpha(a_try, alpha_try);
      const double ll_try =
          detail::cpm_loglik(fit.category, fit.cluster, alpha_try, beta_try, link, n_cat);
      if (std::isfinite(ll_try) && ll_try >= ll) {
        accepted = true;
        rel_change = std::fabs(ll_try - ll) / (std::fabs(ll) + 1.0);
        a.swap(a_try);
        beta.swap(beta_try);
        alpha.swap(alpha_try);
        ll = ll_try;
        break;
      }
    }
    check_separation(beta);
    if (!accepted || rel_change <= opt.loglik_rel_tol) {
      // stalled or converged by likelihood change; refresh the gradient norm
      CpmSystem chk = detail::cpm_build_system(fit.category, fit.cluster, alpha, beta,
                                               link, n_cat, structure);
      grad_norm = chk.grad_max_norm();
      ll = chk.loglik;
      if (grad_norm > 1e-4)
        throw numeric_error("fit_cpm: stalled with gradient max-norm = " +
                            std::to_string(grad_norm));
      converged = true;
      break;
    }
  }

  if (!converged)
    throw numeric_error("fit_cpm: no convergence after " + std::to_string(opt.max_iter) +
                        " iterations; gradient max-norm = " + std::to_string(grad_norm));

  fit.alpha = std::move(alpha);
  fit.beta = std::move(beta);
  fit.loglik = ll;
  fit.converged = converged;
  fit.iterations = iter;
  fit.grad_norm = grad_norm;
  return fit;
}

inline CpmFit fit_cpm(const ClusteredDataset& ds, Axis axis, Link link,
                      const CpmOptions& opt = {}) {
  const auto vals = axis_values(ds, axis);
  const auto cl = ds.cluster_index();
  return fit_cpm(vals, cl, ds.n_clusters(), link, opt);
}

// Observed-information blocks at the fitted parameters.
inline CpmSystem cpm_system_at_fit(const CpmFit& fit) {
  const auto structure = detail::beta_column_structure(
      fit.category, fit.cluster, fit.n_clusters, static_cast<int>(fit.n_categories()));
  return detail::cpm_build_system(fit.category, fit.cluster, fit.alpha, fit.beta,
                                  fit.link, static_cast<int>(fit.n_categories()),
                                  structure);
}

// Fitted cell probabilities for one cluster: pi_c = F(x_(c)|i) - F(x_(c-1)|i).
inline std::vector<double> cell_probabilities(const CpmFit& fit, int cluster_idx) {
  const int C = static_cast<int>(fit.n_categories());
  std::vector<double> pi(static_cast<std::size_t>(C));
  double prev = 0.0;
  for (int c = 0; c < C; ++c) {
    const double cur = fit.cond_cdf(c, cluster_idx);
    pi[static_cast<std::size_t>(c)] = cur - prev;
    prev = cur;
  }
  return pi;
}

}  // namespace rankcorr
