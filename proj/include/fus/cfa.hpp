#ifndef FUS_CFA_HPP
#define FUS_CFA_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "fus/correlation.hpp"
#include "fus/instrument.hpp"
#include "fus/optimize.hpp"
#include "fus/records.hpp"

namespace fus {

/// A confirmatory factor model: each item loads on exactly one factor, the
/// latent scale is set by fixing one marker loading per factor to 1.
struct CfaModel {
  std::vector<std::string> items;
  std::vector<std::string> factors;
  std::vector<int> factor_of;  // per item, index into factors
  std::vector<int> marker;     // per factor, index into items
  std::vector<std::string> warnings;

  int p() const { return static_cast<int>(items.size()); }
  int k() const { return static_cast<int>(factors.size()); }
  int n_free() const { return (p() - k()) + k() + k() * (k() - 1) / 2 + p(); }
  int df() const { return p() * (p() + 1) / 2 - n_free(); }

  bool is_marker(int item) const { return marker[factor_of[item]] == item; }
};

/// Builds a CFA model from an item order and an item -> factor map. Factors
/// appear in order of first use; the default marker is the first item of each
/// factor.
inline CfaModel build_cfa(const std::vector<std::string>& items,
                          const std::map<std::string, std::string>& loading_map,
                          const std::map<std::string, std::string>& marker_override = {}) {
  CfaModel m;
  m.items = items;
  std::map<std::string, int> factor_index;
  for (const auto& item : items) {
    auto it = loading_map.find(item);
    if (it == loading_map.end())
      throw std::invalid_argument("build_cfa: item '" + item + "' has no factor mapping");
    const std::string& f = it->second;
    if (!factor_index.count(f)) {
      factor_index[f] = static_cast<int>(m.factors.size());
      m.factors.push_back(f);
      m.marker.push_back(static_cast<int>(m.factor_of.size()));
    }
    m.factor_of.push_back(factor_index.at(f));
  }
  for (const auto& [f, item] : marker_override) {
    if (!factor_index.count(f)) throw std::invalid_argument("build_cfa: unknown factor '" + f + "'");
    auto it = std::find(items.begin(), items.end(), item);
    if (it == items.end()) throw std::invalid_argument("build_cfa: unknown marker item '" + item + "'");
    int idx = static_cast<int>(it - items.begin());
    if (m.factor_of[idx] != factor_index.at(f))
      throw std::invalid_argument("build_cfa: marker '" + item + "' does not load on '" + f + "'");
    m.marker[factor_index.at(f)] = idx;
  }
  std::vector<int> counts(m.k(), 0);
  for (int f : m.factor_of) ++counts[f];
  for (int f = 0; f < m.k(); ++f) {
    if (counts[f] == 0) throw std::invalid_argument("build_cfa: factor '" + m.factors[f] + "' has no items");
    if (counts[f] < 2)
      throw std::invalid_argument("build_cfa: factor '" + m.factors[f] + "' has fewer than 2 items");
    if (counts[f] < 3)
      m.warnings.push_back("factor '" + m.factors[f] + "' has only 2 items; estimation may be unstable");
  }
  if (m.df() < 0) throw std::invalid_argument("build_cfa: negative degrees of freedom");
  return m;
}

/// Model with the instrument's subscales as factors, restricted to the items
/// present in the instrument.
inline CfaModel build_cfa(const InstrumentDefinition& instrument) {
  std::vector<std::string> items;
  std::map<std::string, std::string> map;
  for (const auto& it : instrument.items) {
    std::string id = "i" + std::to_string(it.index);
    items.push_back(id);
    map[id] = it.subscale;
  }
  return build_cfa(items, map);
}

/// Single-factor alternative over the same items.
inline CfaModel build_one_factor(const std::vector<std::string>& items,
                                 const std::string& factor_name = "g") {
  std::map<std::string, std::string> map;
  for (const auto& it : items) map[it] = factor_name;
  return build_cfa(items, map);
}

namespace detail {

struct CfaParams {
  Eigen::MatrixXd lambda;  // p x k with marker entries fixed at 1
  Eigen::MatrixXd phi;     // k x k factor covariance
  Eigen::VectorXd psi;     // uniquenesses
};

/// Parameter vector layout: free loadings in item order, factor variances,
/// factor covariances (a<b), uniquenesses.
inline CfaParams unpack_theta(const CfaModel& m, const Eigen::VectorXd& theta) {
  const int p = m.p(), k = m.k();
  CfaParams out;
  out.lambda = Eigen::MatrixXd::Zero(p, k);
  out.phi = Eigen::MatrixXd::Zero(k, k);
  out.psi.resize(p);
  int pos = 0;
  for (int i = 0; i < p; ++i)
    out.lambda(i, m.factor_of[i]) = m.is_marker(i) ? 1.0 : theta(pos++);
  for (int f = 0; f < k; ++f) out.phi(f, f) = theta(pos++);
  for (int a = 0; a < k; ++a)
    for (int b = a + 1; b < k; ++b) {
      out.phi(a, b) = theta(pos);
      out.phi(b, a) = theta(pos);
      ++pos;
    }
  for (int i = 0; i < p; ++i) out.psi(i) = theta(pos++);
  return out;
}

inline Eigen::MatrixXd implied_sigma(const CfaParams& par) {
  Eigen::MatrixXd sigma = par.lambda * par.phi * par.lambda.transpose();
  sigma.diagonal() += par.psi;
  return sigma;
}

const double kCfaPsiFloor = 1e-3;

}  // namespace detail

struct FitIndices {
  double cfi = 0.0;
  double tli = 0.0;
  double rmsea = 0.0;
  double srmr = 0.0;
};

/// Normal-theory fit indices from the target and baseline statistics plus the
/// residual matrix S - Sigma.
inline FitIndices fit_indices(double T, int df, double T_base, int df_base, long n,
                              const Eigen::MatrixXd& residual, const Eigen::VectorXd& s_diag) {
  if (df <= 0 || df_base <= 0) throw std::invalid_argument("fit_indices: df must be positive");
  if (T_base <= df_base)
    throw std::runtime_error("fit_indices: baseline fits no worse than saturated; CFI/TLI undefined");
  FitIndices out;
  double d = std::max(T - df, 0.0);
  double d_base = std::max(T_base - df_base, 0.0);
  out.cfi = 1.0 - d / std::max(d_base, d);
  out.tli = ((T_base / df_base) - (T / df)) / ((T_base / df_base) - 1.0);
  out.rmsea = std::sqrt(d / (df * static_cast<double>(n - 1)));
  double ss = 0.0;
  const int p = static_cast<int>(residual.rows());
  for (int i = 0; i < p; ++i)
    for (int j = 0; j <= i; ++j) {
      double z = residual(i, j) / std::sqrt(s_diag(i) * s_diag(j));
      ss += z * z;
    }
  out.srmr = std::sqrt(ss / (p * (p + 1) / 2.0));
  return out;
}

struct CfaFit {
  Eigen::VectorXd theta;
  std::vector<std::string> labels;
  Eigen::MatrixXd lambda;
  Eigen::MatrixXd phi;
  Eigen::VectorXd psi;
  Eigen::MatrixXd sigma;     // model-implied
  Eigen::MatrixXd residual;  // S - sigma
  double F = 0.0;
  double T = 0.0;
  int df = 0;
  double p_value = 1.0;
  double T_base = 0.0;
  int df_base = 0;
  FitIndices indices;
  long n = 0;
  bool converged = false;
  bool heywood = false;
  int iterations = 0;
};

/// Fits the model to a covariance (or correlation) matrix by minimizing the
/// ML discrepancy F = ln|Sigma| + tr(S Sigma^-1) - ln|S| - p with an analytic
/// gradient. T = (n-1) F.
inline CfaFit fit_ml(const CfaModel& model, const Eigen::MatrixXd& S, long n,
                     int max_iter = 2000, double tol = 1e-8) {
  const int p = model.p(), k = model.k();
  if (S.rows() != p || S.cols() != p) throw std::invalid_argument("fit_ml: matrix size mismatch");
  if (n <= p) throw std::invalid_argument("fit_ml: need n > p");
  if (model.df() < 0) throw std::invalid_argument("fit_ml: negative degrees of freedom");

  Eigen::LLT<Eigen::MatrixXd> llt_s(S);
  if (llt_s.info() != Eigen::Success) throw std::runtime_error("fit_ml: input matrix not positive definite");
  double logdet_s = 2.0 * llt_s.matrixL().toDenseMatrix().diagonal().array().log().sum();

  // start values: non-marker loadings at 0.7 of the marker scale, factor
  // variance at half the marker variance, uniquenesses at half the item variance
  Eigen::VectorXd theta(model.n_free());
  int pos = 0;
  for (int i = 0; i < p; ++i)
    if (!model.is_marker(i)) theta(pos++) = 0.7;
  for (int f = 0; f < k; ++f) theta(pos++) = 0.5 * S(model.marker[f], model.marker[f]);
  for (int a = 0; a < k; ++a)
    for (int b = a + 1; b < k; ++b) theta(pos++) = 0.0;
  for (int i = 0; i < p; ++i) theta(pos++) = 0.5 * S(i, i);

  auto objective = [&](const Eigen::VectorXd& th) -> double {
    detail::CfaParams par = detail::unpack_theta(model, th);
    if ((par.psi.array() < detail::kCfaPsiFloor).any()) return std::numeric_limits<double>::infinity();
    if ((par.phi.diagonal().array() <= 1e-8).any()) return std::numeric_limits<double>::infinity();
    Eigen::MatrixXd sigma = detail::implied_sigma(par);
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
    double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    Eigen::MatrixXd sinv_s = llt.solve(S);
    return logdet + sinv_s.trace() - logdet_s - p;
  };

  auto gradient = [&](const Eigen::VectorXd& th) -> Eigen::VectorXd {
    detail::CfaParams par = detail::unpack_theta(model, th);
    Eigen::MatrixXd sigma = detail::implied_sigma(par);
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    Eigen::MatrixXd sigma_inv = llt.solve(Eigen::MatrixXd::Identity(p, p));
    Eigen::MatrixXd E = sigma_inv * (sigma - S) * sigma_inv;  // dF/dSigma up to symmetry
    Eigen::MatrixXd ELP = E * par.lambda * par.phi;
    Eigen::MatrixXd LEL = par.lambda.transpose() * E * par.lambda;

    Eigen::VectorXd g(model.n_free());
    int q = 0;
    for (int i = 0; i < p; ++i)
      if (!model.is_marker(i)) g(q++) = 2.0 * ELP(i, model.factor_of[i]);
    for (int f = 0; f < k; ++f) g(q++) = LEL(f, f);
    for (int a = 0; a < k; ++a)
      for (int b = a + 1; b < k; ++b) g(q++) = 2.0 * LEL(a, b);
    for (int i = 0; i < p; ++i) g(q++) = E(i, i);
    return g;
  };

  MinimizeOptions opts;
  opts.max_iter = max_iter;
  opts.grad_tol = tol;
  MinimizeResult mr = bfgs_minimize(objective, gradient, theta, opts);

  CfaFit fit;
  fit.theta = mr.x;
  fit.converged = mr.converged;
  fit.iterations = mr.iterations;
  fit.n = n;
  detail::CfaParams par = detail::unpack_theta(model, mr.x);
  fit.lambda = par.lambda;
  fit.phi = par.phi;
  fit.psi = par.psi;
  fit.heywood = (par.psi.array() <= detail::kCfaPsiFloor * (1.0 + 1e-6)).any();
  fit.sigma = detail::implied_sigma(par);
  fit.residual = S - fit.sigma;
  fit.F = mr.f;
  fit.df = model.df();
  fit.T = (n - 1) * fit.F;
  fit.p_value = fit.df > 0 ? chi_square_sf(std::max(fit.T, 0.0), fit.df) : 1.0;

  // independence baseline has the closed-form minimum at Sigma = diag(S)
  fit.df_base = p * (p - 1) / 2;
  double F_base = S.diagonal().array().log().sum() - logdet_s;
  fit.T_base = (n - 1) * F_base;

  fit.indices = fit_indices(fit.T, fit.df, fit.T_base, fit.df_base, n, fit.residual, S.diagonal());

  int q = 0;
  for (int i = 0; i < p; ++i)
    if (!model.is_marker(i))
      fit.labels.push_back("lambda:" + model.items[i] + "~" + model.factors[model.factor_of[i]]), ++q;
  for (int f = 0; f < k; ++f) fit.labels.push_back("phi:" + model.factors[f]);
  for (int a = 0; a < k; ++a)
    for (int b = a + 1; b < k; ++b)
      fit.labels.push_back("phi:" + model.factors[a] + "~" + model.factors[b]);
  for (int i = 0; i < p; ++i) fit.labels.push_back("psi:" + model.items[i]);
  return fit;
}

inline CfaFit fit_ml(const CfaModel& model, const CorrelationMatrix& R, long n,
                     int max_iter = 2000, double tol = 1e-8) {
  return fit_ml(model, R.values, n, max_iter, tol);
}

struct StandardizedSolution {
  Eigen::MatrixXd loadings;     // completely standardized
  Eigen::MatrixXd factor_corr;  // phi rescaled to a correlation matrix
};

/// Rescales to unit factor variances and unit item variances.
inline StandardizedSolution standardize(const CfaFit& fit) {
  const int p = static_cast<int>(fit.lambda.rows());
  const int k = static_cast<int>(fit.lambda.cols());
  if ((fit.phi.diagonal().array() <= 0.0).any() || (fit.sigma.diagonal().array() <= 0.0).any())
    throw std::runtime_error("standardize: nonpositive variance estimate");
  StandardizedSolution out;
  out.loadings.resize(p, k);
  for (int i = 0; i < p; ++i)
    for (int f = 0; f < k; ++f)
      out.loadings(i, f) = fit.lambda(i, f) * std::sqrt(fit.phi(f, f)) / std::sqrt(fit.sigma(i, i));
  Eigen::VectorXd d = fit.phi.diagonal().array().rsqrt();
  out.factor_corr = d.asDiagonal() * fit.phi * d.asDiagonal();
  return out;
}

// Fourth-order moment machinery for the robust correction.

namespace detail {

/// vech index of entry (i,j), i >= j, lower triangle column-major.
inline int vech_index(int i, int j, int p) {
  if (i < j) std::swap(i, j);
  return j * p - j * (j - 1) / 2 + (i - j);
}

inline Eigen::VectorXd vech(const Eigen::MatrixXd& M) {
  const int p = static_cast<int>(M.rows());
  Eigen::VectorXd v(p * (p + 1) / 2);
  for (int j = 0; j < p; ++j)
    for (int i = j; i < p; ++i) v(vech_index(i, j, p)) = M(i, j);
  return v;
}

/// Duplication matrix: vec(A) = D vech(A) for symmetric A.
inline Eigen::MatrixXd duplication_matrix(int p) {
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(p * p, p * (p + 1) / 2);
  for (int j = 0; j < p; ++j)
    for (int i = 0; i < p; ++i) D(j * p + i, vech_index(i, j, p)) = 1.0;
  return D;
}

/// Normal-theory weight matrix W = 0.5 D' (Sigma^-1 kron Sigma^-1) D.
inline Eigen::MatrixXd nt_weight_matrix(const Eigen::MatrixXd& sigma) {
  const int p = static_cast<int>(sigma.rows());
  Eigen::MatrixXd sigma_inv = sigma.llt().solve(Eigen::MatrixXd::Identity(p, p));
  Eigen::MatrixXd kron(p * p, p * p);
  for (int a = 0; a < p; ++a)
    for (int b = 0; b < p; ++b)
      kron.block(a * p, b * p, p, p) = sigma_inv(a, b) * sigma_inv;
  Eigen::MatrixXd D = duplication_matrix(p);
  return 0.5 * D.transpose() * kron * D;
}

/// Jacobian of vech(Sigma(theta)) with respect to the free parameters, using
/// the same layout as unpack_theta.
inline Eigen::MatrixXd model_delta(const CfaModel& m, const CfaParams& par) {
  const int p = m.p(), k = m.k();
  const int pstar = p * (p + 1) / 2;
  Eigen::MatrixXd delta(pstar, m.n_free());
  int col = 0;
  Eigen::MatrixXd LP = par.lambda * par.phi;  // p x k
  auto put_sym = [&](const Eigen::MatrixXd& dS) {
    delta.col(col++) = vech(dS);
  };
  for (int i = 0; i < p; ++i) {
    if (m.is_marker(i)) continue;
    int f = m.factor_of[i];
    Eigen::MatrixXd dS = Eigen::MatrixXd::Zero(p, p);
    dS.row(i) += LP.col(f).transpose();
    dS.col(i) += LP.col(f);
    put_sym(dS);
  }
  for (int f = 0; f < k; ++f)
    put_sym(par.lambda.col(f) * par.lambda.col(f).transpose());
  for (int a = 0; a < k; ++a)
    for (int b = a + 1; b < k; ++b)
      put_sym(par.lambda.col(a) * par.lambda.col(b).transpose() +
              par.lambda.col(b) * par.lambda.col(a).transpose());
  for (int i = 0; i < p; ++i) {
    Eigen::MatrixXd dS = Eigen::MatrixXd::Zero(p, p);
    dS(i, i) = 1.0;
    put_sym(dS);
  }
  return delta;
}

/// Residual weight matrix U = W - W Delta (Delta' W Delta)^-1 Delta' W.
inline Eigen::MatrixXd residual_weight(const Eigen::MatrixXd& W, const Eigen::MatrixXd& delta) {
  Eigen::MatrixXd WD = W * delta;
  Eigen::MatrixXd inner = delta.transpose() * WD;
  Eigen::MatrixXd U = W - WD * inner.ldlt().solve(WD.transpose());
  return 0.5 * (U + U.transpose());
}

}  // namespace detail

struct GammaMatrix {
  Eigen::MatrixXd values;  // p* x p*
  long n = 0;
  bool small_sample_warning = false;
};

/// Empirical asymptotic covariance matrix of the sample covariances
/// (fourth-order central moments minus the covariance products).
inline GammaMatrix estimate_gamma(const Eigen::MatrixXd& data) {
  const long n = data.rows();
  const int p = static_cast<int>(data.cols());
  if (n < 4) throw std::invalid_argument("estimate_gamma: need n >= 4");
  const int pstar = p * (p + 1) / 2;
  Eigen::MatrixXd Z = data.rowwise() - data.colwise().mean();
  for (int j = 0; j < p; ++j)
    if (Z.col(j).cwiseAbs().maxCoeff() < 1e-12)
      throw std::invalid_argument("estimate_gamma: constant column " + std::to_string(j + 1));

  Eigen::MatrixXd Y(n, pstar);  // per-case products centered at the biased covariances
  for (int j = 0; j < p; ++j)
    for (int i = j; i < p; ++i) {
      Eigen::VectorXd prod = Z.col(i).array() * Z.col(j).array();
      Y.col(detail::vech_index(i, j, p)) = prod.array() - prod.mean();
    }
  GammaMatrix g;
  g.values = Y.transpose() * Y / static_cast<double>(n);
  g.n = n;
  g.small_sample_warning = n <= pstar;
  return g;
}

inline GammaMatrix estimate_gamma(const RatingMatrix& m) { return estimate_gamma(m.values); }

/// Closed-form Gamma under multivariate normality: 2 D+ (Sigma kron Sigma) D+'.
inline GammaMatrix normal_theory_gamma(const Eigen::MatrixXd& sigma, long n = 0) {
  const int p = static_cast<int>(sigma.rows());
  Eigen::MatrixXd D = detail::duplication_matrix(p);
  Eigen::MatrixXd Dplus = (D.transpose() * D).ldlt().solve(D.transpose());
  Eigen::MatrixXd kron(p * p, p * p);
  for (int a = 0; a < p; ++a)
    for (int b = 0; b < p; ++b)
      kron.block(a * p, b * p, p, p) = sigma(a, b) * sigma;
  GammaMatrix g;
  g.values = 2.0 * Dplus * kron * Dplus.transpose();
  g.n = n;
  return g;
}

struct SatorraBentlerResult {
  double c = 1.0;       // scaling factor of the target model
  double T_scaled = 0.0;
  double c_base = 1.0;  // scaling factor of the independence baseline
  double T_base_scaled = 0.0;
  FitIndices robust;    // srmr carried over unchanged
};

/// Satorra-Bentler scaling: c = tr(U Gamma)/df with U the residual weight
/// matrix at the estimates; robust indices recomputed from the scaled target
/// and baseline statistics.
inline SatorraBentlerResult satorra_bentler(const CfaModel& model, const CfaFit& fit,
                                            const GammaMatrix& gamma,
                                            const Eigen::MatrixXd& S) {
  if (!fit.converged) throw std::invalid_argument("satorra_bentler: fit did not converge");
  const int p = model.p();
  detail::CfaParams par{fit.lambda, fit.phi, fit.psi};

  Eigen::MatrixXd W = detail::nt_weight_matrix(fit.sigma);
  Eigen::MatrixXd delta = detail::model_delta(model, par);
  Eigen::MatrixXd U = detail::residual_weight(W, delta);

  SatorraBentlerResult out;
  out.c = (U * gamma.values).trace() / fit.df;
  if (out.c <= 0.0) throw std::runtime_error("invalid scaling factor");
  out.T_scaled = fit.T / out.c;

  // baseline: free variances only, Sigma = diag(S)
  Eigen::MatrixXd sigma_base = Eigen::MatrixXd(S.diagonal().asDiagonal());
  Eigen::MatrixXd W_base = detail::nt_weight_matrix(sigma_base);
  Eigen::MatrixXd delta_base(p * (p + 1) / 2, p);
  for (int i = 0; i < p; ++i) {
    Eigen::MatrixXd dS = Eigen::MatrixXd::Zero(p, p);
    dS(i, i) = 1.0;
    delta_base.col(i) = detail::vech(dS);
  }
  Eigen::MatrixXd U_base = detail::residual_weight(W_base, delta_base);
  out.c_base = (U_base * gamma.values).trace() / fit.df_base;
  if (out.c_base <= 0.0) throw std::runtime_error("invalid scaling factor");
  out.T_base_scaled = fit.T_base / out.c_base;

  out.robust = fit_indices(out.T_scaled, fit.df, out.T_base_scaled, fit.df_base, fit.n,
                           fit.residual, S.diagonal());
  out.robust.srmr = fit.indices.srmr;  // SRMR has no robust variant
  return out;
}

struct ScaledDiffResult {
  double T_d = 0.0;
  int df_d = 0;
  double p = 1.0;
  double c_d = 1.0;
};

/// Satorra-Bentler scaled chi-square difference test for nested models.
/// T0, T1 are the unscaled ML statistics; c0, c1 their scaling factors.
inline ScaledDiffResult scaled_chisq_diff(double T0, int df0, double c0,
                                          double T1, int df1, double c1) {
  if (df0 <= df1) throw std::invalid_argument("scaled_chisq_diff: models not nested (df0 <= df1)");
  ScaledDiffResult out;
  out.df_d = df0 - df1;
  out.c_d = (df0 * c0 - df1 * c1) / out.df_d;
  if (out.c_d <= 0.0)
    throw std::runtime_error("scaled difference undefined (nonpositive scaling); unscaled difference = " +
                             std::to_string(T0 - T1));
  out.T_d = (T0 - T1) / out.c_d;
  if (out.T_d < 0.0) out.T_d = 0.0;
  out.p = chi_square_sf(out.T_d, out.df_d);
  return out;
}

inline ScaledDiffResult scaled_chisq_diff(const CfaFit& restricted, double c_restricted,
                                          const CfaFit& full, double c_full) {
  return scaled_chisq_diff(restricted.T, restricted.df, c_restricted,
                           full.T, full.df, c_full);
}

inline void to_json(nlohmann::json& j, const FitIndices& f) {
  j = {{"cfi", f.cfi}, {"tli", f.tli}, {"rmsea", f.rmsea}, {"srmr", f.srmr}};
}

inline void to_json(nlohmann::json& j, const CfaFit& f) {
  j = {{"T", f.T},
       {"df", f.df},
       {"p", f.p_value},
       {"p_display", format_p(f.p_value)},
       {"T_baseline", f.T_base},
       {"df_baseline", f.df_base},
       {"indices", f.indices},
       {"n", f.n},
       {"converged", f.converged},
       {"heywood", f.heywood},
       {"iterations", f.iterations}};
  j["parameters"] = nlohmann::json::array();
  for (std::size_t i = 0; i < f.labels.size(); ++i)
    j["parameters"].push_back({{"label", f.labels[i]}, {"value", f.theta(static_cast<Eigen::Index>(i))}});
}

/// Model specification file: JSON object mapping item ids to factor names,
/// with an optional "markers" object of factor -> item overrides.
inline CfaModel load_cfa_structure(const std::string& path, const std::vector<std::string>& items) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open structure file: " + path);
  nlohmann::json j;
  in >> j;
  std::map<std::string, std::string> loading_map;
  std::map<std::string, std::string> markers;
  const nlohmann::json& map_obj = j.contains("loadings") ? j.at("loadings") : j;
  for (auto it = map_obj.begin(); it != map_obj.end(); ++it) {
    if (it.key() == "markers") continue;
    loading_map[it.key()] = it.value().get<std::string>();
  }
  if (j.contains("markers"))
    for (auto it = j.at("markers").begin(); it != j.at("markers").end(); ++it)
      markers[it.key()] = it.value().get<std::string>();
  return build_cfa(items, loading_map, markers);
}

}  // namespace fus

#endif  // FUS_CFA_HPP
