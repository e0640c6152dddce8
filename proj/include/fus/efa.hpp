#ifndef FUS_EFA_HPP
#define FUS_EFA_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "fus/correlation.hpp"
#include "fus/optimize.hpp"

namespace fus {

enum class Rotation { none, varimax, promax };

inline std::string to_string(Rotation r) {
  switch (r) {
    case Rotation::none: return "none";
    case Rotation::varimax: return "varimax";
    default: return "promax";
  }
}

inline Rotation rotation_from_string(const std::string& s) {
  if (s == "none") return Rotation::none;
  if (s == "varimax") return Rotation::varimax;
  if (s == "promax") return Rotation::promax;
  throw std::invalid_argument("unknown rotation '" + s + "'");
}

struct EfaConfig {
  int n_factors = 0;  // 0 means auto
  Rotation rotation = Rotation::promax;
  int promax_kappa = 4;
  int max_iter = 500;
  double tol = 1e-8;
  double min_loading = 0.32;
  double cross_loading = 0.32;
  int min_items_per_factor = 3;
  std::vector<std::string> keep;  // never removed by the automated loop
  std::vector<std::string> drop;  // removed up front, criterion "manual"
};

inline Eigen::VectorXd eigenvalues(const CorrelationMatrix& R) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(R.values, Eigen::EigenvaluesOnly);
  return es.eigenvalues().reverse();
}

struct FactorCountSuggestion {
  int kaiser = 0;
  int elbow = 0;
  bool converged = false;
};

/// Kaiser rule (eigenvalues strictly > 1) and the acceleration (second
/// difference) scree elbow. The elbow is the component just before the point
/// of maximum curvature.
inline FactorCountSuggestion suggest_n_factors(const CorrelationMatrix& R) {
  if (R.p() < 3) throw std::invalid_argument("suggest_n_factors: need p >= 3");
  Eigen::VectorXd ev = eigenvalues(R);
  FactorCountSuggestion s;
  for (int i = 0; i < ev.size(); ++i)
    if (ev(i) > 1.0) ++s.kaiser;
  double best = 0.0;
  for (int i = 1; i + 1 < ev.size(); ++i) {
    double d2 = ev(i - 1) - 2.0 * ev(i) + ev(i + 1);
    if (d2 > best + 1e-12) {
      best = d2;
      s.elbow = i;
    }
  }
  if (best < 1e-8) s.elbow = 0;
  s.converged = (s.kaiser == s.elbow);
  return s;
}

struct MlExtraction {
  Eigen::MatrixXd loadings;      // p x k, unrotated
  Eigen::VectorXd uniquenesses;  // psi
  double fit = 0.0;              // ML discrepancy at the minimum
  bool converged = false;
  bool heywood = false;  // some psi at the lower bound
  int iterations = 0;
};

namespace detail {

const double kPsiLower = 0.005;
const double kPsiUpper = 1.0;

inline Eigen::VectorXd psi_from_logit(const Eigen::VectorXd& t) {
  return kPsiLower + (kPsiUpper - kPsiLower) / (1.0 + (-t.array()).exp());
}

/// Profiled ML discrepancy over uniquenesses: with theta the descending
/// eigenvalues of Psi^{-1/2} R Psi^{-1/2},
///   F(psi) = sum_{j>k} (theta_j - ln theta_j) - (p - k).
inline double ml_profile_objective(const Eigen::MatrixXd& R, int k, const Eigen::VectorXd& psi) {
  const int p = static_cast<int>(R.rows());
  Eigen::VectorXd inv_sqrt = psi.array().rsqrt();
  Eigen::MatrixXd Rs = inv_sqrt.asDiagonal() * R * inv_sqrt.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Rs, Eigen::EigenvaluesOnly);
  double f = -(p - k);
  for (int j = 0; j < p - k; ++j) {
    double th = es.eigenvalues()(j);  // ascending: the p-k smallest
    if (th <= 0.0) return std::numeric_limits<double>::infinity();
    f += th - std::log(th);
  }
  return f;
}

inline Eigen::MatrixXd ml_loadings_from_psi(const Eigen::MatrixXd& R, int k,
                                            const Eigen::VectorXd& psi) {
  const int p = static_cast<int>(R.rows());
  Eigen::VectorXd inv_sqrt = psi.array().rsqrt();
  Eigen::MatrixXd Rs = inv_sqrt.asDiagonal() * R * inv_sqrt.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Rs);
  Eigen::MatrixXd L(p, k);
  for (int j = 0; j < k; ++j) {
    double th = es.eigenvalues()(p - 1 - j);  // descending order
    double scale = std::sqrt(std::max(th - 1.0, 0.0));
    L.col(j) = psi.array().sqrt() * es.eigenvectors().col(p - 1 - j).array() * scale;
  }
  return L;
}

}  // namespace detail

/// Maximum-likelihood extraction of k factors from a correlation matrix,
/// profiling the loadings out and minimizing over uniquenesses with BFGS.
inline MlExtraction extract_ml(const CorrelationMatrix& R, int k, int max_iter = 500,
                               double tol = 1e-8) {
  const int p = R.p();
  if (k < 1 || k >= p) throw std::invalid_argument("extract_ml: need 1 <= k < p");
  if ((p - k) * (p - k) - p - k < 0) throw std::invalid_argument("model over-parameterized");

  // start at 1 - squared multiple correlation
  Eigen::LLT<Eigen::MatrixXd> llt(R.values);
  if (llt.info() != Eigen::Success) throw std::runtime_error("extract_ml: singular correlation matrix");
  Eigen::MatrixXd Rinv = llt.solve(Eigen::MatrixXd::Identity(p, p));
  Eigen::VectorXd psi0 = Rinv.diagonal().cwiseInverse().cwiseMin(0.99).cwiseMax(0.01);

  const double lo = detail::kPsiLower, hi = detail::kPsiUpper;
  Eigen::VectorXd t0 =
      ((psi0.array() - lo) / (hi - psi0.array())).log();  // inverse logit map

  auto obj = [&](const Eigen::VectorXd& t) {
    return detail::ml_profile_objective(R.values, k, detail::psi_from_logit(t));
  };
  auto grad = [&](const Eigen::VectorXd& t) {
    Eigen::VectorXd psi = detail::psi_from_logit(t);
    Eigen::MatrixXd L = detail::ml_loadings_from_psi(R.values, k, psi);
    Eigen::VectorXd g_psi =
        ((L * L.transpose()).diagonal() + psi - R.values.diagonal()).array() / psi.array().square();
    Eigen::ArrayXd s = 1.0 / (1.0 + (-t.array()).exp());
    return (g_psi.array() * (hi - lo) * s * (1.0 - s)).matrix().eval();
  };

  MinimizeOptions opts;
  opts.max_iter = max_iter;
  opts.grad_tol = tol;
  MinimizeResult mr = bfgs_minimize(obj, grad, t0, opts);

  MlExtraction out;
  out.uniquenesses = detail::psi_from_logit(mr.x);
  out.loadings = detail::ml_loadings_from_psi(R.values, k, out.uniquenesses);
  out.fit = mr.f;
  out.converged = mr.converged;
  out.iterations = mr.iterations;
  out.heywood = (out.uniquenesses.array() < lo + 1e-4).any();
  // canonical column signs
  for (int j = 0; j < k; ++j)
    if (out.loadings.col(j).sum() < 0.0) out.loadings.col(j) = -out.loadings.col(j);
  return out;
}

struct VarimaxResult {
  Eigen::MatrixXd loadings;
  Eigen::MatrixXd rotation;  // orthogonal T with loadings = input * T
  int sweeps = 0;
};

/// Varimax with Kaiser row-normalization via pairwise planar rotations.
inline VarimaxResult rotate_varimax(const Eigen::MatrixXd& L, double tol = 1e-10,
                                    int max_sweeps = 1000) {
  const int p = static_cast<int>(L.rows());
  const int k = static_cast<int>(L.cols());
  VarimaxResult out;
  out.rotation = Eigen::MatrixXd::Identity(k, k);
  if (k < 2) {
    out.loadings = L;
    return out;
  }

  Eigen::VectorXd h = L.rowwise().norm();
  Eigen::VectorXd hsafe = h.cwiseMax(1e-12);
  Eigen::MatrixXd W = hsafe.cwiseInverse().asDiagonal() * L;

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    out.sweeps = sweep + 1;
    double max_angle = 0.0;
    for (int a = 0; a < k - 1; ++a) {
      for (int b = a + 1; b < k; ++b) {
        Eigen::ArrayXd x = W.col(a).array();
        Eigen::ArrayXd y = W.col(b).array();
        Eigen::ArrayXd u = x * x - y * y;
        Eigen::ArrayXd v = 2.0 * x * y;
        double A = u.sum(), B = v.sum();
        double C = (u * u - v * v).sum();
        double D = 2.0 * (u * v).sum();
        double num = D - 2.0 * A * B / p;
        double den = C - (A * A - B * B) / p;
        double phi = 0.25 * std::atan2(num, den);
        if (std::abs(phi) < 1e-10) continue;
        max_angle = std::max(max_angle, std::abs(phi));
        double c = std::cos(phi), s = std::sin(phi);
        Eigen::VectorXd wa = W.col(a), wb = W.col(b);
        W.col(a) = c * wa + s * wb;
        W.col(b) = -s * wa + c * wb;
        Eigen::VectorXd ta = out.rotation.col(a), tb = out.rotation.col(b);
        out.rotation.col(a) = c * ta + s * tb;
        out.rotation.col(b) = -s * ta + c * tb;
      }
    }
    if (max_angle < std::max(tol, 1e-10)) break;
  }
  out.loadings = L * out.rotation;  // exact orthogonality of T carries over
  return out;
}

struct PromaxResult {
  Eigen::MatrixXd pattern;
  Eigen::MatrixXd structure;
  Eigen::MatrixXd phi;
};

/// Promax oblique rotation: power transform of the varimax solution as
/// target, least-squares transform with normalized columns.
inline PromaxResult rotate_promax(const Eigen::MatrixXd& L, int kappa = 4) {
  const int k = static_cast<int>(L.cols());
  if (k < 2) throw std::invalid_argument("rotate_promax: need k >= 2");
  VarimaxResult vm = rotate_varimax(L);
  const Eigen::MatrixXd& V = vm.loadings;

  Eigen::MatrixXd Q =
      V.array().sign() * V.array().abs().pow(static_cast<double>(kappa));
  Eigen::MatrixXd VtV = V.transpose() * V;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(VtV);
  if (!lu.isInvertible()) throw std::runtime_error("degenerate target");
  Eigen::MatrixXd U = lu.solve(V.transpose() * Q);

  Eigen::MatrixXd UtU = U.transpose() * U;
  Eigen::FullPivLU<Eigen::MatrixXd> lu2(UtU);
  if (!lu2.isInvertible()) throw std::runtime_error("degenerate target");
  Eigen::VectorXd d = lu2.inverse().diagonal();
  if ((d.array() <= 0.0).any()) throw std::runtime_error("degenerate target");
  U = U * d.array().sqrt().matrix().asDiagonal();

  PromaxResult out;
  out.pattern = V * U;
  out.phi = (U.transpose() * U).inverse();
  out.phi = 0.5 * (out.phi + out.phi.transpose()).eval();
  out.structure = out.pattern * out.phi;
  return out;
}

enum class ItemFlag { assigned, low_loading, cross_loading };

inline std::string to_string(ItemFlag f) {
  switch (f) {
    case ItemFlag::assigned: return "assigned";
    case ItemFlag::low_loading: return "low_loading";
    default: return "cross_loading";
  }
}

struct ItemAssignment {
  int factor = -1;  // 0-based; -1 when flagged
  ItemFlag flag = ItemFlag::assigned;
};

/// Assigns each item to its strongest factor unless the best loading is too
/// small or a second factor also exceeds the cross-loading threshold.
inline std::vector<ItemAssignment> assign_items(const Eigen::MatrixXd& pattern,
                                                const EfaConfig& config) {
  std::vector<ItemAssignment> out;
  for (int i = 0; i < pattern.rows(); ++i) {
    Eigen::VectorXd a = pattern.row(i).cwiseAbs();
    int best = 0;
    a.maxCoeff(&best);
    ItemAssignment item;
    if (a(best) < config.min_loading) {
      item.flag = ItemFlag::low_loading;
    } else {
      int others_above = 0;
      for (int j = 0; j < a.size(); ++j)
        if (j != best && a(j) > config.cross_loading) ++others_above;
      if (others_above > 0) {
        item.flag = ItemFlag::cross_loading;
      } else {
        item.flag = ItemFlag::assigned;
        item.factor = best;
      }
    }
    out.push_back(item);
  }
  return out;
}

struct FactorSolution {
  std::vector<std::string> item_ids;
  Eigen::MatrixXd pattern;    // p x k
  Eigen::MatrixXd phi;        // k x k, identity for orthogonal solutions
  Eigen::MatrixXd structure;  // pattern * phi
  Eigen::VectorXd communalities;
  Eigen::VectorXd uniquenesses;
  Eigen::VectorXd eigenvalues;  // of R, descending
  Eigen::VectorXd ss_loadings;
  Eigen::VectorXd proportion_variance;
  double cumulative_variance = 0.0;
  std::vector<ItemAssignment> assignment;
  Rotation rotation = Rotation::none;
  bool converged = false;
  bool heywood = false;
  int iterations = 0;
  double fit = 0.0;

  int k() const { return static_cast<int>(pattern.cols()); }
};

namespace detail {

/// Orders factors by descending SS pattern loadings and flips column signs so
/// every column sum is nonnegative. Phi is permuted/flipped consistently.
inline void canonicalize(Eigen::MatrixXd& pattern, Eigen::MatrixXd& phi) {
  const int k = static_cast<int>(pattern.cols());
  std::vector<int> order(k);
  for (int j = 0; j < k; ++j) order[j] = j;
  Eigen::VectorXd ss = pattern.array().square().colwise().sum();
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return ss(a) > ss(b); });

  Eigen::MatrixXd P(pattern.rows(), k);
  Eigen::MatrixXd F(k, k);
  Eigen::VectorXd sign(k);
  for (int j = 0; j < k; ++j) {
    P.col(j) = pattern.col(order[j]);
    sign(j) = P.col(j).sum() < 0.0 ? -1.0 : 1.0;
    P.col(j) *= sign(j);
  }
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b) F(a, b) = sign(a) * sign(b) * phi(order[a], order[b]);
  pattern = P;
  phi = F;
}

}  // namespace detail

/// Full EFA: ML extraction, requested rotation, canonical ordering, variance
/// accounting, and item assignment.
inline FactorSolution run_efa(const CorrelationMatrix& R, const EfaConfig& config) {
  int k = config.n_factors;
  if (k <= 0) {
    FactorCountSuggestion s = suggest_n_factors(R);
    if (!s.converged)
      throw std::runtime_error("factor-count rules disagree (eigenvalue rule " +
                               std::to_string(s.kaiser) + ", scree elbow " +
                               std::to_string(s.elbow) + "); set n_factors explicitly");
    k = s.kaiser;
    if (k < 1) throw std::runtime_error("no factor count suggested; set n_factors explicitly");
  }

  MlExtraction ext = extract_ml(R, k, config.max_iter, config.tol);

  FactorSolution sol;
  sol.item_ids = R.labels;
  sol.rotation = config.rotation;
  sol.converged = ext.converged;
  sol.heywood = ext.heywood;
  sol.iterations = ext.iterations;
  sol.fit = ext.fit;
  sol.eigenvalues = eigenvalues(R);
  sol.uniquenesses = ext.uniquenesses;

  if (config.rotation == Rotation::promax && k >= 2) {
    PromaxResult pr = rotate_promax(ext.loadings, config.promax_kappa);
    sol.pattern = pr.pattern;
    sol.phi = pr.phi;
  } else if (config.rotation == Rotation::varimax && k >= 2) {
    sol.pattern = rotate_varimax(ext.loadings).loadings;
    sol.phi = Eigen::MatrixXd::Identity(k, k);
  } else {
    sol.pattern = ext.loadings;
    sol.phi = Eigen::MatrixXd::Identity(k, k);
  }
  detail::canonicalize(sol.pattern, sol.phi);
  sol.structure = sol.pattern * sol.phi;
  sol.communalities = (sol.pattern * sol.phi * sol.pattern.transpose()).diagonal();

  sol.ss_loadings = sol.pattern.array().square().colwise().sum();
  sol.proportion_variance = sol.ss_loadings / static_cast<double>(R.p());
  sol.cumulative_variance = sol.proportion_variance.sum();
  sol.assignment = assign_items(sol.pattern, config);
  return sol;
}

struct VarianceAccounting {
  Eigen::VectorXd ss_loadings;
  Eigen::VectorXd proportions;
  double cumulative = 0.0;
};

/// SS loadings as column sums of squared pattern loadings; proportions over p.
inline VarianceAccounting variance_accounting(const FactorSolution& sol) {
  VarianceAccounting va;
  va.ss_loadings = sol.pattern.array().square().colwise().sum();
  va.proportions = va.ss_loadings / static_cast<double>(sol.pattern.rows());
  va.cumulative = va.proportions.sum();
  return va;
}

enum class ReductionCriterion { low_loading, cross_loading, small_factor_collapse, manual };

inline std::string to_string(ReductionCriterion c) {
  switch (c) {
    case ReductionCriterion::low_loading: return "low_loading";
    case ReductionCriterion::cross_loading: return "cross_loading";
    case ReductionCriterion::small_factor_collapse: return "small_factor_collapse";
    default: return "manual";
  }
}

struct ReductionStep {
  std::string item;  // empty for factor collapses
  ReductionCriterion criterion = ReductionCriterion::manual;
  int n_factors = 0;
  int items_remaining = 0;
};

struct ReductionTrace {
  std::vector<ReductionStep> steps;
};

struct ReductionResult {
  std::vector<std::string> final_items;
  ReductionTrace trace;
  FactorSolution solution;
};

/// Iterative a-priori item reduction: manual drops first, then one-at-a-time
/// removal of the worst low-loading item, then cross-loaders (smallest gap
/// between their top two loadings first), collapsing factors that end up with
/// too few items. Refits after every removal.
inline ReductionResult reduce_items(const CorrelationMatrix& R, const EfaConfig& config) {
  std::vector<int> items;
  for (int i = 0; i < R.p(); ++i) items.push_back(i);
  std::set<std::string> keep(config.keep.begin(), config.keep.end());

  ReductionResult out;
  int k = config.n_factors > 0 ? config.n_factors : suggest_n_factors(R).kaiser;
  if (k < 1) throw std::invalid_argument("reduce_items: factor count unavailable");

  auto record = [&](const std::string& item, ReductionCriterion c) {
    out.trace.steps.push_back({item, c, k, static_cast<int>(items.size())});
  };

  for (const auto& d : config.drop) {
    auto it = std::find_if(items.begin(), items.end(),
                           [&](int i) { return R.label(i) == d; });
    if (it == items.end()) throw std::invalid_argument("reduce_items: unknown drop item '" + d + "'");
    items.erase(it);
    record(d, ReductionCriterion::manual);
  }

  EfaConfig cfg = config;
  while (true) {
    const int p = static_cast<int>(items.size());
    if (p <= k || (p - k) * (p - k) - p - k < 0) throw std::runtime_error("reduction exhausted");

    cfg.n_factors = k;
    CorrelationMatrix sub = R.restrict(items);
    FactorSolution sol = run_efa(sub, cfg);

    // stage 1: worst low-loading item
    int worst = -1;
    double worst_load = std::numeric_limits<double>::infinity();
    for (int i = 0; i < p; ++i) {
      if (sol.assignment[i].flag != ItemFlag::low_loading) continue;
      if (keep.count(sub.label(i))) continue;
      double m = sol.pattern.row(i).cwiseAbs().maxCoeff();
      if (m < worst_load) {
        worst_load = m;
        worst = i;
      }
    }
    if (worst >= 0) {
      record(sub.label(worst), ReductionCriterion::low_loading);
      items.erase(items.begin() + worst);
      continue;
    }

    // stage 2: cross-loader with the smallest gap between its top loadings
    worst = -1;
    double worst_gap = std::numeric_limits<double>::infinity();
    for (int i = 0; i < p; ++i) {
      if (sol.assignment[i].flag != ItemFlag::cross_loading) continue;
      if (keep.count(sub.label(i))) continue;
      std::vector<double> a;
      for (int j = 0; j < sol.k(); ++j) a.push_back(std::abs(sol.pattern(i, j)));
      std::sort(a.rbegin(), a.rend());
      double gap = a[0] - a[1];
      if (gap < worst_gap) {
        worst_gap = gap;
        worst = i;
      }
    }
    if (worst >= 0) {
      record(sub.label(worst), ReductionCriterion::cross_loading);
      items.erase(items.begin() + worst);
      continue;
    }

    // stage 3: collapse factors that hold too few items
    std::vector<int> counts(sol.k(), 0);
    for (const auto& a : sol.assignment)
      if (a.flag == ItemFlag::assigned) ++counts[a.factor];
    bool small = std::any_of(counts.begin(), counts.end(),
                             [&](int c) { return c < config.min_items_per_factor; });
    if (small && k > 1) {
      --k;
      record("", ReductionCriterion::small_factor_collapse);
      continue;
    }

    out.solution = std::move(sol);
    break;
  }

  for (int i : items) out.final_items.push_back(R.label(i));
  return out;
}

// JSON serialization

namespace detail {

inline nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

inline nlohmann::json vector_json(const Eigen::VectorXd& v) {
  nlohmann::json out = nlohmann::json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

}  // namespace detail

inline void to_json(nlohmann::json& j, const FactorSolution& s) {
  j = {{"item_ids", s.item_ids},
       {"n_factors", s.k()},
       {"rotation", to_string(s.rotation)},
       {"pattern", detail::matrix_json(s.pattern)},
       {"phi", detail::matrix_json(s.phi)},
       {"structure", detail::matrix_json(s.structure)},
       {"communalities", detail::vector_json(s.communalities)},
       {"uniquenesses", detail::vector_json(s.uniquenesses)},
       {"eigenvalues", detail::vector_json(s.eigenvalues)},
       {"ss_loadings", detail::vector_json(s.ss_loadings)},
       {"proportion_variance", detail::vector_json(s.proportion_variance)},
       {"cumulative_variance", s.cumulative_variance},
       {"converged", s.converged},
       {"heywood", s.heywood},
       {"iterations", s.iterations},
       {"fit", s.fit}};
  j["assignment"] = nlohmann::json::array();
  for (std::size_t i = 0; i < s.assignment.size(); ++i)
    j["assignment"].push_back({{"item", i < s.item_ids.size() ? s.item_ids[i] : std::to_string(i)},
                               {"factor", s.assignment[i].factor},
                               {"flag", to_string(s.assignment[i].flag)}});
}

inline void to_json(nlohmann::json& j, const ReductionTrace& t) {
  j = nlohmann::json::array();
  for (const auto& s : t.steps)
    j.push_back({{"item", s.item},
                 {"criterion", to_string(s.criterion)},
                 {"n_factors", s.n_factors},
                 {"items_remaining", s.items_remaining}});
}

inline void save_scree_csv(const Eigen::VectorXd& ev, std::ostream& out) {
  out << "component,eigenvalue\n";
  for (int i = 0; i < ev.size(); ++i) out << (i + 1) << "," << ev(i) << "\n";
}

}  // namespace fus

#endif  // FUS_EFA_HPP
