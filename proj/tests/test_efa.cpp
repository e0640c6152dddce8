#include <doctest.h>

#include <Eigen/Dense>
#include <random>

#include "fus/efa.hpp"
#include "fus/simgen.hpp"

namespace {

const std::string kDataDir = FUS_DATA_DIR;

fus::CorrelationMatrix wrap(const Eigen::MatrixXd& values) {
  fus::CorrelationMatrix R;
  R.values = values;
  return R;
}

// population correlation of a factor model
Eigen::MatrixXd model_corr(const Eigen::MatrixXd& lambda, const Eigen::MatrixXd& phi) {
  Eigen::MatrixXd R = lambda * phi * lambda.transpose();
  for (int i = 0; i < R.rows(); ++i) R(i, i) = 1.0;
  return R;
}

// EM algorithm for ML factor analysis, an independent oracle for extract_ml
Eigen::MatrixXd em_factor_analysis(const Eigen::MatrixXd& R, int k, int iters = 20000) {
  const int p = static_cast<int>(R.rows());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(R);
  Eigen::MatrixXd lambda(p, k);
  for (int j = 0; j < k; ++j)
    lambda.col(j) =
        es.eigenvectors().col(p - 1 - j) * std::sqrt(std::max(es.eigenvalues()(p - 1 - j), 0.1));
  Eigen::VectorXd psi =
      (Eigen::VectorXd::Ones(p) - (lambda * lambda.transpose()).diagonal()).cwiseMax(0.05);

  for (int it = 0; it < iters; ++it) {
    Eigen::MatrixXd sigma = lambda * lambda.transpose();
    sigma.diagonal() += psi;
    Eigen::MatrixXd beta = lambda.transpose() * sigma.llt().solve(Eigen::MatrixXd::Identity(p, p));
    Eigen::MatrixXd ezz =
        Eigen::MatrixXd::Identity(k, k) - beta * lambda + beta * R * beta.transpose();
    Eigen::MatrixXd lambda_new = R * beta.transpose() * ezz.llt().solve(Eigen::MatrixXd::Identity(k, k));
    Eigen::VectorXd psi_new = (R - lambda_new * beta * R).diagonal().cwiseMax(0.005);
    double change = (lambda_new - lambda).cwiseAbs().maxCoeff();
    lambda = lambda_new;
    psi = psi_new;
    if (change < 1e-12) break;
  }
  return lambda;
}

// orthogonal Procrustes alignment of A to B
Eigen::MatrixXd procrustes(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A.transpose() * B,
                                        Eigen::ComputeThinU | Eigen::ComputeThinV);
  return A * svd.matrixU() * svd.matrixV().transpose();
}

double varimax_criterion(const Eigen::MatrixXd& L) {
  const double p = static_cast<double>(L.rows());
  Eigen::VectorXd h = L.rowwise().norm().cwiseMax(1e-12);
  Eigen::MatrixXd W = h.cwiseInverse().asDiagonal() * L;
  double v = 0.0;
  for (int j = 0; j < W.cols(); ++j) {
    Eigen::ArrayXd sq = W.col(j).array().square();
    v += (sq * sq).sum() / p - std::pow(sq.sum() / p, 2);
  }
  return v;
}

}  // namespace

TEST_CASE("eigenvalues of simple matrices") {
  fus::CorrelationMatrix I = wrap(Eigen::MatrixXd::Identity(4, 4));
  Eigen::VectorXd ev = fus::eigenvalues(I);
  for (int i = 0; i < 4; ++i) CHECK(ev(i) == doctest::Approx(1.0).epsilon(1e-12));

  Eigen::MatrixXd R2(2, 2);
  R2 << 1.0, 0.6, 0.6, 1.0;
  Eigen::VectorXd ev2 = fus::eigenvalues(wrap(R2));
  CHECK(ev2(0) == doctest::Approx(1.6).epsilon(1e-12));
  CHECK(ev2(1) == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(ev2.sum() == doctest::Approx(2.0).epsilon(1e-10));
}

TEST_CASE("factor count suggestion") {
  fus::FactorCountSuggestion id = fus::suggest_n_factors(wrap(Eigen::MatrixXd::Identity(6, 6)));
  CHECK(id.kaiser == 0);
  CHECK(id.elbow == 0);
  CHECK(id.converged);

  // planted two-factor population with strong loadings
  Eigen::MatrixXd lambda = Eigen::MatrixXd::Zero(8, 2);
  lambda.block(0, 0, 4, 1).setConstant(0.8);
  lambda.block(4, 1, 4, 1).setConstant(0.8);
  fus::FactorCountSuggestion s =
      fus::suggest_n_factors(wrap(model_corr(lambda, Eigen::MatrixXd::Identity(2, 2))));
  CHECK(s.kaiser == 2);
  CHECK(s.elbow == 2);
  CHECK(s.converged);
}

TEST_CASE("ML extraction recovers a zero-residual one-factor model") {
  Eigen::MatrixXd lambda(3, 1);
  lambda << 0.8, 0.7, 0.6;
  fus::CorrelationMatrix R = wrap(model_corr(lambda, Eigen::MatrixXd::Identity(1, 1)));
  fus::MlExtraction ext = fus::extract_ml(R, 1);
  CHECK(ext.converged);
  CHECK(ext.fit == doctest::Approx(0.0).epsilon(1e-8));
  for (int i = 0; i < 3; ++i)
    CHECK(std::abs(ext.loadings(i, 0)) == doctest::Approx(lambda(i, 0)).epsilon(1e-4));
  CHECK_THROWS(fus::extract_ml(R, 3));
  CHECK_THROWS_WITH_AS(fus::extract_ml(R, 2), doctest::Contains("over-parameterized"),
                       std::invalid_argument);
}

TEST_CASE("ML extraction matches the EM oracle on sampled matrices") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(0.25, 0.7);
  for (int rep = 0; rep < 5; ++rep) {
    Eigen::MatrixXd lambda(6, 2);
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 2; ++j)
        lambda(i, j) = (j == i / 3) ? unif(rng) + 0.15 : 0.2 * unif(rng);
    fus::PopulationModel model;
    model.loadings = lambda;
    model.phi = Eigen::MatrixXd::Identity(2, 2);
    model.uniquenesses =
        Eigen::VectorXd::Ones(6) - (lambda * lambda.transpose()).diagonal();
    model.seed = 100 + rep;
    Eigen::MatrixXd data = fus::generate_factor_data(model, 800);
    fus::CorrelationMatrix R = fus::pearson_matrix(data);

    fus::MlExtraction ext = fus::extract_ml(R, 2);
    REQUIRE(ext.converged);
    Eigen::MatrixXd em = em_factor_analysis(R.values, 2);
    Eigen::MatrixXd aligned = procrustes(em, ext.loadings);
    CHECK((aligned - ext.loadings).cwiseAbs().maxCoeff() < 1e-3);
  }
}

TEST_CASE("varimax is a fixed point on simple structure and preserves communalities") {
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(6, 2);
  L.block(0, 0, 3, 1) << 0.8, 0.7, 0.6;
  L.block(3, 1, 3, 1) << 0.75, 0.65, 0.55;
  fus::VarimaxResult vm = fus::rotate_varimax(L);
  CHECK((vm.rotation.transpose() * vm.rotation - Eigen::MatrixXd::Identity(2, 2))
            .cwiseAbs()
            .maxCoeff() < 1e-10);
  // unchanged up to column sign/permutation
  Eigen::MatrixXd abs_diff =
      (vm.loadings.cwiseAbs() - L.cwiseAbs()).cwiseAbs();
  Eigen::MatrixXd abs_diff_swapped =
      (vm.loadings.cwiseAbs() - (Eigen::MatrixXd(6, 2) << L.col(1), L.col(0)).finished().cwiseAbs())
          .cwiseAbs();
  CHECK((abs_diff.maxCoeff() < 1e-8 || abs_diff_swapped.maxCoeff() < 1e-8));

  std::mt19937_64 rng(11);
  std::normal_distribution<double> normal(0.0, 0.4);
  Eigen::MatrixXd Lr(10, 3);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 3; ++j) Lr(i, j) = normal(rng);
  fus::VarimaxResult vr = fus::rotate_varimax(Lr);
  CHECK(varimax_criterion(vr.loadings) >= varimax_criterion(Lr) - 1e-12);
  Eigen::VectorXd h_before = Lr.rowwise().squaredNorm();
  Eigen::VectorXd h_after = vr.loadings.rowwise().squaredNorm();
  CHECK((h_before - h_after).cwiseAbs().maxCoeff() < 1e-10);

  // k = 1 returns the identity rotation
  fus::VarimaxResult one = fus::rotate_varimax(Lr.col(0));
  CHECK(one.rotation(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("promax on orthogonal simple structure stays near varimax") {
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(6, 2);
  L.block(0, 0, 3, 1) << 0.8, 0.7, 0.6;
  L.block(3, 1, 3, 1) << 0.75, 0.65, 0.55;
  fus::PromaxResult pr = fus::rotate_promax(L);
  fus::VarimaxResult vm = fus::rotate_varimax(L);
  CHECK((pr.phi - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 0.02);
  CHECK((pr.pattern.cwiseAbs() - vm.loadings.cwiseAbs()).cwiseAbs().maxCoeff() < 0.05);
  CHECK((pr.structure - pr.pattern * pr.phi).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS(fus::rotate_promax(L.col(0)));
}

TEST_CASE("full EFA on the final numerical matrix is canonical and consistent") {
  fus::CorrelationMatrix R = fus::load_correlation_csv(kDataDir + "/corr_final_numerical.csv");
  fus::EfaConfig cfg;
  cfg.n_factors = 2;
  fus::FactorSolution sol = fus::run_efa(R, cfg);
  REQUIRE(sol.converged);
  CHECK(sol.k() == 2);
  // canonical order and signs
  CHECK(sol.ss_loadings(0) >= sol.ss_loadings(1));
  CHECK(sol.pattern.col(0).sum() >= 0.0);
  CHECK(sol.pattern.col(1).sum() >= 0.0);
  // structure identity and communalities
  CHECK((sol.structure - sol.pattern * sol.phi).cwiseAbs().maxCoeff() < 1e-10);
  Eigen::VectorXd h = (sol.pattern * sol.phi * sol.pattern.transpose()).diagonal();
  CHECK((sol.communalities - h).cwiseAbs().maxCoeff() < 1e-12);
  // h2 + psi near 1 for standardized input
  CHECK((sol.communalities + sol.uniquenesses - Eigen::VectorXd::Ones(8)).cwiseAbs().maxCoeff() <
        0.05);
  // phi valid correlation matrix
  CHECK(sol.phi(0, 0) == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(sol.phi(0, 1) == doctest::Approx(sol.phi(1, 0)));

  fus::VarianceAccounting va = fus::variance_accounting(sol);
  CHECK(va.ss_loadings(0) == doctest::Approx(sol.pattern.col(0).squaredNorm()));
  CHECK(va.cumulative == doctest::Approx(va.proportions.sum()));

  // every item cleanly assigned on the final scale
  for (const auto& a : sol.assignment) CHECK(a.flag == fus::ItemFlag::assigned);
}

TEST_CASE("model-implied residual shrinks as factors are added") {
  fus::CorrelationMatrix R = fus::load_correlation_csv(kDataDir + "/corr_pre_efa_numerical.csv");
  double prev = 1e9;
  for (int k = 1; k <= 3; ++k) {
    fus::MlExtraction ext = fus::extract_ml(R, k);
    Eigen::MatrixXd implied = ext.loadings * ext.loadings.transpose();
    implied.diagonal() += ext.uniquenesses;
    double resid = (R.values - implied).cwiseAbs().maxCoeff();
    CHECK(resid < prev + 1e-10);
    prev = resid;
  }
}

TEST_CASE("automatic factor count refuses to guess when rules disagree") {
  fus::CorrelationMatrix R = fus::load_correlation_csv(kDataDir + "/corr_pre_efa_numerical.csv");
  fus::FactorCountSuggestion s = fus::suggest_n_factors(R);
  if (!s.converged) {
    fus::EfaConfig cfg;  // n_factors auto
    CHECK_THROWS_WITH_AS(fus::run_efa(R, cfg), doctest::Contains("disagree"), std::runtime_error);
  }
}

TEST_CASE("item assignment thresholds") {
  fus::EfaConfig cfg;
  Eigen::MatrixXd pat(3, 2);
  pat << 0.85, 0.10, 0.40, 0.38, 0.25, 0.20;
  auto a = fus::assign_items(pat, cfg);
  CHECK(a[0].flag == fus::ItemFlag::assigned);
  CHECK(a[0].factor == 0);
  CHECK(a[1].flag == fus::ItemFlag::cross_loading);
  CHECK(a[2].flag == fus::ItemFlag::low_loading);
}

TEST_CASE("item reduction removes a planted dead item first and replays") {
  // 7 items: 6 load on two factors, item 7 is noise
  Eigen::MatrixXd lambda = Eigen::MatrixXd::Zero(7, 2);
  lambda.block(0, 0, 3, 1) << 0.8, 0.75, 0.7;
  lambda.block(3, 1, 3, 1) << 0.8, 0.75, 0.7;
  fus::PopulationModel model;
  model.loadings = lambda;
  model.phi = Eigen::MatrixXd::Identity(2, 2);
  model.phi(0, 1) = model.phi(1, 0) = 0.4;
  model.uniquenesses =
      Eigen::VectorXd::Ones(7) - (lambda * model.phi * lambda.transpose()).diagonal();
  model.seed = 9;
  Eigen::MatrixXd data = fus::generate_factor_data(model, 3000);
  fus::CorrelationMatrix R = fus::pearson_matrix(
      data, {"i1", "i2", "i3", "i4", "i5", "i6", "i7"});

  fus::EfaConfig cfg;
  cfg.n_factors = 2;
  fus::ReductionResult red = fus::reduce_items(R, cfg);
  REQUIRE_FALSE(red.trace.steps.empty());
  CHECK(red.trace.steps[0].item == "i7");
  CHECK(red.trace.steps[0].criterion == fus::ReductionCriterion::low_loading);
  CHECK(red.final_items.size() == 6);

  // replay: dropping the traced items manually reproduces the solution
  fus::EfaConfig replay_cfg = cfg;
  for (const auto& s : red.trace.steps)
    if (!s.item.empty()) replay_cfg.drop.push_back(s.item);
  fus::ReductionResult replay = fus::reduce_items(R, replay_cfg);
  CHECK(replay.final_items == red.final_items);
  CHECK((replay.solution.pattern - red.solution.pattern).cwiseAbs().maxCoeff() < 1e-10);

  // already-clean input yields an empty trace
  fus::CorrelationMatrix Rf = fus::load_correlation_csv(kDataDir + "/corr_final_numerical.csv");
  fus::ReductionResult clean = fus::reduce_items(Rf, cfg);
  CHECK(clean.trace.steps.empty());
  CHECK(clean.final_items.size() == 8);

  // keep list protects an item from removal
  fus::EfaConfig keep_cfg = cfg;
  keep_cfg.keep = {"i7"};
  fus::ReductionResult kept = fus::reduce_items(R, keep_cfg);
  bool i7_removed = false;
  for (const auto& s : kept.trace.steps) i7_removed |= (s.item == "i7");
  CHECK_FALSE(i7_removed);
}

TEST_CASE("scree CSV export") {
  Eigen::VectorXd ev(3);
  ev << 2.0, 0.7, 0.3;
  std::stringstream out;
  fus::save_scree_csv(ev, out);
  CHECK(out.str() == "component,eigenvalue\n1,2\n2,0.7\n3,0.3\n");
}
