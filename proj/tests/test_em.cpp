#include <cmath>
#include <complex>
#include <numbers>

#include <gtest/gtest.h>

#include "sbl/em.hpp"
#include "test_util.hpp"

using namespace sbl;
using cplx = std::complex<double>;
using sbl::test::random_matrix;
using sbl::test::random_vector;
using sbl::test::rel_err;

namespace {

template <typename Scalar>
EmState<Scalar> full_state(int L, double gamma, double lambda)
{
  EmState<Scalar> st;
  for (int l = 0; l < L; ++l) st.active.push_back(l);
  st.gamma = RealVec::Constant(L, gamma);
  st.eta = RealVec::Zero(L);
  st.lambda = lambda;
  return st;
}

template <typename Scalar>
ProblemInstance<Scalar> instance(int M, int L, int K, double snr, std::uint64_t seed)
{
  GenConfig g;
  g.M = M;
  g.L = L;
  g.K = K;
  g.snr_db = snr;
  g.field = FieldTraits<Scalar>::kind;
  g.seed = seed;
  return generate_problem<Scalar>(g);
}

EmConfig config(PriorConfig prior, LambdaMode mode = LambdaMode::estimate())
{
  EmConfig c;
  c.prior = prior;
  c.lambda_mode = mode;
  return c;
}

}  // namespace

TEST(EStep, OrthonormalColumnsHalveEverything)
{
  const Eigen::MatrixXcd Q = random_matrix<cplx>(12, 5, 1).householderQr().householderQ() * Eigen::MatrixXcd::Identity(12, 5);
  const Eigen::VectorXcd y = random_vector<cplx>(12, 2);
  const auto p = sbl::test::make_problem(Q, y);
  const auto [sigma, mu] = e_step(full_state<cplx>(5, 1.0, 1.0), p);
  EXPECT_LT((sigma - 0.5 * Eigen::MatrixXcd::Identity(5, 5)).norm(), 1e-14);
  EXPECT_LT((mu - 0.5 * Q.adjoint() * y).norm(), 1e-14);
}

TEST(EStep, SingleColumnIsScalar)
{
  Eigen::MatrixXd h(3, 1);
  h << 1.0, 2.0, 2.0;  // s = 9
  const auto p = sbl::test::make_problem<double>(h, Eigen::Vector3d(1.0, 0.0, 0.0));
  const auto [sigma, mu] = e_step(full_state<double>(1, 0.5, 4.0), p);
  EXPECT_DOUBLE_EQ(sigma(0, 0), 1.0 / (4.0 * 9.0 + 2.0));
  EXPECT_NEAR(mu(0), 4.0 * sigma(0, 0) * 1.0, 1e-16);
}

TEST(EStep, MatchesDenseReferenceSolve)
{
  const auto H = random_matrix<cplx>(20, 8, 3);
  const auto y = random_vector<cplx>(20, 4);
  auto st = full_state<cplx>(8, 1.0, 3.0);
  Rng rng(5);
  for (int l = 0; l < 8; ++l) st.gamma(l) = sbl::test::log_uniform(rng, 1e-3, 10.0);
  const auto [sigma, mu] = e_step(st, sbl::test::make_problem(H, y));

  Eigen::MatrixXcd A = 3.0 * H.adjoint() * H;
  for (int l = 0; l < 8; ++l) A(l, l) += 1.0 / st.gamma(l);
  const Eigen::MatrixXcd ref_sigma = A.fullPivLu().inverse();
  const Eigen::VectorXcd ref_mu = 3.0 * ref_sigma * H.adjoint() * y;
  EXPECT_LT((sigma - ref_sigma).norm() / ref_sigma.norm(), 1e-10);
  EXPECT_LT((mu - ref_mu).norm() / ref_mu.norm(), 1e-10);
  EXPECT_LT((sigma - sigma.adjoint()).norm(), 1e-15);
}

TEST(EStep, FailureReportsGammas)
{
  const auto p = sbl::test::make_problem<double>(Eigen::MatrixXd::Identity(2, 2), Eigen::Vector2d(1.0, 1.0));
  auto st = full_state<double>(2, 1.0, 1.0);
  st.gamma(1) = -0.25;
  try {
    e_step(st, p);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("-0.25"), std::string::npos);
  }
  st.active.clear();
  EXPECT_THROW(e_step(st, p), std::invalid_argument);
}

TEST(EStep, ExactPosteriorIsOrthogonalToResidual)
{
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto H = random_matrix<cplx>(15, 25, 10 + seed);
    const auto y = random_vector<cplx>(15, 20 + seed);
    auto st = full_state<cplx>(25, 1.0, 7.0);
    Rng rng(seed);
    for (int l = 0; l < 25; ++l) st.gamma(l) = sbl::test::log_uniform(rng, 1e-4, 1e2);
    const auto [sigma, mu] = e_step(st, sbl::test::make_problem(H, y));
    const Eigen::VectorXcd g = H.adjoint() * (y - H * mu) - (mu.array() / st.gamma.array()).matrix() / 7.0;
    EXPECT_LE(g.norm(), 1e-8 * (H.adjoint() * y).norm());
  }
}

TEST(MStepGamma, Examples)
{
  EXPECT_NEAR(m_step_gamma(2.0, 0.5, 1.0, FieldKind::Real), 1.0, 1e-15);
  EXPECT_NEAR(m_step_gamma(1.0, 1.0, 1.5, FieldKind::Complex), (-0.5 + std::sqrt(4.25)) / 2.0, 1e-15);
  for (auto f : {FieldKind::Real, FieldKind::Complex}) {
    EXPECT_DOUBLE_EQ(m_step_gamma(3.7, 0.0, 1.0, f), 3.7);
    EXPECT_NEAR(m_step_gamma(3.7, 1e-14, 1.0, f), 3.7, 1e-10);
  }
  EXPECT_EQ(m_step_gamma(0.0, 1.0, 0.5, FieldKind::Real), 0.0);
  EXPECT_THROW(m_step_gamma(-1.0, 1.0, 1.0, FieldKind::Real), std::domain_error);
}

TEST(MStepGamma, IsStationaryPointOfItsQuadratic)
{
  // gamma maximizes -rho log g - rho m / g + (eps - 1) log g - eta g.
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const auto f = i % 2 ? FieldKind::Real : FieldKind::Complex;
    const double r = rho(f);
    const double m = sbl::test::log_uniform(rng, 1e-6, 1e3);
    const double eta = sbl::test::log_uniform(rng, 1e-4, 1e2);
    const double eps = 2.0 * rng.uniform();
    const double g = m_step_gamma(m, eta, eps, f);
    ASSERT_GT(g, 0.0);
    const double grad = -r / g + r * m / (g * g) + (eps - 1.0) / g - eta;
    EXPECT_LT(std::abs(grad) * g, 1e-10 * (r + r * m / g + std::abs(eps - 1.0) + eta * g));
  }
}

TEST(MStepEta, Examples)
{
  EXPECT_DOUBLE_EQ(m_step_eta(0.9, 1.0, 1.0, 0.1), 1.0);
  EXPECT_DOUBLE_EQ(m_step_eta(0.0, 1.0, 1.0, 0.1), 10.0);
  EXPECT_DOUBLE_EQ(m_step_eta(1.0, 0.0, 2.0, 1.0), 0.5);
  EXPECT_THROW(m_step_eta(1.0, 0.0, 1.0, 1.0), std::invalid_argument);
}

TEST(MStepLambda, ExamplesAndGuard)
{
  EXPECT_DOUBLE_EQ(m_step_lambda(50.0, 100), 2.0);
  EXPECT_DOUBLE_EQ(m_step_lambda(2.0, 100), 50.0);
  EXPECT_DOUBLE_EQ(m_step_lambda(0.0, 100), kLambdaMax);
  EXPECT_DOUBLE_EQ(m_step_lambda(1e-20, 100), kLambdaMax);
}

TEST(MStepLambda, ExpectedResidualMatchesExplicitTrace)
{
  const auto H = random_matrix<cplx>(18, 6, 8);
  const auto y = random_vector<cplx>(18, 9);
  auto st = full_state<cplx>(6, 0.7, 2.0);
  const auto [sigma, mu] = e_step(st, sbl::test::make_problem(H, y));
  double tr = 0.0;
  for (int m = 0; m < 18; ++m)
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) tr += std::real(H(m, i) * sigma(i, j) * std::conj(H(m, j)));
  double fit = 0.0;
  for (int m = 0; m < 18; ++m) fit += std::norm(y(m) - (H.row(m) * mu)(0));
  EXPECT_LT(rel_err(detail::expected_residual<cplx>(H, y, mu, sigma), fit + tr), 1e-10);
}

TEST(EmObjective, MatchesDirectGaussianLogDensity)
{
  const auto H = random_matrix<cplx>(6, 4, 12);
  const auto y = random_vector<cplx>(6, 13);
  auto st = full_state<cplx>(4, 0.0, 2.5);
  st.gamma << 0.3, 1.2, 2.0, 0.05;
  st.eta << 1.0, 1.0, 2.0, 0.5;
  const auto p = sbl::test::make_problem(H, y);
  const auto prior = PriorConfig::two_layer(0.5, 1.0);
  const Eigen::MatrixXcd C = Eigen::MatrixXcd::Identity(6, 6) / 2.5 + H * st.gamma.asDiagonal() * H.adjoint();
  double want = -std::log(std::real(C.determinant())) - std::real(y.dot(C.inverse() * y)) - 6 * std::log(std::numbers::pi);
  for (int l = 0; l < 4; ++l) want += -0.5 * std::log(st.gamma(l)) - st.eta(l) * st.gamma(l) + 0.5 * std::log(st.eta(l));
  EXPECT_NEAR(em_objective(st, p, prior), want, 1e-10 * std::abs(want));
}

TEST(RunEm, IdentityNoiselessRecoversSpike)
{
  const auto p = sbl::test::make_problem<double>(Eigen::MatrixXd::Identity(4, 4), Eigen::Vector4d(5.0, 0.0, 0.0, 0.0));
  const double lambda = 1e8;
  const auto cfg = config(PriorConfig::two_layer(1.0, 1.0), LambdaMode::known(lambda));
  const auto r = run_em(p, cfg);
  EXPECT_EQ(r.active, std::vector<int>{0});
  EXPECT_EQ(r.metrics.k_hat, 1);
  EXPECT_NEAR(r.estimate(0), scalar_map_orthonormal(5.0, cfg.prior, lambda).value, 1e-6);
  EXPECT_NEAR(r.estimate(0), 5.0, 1e-6);
  for (int l = 1; l < 4; ++l) EXPECT_EQ(r.estimate(l), 0.0);
}

TEST(RunEm, EmptySupportIsFullyPruned)
{
  const auto p = instance<cplx>(30, 60, 0, 20.0, 17);
  const auto r = run_em(p, config(PriorConfig::two_layer(0.5, 1.0), LambdaMode::known(p.lambda_true)));
  EXPECT_EQ(r.metrics.k_hat, 0);
  EXPECT_TRUE(r.all_pruned);
  EXPECT_EQ(r.estimate, Eigen::VectorXcd::Zero(60));
}

namespace {

// Textbook RVM-EM: explicit inverses, full gamma vector, same pruning and
// stopping rules as the library.
Eigen::VectorXd rvm_reference(const ProblemInstance<double>& p, double tol, int max_iters, int& iters_out)
{
  const int M = p.M(), L = p.L();
  std::vector<int> act(L);
  for (int l = 0; l < L; ++l) act[l] = l;
  std::vector<double> gam(L, 1.0);
  double lambda = M / p.y.squaredNorm();
  double prev = NAN;
  Eigen::VectorXd mu;
  auto columns = [&]() {
    Eigen::MatrixXd A(M, act.size());
    for (std::size_t k = 0; k < act.size(); ++k) A.col(k) = p.H.col(act[k]);
    return A;
  };
  int it = 0;
  for (; it < max_iters && !act.empty(); ++it) {
    const Eigen::MatrixXd A = columns();
    Eigen::MatrixXd P = lambda * A.transpose() * A;
    for (std::size_t k = 0; k < act.size(); ++k) P(k, k) += 1.0 / gam[k];
    const Eigen::MatrixXd S = P.inverse();
    mu = lambda * S * A.transpose() * p.y;
    for (std::size_t k = 0; k < act.size(); ++k) gam[k] = mu(k) * mu(k) + S(k, k);
    lambda = M / ((p.y - A * mu).squaredNorm() + (A * S * A.transpose()).trace());
    Eigen::MatrixXd C = Eigen::MatrixXd::Identity(M, M) / lambda;
    for (std::size_t k = 0; k < act.size(); ++k) C += gam[k] * A.col(k) * A.col(k).transpose();
    const double obj = -0.5 * std::log(C.determinant()) - 0.5 * p.y.dot(C.inverse() * p.y) -
                       0.5 * M * std::log(2.0 * std::numbers::pi);
    std::vector<int> a2;
    std::vector<double> g2;
    for (std::size_t k = 0; k < act.size(); ++k)
      if (gam[k] >= 1e-5) {
        a2.push_back(act[k]);
        g2.push_back(gam[k]);
      }
    act = a2;
    gam = g2;
    if (std::isfinite(prev) && std::abs(obj - prev) <= tol * std::abs(obj)) {
      ++it;
      break;
    }
    prev = obj;
  }
  iters_out = it;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(L);
  if (act.empty()) return out;
  const Eigen::MatrixXd A = columns();
  Eigen::MatrixXd P = lambda * A.transpose() * A;
  for (std::size_t k = 0; k < act.size(); ++k) P(k, k) += 1.0 / gam[k];
  const Eigen::VectorXd m = lambda * P.inverse() * A.transpose() * p.y;
  for (std::size_t k = 0; k < act.size(); ++k) out(act[k]) = m(k);
  return out;
}

}  // namespace

TEST(RunEm, RvmMatchesStraightforwardReference)
{
  const auto p = instance<double>(30, 50, 5, 25.0, 21);
  auto cfg = config(PriorConfig::two_layer(1.0, 0.0));
  const auto r = run_em(p, cfg);
  int ref_iters = 0;
  const Eigen::VectorXd ref = rvm_reference(p, cfg.tol, cfg.max_iters, ref_iters);
  EXPECT_EQ(r.metrics.iterations, ref_iters);
  EXPECT_LT((r.estimate - ref).norm(), 1e-8 * ref.norm());
  for (int l = 0; l < p.L(); ++l) EXPECT_EQ(r.estimate(l) == 0.0, ref(l) == 0.0) << l;
}

class EmMonotone : public ::testing::TestWithParam<int> {};

TEST_P(EmMonotone, ObjectiveNeverDecreasesWithinIterations)
{
  const PriorConfig priors[] = {PriorConfig::two_layer(1.0, 0.0), PriorConfig::two_layer(1.0, 1.0),
                                PriorConfig::two_layer(0.5, 1.0), PriorConfig::three_layer(1.0, 1.0, 0.1)};
  const int seed = GetParam();
  const auto p = instance<cplx>(40, 80, 8, 20.0, 100 + seed);
  for (const auto& prior : priors) {
    auto cfg = config(prior);
    cfg.max_iters = 300;
    const auto r = run_em(p, cfg);
    ASSERT_EQ(r.objective_before.size(), r.objective_after.size());
    for (std::size_t i = 0; i < r.objective_after.size(); ++i)
      EXPECT_GE(r.objective_after[i], r.objective_before[i] - 1e-9) << "iteration " << i << " eps=" << prior.epsilon;
    for (std::size_t i = 1; i < r.active_size.size(); ++i) EXPECT_LE(r.active_size[i], r.active_size[i - 1]);
  }
}

INSTANTIATE_TEST_SUITE_P(Instances, EmMonotone, ::testing::Range(0, 20));

TEST(RunEm, PrunedSetOnlyShrinks)
{
  // Track the actual index sets by re-running with growing iteration caps.
  const auto p = instance<double>(25, 50, 4, 15.0, 9);
  std::vector<int> prev;
  for (int cap = 1; cap <= 40; ++cap) {
    auto cfg = config(PriorConfig::two_layer(0.5, 1.0));
    cfg.max_iters = cap;
    const auto r = run_em(p, cfg);
    if (cap > 1) {
      for (int l : r.active) EXPECT_TRUE(std::binary_search(prev.begin(), prev.end(), l)) << "index " << l << " came back";
    }
    prev = r.active;
  }
}

TEST(RunEm, LaplaceFixedPointSatisfiesModeEquation)
{
  const auto p = instance<double>(20, 30, 3, 30.0, 4);
  auto cfg = config(PriorConfig::two_layer(1.0, 0.8), LambdaMode::known(p.lambda_true));
  cfg.tol = 1e-16;
  cfg.max_iters = 50000;
  const auto r = run_em(p, cfg);
  const auto& st = r.state;
  const auto [sigma, mu] = e_step(st, p);
  for (Eigen::Index k = 0; k < mu.size(); ++k) {
    const double m = mu(k) * mu(k) + sigma(k, k);
    const double g = m_step_gamma(m, 0.8, 1.0, FieldKind::Real);
    EXPECT_LE(std::abs(g - st.gamma(k)), 1e-9 * std::max(1.0, st.gamma(k))) << st.active[k];
  }
}

TEST(RunEm, ThreeLayerNeedsProperRateMode)
{
  const auto p = instance<double>(10, 20, 2, 20.0, 1);
  EXPECT_THROW(run_em(p, config(PriorConfig::three_layer(0.0, 1.0, 0.1))), std::invalid_argument);
  EXPECT_NO_THROW(run_em(p, config(PriorConfig::three_layer(0.5, 1.0, 0.1))));
}

TEST(RunEm, EstimatesNoisePrecisionReasonably)
{
  const auto p = instance<cplx>(100, 200, 10, 20.0, 33);
  const auto r = run_em(p, config(PriorConfig::two_layer(0.5, 1.0)));
  EXPECT_GT(r.lambda, 0.3 * p.lambda_true);
  EXPECT_LT(r.lambda, 3.0 * p.lambda_true);
  EXPECT_LT(r.metrics.mse, 5.0 * oracle_mse(p));
}
