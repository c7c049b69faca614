#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <vector>

#include "hjbppo/errors.hpp"
#include "hjbppo/lqr.hpp"
#include "hjbppo/rng.hpp"

using hjbppo::RngStream;
using hjbppo::envs::care_residual_norm;
using hjbppo::envs::hjb_residual_at_optimum;
using hjbppo::envs::hjb_supremand;
using hjbppo::envs::lqr_gain;
using hjbppo::envs::lqr_optimal_control;
using hjbppo::envs::lqr_optimal_value;
using hjbppo::envs::LqrProblem;
using hjbppo::envs::OracleReport;
using hjbppo::envs::solve_discounted_care;
using hjbppo::envs::verify_lqr_oracle;

namespace {

LqrProblem scalar_problem(double a, double b, double q, double ru) {
  LqrProblem prob;
  prob.A = Eigen::MatrixXd::Constant(1, 1, a);
  prob.B = Eigen::MatrixXd::Constant(1, 1, b);
  prob.Q = Eigen::MatrixXd::Constant(1, 1, q);
  prob.Ru = Eigen::MatrixXd::Constant(1, 1, ru);
  return prob;
}

LqrProblem double_integrator() {
  LqrProblem prob;
  prob.A = Eigen::MatrixXd::Zero(2, 2);
  prob.A(0, 1) = 1.0;
  prob.B = Eigen::MatrixXd::Zero(2, 1);
  prob.B(1, 0) = 1.0;
  prob.Q = Eigen::Vector2d(1.0, 0.1).asDiagonal();
  prob.Ru = Eigen::MatrixXd::Constant(1, 1, 0.05);
  return prob;
}

}  // namespace

TEST_CASE("undiscounted scalar solution matches the closed form") {
  // a = 0, b = 1: -p^2/ru + q = 0 => p = sqrt(q ru).
  const LqrProblem prob = scalar_problem(0.0, 1.0, 1.0, 0.05);
  const Eigen::MatrixXd P = solve_discounted_care(prob, 1.0);
  CHECK(std::abs(P(0, 0) - std::sqrt(0.05)) < 1e-6);
  CHECK(care_residual_norm(prob, 1.0, P) < 1e-12);
}

TEST_CASE("discounted scalar solution matches the quadratic root") {
  // -p^2 b^2/ru + q + ln(gamma) p = 0, positive root.
  const double gamma = 0.99;
  const double lg = std::log(gamma);
  const LqrProblem prob = scalar_problem(0.0, 1.0, 1.0, 0.05);
  const Eigen::MatrixXd P = solve_discounted_care(prob, gamma);
  // 20 p^2 - lg p - 1 = 0 with b^2/ru = 20
  const double root = (lg + std::sqrt(lg * lg + 80.0)) / 40.0;
  CHECK(std::abs(P(0, 0) - root) < 1e-10);
  CHECK(care_residual_norm(prob, gamma, P) < 1e-12);
}

TEST_CASE("the double-integrator solution is symmetric, PSD and exact") {
  const LqrProblem prob = double_integrator();
  for (const double gamma : {1.0, 0.99, 0.9}) {
    const Eigen::MatrixXd P = solve_discounted_care(prob, gamma);
    CHECK((P - P.transpose()).norm() < 1e-12);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(P);
    CHECK(es.eigenvalues().minCoeff() > 0.0);
    CHECK(care_residual_norm(prob, gamma, P) < 1e-10);
  }
}

TEST_CASE("the shifted closed loop is stable") {
  const LqrProblem prob = double_integrator();
  const double gamma = 0.99;
  const Eigen::MatrixXd P = solve_discounted_care(prob, gamma);
  const Eigen::MatrixXd K = lqr_gain(prob, P);
  const Eigen::MatrixXd Ashift =
      prob.A + 0.5 * std::log(gamma) * Eigen::MatrixXd::Identity(2, 2);
  const Eigen::MatrixXd closed = Ashift - prob.B * K;
  const Eigen::EigenSolver<Eigen::MatrixXd> es(closed);
  CHECK(es.eigenvalues().real().maxCoeff() < 0.0);
}

TEST_CASE("value, gain and control agree with the matrix formulas") {
  const LqrProblem prob = double_integrator();
  const Eigen::MatrixXd P = solve_discounted_care(prob, 0.99);
  const std::array<double, 2> x{1.5, -0.75};
  const Eigen::Vector2d xv(x[0], x[1]);
  CHECK(lqr_optimal_value(P, x) ==
        doctest::Approx(-xv.dot(P * xv)).epsilon(1e-14));
  const Eigen::MatrixXd K = lqr_gain(prob, P);
  const Eigen::MatrixXd expect_K = prob.Ru.inverse() * prob.B.transpose() * P;
  CHECK((K - expect_K).norm() < 1e-12);
  const Eigen::VectorXd u = lqr_optimal_control(prob, P, x);
  CHECK((u + K * xv).norm() < 1e-12);
}

TEST_CASE("the optimality certificate holds at probe states") {
  const LqrProblem prob = double_integrator();
  const double gamma = 0.99;
  const Eigen::MatrixXd P = solve_discounted_care(prob, gamma);
  RngStream rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::array<double, 2> x{rng.uniform(-5.0, 5.0),
                                  rng.uniform(-5.0, 5.0)};
    CHECK(std::abs(hjb_residual_at_optimum(prob, gamma, P, x)) < 1e-8);

    // Any control perturbation drops the bracket by (u-u*)' Ru (u-u*).
    const Eigen::VectorXd ustar = lqr_optimal_control(prob, P, x);
    const std::array<double, 1> us{ustar(0)};
    const double at_opt = hjb_supremand(prob, P, x, us);
    const double delta = rng.uniform(-2.0, 2.0);
    if (std::abs(delta) < 1e-3) continue;
    const std::array<double, 1> up{ustar(0) + delta};
    const double perturbed = hjb_supremand(prob, P, x, up);
    CHECK(perturbed < at_opt);
    CHECK(at_opt - perturbed ==
          doctest::Approx(prob.Ru(0, 0) * delta * delta).epsilon(1e-9));
  }
}

TEST_CASE("the oracle report certifies the analytic pair") {
  const LqrProblem prob = double_integrator();
  const OracleReport rep = verify_lqr_oracle(prob, 0.99, 100, 5.0, 12345);
  CHECK(rep.probes == 100);
  CHECK(rep.care_residual_fro < 1e-9);
  CHECK(rep.max_hjb_residual < 1e-8);
  CHECK(rep.min_sup_margin > 0.0);
}

TEST_CASE("the oracle is deterministic in the seed") {
  const LqrProblem prob = double_integrator();
  const OracleReport a = verify_lqr_oracle(prob, 0.99, 50, 4.0, 7);
  const OracleReport b = verify_lqr_oracle(prob, 0.99, 50, 4.0, 7);
  CHECK(a.care_residual_fro == b.care_residual_fro);
  CHECK(a.max_hjb_residual == b.max_hjb_residual);
  CHECK(a.min_sup_margin == b.min_sup_margin);
}

TEST_CASE("validation rejects malformed problems") {
  LqrProblem bad = double_integrator();
  bad.Ru = Eigen::MatrixXd::Constant(1, 1, 0.0);  // not positive definite
  CHECK_THROWS(bad.validate());
  LqrProblem mismatched = double_integrator();
  mismatched.B = Eigen::MatrixXd::Zero(3, 1);  // wrong row count
  CHECK_THROWS(mismatched.validate());
}
