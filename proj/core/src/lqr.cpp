#include "hjbppo/lqr.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "hjbppo/errors.hpp"

namespace hjbppo::envs {

namespace {
Eigen::Map<const Eigen::VectorXd> as_vec(std::span<const double> x) {
  return Eigen::Map<const Eigen::VectorXd>(x.data(),
                                           static_cast<Eigen::Index>(x.size()));
}
}  // namespace

void LqrProblem::validate() const {
  const int n = state_dim();
  const int m = action_dim();
  if (A.rows() != n || A.cols() != n || B.rows() != n || Q.rows() != n ||
      Q.cols() != n || Ru.rows() != m || Ru.cols() != m) {
    throw std::invalid_argument("LqrProblem: inconsistent matrix dimensions");
  }
  if ((Q - Q.transpose()).lpNorm<Eigen::Infinity>() > 1e-10 ||
      (Ru - Ru.transpose()).lpNorm<Eigen::Infinity>() > 1e-10) {
    throw std::invalid_argument("LqrProblem: Q and Ru must be symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> ru_chol(Ru);
  if (ru_chol.info() != Eigen::Success) {
    throw std::invalid_argument("LqrProblem: Ru must be positive definite");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> q_eig(Q);
  if (q_eig.eigenvalues().minCoeff() < -1e-10) {
    throw std::invalid_argument("LqrProblem: Q must be positive semidefinite");
  }
}

Eigen::MatrixXd solve_discounted_care(const LqrProblem& prob, double gamma) {
  prob.validate();
  if (!(gamma > 0.0) || gamma > 1.0) {
    throw std::invalid_argument("solve_discounted_care: gamma must be in (0, 1]");
  }
  const Eigen::Index n = prob.A.rows();
  const double ln_gamma = std::log(gamma);
  const Eigen::MatrixXd A_shift =
      prob.A + 0.5 * ln_gamma * Eigen::MatrixXd::Identity(n, n);

  Eigen::LLT<Eigen::MatrixXd> ru_chol(prob.Ru);
  if (ru_chol.info() != Eigen::Success) {
    throw std::invalid_argument("solve_discounted_care: Ru must be positive definite");
  }

  Eigen::MatrixXd H(2 * n, 2 * n);
  H << A_shift, prob.B * ru_chol.solve(prob.B.transpose()),  //
      prob.Q, -A_shift.transpose();

  // Byers' matrix sign iteration with determinant scaling.
  Eigen::MatrixXd Z = H;
  Eigen::MatrixXd Z_old;
  const double tolerance = 1e-12;
  const int max_iterations = 100;
  const double p = static_cast<double>(Z.rows());
  double relative_norm;
  int iteration = 0;
  do {
    Z_old = Z;
    const double ck = std::pow(std::abs(Z.determinant()), -1.0 / p);
    Z *= ck;
    Z = Z - 0.5 * (Z - Z.inverse().eval());
    relative_norm = (Z - Z_old).norm();
    ++iteration;
  } while (iteration < max_iterations && relative_norm > tolerance);

  const Eigen::MatrixXd W11 = Z.block(0, 0, n, n);
  const Eigen::MatrixXd W12 = Z.block(0, n, n, n);
  const Eigen::MatrixXd W21 = Z.block(n, 0, n, n);
  const Eigen::MatrixXd W22 = Z.block(n, n, n, n);

  Eigen::MatrixXd lhs(2 * n, n);
  Eigen::MatrixXd rhs(2 * n, n);
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
  lhs << W12, W22 + eye;
  rhs << W11 + eye, W21;

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(lhs,
                                        Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::MatrixXd P = svd.solve(rhs);
  P = 0.5 * (P + P.transpose().eval());  // symmetrize numerical noise away

  if (!P.allFinite()) {
    throw OracleError("solve_discounted_care: sign iteration diverged");
  }
  return P;
}

Eigen::MatrixXd care_residual(const LqrProblem& prob, double gamma,
                              const Eigen::MatrixXd& P) {
  Eigen::LLT<Eigen::MatrixXd> ru_chol(prob.Ru);
  return prob.A.transpose() * P + P * prob.A -
         P * prob.B * ru_chol.solve(prob.B.transpose()) * P + prob.Q +
         std::log(gamma) * P;
}

double care_residual_norm(const LqrProblem& prob, double gamma,
                          const Eigen::MatrixXd& P) {
  return care_residual(prob, gamma, P).norm();
}

double lqr_optimal_value(const Eigen::MatrixXd& P, std::span<const double> x) {
  const auto xv = as_vec(x);
  return -xv.dot(P * xv);
}

Eigen::MatrixXd lqr_gain(const LqrProblem& prob, const Eigen::MatrixXd& P) {
  Eigen::LLT<Eigen::MatrixXd> ru_chol(prob.Ru);
  return ru_chol.solve(prob.B.transpose() * P);
}

Eigen::VectorXd lqr_optimal_control(const LqrProblem& prob,
                                    const Eigen::MatrixXd& P,
                                    std::span<const double> x) {
  return -lqr_gain(prob, P) * as_vec(x);
}

double hjb_supremand(const LqrProblem& prob, const Eigen::MatrixXd& P,
                     std::span<const double> x, std::span<const double> u) {
  const auto xv = as_vec(x);
  const auto uv = as_vec(u);
  const double reward_rate = -(xv.dot(prob.Q * xv) + uv.dot(prob.Ru * uv));
  const Eigen::VectorXd grad_v = -2.0 * (P * xv);
  const Eigen::VectorXd f = prob.A * xv + prob.B * uv;
  return reward_rate + grad_v.dot(f);
}

double hjb_residual_at_optimum(const LqrProblem& prob, double gamma,
                               const Eigen::MatrixXd& P,
                               std::span<const double> x) {
  const Eigen::VectorXd u_star = lqr_optimal_control(prob, P, x);
  const std::span<const double> u{u_star.data(),
                                  static_cast<std::size_t>(u_star.size())};
  return lqr_optimal_value(P, x) * std::log(gamma) + hjb_supremand(prob, P, x, u);
}

OracleReport verify_lqr_oracle(const LqrProblem& prob, double gamma,
                               int n_probes, double box, std::uint64_t seed) {
  const Eigen::MatrixXd P = solve_discounted_care(prob, gamma);
  OracleReport report;
  report.probes = n_probes;
  report.care_residual_fro = care_residual_norm(prob, gamma, P);
  report.min_sup_margin = std::numeric_limits<double>::infinity();

  RngStream rng(seed);
  const int n = prob.state_dim();
  const int m = prob.action_dim();
  std::vector<double> x(n), u(m);
  for (int probe = 0; probe < n_probes; ++probe) {
    for (double& xi : x) xi = rng.uniform(-box, box);
    report.max_hjb_residual =
        std::max(report.max_hjb_residual,
                 std::abs(hjb_residual_at_optimum(prob, gamma, P, x)));

    const Eigen::VectorXd u_star = lqr_optimal_control(prob, P, x);
    const std::span<const double> us{u_star.data(),
                                     static_cast<std::size_t>(u_star.size())};
    const double at_opt = hjb_supremand(prob, P, x, us);
    for (double scale : {0.1, 1.0}) {
      for (int k = 0; k < m; ++k) u[k] = u_star[k] + scale * rng.normal();
      const double perturbed = hjb_supremand(prob, P, x, u);
      report.min_sup_margin =
          std::min(report.min_sup_margin, at_opt - perturbed);
    }
  }
  return report;
}

}  // namespace hjbppo::envs
