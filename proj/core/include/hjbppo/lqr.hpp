#pragma once

#include <Eigen/Dense>
#include <span>

#include "hjbppo/rng.hpp"

namespace hjbppo::envs {

// Continuous-time linear dynamics xdot = Ax + Bu with quadratic reward rate
// R(x, u) = -(x'Qx + u'Ru u).
struct LqrProblem {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd Q;
  Eigen::MatrixXd Ru;

  int state_dim() const { return static_cast<int>(A.rows()); }
  int action_dim() const { return static_cast<int>(B.cols()); }
  void validate() const;
};

// Solves A'P + PA - P B Ru^-1 B' P + Q + ln(gamma) P = 0 for the symmetric
// PSD stabilizing solution. The discount folds into a standard CARE through
// the shift A + (ln(gamma)/2) I, which is then solved with the matrix sign
// function of the Hamiltonian (Byers' Newton iteration with determinant
// scaling). gamma = 1 gives the undiscounted equation.
Eigen::MatrixXd solve_discounted_care(const LqrProblem& prob, double gamma);

// Left-hand side of the discounted CARE at P; zero at the solution.
Eigen::MatrixXd care_residual(const LqrProblem& prob, double gamma,
                              const Eigen::MatrixXd& P);
double care_residual_norm(const LqrProblem& prob, double gamma,
                          const Eigen::MatrixXd& P);

// V*(x) = -x'Px.
double lqr_optimal_value(const Eigen::MatrixXd& P, std::span<const double> x);
// Feedback gain K = Ru^-1 B' P; the optimal control is u* = -Kx.
Eigen::MatrixXd lqr_gain(const LqrProblem& prob, const Eigen::MatrixXd& P);
Eigen::VectorXd lqr_optimal_control(const LqrProblem& prob,
                                    const Eigen::MatrixXd& P,
                                    std::span<const double> x);

// The bracket being maximized in the HJB equation, evaluated with the
// analytic V*: R(x,u) + grad V*(x)' (Ax + Bu). At u = u*(x) this equals
// -V*(x) ln(gamma); any other u is strictly smaller by (u-u*)'Ru(u-u*).
double hjb_supremand(const LqrProblem& prob, const Eigen::MatrixXd& P,
                     std::span<const double> x, std::span<const double> u);

// Full left-hand side of the HJB equation for the analytic pair (V*, u*) at
// one state; identically zero when P solves the discounted CARE.
double hjb_residual_at_optimum(const LqrProblem& prob, double gamma,
                               const Eigen::MatrixXd& P,
                               std::span<const double> x);

struct OracleReport {
  double care_residual_fro = 0.0;  // Frobenius norm of the CARE residual
  double max_hjb_residual = 0.0;   // max |HJB lhs| over probe states
  double min_sup_margin = 0.0;     // min decrease of the bracket under
                                   // control perturbations (positive = ok)
  int probes = 0;
};

// Evaluates the three analytic self-checks on random probe states drawn
// uniformly from [-box, box]^n with a fixed seed.
OracleReport verify_lqr_oracle(const LqrProblem& prob, double gamma,
                               int n_probes, double box, std::uint64_t seed);

}  // namespace hjbppo::envs
