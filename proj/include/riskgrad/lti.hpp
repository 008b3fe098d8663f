#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "riskgrad/errors.hpp"
#include "riskgrad/rng.hpp"

namespace riskgrad {

struct ChanceSpec;  // risk.hpp

// Discrete-time LTI plant  x' = A x + B u + w,  w ~ N(0, SigmaW),
// with quadratic stage weights Q (state) and R (input).
// Q, R must be symmetric positive definite and SigmaW symmetric PSD;
// checked at construction (symmetry tolerance 1e-10).
struct LtiSystem {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;
  Eigen::MatrixXd SigmaW;

  LtiSystem(Eigen::MatrixXd A_, Eigen::MatrixXd B_, Eigen::MatrixXd Q_, Eigen::MatrixXd R_,
            Eigen::MatrixXd SigmaW_);

  Eigen::Index state_dim() const { return A.rows(); }
  Eigen::Index input_dim() const { return B.cols(); }
};

// Linear state feedback with Gaussian exploration:  u = -K x + s, s ~ N(0, SigmaSigma).
// SigmaSigma = 0 gives the deterministic policy u = -K x.
struct LinearGaussianPolicy {
  Eigen::MatrixXd K;           // p x n gain, sign convention u = -K x
  Eigen::MatrixXd SigmaSigma;  // p x p exploration covariance (PSD)

  LinearGaussianPolicy(Eigen::MatrixXd K_, Eigen::MatrixXd SigmaSigma_);

  static LinearGaussianPolicy deterministic(const Eigen::MatrixXd& K_) {
    return LinearGaussianPolicy(K_, Eigen::MatrixXd::Zero(K_.rows(), K_.rows()));
  }
};

struct Transition {
  Eigen::VectorXd x;
  Eigen::VectorXd u;
  double r = 0.0;
  Eigen::VectorXd x_next;
};

struct Trajectory {
  std::vector<Transition> steps;
  std::uint64_t seed = 0;

  Eigen::Index length() const { return static_cast<Eigen::Index>(steps.size()); }
};

// Largest |eigenvalue| of a square matrix.
double spectral_radius(const Eigen::MatrixXd& M);

// true iff rho(A - B K) < 1 - margin.
bool is_stabilizing(const LtiSystem& sys, const Eigen::MatrixXd& K, double margin = 0.0);

// Solves S = A'SA + Q - A'SB (B'SB + R)^-1 B'SA by fixed-point iteration from
// S0 = Q. Residual tolerance 1e-9 (Frobenius), at most max_iter sweeps.
Eigen::MatrixXd solve_dare(const LtiSystem& sys, int max_iter = 10000);

// LQR gain K = (B'SB + R)^-1 B'SA for the convention u = -K x.
Eigen::MatrixXd lqr_gain(const LtiSystem& sys);

// Solves X = W + Acl X Acl' exactly via (I - Acl (x) Acl) vec(X) = vec(W).
// The cost-form equation P = Qbar + Acl' P Acl is this with Acl transposed.
// Requires rho(Acl) < 1.
Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& Acl, const Eigen::MatrixXd& W);

// Simulates T steps from x0 under the policy, recording the reward of
// risk.hpp::reward at each step. Bit-reproducible for a fixed seed.
// Throws DivergenceError (with the step index) if ||x|| exceeds 1e12.
Trajectory rollout(const LtiSystem& sys, const LinearGaussianPolicy& policy,
                   const ChanceSpec& chance, Eigen::Index T, const Eigen::VectorXd& x0,
                   std::uint64_t seed);

}  // namespace riskgrad
