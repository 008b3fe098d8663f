#pragma once

#include <cstdint>

#include <Eigen/Dense>

#include "riskgrad/lti.hpp"

namespace riskgrad {

// Chance-constraint description: bound the stationary probability
// P{ q' x_{k+1} >= eps } by delta, with Lagrange multiplier lambda.
struct ChanceSpec {
  Eigen::VectorXd q;
  double eps = 1.0;
  double delta = 0.1;
  double lambda = 0.0;

  ChanceSpec(Eigen::VectorXd q_, double eps_, double delta_, double lambda_);

  ChanceSpec with_lambda(double lam) const {
    ChanceSpec c(*this);
    c.lambda = lam;
    return c;
  }
};

// Gradients of J, J_c and the Lagrangian at a gain K, together with the
// stationary quantities they are built from.
struct GradientBundle {
  Eigen::MatrixXd gradJ;    // 2 E_K Sigma_K
  Eigen::MatrixXd gradJc;
  Eigen::MatrixXd gradL;    // gradJ + lambda * gradJc
  Eigen::MatrixXd E_K;      // (R + B'P_K B) K - B'P_K A
  Eigen::MatrixXd Sigma_K;  // stationary state covariance
  Eigen::MatrixXd P_K;      // cost-form Lyapunov solution
};

// Standard normal upper tail via erfc.
double gaussian_upper_tail(double a);
// Standard normal quantile (inverse CDF), Acklam/Newton refined to ~1e-14.
double gaussian_quantile(double p);

// x'Qx + u'Ru
double stage_cost(const Eigen::VectorXd& x, const Eigen::VectorXd& u, const LtiSystem& sys);

// r = -stage_cost(x,u) - lambda * (1{q' x_next >= eps} - delta)
double reward(const Eigen::VectorXd& x, const Eigen::VectorXd& u, const Eigen::VectorXd& x_next,
              const LtiSystem& sys, const ChanceSpec& chance);

// Effective closed-loop noise covariance SigmaW + B SigmaSigma B'.
Eigen::MatrixXd noise_covariance(const LtiSystem& sys, const LinearGaussianPolicy& policy);

// Stationary covariance Sigma_K of x under u = -Kx + noise.
Eigen::MatrixXd stationary_covariance(const LtiSystem& sys, const LinearGaussianPolicy& policy);

// Average expected quadratic cost
//   J(K) = tr((Q + K'RK) Sigma_K + R SigmaSigma) = tr(P_K SigmaWbar + R SigmaSigma).
// Both forms are evaluated and must agree to 1e-9 relative.
double cost_J(const LtiSystem& sys, const LinearGaussianPolicy& policy);

// Stationary violation probability
//   J_c(K) = Phi_c(eps / sqrt(q' Sigma_K q)),
// the collapsed form of E[Q(a(x_k, K))] over the stationary law.
double cost_Jc(const LtiSystem& sys, const LinearGaussianPolicy& policy, const ChanceSpec& chance);

// L = J + lambda (J_c - delta)
double lagrangian(const LtiSystem& sys, const LinearGaussianPolicy& policy,
                  const ChanceSpec& chance);

// Analytic gradients. grad J is exact via E_K; grad J_c is the exact
// derivative of the collapsed closed form, obtained with one adjoint
// Lyapunov solve:
//   grad J_c = -eps phi(eps/sqrt(V)) V^{-3/2} B' Lam Acl Sigma_K,
//   Lam = qq' + Acl' Lam Acl,  V = q' Sigma_K q.
GradientBundle grad_closed_form(const LtiSystem& sys, const LinearGaussianPolicy& policy,
                                const ChanceSpec& chance);

// Same bundle but with grad J_c replaced by an unbiased Monte-Carlo estimate
// over mc_samples stationary states (antithetic pairs): the pathwise
// integrand exp(-a^2/2) B'q x' / sqrt(2 pi q'SigmaWbar q) plus the
// distribution term (Q(a) - J_c) d log N(x; 0, Sigma_K)/dK.
GradientBundle grad_analytic(const LtiSystem& sys, const LinearGaussianPolicy& policy,
                             const ChanceSpec& chance, std::int64_t mc_samples,
                             std::uint64_t seed);

}  // namespace riskgrad
