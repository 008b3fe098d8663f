#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "riskgrad/risk.hpp"

namespace riskgrad {

struct DescentRecord {
  int iter = 0;
  Eigen::MatrixXd K;
  double L_value = 0.0;
  double grad_norm = 0.0;
  double rho_closed_loop = 0.0;
  double alpha_used = 0.0;
};

struct DescentTrace {
  std::vector<DescentRecord> records;
  bool converged = false;

  const Eigen::MatrixXd& final_K() const { return records.back().K; }
  double final_grad_norm() const { return records.back().grad_norm; }
  // CSV with header iter,L,grad_norm,rho,alpha
  std::string to_csv() const;
};

// Step failed even after exhausting the backtracking budget.
class StepFailure : public Error {
 public:
  StepFailure(const std::string& msg, DescentTrace trace_)
      : Error(msg), trace(std::move(trace_)) {}
  DescentTrace trace;
};

// How run_exact_npg sizes its step:
//  - Normalized: alpha = sqrt(alpha_a / tr(gradL Sigma_K^-1 gradL')), the
//    KL-magnitude rule of the sampled algorithm;
//  - Fixed: alpha = alpha_a directly, the plain update K' = K - a gradL Sig^-1
//    whose residuals contract linearly (used by the rate diagnostics).
enum class StepMode { Normalized, Fixed };

// Natural-gradient step size sqrt(alpha_a / quad) with quad the gradient's
// preconditioned quadratic form. Returns 0 on zero gradient (converged).
double normalized_alpha(const Eigen::MatrixXd& gradL, const Eigen::MatrixXd& Sigma_K,
                        double alpha_a);

// One natural policy gradient step K' = K - alpha gradL Sigma_K^-1 with a
// backtracking guard: alpha is halved (up to 30 times) until the step is
// stabilizing and does not increase L. Throws StepFailure when exhausted.
Eigen::MatrixXd npg_step(const LtiSystem& sys, const ChanceSpec& chance,
                         const LinearGaussianPolicy& policy, double alpha);

struct ExactNpgOptions {
  double alpha_a = 0.005;
  int max_iter = 1000;
  double tol = 1e-8;           // stop when ||gradL|| <= tol
  StepMode mode = StepMode::Normalized;
  double resid_stop = 0.0;     // optional: stop when L - resid_ref <= resid_stop
  double resid_ref = 0.0;
};

// Iterates npg_step from K0. Every accepted iterate is stabilizing and the
// recorded L sequence is nonincreasing.
DescentTrace run_exact_npg(const LtiSystem& sys, const ChanceSpec& chance,
                           const Eigen::MatrixXd& K0, const Eigen::MatrixXd& SigmaSigma,
                           const ExactNpgOptions& opt);

struct RateFit {
  double beta = 0.0;  // per-iteration contraction factor exp(slope)
  double r_squared = 0.0;
  int points = 0;
};

// Least-squares line through log(L_i - L_star) over the final two thirds of
// the iterations whose residual exceeds floor_rel * |L_star|.
RateFit fit_linear_rate(const DescentTrace& trace, double L_star, double floor_rel = 1e-8);

struct ProbeResult {
  double value = 0.0;        // fitted mu_hat or L_hat
  double step_bound = 0.0;   // smoothness probe: implied 2/(L tr(Sigma_K^-1))
  int samples_used = 0;
  bool all_hold = false;     // gradient dominance: inequality held at every sample
};

// Samples gains around K_star inside the L <= zeta sublevel set and returns
// mu_hat = max (L(K) - L(K*)) / ||gradL(K)||^2. Finite mu_hat is the pass
// condition of the gradient dominance diagnostic.
ProbeResult gradient_dominance_probe(const LtiSystem& sys, const ChanceSpec& chance,
                                     const Eigen::MatrixXd& K_star,
                                     const Eigen::MatrixXd& SigmaSigma, double zeta,
                                     int n_samples, double radius, std::uint64_t seed);

// Samples pairs in the sublevel set and returns
// L_hat = max ||gradL(K1) - gradL(K2)|| / ||K1 - K2|| together with the
// implied safe fixed step 2 / (L_hat * tr(Sigma_K*^-1)).
ProbeResult smoothness_probe(const LtiSystem& sys, const ChanceSpec& chance,
                             const Eigen::MatrixXd& K_star, const Eigen::MatrixXd& SigmaSigma,
                             double zeta, int n_pairs, double radius, std::uint64_t seed);

}  // namespace riskgrad
